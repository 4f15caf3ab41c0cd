#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "edgeret/entropy_model.hpp"
#include "edgeret/error.hpp"

using namespace edgeret;
using namespace edgeret::entropy;

namespace {

// Independent oracle: Phi via std::erf.
double phi(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

GmmParams make(std::vector<double> w, std::vector<double> mu, std::vector<double> sigma) {
  GmmParams p;
  for (double a : w) p.weight_logits.push_back(std::log(a));
  p.means = std::move(mu);
  for (double s : sigma) p.scale_logits.push_back(softplus_inverse(s));
  return p;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

GmmParams random_params(std::mt19937_64& rng, int k) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.3, 4.0);
  GmmParams p;
  for (int i = 0; i < k; ++i) {
    p.weight_logits.push_back(n(rng));
    p.means.push_back(2.0 * n(rng));
    p.scale_logits.push_back(softplus_inverse(s(rng)));
  }
  return p;
}

}  // namespace

TEST_CASE("softplus and its inverse") {
  for (double y : {1e-6, 0.01, 0.5, 1.0, 4.0, 81.0, 1000.0})
    CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-12));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
}

TEST_CASE("quantize_train range and statistics") {
  const std::vector<double> zero{0.0};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double v = quantize_train(zero, seed)[0];
    CHECK(v > -0.5);
    CHECK(v < 0.5);
  }
  std::vector<double> latent(1000000, 3.25);
  const auto out = quantize_train(latent, 17);
  double mean = 0, sq = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = out[i] - latent[i];
    mean += u;
    sq += u * u;
  }
  mean /= static_cast<double>(out.size());
  const double var = sq / static_cast<double>(out.size()) - mean * mean;
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::abs(var - 1.0 / 12.0) < 0.02 / 12.0);
  CHECK(quantize_train(latent, 17) == out);
}

TEST_CASE("quantize_infer examples and idempotence") {
  const std::vector<double> a{0.4, -0.4};
  CHECK(quantize_infer(a).symbols == std::vector<std::int32_t>{0, 0});
  const std::vector<double> b{1.5, -1.5};
  CHECK(quantize_infer(b).symbols == std::vector<std::int32_t>{2, -2});
  const std::vector<double> c{3.0};
  CHECK(quantize_infer(c).symbols == std::vector<std::int32_t>{3});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 20.0);
  std::vector<double> v(200);
  for (double& x : v) x = n(rng);
  const QuantizedVector q = quantize_infer(v);
  std::vector<double> back(q.symbols.begin(), q.symbols.end());
  CHECK(quantize_infer(back) == q);
}

TEST_CASE("gmm_pdf examples") {
  const GmmParams std_normal = make({1.0}, {0.0}, {1.0});
  CHECK(gmm_pdf(0.0, std_normal) == doctest::Approx(1.0 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-12));
  const GmmParams sym = make({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
  CHECK(gmm_pdf(-1.0, sym) == doctest::Approx(gmm_pdf(1.0, sym)).epsilon(1e-14));
  const GmmParams wide = make({1.0}, {0.0}, {2.0});
  CHECK(gmm_pdf(0.0, wide) == doctest::Approx(0.19947114020071635).epsilon(1e-12));
}

TEST_CASE("gmm_pmf examples") {
  const GmmParams std_normal = make({1.0}, {0.0}, {1.0});
  CHECK(gmm_pmf(0.0, std_normal) == doctest::Approx(phi(0.5) - phi(-0.5)).epsilon(1e-12));
  CHECK(gmm_pmf(0.0, std_normal) == doctest::Approx(0.38292492254802624).epsilon(1e-10));
  for (double sigma : {0.2, 1.0, 7.0})
    for (int q = 0; q < 20; ++q) {
      const GmmParams p = make({1.0}, {0.0}, {sigma});
      CHECK(gmm_pmf(q, p) == doctest::Approx(gmm_pmf(-q, p)).epsilon(1e-12));
    }
  CHECK(gmm_cdf(0.0, std_normal) == doctest::Approx(0.5));
}

TEST_CASE("gmm_pmf sums to one and stays positive") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    GmmParams p = random_params(rng, 1 + t % 9);
    if (t == 0) p = init_params(9);  // sigma up to 81
    double sum = 0.0;
    for (int q = -10000; q <= 10000; ++q) {
      const double v = gmm_pmf(q, p);
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("entropy_bits examples") {
  // A two-point mixture where symbols 0 and 1 each carry mass 0.5: the
  // narrow components put essentially all mass in their own bins.
  const GmmParams half = make({0.5, 0.5}, {0.0, 1.0}, {0.01, 0.01});
  QuantizedVector q;
  q.symbols = {0, 1, 0, 1, 1, 0, 0, 1};
  CHECK(entropy_bits(q, half) == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(entropy_bits(QuantizedVector{}, half) == 0.0);
  const GmmParams std_normal = make({1.0}, {0.0}, {1.0});
  QuantizedVector z;
  z.symbols = {0, 0};
  CHECK(entropy_bits(z, std_normal) == doctest::Approx(2.7691).epsilon(1e-3));
  CHECK(entropy_bits(z, std_normal) ==
        doctest::Approx(-2.0 * std::log2(phi(0.5) - phi(-0.5))).epsilon(1e-12));
}

TEST_CASE("entropy_bits clamps far outliers at the probability floor") {
  const GmmParams std_normal = make({1.0}, {0.0}, {1.0});
  QuantizedVector q;
  q.symbols = {1000};
  CHECK(entropy_bits(q, std_normal) == doctest::Approx(16.0));
}

TEST_CASE("init_params reproduces the documented initialization") {
  const GmmParams p9 = init_params(9);
  const auto w = p9.weights();
  const auto s = p9.scales();
  REQUIRE(p9.k() == 9);
  for (int k = 1; k <= 9; ++k) {
    CHECK(w[k - 1] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(p9.means[k - 1] == 0.0);
    CHECK(s[k - 1] == doctest::Approx(static_cast<double>(k * k)).epsilon(1e-12));
  }
  const GmmParams p1 = init_params(1);
  CHECK(p1.weights()[0] == doctest::Approx(1.0));
  CHECK(p1.scales()[0] == doctest::Approx(1.0).epsilon(1e-12));
  const auto s3 = init_params(3).scales();
  CHECK(s3[0] == doctest::Approx(1.0));
  CHECK(s3[1] == doctest::Approx(4.0));
  CHECK(s3[2] == doctest::Approx(9.0));
  try {
    (void)init_params(0);
    FAIL("expected InvalidK");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidK);
  }
}

TEST_CASE("GmmParams invariants and flat layout") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const GmmParams p = random_params(rng, 1 + t % 9);
    double sum = 0;
    for (double a : p.weights()) {
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    for (double s : p.scales()) CHECK(s > 0.0);
    const auto flat = p.flatten();
    CHECK(flat.size() == 3 * p.k());
    const GmmParams back = GmmParams::unflatten(flat);
    CHECK(back.means == p.means);
    CHECK(back.weight_logits == p.weight_logits);
    CHECK(back.scale_logits == p.scale_logits);
  }
  const std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS((void)GmmParams::unflatten(bad), Error);
}

TEST_CASE("lambda_at_epoch") {
  CHECK(lambda_at_epoch(0.1, 30, 50) == doctest::Approx(0.1));
  CHECK(lambda_at_epoch(0.1, 15, 50) == doctest::Approx(0.05));
  CHECK(lambda_at_epoch(0.1, 50, 50) == doctest::Approx(0.1));
  CHECK(lambda_at_epoch(0.2, 1, 30) == doctest::Approx(0.02));
  for (int e : {0, 5, 20}) {
    try {
      (void)lambda_at_epoch(0.1, 1, e);
      FAIL("expected BadSchedule");
    } catch (const Error& err) {
      CHECK(err.code() == Errc::BadSchedule);
    }
  }
  CHECK_THROWS_AS((void)lambda_at_epoch(0.1, 0, 50), Error);
  CHECK_THROWS_AS((void)lambda_at_epoch(0.1, 51, 50), Error);
}

TEST_CASE("rate_bits value and gradients match finite differences") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const GmmParams p = random_params(rng, 1 + t % 9);
    std::vector<double> v(6);
    for (double& x : v) x = 2.5 * n(rng);
    const RateEval r = rate_bits(v, p);
    double direct = 0.0;
    for (double x : v) direct -= std::log2(std::max(gmm_pmf(x, p), kProbFloor));
    CHECK(r.bits == doctest::Approx(direct).epsilon(1e-12));

    const double h = 1e-4;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto a = v, b = v;
      a[i] += h;
      b[i] -= h;
      const double fd = (rate_bits(a, p).bits - rate_bits(b, p).bits) / (2 * h);
      CHECK(rel_err(r.d_values[i], fd) < 1e-4);
      ++checked;
    }
    const auto flat = p.flatten();
    std::vector<double> analytic;
    for (auto* g : {&r.d_params.weight_logits, &r.d_params.means, &r.d_params.scale_logits})
      analytic.insert(analytic.end(), g->begin(), g->end());
    for (std::size_t j = 0; j < flat.size(); ++j) {
      auto a = flat, b = flat;
      a[j] += h;
      b[j] -= h;
      const double fd = (rate_bits(v, GmmParams::unflatten(a)).bits -
                         rate_bits(v, GmmParams::unflatten(b)).bits) /
                        (2 * h);
      CHECK(rel_err(analytic[j], fd) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("GMM fit to a discretized two-component mixture reaches KL below 0.05 bits") {
  const GmmParams truth = make({0.3, 0.7}, {-4.0, 3.0}, {1.0, 2.0});
  std::mt19937_64 rng(123);
  std::discrete_distribution<int> comp({0.3, 0.7});
  std::normal_distribution<double> a(-4.0, 1.0), b(3.0, 2.0);
  std::vector<double> samples(20000);
  for (double& x : samples) x = std::round(comp(rng) == 0 ? a(rng) : b(rng));

  // Minibatch gradient descent with heavy-ball momentum on mean bits/sample.
  GmmParams model = init_params(2);
  std::vector<double> velocity(3 * model.k(), 0.0);
  const std::size_t batch = 500;
  const double lr = 0.1, momentum = 0.9;
  for (int step = 0; step < 3000; ++step) {
    const std::size_t off = (static_cast<std::size_t>(step) * batch) % samples.size();
    const std::span<const double> chunk(samples.data() + off, batch);
    const RateEval r = rate_bits(chunk, model);
    std::vector<double> grad;
    for (auto* g : {&r.d_params.weight_logits, &r.d_params.means, &r.d_params.scale_logits})
      grad.insert(grad.end(), g->begin(), g->end());
    std::vector<double> flat = model.flatten();
    for (std::size_t j = 0; j < flat.size(); ++j) {
      velocity[j] = momentum * velocity[j] + grad[j] / static_cast<double>(batch);
      flat[j] -= lr * velocity[j];
    }
    model = GmmParams::unflatten(flat);
  }
  double kl = 0.0;
  for (int q = -40; q <= 40; ++q) {
    const double pt = gmm_pmf(q, truth);
    if (pt < 1e-15) continue;
    kl += pt * std::log2(pt / std::max(gmm_pmf(q, model), 1e-300));
  }
  MESSAGE("KL(true || model) = " << kl << " bits");
  CHECK(kl < 0.05);
}
