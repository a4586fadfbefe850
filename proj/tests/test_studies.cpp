#include <catch_amalgamated.hpp>

#include <cmath>

#include "eses/studies.hpp"

using namespace eses;
using Catch::Approx;

namespace {

// Independent failure counter: bitmask subsets and the same per-sample stream
// layout (elements first, then the Gaussian offset).
std::size_t brute_failures(const StudyConfig& c, double width) {
  const double sk = std::sqrt(static_cast<double>(c.k)) * c.model.element_sigma(central_size(c.scheme));
  const auto nominal = nominal_sizes(c.scheme, c.n);
  double nominal_k = 0.0;
  for (double v : nominal) nominal_k += v;
  nominal_k *= static_cast<double>(c.k) / static_cast<double>(c.n);
  std::size_t failures = 0;
  const RandomStream master(c.master_seed);
  for (std::size_t i = 0; i < c.samples; ++i) {
    RandomStream rng = master.substream(i);
    std::vector<double> v(c.n);
    for (std::size_t e = 0; e < c.n; ++e) {
      const double s = c.model.element_sigma(nominal[e]);
      double x = rng.normal(nominal[e], s);
      while (!(x > 0.0)) x = rng.normal(nominal[e], s);
      v[e] = x;
    }
    double off = 0.0;
    if (const auto* g = std::get_if<GaussianOffset>(&c.offset))
      off = g->sigma_T * rng.normal();
    else
      off = std::get<FixedOffset>(c.offset).value;
    const double target = nominal_k + off * sk;
    bool hit = false;
    for (std::uint32_t m = 0; m < (1u << c.n) && !hit; ++m) {
      if (static_cast<std::size_t>(__builtin_popcount(m)) != c.k) continue;
      double s = 0.0;
      for (std::size_t e = 0; e < c.n; ++e)
        if (m & (1u << e)) s += v[e];
      hit = std::abs(s - target) <= 0.5 * width * sk;
    }
    failures += hit ? 0 : 1;
  }
  return failures;
}

StudyConfig base_config() {
  StudyConfig c;
  c.model = MismatchModel{0.01, 1.0};
  c.samples = 3000;
  c.master_seed = 5;
  return c;
}

}  // namespace

TEST_CASE("r_cal closed form") {
  CHECK(r_cal(1.0, 0.05) == Approx(std::sqrt(2.0) / (0.05 / std::sqrt(12.0))).epsilon(1e-12));
  CHECK(r_cal(1.0, 0.05) == Approx(97.98).margin(0.01));
  CHECK(r_cal(2.0, 0.07) == Approx(110.66).margin(0.01));
  CHECK(r_cal(0.0, std::sqrt(12.0)) == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(r_cal(1.0, 0.0), DomainError);
}

TEST_CASE("traditional redundancy success") {
  CHECK(traditional_redundancy_success(0.5, 1) == Approx(0.5));
  CHECK(traditional_redundancy_success(0.5, 4) == Approx(0.9375));
  CHECK(traditional_redundancy_success(0.01, 100) == Approx(0.63397).margin(1e-5));
  CHECK_THROWS_AS(traditional_redundancy_success(1.5, 2), UsageError);
}

TEST_CASE("failure counts match the brute-force oracle") {
  for (double d : {0.0, 0.25, 1.0}) {
    StudyConfig c = base_config();
    c.samples = 400;
    c.scheme = d == 0.0 ? SizingScheme{UniformSizing{1.0}} : SizingScheme{eses_sizing(1.0, d, c.model, c.k)};
    c.offset = GaussianOffset{0.5};
    c.window_widths = {0.01, 0.03, 0.1};
    const auto r = run_study(c);
    for (const auto& p : r.points) REQUIRE(p.failures == brute_failures(c, p.width));
  }
}

TEST_CASE("eses sizing uses the requested step in sigma_k units") {
  const MismatchModel m{0.01, 1.0};
  const auto s = eses_sizing(1.0, 0.25, m, 6);
  CHECK(s.mean == 1.0);
  CHECK(s.step == Approx(0.25 * std::sqrt(6.0) * 0.01).epsilon(1e-12));
}

TEST_CASE("failure rate is monotone in width and stderr is binomial") {
  StudyConfig c = base_config();
  c.scheme = eses_sizing(1.0, 0.25, c.model, c.k);
  c.offset = GaussianOffset{1.0};
  for (int i = 1; i <= 40; ++i) c.window_widths.push_back(0.005 * i);
  const auto r = run_study(c);
  for (std::size_t i = 1; i < r.points.size(); ++i) REQUIRE(r.points[i].failures <= r.points[i - 1].failures);
  for (const auto& p : r.points) {
    REQUIRE(p.failure_rate >= 0.0);
    REQUIRE(p.failure_rate <= 1.0);
    REQUIRE(p.std_error == Approx(std::sqrt(p.failure_rate * (1 - p.failure_rate) / p.samples)).margin(1e-15));
  }
}

TEST_CASE("a very wide window never fails") {
  StudyConfig c = base_config();
  c.scheme = eses_sizing(1.0, 0.5, c.model, c.k);
  CHECK(failure_rate(c, 20.0) == 0.0);
  c.scheme = UniformSizing{1.0};
  CHECK(failure_rate(c, 20.0) == 0.0);
}

TEST_CASE("SES beats ESES only at the narrowest width") {
  StudyConfig ses = base_config();
  ses.samples = 20000;
  ses.window_widths = {0.01, 0.03, 0.05, 0.08, 0.12};
  StudyConfig eses = ses;
  eses.scheme = eses_sizing(1.0, 0.25, eses.model, eses.k);
  const auto a = run_study(ses);
  const auto b = run_study(eses);
  CHECK(a.points[0].failure_rate <= b.points[0].failure_rate);
  for (std::size_t i = 0; i < a.points.size(); ++i)
    if (b.points[i].failure_rate < 0.10) CHECK(b.points[i].failure_rate <= a.points[i].failure_rate);
}

TEST_CASE("results do not depend on the thread count") {
  StudyConfig c = base_config();
  c.scheme = eses_sizing(1.0, 0.5, c.model, c.k);
  c.offset = GaussianOffset{2.0};
  c.window_widths = {0.02, 0.07};
  c.threads = 1;
  const auto one = min_distances(c);
  c.threads = 4;
  CHECK(min_distances(c) == one);
}

TEST_CASE("frontier with a single huge width returns the closed form") {
  StudyConfig c = base_config();
  c.samples = 500;
  const auto f = rcal_frontier(c, {0.0, 3.0, 9.0}, {0.25, 1.0}, {20.0}, 0.99);
  REQUIRE(f.size() == 3);
  for (const auto& e : f) {
    REQUIRE(e.feasible);
    CHECK(e.best_rcal == Approx(std::sqrt(1 + e.sigma_T * e.sigma_T) * std::sqrt(12.0) / 20.0).epsilon(1e-12));
  }
}

TEST_CASE("frontier marks impossible targets infeasible") {
  StudyConfig c = base_config();
  c.samples = 300;
  const auto f = rcal_frontier(c, {15.0}, {0.01}, {0.001}, 0.99);
  CHECK_FALSE(f[0].feasible);
  CHECK_THROWS_AS(rcal_frontier(c, {1.0}, {0.25}, {0.1}, 1.0), UsageError);
  CHECK_THROWS_AS(rcal_frontier(c, {}, {0.25}, {0.1}, 0.99), UsageError);
}

TEST_CASE("frontier winner meets the yield floor when re-evaluated") {
  StudyConfig c = base_config();
  c.samples = 2000;
  std::vector<double> widths;
  for (int i = 1; i <= 300; ++i) widths.push_back(0.002 * i);
  const auto f = rcal_frontier(c, {2.0}, {0.5, 1.0}, widths, 0.99);
  REQUIRE(f[0].feasible);
  StudyConfig check = c;
  check.scheme = eses_sizing(1.0, f[0].d_eses, c.model, c.k);
  check.offset = GaussianOffset{2.0};
  CHECK(failure_rate(check, f[0].width) <= 0.01);
  CHECK(failure_rate(check, f[0].width) == Approx(f[0].failure_rate));
}

TEST_CASE("a sweep keeps absolute step and center sigma fixed") {
  StudyConfig c = base_config();
  c.samples = 500;
  c.window_widths = {0.05};
  const double sk = std::sqrt(6.0) * 0.01;
  const auto curves = a_eses_sweep(c, {1, 0.5, 0.25, 0.125, 0.0625}, 0.25 * sk);
  const double rel[] = {0.01, 0.02, 0.04, 0.08, 0.16};
  for (std::size_t i = 0; i < curves.size(); ++i) CHECK(curves[i].relative_sigma == Approx(rel[i]).epsilon(1e-12));
}

TEST_CASE("single-value a sweep equals the plain study") {
  StudyConfig c = base_config();
  c.samples = 800;
  c.window_widths = {0.02, 0.05};
  const double sk = std::sqrt(6.0) * 0.01;
  const auto curves = a_eses_sweep(c, {1.0}, 0.25 * sk);
  StudyConfig plain = c;
  plain.scheme = ArithmeticSizing{1.0, 0.25 * sk};
  const auto r = run_study(plain);
  REQUIRE(curves.size() == 1);
  for (std::size_t i = 0; i < r.points.size(); ++i) CHECK(curves[0].result.points[i].failures == r.points[i].failures);
}

TEST_CASE("invalid study configs are rejected") {
  StudyConfig c = base_config();
  c.k = 13;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = base_config();
  c.window_widths = {-0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = base_config();
  c.samples = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
