#pragma once

// Monte Carlo calibration-failure studies for SES/ESES element selection.
//
// A sample draws one element set and one target offset. Calibration fails at
// window width w when no K-subset sum lies within w/2 of the target. Each
// sample therefore reduces to one number, the distance from the target to the
// nearest subset sum, and the failure rate at every width is read off the
// same population. That makes failure rate monotone in width by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eses/error.hpp"
#include "eses/mismatch.hpp"
#include "eses/parallel.hpp"
#include "eses/rng.hpp"

namespace eses {

struct FixedOffset {
  double value = 0.0;  // sigma_k units
};

struct GaussianOffset {
  double sigma_T = 0.0;  // sigma_k units
};

using OffsetSpec = std::variant<FixedOffset, GaussianOffset>;

inline double offset_sigma(const OffsetSpec& offset) {
  if (const auto* g = std::get_if<GaussianOffset>(&offset)) return g->sigma_T;
  return 0.0;
}

struct StudyConfig {
  std::size_t n = 12;
  std::size_t k = 6;
  SizingScheme scheme = UniformSizing{1.0};
  MismatchModel model{0.01, 1.0};
  std::vector<double> window_widths;  // sigma_k units
  OffsetSpec offset = FixedOffset{0.0};
  std::size_t samples = 100000;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (k == 0 || k > n) throw ConfigError("study needs 1 <= k <= n");
    if (n > 24) throw ConfigError("study supports at most 24 elements");
    if (samples == 0) throw ConfigError("study needs at least one sample");
    for (double w : window_widths)
      if (!(w >= 0.0)) throw ConfigError("window widths must be non-negative");
    if (const auto* g = std::get_if<GaussianOffset>(&offset); g && !(g->sigma_T >= 0.0))
      throw ConfigError("sigma_T must be non-negative");
    nominal_sizes(scheme, n);
  }
};

struct StudyPoint {
  double width = 0.0;  // sigma_k units
  std::size_t samples = 0;
  std::size_t failures = 0;
  double failure_rate = 0.0;
  double std_error = 0.0;
};

struct StudyResult {
  double sigma_k = 0.0;
  std::vector<StudyPoint> points;
};

inline double binomial_stderr(double f, std::size_t samples) {
  return std::sqrt(f * (1.0 - f) / static_cast<double>(samples));
}

// Arithmetic ESES scheme with step expressed in sigma_k units of the central
// element: d_abs = d_over_sigmak * sqrt(k) * sigma(a).
inline ArithmeticSizing eses_sizing(double a, double d_over_sigmak, const MismatchModel& model, std::size_t k) {
  const double sk = std::sqrt(static_cast<double>(k)) * model.element_sigma(a);
  return ArithmeticSizing{a, d_over_sigmak * sk};
}

// Per-sample distance, in sigma_k units, from the target to the nearest
// subset sum. Sample i uses substream(master_seed, i): elements first, then
// the offset draw.
inline std::vector<double> min_distances(const StudyConfig& config) {
  config.validate();
  const double sk = sigma_k(config.model, config.scheme, config.k);
  if (!(sk > 0.0)) throw DomainError("sigma_k is zero; widths in sigma_k units are undefined");
  const auto nominal = nominal_sizes(config.scheme, config.n);
  double nominal_sum = 0.0;
  for (double v : nominal) nominal_sum += v;
  const double nominal_k = nominal_sum * static_cast<double>(config.k) / static_cast<double>(config.n);
  const CombinationTable table(config.n, config.k);
  const RandomStream master(config.master_seed);

  std::vector<double> out(config.samples);
  parallel_for(config.samples, config.threads, [&](std::size_t i) {
    RandomStream rng = master.substream(i);
    const ElementSet set = sample_element_set(config.scheme, config.model, config.n, rng);
    double offset = 0.0;
    if (const auto* g = std::get_if<GaussianOffset>(&config.offset))
      offset = g->sigma_T * rng.normal();
    else
      offset = std::get<FixedOffset>(config.offset).value;
    const double target = nominal_k + offset * sk;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < table.size(); ++r) best = std::min(best, std::abs(table.sum(r, set.realized) - target));
    out[i] = best / sk;
  });
  return out;
}

// A sample fails at width w iff its distance exceeds w/2 (closed window).
inline StudyPoint evaluate_width(const std::vector<double>& distances, double width) {
  StudyPoint p;
  p.width = width;
  p.samples = distances.size();
  for (double d : distances)
    if (d > 0.5 * width) ++p.failures;
  p.failure_rate = static_cast<double>(p.failures) / static_cast<double>(p.samples);
  p.std_error = binomial_stderr(p.failure_rate, p.samples);
  return p;
}

inline StudyResult run_study(const StudyConfig& config) {
  StudyResult result;
  result.sigma_k = sigma_k(config.model, config.scheme, config.k);
  const auto dist = min_distances(config);
  for (double w : config.window_widths) result.points.push_back(evaluate_width(dist, w));
  return result;
}

inline double failure_rate(const StudyConfig& config, double width) {
  return evaluate_width(min_distances(config), width).failure_rate;
}

// sigma_All / (T_window / sqrt(12)), all in sigma_k units.
inline double r_cal(double sigma_T, double width) {
  if (!(width > 0.0)) throw DomainError("r_cal needs a positive window width");
  return std::sqrt(1.0 + sigma_T * sigma_T) / (width / std::sqrt(12.0));
}

struct FrontierEntry {
  double sigma_T = 0.0;
  bool feasible = false;
  double best_rcal = 0.0;
  double d_eses = 0.0;  // sigma_k units
  double width = 0.0;   // sigma_k units
  double failure_rate = 0.0;
};

// For each sigma_T, the largest r_cal over (d, width) whose failure rate is at
// most 1 - yield_floor. The template supplies n, k, a (central size), model,
// samples and seed; its scheme must be Arithmetic or Uniform.
inline std::vector<FrontierEntry> rcal_frontier(const StudyConfig& templ, const std::vector<double>& sigma_T_list,
                                                const std::vector<double>& d_candidates,
                                                const std::vector<double>& width_grid, double yield_floor) {
  if (!(yield_floor > 0.0 && yield_floor < 1.0)) throw UsageError("yield floor must lie in (0, 1)");
  if (sigma_T_list.empty() || d_candidates.empty() || width_grid.empty())
    throw UsageError("frontier grids must be non-empty");
  std::vector<double> widths = width_grid;
  std::sort(widths.begin(), widths.end());
  if (!(widths.front() > 0.0)) throw UsageError("frontier widths must be positive");
  const double a = central_size(templ.scheme);
  const double max_fail = 1.0 - yield_floor;

  std::vector<FrontierEntry> out;
  for (double sT : sigma_T_list) {
    FrontierEntry e;
    e.sigma_T = sT;
    for (double d : d_candidates) {
      StudyConfig cfg = templ;
      cfg.scheme = eses_sizing(a, d, templ.model, templ.k);
      cfg.offset = GaussianOffset{sT};
      auto dist = min_distances(cfg);
      std::sort(dist.begin(), dist.end());
      const auto allowed = static_cast<std::size_t>(std::floor(max_fail * static_cast<double>(dist.size()) + 1e-9));
      // Failures at w count distances strictly above w/2; sorted order gives
      // the count with one binary search per width.
      for (double w : widths) {
        const auto above = static_cast<std::size_t>(dist.end() - std::upper_bound(dist.begin(), dist.end(), 0.5 * w));
        if (above <= allowed) {
          const double r = r_cal(sT, w);
          if (!e.feasible || r > e.best_rcal) {
            e.feasible = true;
            e.best_rcal = r;
            e.d_eses = d;
            e.width = w;
            e.failure_rate = static_cast<double>(above) / static_cast<double>(dist.size());
          }
          break;  // r_cal only falls as width grows
        }
      }
    }
    out.push_back(e);
  }
  return out;
}

struct SweepCurve {
  double a = 0.0;
  double relative_sigma = 0.0;  // element sigma / a at the central size
  StudyResult result;
};

// One failure-rate curve per central size a, with the absolute step d and the
// central element sigma held fixed across the family.
inline std::vector<SweepCurve> a_eses_sweep(const StudyConfig& templ, const std::vector<double>& a_values,
                                            double d_abs) {
  if (a_values.empty()) throw UsageError("a sweep needs at least one a value");
  const double sigma_center = templ.model.element_sigma(central_size(templ.scheme));
  std::vector<SweepCurve> out;
  for (double a : a_values) {
    StudyConfig cfg = templ;
    cfg.scheme = ArithmeticSizing{a, d_abs};
    cfg.model = MismatchModel{sigma_center, a};
    SweepCurve c;
    c.a = a;
    c.relative_sigma = sigma_center / a;
    c.result = run_study(cfg);
    out.push_back(std::move(c));
  }
  return out;
}

inline double traditional_redundancy_success(double p_success, std::size_t n) {
  if (!(p_success >= 0.0 && p_success <= 1.0)) throw UsageError("success probability must lie in [0, 1]");
  if (n == 0) throw UsageError("redundancy needs n >= 1");
  return 1.0 - std::pow(1.0 - p_success, static_cast<double>(n));
}

}  // namespace eses
