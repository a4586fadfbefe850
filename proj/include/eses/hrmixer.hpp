#pragma once

// Behavioral harmonic-rejection receiver.
//
// Eight LO phases at 45 degree spacing come from a divide-by-8 ring. Each
// phase p is a 50% square whose rise and fall edges carry timing errors:
//   rise_p = p/8       + f * (clk[p % 4] + up[p])
//   fall_p = p/8 + 1/2 + f * (clk[p % 4] + dn[p])
// clk[m] is the delay error of clock inverter m (INV1-4, pull-down only), which
// shifts phases m and m+4 together. up[p] and dn[p] are the pull-up and
// pull-down errors of the output buffer of phase p (INV5-12).
//
// Branch m mixes with the differential LO x_m = LO_m - LO_{m+4} and has gain
//   g_m = (I_sel / I_nominal_half)^alpha * (1 + extrinsic).
// The recombined paths are
//   I = 12 g0 x0 + 17 g1 x1 + 12 g2 x2      (0, 45, 90 degrees)
//   Q = 12 g2 x2 + 17 g3 x3 - 12 g0 x0      (90, 135, 180 degrees)
// so the Q path owns only the 135 degree branch and clock inverter 4.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "eses/error.hpp"
#include "eses/mismatch.hpp"
#include "eses/parallel.hpp"
#include "eses/rng.hpp"
#include "eses/waveform.hpp"

namespace eses {

enum class HrPath { I, Q };

inline const char* path_name(HrPath p) { return p == HrPath::I ? "I" : "Q"; }

// Reported when |c_n| < 1e-15 |c_1|.
inline constexpr double kHrrInfinite = std::numeric_limits<double>::infinity();
inline constexpr double kHrrCsvCap = 300.0;

struct TunableInverter {
  ElementSet elements;
  Combination selection;
  double base_delay = 0.0;         // seconds
  double drive_coefficient = 0.0;  // seconds at the nominal selected width
  double extrinsic_error = 0.0;    // seconds
  double w_nominal_half = 0.0;     // K times the mean nominal width
  double selected_width = 0.0;     // realized width of `selection`

  void select(Combination c) {
    selected_width = subset_value(elements, c);
    selection = std::move(c);
  }

  double delay() const { return base_delay + drive_coefficient * (w_nominal_half / selected_width) + extrinsic_error; }

  // Deviation from the delay of an ideal inverter at nominal width.
  double error() const { return delay() - (base_delay + drive_coefficient); }
};

struct HrBranch {
  int lo_phase_index = 0;  // 0..3 for 0, 45, 90, 135 degrees
  ElementSet gm_elements;
  Combination gm_selection;
  double gm_extrinsic_gain_error = 0.0;
  double recomb_weight = 1.0;
  double nominal_gain = 1.0;
  double alpha = 0.5;
  double i_nominal_half = 0.0;
  double selected_current = 0.0;

  void select(Combination c) {
    selected_current = subset_value(gm_elements, c);
    gm_selection = std::move(c);
  }

  double gain() const {
    return nominal_gain * std::pow(selected_current / i_nominal_half, alpha) * (1.0 + gm_extrinsic_gain_error);
  }
};

struct LoPhaseSet {
  double f_lo = 0.0;
  std::array<TunableInverter, 4> clock;      // INV1-4
  std::array<TunableInverter, 8> pull_up;    // rise edge of each phase
  std::array<TunableInverter, 8> pull_down;  // fall edge of each phase

  double rise_error(int p) const { return clock[p % 4].error() + pull_up[p].error(); }
  double fall_error(int p) const { return clock[p % 4].error() + pull_down[p].error(); }

  // Edge positions in fractions of the period at LO frequency f.
  double rise_time(int p, double f) const { return p / 8.0 + f * rise_error(p); }
  double fall_time(int p, double f) const { return p / 8.0 + 0.5 + f * fall_error(p); }
};

struct HrReceiverSample {
  LoPhaseSet lo;
  std::array<HrBranch, 4> branches;
};

struct HrConfig {
  std::size_t n = 12;
  std::size_t k = 6;
  double f0 = 750e6;     // calibration and top sweep frequency
  double f_low = 150e6;  // gain calibration frequency
  double alpha = 0.5;
  double weight_outer = 12.0;
  double weight_center = 17.0;

  double gain_sigma = 0.01;  // total relative gain sigma per branch
  double gain_intrinsic_fraction = 0.08;
  double clock_sigma = 3.5e-12;  // total clock delay sigma per INV1-4
  double clock_intrinsic_fraction = 0.25;
  double buffer_sigma = 1.0e-12;  // total edge sigma per INV5-12 network
  double buffer_intrinsic_fraction = 0.45;
  double timing_element_sigma = 0.02;  // relative sigma of one inverter segment

  double coverage_sigmas = 6.0;
  double range_margin = 1.1;

  int even_passes = 2;
  int odd_passes = 3;
  int odd_iterations = 2;

  std::size_t samples = 200;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;

  std::vector<double> sweep_frequencies{150e6, 250e6, 350e6, 450e6, 550e6, 650e6, 750e6};
  std::vector<int> harmonics{2, 3, 4, 5, 6};

  void validate() const {
    if (k == 0 || k >= n || n > 24) throw ConfigError("hr element counts need 1 <= k < n <= 24");
    if (!(f0 > 0.0) || !(f_low > 0.0)) throw ConfigError("hr frequencies must be positive");
    if (!(f_low < f0)) throw ConfigError("hr.f_low must be below hr.f0");
    if (!(alpha > 0.0)) throw ConfigError("hr.alpha must be positive");
    if (!(weight_outer > 0.0) || !(weight_center > 0.0)) throw ConfigError("hr weights must be positive");
    for (double v : {gain_sigma, clock_sigma, buffer_sigma, timing_element_sigma})
      if (!(v >= 0.0)) throw ConfigError("hr sigmas must be non-negative");
    for (double v : {gain_intrinsic_fraction, clock_intrinsic_fraction, buffer_intrinsic_fraction})
      if (!(v > 0.0 && v <= 1.0)) throw ConfigError("hr intrinsic fractions must lie in (0, 1]");
    if (!(coverage_sigmas > 0.0) || !(range_margin >= 1.0)) throw ConfigError("hr coverage settings are invalid");
    if (even_passes < 1 || odd_passes < 1 || odd_iterations < 1) throw ConfigError("hr pass counts must be >= 1");
    if (samples == 0) throw ConfigError("hr.samples must be at least 1");
    for (int h : harmonics)
      if (h < 2) throw ConfigError("hr harmonics must be >= 2");
    for (double f : sweep_frequencies)
      if (!(f > 0.0)) throw ConfigError("hr sweep frequencies must be positive");
  }
};

// Element sizing and delay coefficients derived from the variance budget.
// All tunable networks use unit mean segment width.
struct TimingDesign {
  double element_sigma = 0.0;  // absolute, at unit width
  double drive_coefficient = 0.0;
  double base_delay = 0.0;
  double step = 0.0;  // arithmetic d of the segment widths
  double sigma_total = 0.0;
  double sigma_extrinsic = 0.0;
};

struct GainDesign {
  double element_sigma = 0.0;
  double step = 0.0;
  double sigma_total = 0.0;
  double sigma_extrinsic = 0.0;
};

struct HrDesign {
  GainDesign gain;
  TimingDesign clock;
  TimingDesign buffer;
};

// Offset of the largest nominal K-sum above K*a, in units of d.
inline double arithmetic_half_span(std::size_t n, std::size_t k) {
  return static_cast<double>(k) * static_cast<double>(n - k) / 2.0;
}

inline TimingDesign design_timing(const HrConfig& cfg, double sigma_total, double intrinsic_fraction) {
  TimingDesign d;
  const double kk = static_cast<double>(cfg.k);
  const double w_nh = kk;
  d.sigma_total = sigma_total;
  d.sigma_extrinsic = sigma_total * std::sqrt(1.0 - intrinsic_fraction);
  d.element_sigma = cfg.timing_element_sigma;
  const double sigma_intr = sigma_total * std::sqrt(intrinsic_fraction);
  if (sigma_total == 0.0 || d.element_sigma == 0.0) return d;
  d.drive_coefficient = sigma_intr * w_nh / (std::sqrt(kk) * d.element_sigma);
  d.base_delay = d.drive_coefficient;
  const double reach = cfg.coverage_sigmas * sigma_total * cfg.range_margin;
  if (!(d.drive_coefficient > reach))
    throw ConfigError("timing tuning cannot reach the requested coverage; raise the intrinsic fraction");
  // Adding width is the weaker direction: C*(1 - W/(W+h)) >= reach.
  const double h = reach * w_nh / (d.drive_coefficient - reach);
  d.step = h / arithmetic_half_span(cfg.n, cfg.k);
  if (!(1.0 - 0.5 * static_cast<double>(cfg.n - 1) * d.step > 0.0))
    throw ConfigError("timing tuning range needs non-positive segment widths");
  return d;
}

inline GainDesign design_gain(const HrConfig& cfg) {
  GainDesign g;
  const double kk = static_cast<double>(cfg.k);
  const double w_nh = kk;
  g.sigma_total = cfg.gain_sigma;
  g.sigma_extrinsic = cfg.gain_sigma * std::sqrt(1.0 - cfg.gain_intrinsic_fraction);
  const double sigma_intr = cfg.gain_sigma * std::sqrt(cfg.gain_intrinsic_fraction);
  g.element_sigma = sigma_intr * w_nh / (cfg.alpha * std::sqrt(kk));
  const double reach = cfg.coverage_sigmas * cfg.gain_sigma * cfg.range_margin;
  // Raising the current is the weaker direction for alpha <= 1.
  const double h = w_nh * (std::pow(1.0 + reach, 1.0 / cfg.alpha) - 1.0);
  g.step = h / arithmetic_half_span(cfg.n, cfg.k);
  if (!(1.0 - 0.5 * static_cast<double>(cfg.n - 1) * g.step > 0.0))
    throw ConfigError("gain tuning range needs non-positive segment widths");
  return g;
}

inline HrDesign design_receiver(const HrConfig& cfg) {
  cfg.validate();
  return HrDesign{design_gain(cfg), design_timing(cfg, cfg.clock_sigma, cfg.clock_intrinsic_fraction),
                  design_timing(cfg, cfg.buffer_sigma, cfg.buffer_intrinsic_fraction)};
}

// Nominal tuning reach of each network, in sigmas of its total variation
// (the weaker of the two directions).
struct HrCoverage {
  double gain = 0.0;
  double clock = 0.0;
  double buffer = 0.0;
};

inline HrCoverage tuning_coverage(const HrConfig& cfg, const HrDesign& d) {
  const double w = static_cast<double>(cfg.k);
  const double span = arithmetic_half_span(cfg.n, cfg.k);
  auto timing = [&](const TimingDesign& t) {
    if (t.sigma_total == 0.0) return std::numeric_limits<double>::infinity();
    const double h = t.step * span;
    return t.drive_coefficient * (1.0 - w / (w + h)) / t.sigma_total;
  };
  HrCoverage c;
  const double hg = d.gain.step * span;
  c.gain = cfg.gain_sigma == 0.0 ? std::numeric_limits<double>::infinity()
                                 : (std::pow(1.0 + hg / w, cfg.alpha) - 1.0) / cfg.gain_sigma;
  c.clock = timing(d.clock);
  c.buffer = timing(d.buffer);
  return c;
}

namespace detail {

inline TunableInverter make_inverter(const HrConfig& cfg, const TimingDesign& d, RandomStream* rng) {
  TunableInverter inv;
  const SizingScheme scheme = ArithmeticSizing{1.0, d.step};
  inv.elements = rng ? sample_element_set(scheme, MismatchModel{d.element_sigma, 1.0}, cfg.n, *rng)
                     : ideal_element_set(scheme, cfg.n);
  inv.extrinsic_error = rng ? rng->normal(0.0, d.sigma_extrinsic) : 0.0;
  inv.base_delay = d.base_delay;
  inv.drive_coefficient = d.drive_coefficient;
  inv.w_nominal_half = static_cast<double>(cfg.k);
  inv.select(balanced_combination(inv.elements, cfg.k));
  return inv;
}

inline HrBranch make_branch(const HrConfig& cfg, const GainDesign& d, int index, RandomStream* rng) {
  HrBranch b;
  b.lo_phase_index = index;
  const SizingScheme scheme = ArithmeticSizing{1.0, d.step};
  b.gm_elements = rng ? sample_element_set(scheme, MismatchModel{d.element_sigma, 1.0}, cfg.n, *rng)
                      : ideal_element_set(scheme, cfg.n);
  b.gm_extrinsic_gain_error = rng ? rng->normal(0.0, d.sigma_extrinsic) : 0.0;
  b.recomb_weight = (index % 2 == 1) ? cfg.weight_center : cfg.weight_outer;
  b.alpha = cfg.alpha;
  b.i_nominal_half = static_cast<double>(cfg.k);
  b.select(balanced_combination(b.gm_elements, cfg.k));
  return b;
}

inline HrReceiverSample build_receiver(const HrConfig& cfg, const HrDesign& d, RandomStream* rng) {
  HrReceiverSample s;
  s.lo.f_lo = cfg.f0;
  for (int m = 0; m < 4; ++m) s.branches[m] = make_branch(cfg, d.gain, m, rng);
  for (int m = 0; m < 4; ++m) s.lo.clock[m] = make_inverter(cfg, d.clock, rng);
  for (int p = 0; p < 8; ++p) {
    s.lo.pull_up[p] = make_inverter(cfg, d.buffer, rng);
    s.lo.pull_down[p] = make_inverter(cfg, d.buffer, rng);
  }
  for (int p = 0; p < 8; ++p) {
    if (std::abs(s.lo.rise_error(p)) * cfg.f0 >= 1.0 / 16.0 || std::abs(s.lo.fall_error(p)) * cfg.f0 >= 1.0 / 16.0)
      throw DomainError("LO edge error exceeds a sixteenth of the period");
  }
  return s;
}

}  // namespace detail

// Receiver with every error source at zero and balanced selections.
inline HrReceiverSample ideal_receiver(const HrConfig& cfg) {
  const HrDesign d = design_receiver(cfg);
  return detail::build_receiver(cfg, d, nullptr);
}

// Monte Carlo receiver `index` under cfg.master_seed. Draw order: gain
// branches, clock inverters, then pull-up and pull-down per phase.
inline HrReceiverSample sample_receiver(const HrConfig& cfg, std::size_t index) {
  const HrDesign d = design_receiver(cfg);
  RandomStream rng = RandomStream::derive(cfg.master_seed, index);
  return detail::build_receiver(cfg, d, &rng);
}

struct PathTerm {
  int branch;
  double sign;
};

inline std::array<PathTerm, 3> path_terms(HrPath path) {
  if (path == HrPath::I) return {PathTerm{0, 1.0}, PathTerm{1, 1.0}, PathTerm{2, 1.0}};
  return {PathTerm{2, 1.0}, PathTerm{3, 1.0}, PathTerm{0, -1.0}};
}

// c_n of the single-ended phase p.
inline Complex phase_coeff(const LoPhaseSet& lo, int p, int n, double f) {
  return edge_coeff(1.0, lo.rise_time(p, f), n) + edge_coeff(-1.0, lo.fall_time(p, f), n);
}

// c_n of the differential LO of branch m, without gain.
inline Complex differential_coeff(const LoPhaseSet& lo, int m, int n, double f) {
  return phase_coeff(lo, m, n, f) - phase_coeff(lo, m + 4, n, f);
}

inline Complex path_coeff(const HrReceiverSample& s, HrPath path, int n, double f) {
  Complex acc{0.0, 0.0};
  for (const auto& t : path_terms(path)) {
    const auto& b = s.branches[t.branch];
    acc += t.sign * b.recomb_weight * b.gain() * differential_coeff(s.lo, t.branch, n, f);
  }
  return acc;
}

inline EdgeWaveform lo_phase_waveform(const LoPhaseSet& lo, int p, double f) {
  return pulse_wave(lo.rise_time(p, f), lo.fall_time(p, f), 1.0, 0.0, 1.0 / f);
}

// Weighted sum of the path's differential LO waveforms at frequency f.
inline EdgeWaveform effective_lo(const HrReceiverSample& s, HrPath path, double f) {
  std::vector<std::pair<double, EdgeWaveform>> terms;
  for (const auto& t : path_terms(path)) {
    const auto& b = s.branches[t.branch];
    const double g = t.sign * b.recomb_weight * b.gain();
    terms.emplace_back(g, lo_phase_waveform(s.lo, t.branch, f));
    terms.emplace_back(-g, lo_phase_waveform(s.lo, t.branch + 4, f));
  }
  return superposition(terms);
}

inline double hrr_from_coeffs(Complex c1, Complex cn) {
  if (std::abs(c1) == 0.0) throw DomainError("fundamental is zero; HRR is undefined");
  if (std::abs(cn) < 1e-15 * std::abs(c1)) return kHrrInfinite;
  return 20.0 * std::log10(std::abs(c1) / std::abs(cn));
}

inline double hrr(const HrReceiverSample& s, HrPath path, int n, double f) {
  if (n < 2) throw UsageError("hrr needs n >= 2");
  return hrr_from_coeffs(path_coeff(s, path, 1, f), path_coeff(s, path, n, f));
}

// Receiver-level HRR: the worse of the two paths.
inline double receiver_hrr(const HrReceiverSample& s, int n, double f) {
  return std::min(hrr(s, HrPath::I, n, f), hrr(s, HrPath::Q, n, f));
}

// |c_n / c_1|^2, the quantity an injected tone at n*f measures.
inline double measure_harmonic_power(const HrReceiverSample& s, HrPath path, int n, double f) {
  const Complex c1 = path_coeff(s, path, 1, f);
  if (std::abs(c1) == 0.0) throw DomainError("fundamental is zero; harmonic power is undefined");
  return std::norm(path_coeff(s, path, n, f) / c1);
}

// Same measurement with only branch m active.
inline double measure_branch_harmonic_power(const HrReceiverSample& s, int m, int n, double f) {
  const Complex c1 = differential_coeff(s.lo, m, 1, f);
  return std::norm(differential_coeff(s.lo, m, n, f) / c1);
}

// Closed form for weights a:b:a at ideal 45 degree phasing.
inline double closed_form_hrr(double a, double b, int n) {
  const double rho = b / (a * std::numbers::sqrt2);
  return 20.0 * std::log10(static_cast<double>(n) * (1.0 + rho) / std::abs(1.0 - rho));
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct CalibrationStep {
  std::string stage;  // "even" or "odd-gain" / "odd-clock"
  int iteration = 0;
  std::string target;  // branch index or path name
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationStep> trace;
};

struct HrCalibration {
  HrReceiverSample sample;
  CalibrationReport report;
};

namespace detail {

inline const CombinationTable& table_for(std::size_t n, std::size_t k) {
  static thread_local std::deque<CombinationTable> cache;
  for (const auto& t : cache)
    if (t.n() == n && t.k() == k) return t;
  cache.emplace_back(n, k);
  return cache.back();
}

// A tunable K-of-N network: its realized elements, its selection and the
// cached realized subset value that the model reads.
struct Knob {
  const ElementSet* elements;
  Combination* selection;
  double* value;
};

inline Knob knob(TunableInverter& inv) { return Knob{&inv.elements, &inv.selection, &inv.selected_width}; }
inline Knob knob(HrBranch& b) { return Knob{&b.gm_elements, &b.gm_selection, &b.selected_current}; }

// Exhaustive sweep of one knob; the selection changes only on strict
// improvement, ties keep the earliest candidate. Returns the new objective.
template <typename Objective>
double sweep_knob(const Knob& k, std::size_t kk, Objective&& objective, double current) {
  const auto& table = table_for(k.elements->size(), kk);
  std::vector<double> sums;
  table.all_sums(k.elements->realized, sums);
  const double saved = *k.value;
  double best = current;
  std::size_t best_rank = table.size();
  for (std::size_t r = 0; r < table.size(); ++r) {
    *k.value = sums[r];
    const double o = objective();
    if (o < best) {
      best = o;
      best_rank = r;
    }
  }
  if (best_rank == table.size()) {
    *k.value = saved;
    return current;
  }
  *k.selection = table.at(best_rank);
  *k.value = sums[best_rank];
  return best;
}

template <typename Objective>
double coordinate_descent(const std::vector<Knob>& knobs, std::size_t kk, int passes, Objective&& objective) {
  double current = objective();
  for (int pass = 0; pass < passes; ++pass) {
    const double start = current;
    for (const auto& k : knobs) current = sweep_knob(k, kk, objective, current);
    if (!(current < start)) break;
  }
  return current;
}

}  // namespace detail

// Per branch, with the other branches off, tune the four output-buffer
// networks of phases m and m+4 to minimize 2nd-harmonic power at f0.
inline HrCalibration calibrate_even_order(const HrReceiverSample& input, const HrConfig& cfg) {
  HrCalibration out{input, {}};
  auto& s = out.sample;
  for (int m = 0; m < 4; ++m) {
    const std::vector<detail::Knob> knobs{detail::knob(s.lo.pull_up[m]), detail::knob(s.lo.pull_down[m]),
                                          detail::knob(s.lo.pull_up[m + 4]), detail::knob(s.lo.pull_down[m + 4])};
    auto objective = [&] { return measure_branch_harmonic_power(s, m, 2, cfg.f0); };
    CalibrationStep step{"even", 1, std::to_string(m), objective(), 0.0};
    step.objective_after = detail::coordinate_descent(knobs, cfg.k, cfg.even_passes, objective);
    out.report.trace.push_back(step);
  }
  return out;
}

// Per iteration and path: G_m tails at f_low, then clock inverters at f0,
// both minimizing 3rd-harmonic power. The I path owns branches 0-2 and
// INV1-3; the Q path owns branch 3 and INV4.
inline HrCalibration calibrate_odd_order(const HrReceiverSample& input, const HrConfig& cfg, int iterations) {
  if (!(cfg.f_low < cfg.f0)) throw UsageError("odd-order calibration needs f_low < f0");
  HrCalibration out{input, {}};
  auto& s = out.sample;
  for (int it = 1; it <= iterations; ++it) {
    for (HrPath path : {HrPath::I, HrPath::Q}) {
      std::vector<detail::Knob> gains, clocks;
      if (path == HrPath::I) {
        for (int m = 0; m < 3; ++m) {
          gains.push_back(detail::knob(s.branches[m]));
          clocks.push_back(detail::knob(s.lo.clock[m]));
        }
      } else {
        gains.push_back(detail::knob(s.branches[3]));
        clocks.push_back(detail::knob(s.lo.clock[3]));
      }
      auto at_low = [&] { return measure_harmonic_power(s, path, 3, cfg.f_low); };
      CalibrationStep g{"odd-gain", it, path_name(path), at_low(), 0.0};
      g.objective_after = detail::coordinate_descent(gains, cfg.k, cfg.odd_passes, at_low);
      out.report.trace.push_back(g);

      auto at_f0 = [&] { return measure_harmonic_power(s, path, 3, cfg.f0); };
      CalibrationStep c{"odd-clock", it, path_name(path), at_f0(), 0.0};
      c.objective_after = detail::coordinate_descent(clocks, cfg.k, cfg.odd_passes, at_f0);
      out.report.trace.push_back(c);
    }
  }
  return out;
}

inline HrCalibration calibrate_odd_order(const HrReceiverSample& input, const HrConfig& cfg) {
  return calibrate_odd_order(input, cfg, cfg.odd_iterations);
}

// Even order first (buffers), then odd order (gains and clocks).
inline HrCalibration calibrate_receiver(const HrReceiverSample& input, const HrConfig& cfg, int iterations) {
  HrCalibration even = calibrate_even_order(input, cfg);
  HrCalibration odd = calibrate_odd_order(even.sample, cfg, iterations);
  even.report.trace.insert(even.report.trace.end(), odd.report.trace.begin(), odd.report.trace.end());
  return HrCalibration{std::move(odd.sample), std::move(even.report)};
}

inline HrCalibration calibrate_receiver(const HrReceiverSample& input, const HrConfig& cfg) {
  return calibrate_receiver(input, cfg, cfg.odd_iterations);
}

struct HrrPoint {
  double f = 0.0;
  int n = 0;
  double hrr_i = 0.0;
  double hrr_q = 0.0;
  double hrr = 0.0;  // min of the two paths
};

// HRR at each (f, n) with the selections held fixed.
inline std::vector<HrrPoint> sweep_hrr(const HrReceiverSample& s, const std::vector<double>& f_list,
                                       const std::vector<int>& n_list) {
  std::vector<HrrPoint> out;
  out.reserve(f_list.size() * n_list.size());
  for (double f : f_list) {
    for (int n : n_list) {
      HrrPoint p{f, n, hrr(s, HrPath::I, n, f), hrr(s, HrPath::Q, n, f), 0.0};
      p.hrr = std::min(p.hrr_i, p.hrr_q);
      out.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo driver
// ---------------------------------------------------------------------------

struct HrSampleResult {
  std::size_t index = 0;
  std::vector<HrrPoint> pre;   // sweep before calibration
  std::vector<HrrPoint> post;  // sweep after calibration (empty if not run)
  CalibrationReport report;
};

inline std::vector<HrSampleResult> run_hr_study(const HrConfig& cfg, bool calibrate, int iterations) {
  design_receiver(cfg);
  std::vector<HrSampleResult> out(cfg.samples);
  parallel_for(cfg.samples, cfg.threads, [&](std::size_t i) {
    HrSampleResult r;
    r.index = i;
    const HrReceiverSample s = sample_receiver(cfg, i);
    r.pre = sweep_hrr(s, cfg.sweep_frequencies, cfg.harmonics);
    if (calibrate) {
      HrCalibration cal = calibrate_receiver(s, cfg, iterations);
      r.post = sweep_hrr(cal.sample, cfg.sweep_frequencies, cfg.harmonics);
      r.report = std::move(cal.report);
    }
    out[i] = std::move(r);
  });
  return out;
}

inline std::vector<HrSampleResult> run_hr_study(const HrConfig& cfg, bool calibrate) {
  return run_hr_study(cfg, calibrate, cfg.odd_iterations);
}

}  // namespace eses
