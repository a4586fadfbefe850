#pragma once

// Behavioral segmented current-steering DAC.
//
// 6 thermometer MSBs drive 63 unary current cells (UCCs); 8 binary LSBs come
// from unit current sources. Each UCC is K of N parallel sub-current sources
// plus an extrinsic error that the selection cannot see but calibration can
// compensate. Full scale is 2^14 - 1 LSB units with one UCC worth 2^8 units.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "eses/error.hpp"
#include "eses/mismatch.hpp"
#include "eses/parallel.hpp"
#include "eses/rng.hpp"
#include "eses/waveform.hpp"

namespace eses {

enum class InlFit { Endpoint, BestFit };

inline const char* inl_fit_name(InlFit f) { return f == InlFit::Endpoint ? "endpoint" : "best"; }

struct DacTimingSpec {
  double sigma = 0.0;  // total sigma, seconds
  double intrinsic_fraction = 0.25;
};

struct DacConfig {
  int thermometer_bits = 6;
  int binary_bits = 8;
  std::size_t n = 12;
  std::size_t k = 6;
  double ucc_nominal = 312.0;  // uA
  SizingScheme ucc_sub_scheme = ArithmeticSizing{52.0, 0.76};
  double sub_sigma = 1.1;    // uA, at the central sub size
  double ucc_sigma = 2.8;    // uA, total per UCC; the excess over sqrt(k)*sub_sigma is extrinsic
  double lsb_sigma_factor = 8.0;
  DacTimingSpec delay{1.3e-12, 0.25};
  DacTimingSpec duty{1.8e-12, 0.25};
  double timing_element_sigma = 0.02;
  double coverage_sigmas = 6.0;
  double range_margin = 1.1;
  bool sample_timing = true;

  std::size_t ucc_count() const { return (std::size_t{1} << thermometer_bits) - 1; }
  std::size_t lsb_per_ucc() const { return std::size_t{1} << binary_bits; }
  std::size_t code_count() const { return std::size_t{1} << (thermometer_bits + binary_bits); }
  double lsb_unit_nominal() const { return ucc_nominal / static_cast<double>(lsb_per_ucc()); }
  double lsb_unit_sigma() const {
    return ucc_sigma / std::sqrt(static_cast<double>(lsb_per_ucc())) / lsb_sigma_factor;
  }
  double intrinsic_ucc_sigma() const { return std::sqrt(static_cast<double>(k)) * sub_sigma; }
  double extrinsic_ucc_sigma() const {
    const double i = intrinsic_ucc_sigma();
    return ucc_sigma > i ? std::sqrt(ucc_sigma * ucc_sigma - i * i) : 0.0;
  }

  void validate() const {
    if (thermometer_bits < 1 || binary_bits < 0 || thermometer_bits + binary_bits > 20)
      throw ConfigError("dac segmentation is out of range");
    if (k == 0 || k > n || n > 24) throw ConfigError("dac element counts need 1 <= k <= n <= 24");
    if (!(ucc_nominal > 0.0)) throw ConfigError("dac.ucc_nominal must be positive");
    if (!(sub_sigma >= 0.0) || !(ucc_sigma >= 0.0)) throw ConfigError("dac sigmas must be non-negative");
    if (!(lsb_sigma_factor > 0.0)) throw ConfigError("dac.lsb_sigma_factor must be positive");
    const auto sizes = nominal_sizes(ucc_sub_scheme, n);
    const double mean = central_size(ucc_sub_scheme);
    if (std::abs(mean * static_cast<double>(k) - ucc_nominal) > 1e-9 * ucc_nominal)
      throw ConfigError("k times the mean sub-current must equal dac.ucc_nominal");
    if (ucc_sigma > 0.0 && std::abs(intrinsic_ucc_sigma() - ucc_sigma) > 0.1 * ucc_sigma)
      throw ConfigError("sqrt(k) * sub_sigma must lie within 10% of ucc_sigma");
    for (const auto* t : {&delay, &duty})
      if (!(t->sigma >= 0.0) || !(t->intrinsic_fraction > 0.0 && t->intrinsic_fraction <= 1.0))
        throw ConfigError("dac timing sigma or intrinsic fraction is invalid");
  }
};

// Paired timing networks of one UCC: the clock buffer (delay) and the latch
// transistors M1/M2 whose strength mismatch sets the duty-cycle error.
struct TimingCell {
  ElementSet delay_elements;
  Combination delay_selection;
  double delay_extrinsic = 0.0;
  ElementSet m1_elements;
  ElementSet m2_elements;
  Combination m1_selection;
  Combination m2_selection;
  double duty_extrinsic = 0.0;
};

struct DacTimingDesign {
  double delay_coefficient = 0.0;
  double delay_step = 0.0;
  double delay_extrinsic_sigma = 0.0;
  double duty_coefficient = 0.0;
  double duty_step = 0.0;
  double duty_extrinsic_sigma = 0.0;
  double element_sigma = 0.0;
  double w_nominal_half = 0.0;
};

inline DacTimingDesign design_dac_timing(const DacConfig& cfg) {
  DacTimingDesign d;
  const double kk = static_cast<double>(cfg.k);
  d.w_nominal_half = kk;
  d.element_sigma = cfg.timing_element_sigma;
  const double span = kk * static_cast<double>(cfg.n - cfg.k) / 2.0;
  auto solve = [&](double sigma, double intr_per_network, double& coef, double& step) {
    if (sigma == 0.0 || d.element_sigma == 0.0) return;
    coef = intr_per_network * d.w_nominal_half / (std::sqrt(kk) * d.element_sigma);
    const double reach = cfg.coverage_sigmas * sigma * cfg.range_margin;
    if (!(coef > reach)) throw ConfigError("dac timing tuning cannot reach the requested coverage");
    const double h = reach * d.w_nominal_half / (coef - reach);
    step = h / span;
    if (!(1.0 - 0.5 * static_cast<double>(cfg.n - 1) * step > 0.0))
      throw ConfigError("dac timing tuning range needs non-positive segment widths");
  };
  solve(cfg.delay.sigma, cfg.delay.sigma * std::sqrt(cfg.delay.intrinsic_fraction), d.delay_coefficient,
        d.delay_step);
  // M1 and M2 share the intrinsic duty variance equally; M1 alone covers the range.
  solve(cfg.duty.sigma, cfg.duty.sigma * std::sqrt(cfg.duty.intrinsic_fraction / 2.0), d.duty_coefficient,
        d.duty_step);
  d.delay_extrinsic_sigma = cfg.delay.sigma * std::sqrt(1.0 - cfg.delay.intrinsic_fraction);
  d.duty_extrinsic_sigma = cfg.duty.sigma * std::sqrt(1.0 - cfg.duty.intrinsic_fraction);
  return d;
}

inline double delay_error(const TimingCell& c, const DacTimingDesign& d) {
  if (d.delay_coefficient == 0.0) return c.delay_extrinsic;
  return d.delay_coefficient * (d.w_nominal_half / subset_value(c.delay_elements, c.delay_selection) - 1.0) +
         c.delay_extrinsic;
}

inline double duty_error(const TimingCell& c, const DacTimingDesign& d) {
  if (d.duty_coefficient == 0.0) return c.duty_extrinsic;
  return d.duty_coefficient * (d.w_nominal_half / subset_value(c.m1_elements, c.m1_selection) -
                               d.w_nominal_half / subset_value(c.m2_elements, c.m2_selection)) +
         c.duty_extrinsic;
}

struct DacSample {
  std::vector<ElementSet> ucc;           // sub-current element sets
  std::vector<Combination> selection;    // per UCC
  std::vector<double> ucc_extrinsic;     // per UCC, uA
  double ucc_scale = 1.0;                // common bias scaling of sub-currents
  std::vector<double> lsb_bits;          // bit b current, uA
  double i_ref = 0.0;                    // all LSB bits plus one unit
  double i_ref_nominal = 0.0;
  std::vector<TimingCell> timing;

  std::size_t ucc_count() const { return ucc.size(); }

  double ucc_current(std::size_t i) const {
    return ucc_scale * subset_value(ucc[i], selection[i]) + ucc_extrinsic[i];
  }
};

// Draw order: UCC sub-currents (cell by cell), UCC extrinsic errors, LSB
// units (bit 0 first, then the extra reference unit), then timing cells.
inline DacSample sample_dac(const DacConfig& cfg, RandomStream& rng) {
  cfg.validate();
  DacSample s;
  const std::size_t m = cfg.ucc_count();
  const MismatchModel model{cfg.sub_sigma, central_size(cfg.ucc_sub_scheme)};
  s.ucc.reserve(m);
  for (std::size_t i = 0; i < m; ++i) s.ucc.push_back(sample_element_set(cfg.ucc_sub_scheme, model, cfg.n, rng));
  const Combination balanced = balanced_combination(s.ucc.front(), cfg.k);
  s.selection.assign(m, balanced);
  const double ext_sigma = cfg.extrinsic_ucc_sigma();
  s.ucc_extrinsic.resize(m);
  for (auto& e : s.ucc_extrinsic) e = ext_sigma > 0.0 ? rng.normal(0.0, ext_sigma) : 0.0;

  const double unit = cfg.lsb_unit_nominal();
  const double unit_sigma = cfg.lsb_unit_sigma();
  auto draw_unit = [&] { return unit_sigma > 0.0 ? rng.normal(unit, unit_sigma) : unit; };
  s.lsb_bits.assign(static_cast<std::size_t>(cfg.binary_bits), 0.0);
  for (int b = 0; b < cfg.binary_bits; ++b)
    for (std::size_t u = 0; u < (std::size_t{1} << b); ++u) s.lsb_bits[b] += draw_unit();
  s.i_ref = draw_unit();
  for (double v : s.lsb_bits) s.i_ref += v;
  s.i_ref_nominal = unit * static_cast<double>(cfg.lsb_per_ucc());

  if (cfg.sample_timing) {
    const DacTimingDesign d = design_dac_timing(cfg);
    const MismatchModel tm{d.element_sigma, 1.0};
    const SizingScheme ds = ArithmeticSizing{1.0, d.delay_step};
    const SizingScheme us = ArithmeticSizing{1.0, d.duty_step};
    s.timing.resize(m);
    for (auto& t : s.timing) {
      t.delay_elements = sample_element_set(ds, tm, cfg.n, rng);
      t.delay_selection = balanced_combination(t.delay_elements, cfg.k);
      t.delay_extrinsic = rng.normal(0.0, d.delay_extrinsic_sigma);
      t.m1_elements = sample_element_set(us, tm, cfg.n, rng);
      t.m2_elements = sample_element_set(us, tm, cfg.n, rng);
      t.m1_selection = balanced_combination(t.m1_elements, cfg.k);
      t.m2_selection = t.m1_selection;
      t.duty_extrinsic = rng.normal(0.0, d.duty_extrinsic_sigma);
    }
  }
  return s;
}

inline std::size_t code_count(const DacSample& s) {
  return (s.ucc_count() + 1) * (std::size_t{1} << s.lsb_bits.size());
}

inline double lsb_output(const DacSample& s, std::size_t lsb_code) {
  double out = 0.0;
  for (std::size_t b = 0; b < s.lsb_bits.size(); ++b)
    if ((lsb_code >> b) & 1U) out += s.lsb_bits[b];
  return out;
}

inline double dac_output(const DacSample& s, std::size_t code) {
  if (code >= code_count(s)) throw UsageError("dac code " + std::to_string(code) + " is out of range");
  const std::size_t shift = s.lsb_bits.size();
  const std::size_t therm = code >> shift;
  double out = 0.0;
  for (std::size_t i = 0; i < therm; ++i) out += s.ucc_current(i);
  return out + lsb_output(s, code & ((std::size_t{1} << shift) - 1));
}

// Whole transfer curve, indexed by code.
inline std::vector<double> transfer_curve(const DacSample& s) {
  const std::size_t per = std::size_t{1} << s.lsb_bits.size();
  std::vector<double> lsb(per);
  for (std::size_t c = 0; c < per; ++c) lsb[c] = lsb_output(s, c);
  std::vector<double> out(code_count(s));
  double base = 0.0;
  for (std::size_t t = 0; t <= s.ucc_count(); ++t) {
    for (std::size_t c = 0; c < per; ++c) out[t * per + c] = base + lsb[c];
    if (t < s.ucc_count()) base += s.ucc_current(t);
  }
  return out;
}

struct LinearityReport {
  InlFit fit = InlFit::Endpoint;
  double unit = 0.0;  // LSB size used for normalization
  std::vector<double> inl;
  std::vector<double> dnl;  // dnl[0] = 0
  double inl_max = 0.0;
  double dnl_max = 0.0;
};

inline LinearityReport linearity_of_curve(const std::vector<double>& out, InlFit fit) {
  const std::size_t count = out.size();
  if (count < 2) throw UsageError("linearity needs at least two codes");
  LinearityReport r;
  r.fit = fit;
  double offset = out.front();
  if (fit == InlFit::Endpoint) {
    r.unit = (out.back() - out.front()) / static_cast<double>(count - 1);
  } else {
    const double nn = static_cast<double>(count);
    const double mx = (nn - 1.0) / 2.0;
    double my = 0.0;
    for (double v : out) my += v;
    my /= nn;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t c = 0; c < count; ++c) {
      const double dx = static_cast<double>(c) - mx;
      sxy += dx * (out[c] - my);
      sxx += dx * dx;
    }
    r.unit = sxy / sxx;
    offset = my - r.unit * mx;
  }
  if (!(r.unit > 0.0)) throw DomainError("transfer curve is not increasing; INL is undefined");
  r.inl.resize(count);
  r.dnl.assign(count, 0.0);
  for (std::size_t c = 0; c < count; ++c) {
    r.inl[c] = (out[c] - (offset + r.unit * static_cast<double>(c))) / r.unit;
    if (c > 0) r.dnl[c] = (out[c] - out[c - 1]) / r.unit - 1.0;
  }
  if (fit == InlFit::Endpoint) {
    r.inl.front() = 0.0;
    r.inl.back() = 0.0;
  }
  for (std::size_t c = 0; c < count; ++c) {
    r.inl_max = std::max(r.inl_max, std::abs(r.inl[c]));
    r.dnl_max = std::max(r.dnl_max, std::abs(r.dnl[c]));
  }
  return r;
}

inline LinearityReport linearity(const DacSample& s, InlFit fit = InlFit::Endpoint) {
  return linearity_of_curve(transfer_curve(s), fit);
}

// Per UCC, exhaustive closest match of (sub-current sum + extrinsic) to the
// realized reference current.
inline DacSample calibrate_amplitude_eses(const DacSample& input, std::size_t k) {
  DacSample s = input;
  if (s.ucc.empty()) return s;
  const CombinationTable table(s.ucc.front().size(), k);
  for (std::size_t i = 0; i < s.ucc_count(); ++i) {
    const double target = (s.i_ref - s.ucc_extrinsic[i]) / s.ucc_scale;
    s.selection[i] = find_best(s.ucc[i], table, target).combination;
  }
  return s;
}

// SES comparison: the same flow over uniformly sized sub-currents.
inline DacSample calibrate_amplitude_ses_comparison(const DacSample& input, std::size_t k) {
  for (const auto& u : input.ucc) {
    if (std::adjacent_find(u.nominal.begin(), u.nominal.end(), std::not_equal_to<>()) != u.nominal.end())
      throw UsageError("SES comparison needs uniformly sized sub-currents");
  }
  return calibrate_amplitude_eses(input, k);
}

// SES comparison config: equal-mean uniform sizing with the same sub sigma.
inline DacConfig ses_comparison_config(const DacConfig& cfg) {
  DacConfig c = cfg;
  c.ucc_sub_scheme = UniformSizing{central_size(cfg.ucc_sub_scheme)};
  return c;
}

// Delay: exhaustive search of the clock buffer minimizing |delay error|.
// Duty: M2 stays balanced; exhaustive search of M1 minimizing |duty error|.
inline DacSample calibrate_timing(const DacSample& input, const DacConfig& cfg) {
  DacSample s = input;
  const DacTimingDesign d = design_dac_timing(cfg);
  const CombinationTable table(cfg.n, cfg.k);
  std::vector<double> sums;
  for (auto& t : s.timing) {
    if (d.delay_coefficient != 0.0) {
      table.all_sums(t.delay_elements.realized, sums);
      double best = std::abs(delay_error(t, d));
      for (std::size_t r = 0; r < sums.size(); ++r) {
        const double e = std::abs(d.delay_coefficient * (d.w_nominal_half / sums[r] - 1.0) + t.delay_extrinsic);
        if (e < best) {
          best = e;
          t.delay_selection = table.at(r);
        }
      }
    }
    if (d.duty_coefficient != 0.0) {
      table.all_sums(t.m1_elements.realized, sums);
      const double m2 = d.w_nominal_half / subset_value(t.m2_elements, t.m2_selection);
      double best = std::abs(duty_error(t, d));
      for (std::size_t r = 0; r < sums.size(); ++r) {
        const double e = std::abs(d.duty_coefficient * (d.w_nominal_half / sums[r] - m2) + t.duty_extrinsic);
        if (e < best) {
          best = e;
          t.m1_selection = table.at(r);
        }
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// SES self-healing controller
// ---------------------------------------------------------------------------

struct SelfHealConfig {
  int thermometer_bits = 6;
  int binary_bits = 8;
  std::size_t n = 16;
  std::size_t k = 8;
  double sub_nominal = 19.53;  // uA
  double ucc_sigma = 0.53;     // uA; sub sigma = ucc_sigma / sqrt(k)
  double i_tiny = 0.053;       // uA, window width above I_ref
  double lsb_sigma_factor = 8.0;
  std::size_t cell_trial_limit = 1000;
  std::size_t toplevel_trial_limit = 20;
  std::size_t backup_ucc_count = 4;
  double bias_relative_sigma = 0.003;

  std::size_t ucc_count() const { return (std::size_t{1} << thermometer_bits) - 1; }
  double ucc_nominal() const { return sub_nominal * static_cast<double>(k); }
  double sub_sigma() const { return ucc_sigma / std::sqrt(static_cast<double>(k)); }
  double lsb_unit_nominal() const { return ucc_nominal() / static_cast<double>(std::size_t{1} << binary_bits); }
  double lsb_unit_sigma() const {
    return ucc_sigma / std::sqrt(static_cast<double>(std::size_t{1} << binary_bits)) / lsb_sigma_factor;
  }

  void validate() const {
    if (k == 0 || k > n || n > 24) throw ConfigError("self-heal element counts need 1 <= k <= n <= 24");
    if (!(i_tiny > 0.0)) throw ConfigError("heal.i_tiny must be positive");
    if (cell_trial_limit < 1 || toplevel_trial_limit < 1) throw ConfigError("heal trial limits must be >= 1");
    if (!(sub_nominal > 0.0) || !(ucc_sigma >= 0.0) || !(bias_relative_sigma >= 0.0))
      throw ConfigError("heal currents and sigmas are invalid");
    if (!(lsb_sigma_factor > 0.0)) throw ConfigError("heal.lsb_sigma_factor must be positive");
  }
};

struct SelfHealSample {
  DacSample dac;                   // primary UCCs, LSBs and reference
  std::vector<ElementSet> backups;  // pooled spare UCCs
  ElementSet bias;                 // top-level SES bias network
};

// Draw order: primary UCCs, backups, LSB units (as sample_dac), bias set.
inline SelfHealSample sample_self_heal(const SelfHealConfig& cfg, RandomStream& rng) {
  cfg.validate();
  SelfHealSample s;
  const SizingScheme scheme = UniformSizing{cfg.sub_nominal};
  const MismatchModel model{cfg.sub_sigma(), cfg.sub_nominal};
  const std::size_t m = cfg.ucc_count();
  for (std::size_t i = 0; i < m; ++i) s.dac.ucc.push_back(sample_element_set(scheme, model, cfg.n, rng));
  for (std::size_t i = 0; i < cfg.backup_ucc_count; ++i) s.backups.push_back(sample_element_set(scheme, model, cfg.n, rng));
  Combination first;
  first.indices.resize(cfg.k);
  for (std::size_t j = 0; j < cfg.k; ++j) first.indices[j] = j;
  s.dac.selection.assign(m, first);
  s.dac.ucc_extrinsic.assign(m, 0.0);

  const double unit = cfg.lsb_unit_nominal();
  const double unit_sigma = cfg.lsb_unit_sigma();
  auto draw_unit = [&] { return unit_sigma > 0.0 ? rng.normal(unit, unit_sigma) : unit; };
  s.dac.lsb_bits.assign(static_cast<std::size_t>(cfg.binary_bits), 0.0);
  for (int b = 0; b < cfg.binary_bits; ++b)
    for (std::size_t u = 0; u < (std::size_t{1} << b); ++u) s.dac.lsb_bits[b] += draw_unit();
  s.dac.i_ref = draw_unit();
  for (double v : s.dac.lsb_bits) s.dac.i_ref += v;
  s.dac.i_ref_nominal = cfg.ucc_nominal();

  const double bs = cfg.bias_relative_sigma;
  s.bias = sample_element_set(UniformSizing{1.0}, MismatchModel{bs, 1.0}, cfg.n, rng);
  return s;
}

struct CellAttempt {
  std::size_t position = 0;  // thermometer position 0..62
  std::optional<std::size_t> backup;  // backup pool index, if a spare was used
  std::size_t trials = 0;
  bool hit = false;
  std::vector<std::size_t> combination;  // winning selection when hit
};

struct TopLevelAttempt {
  std::vector<std::size_t> bias_combination;
  double scale = 1.0;
  std::vector<CellAttempt> cells;
  std::size_t backups_used = 0;
  bool healed = false;
};

struct SelfHealTrace {
  std::uint64_t seed = 0;
  std::vector<TopLevelAttempt> attempts;
  bool healed = false;
};

struct SelfHealOutcome {
  bool healed = false;
  DacSample dac;  // healed DAC when healed, the last attempt otherwise
  SelfHealTrace trace;
};

// Self-heal controller. The first top-level attempt uses the first bias
// combination; restarts draw a bias combination at random. Within an attempt
// each UCC gets cell_trial_limit random draws for a sum in
// [I_ref, I_ref + i_tiny]; a miss moves the position to the next pooled
// backup. Running out of backups ends the attempt.
inline SelfHealOutcome self_heal_ses(const SelfHealSample& sample, const SelfHealConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SelfHealOutcome out;
  out.trace.seed = seed;
  RandomStream rng(seed);
  const std::size_t m = sample.dac.ucc_count();
  const double nominal_bias = static_cast<double>(cfg.k);
  const std::uint64_t bias_total = binomial(cfg.n, cfg.k);
  const TargetWindow window{sample.dac.i_ref + 0.5 * cfg.i_tiny, cfg.i_tiny};

  for (std::size_t attempt = 0; attempt < cfg.toplevel_trial_limit; ++attempt) {
    TopLevelAttempt ta;
    const Combination bias_combo =
        attempt == 0 ? unrank_combination(cfg.n, cfg.k, 0) : unrank_combination(cfg.n, cfg.k, rng.index(bias_total));
    ta.bias_combination = bias_combo.indices;
    ta.scale = subset_value(sample.bias, bias_combo) / nominal_bias;

    DacSample dac = sample.dac;
    dac.ucc_scale = ta.scale;
    std::size_t next_backup = 0;
    bool ok = true;
    for (std::size_t pos = 0; pos < m && ok; ++pos) {
      std::optional<std::size_t> backup;
      for (;;) {
        const ElementSet& cell = backup ? sample.backups[*backup] : sample.dac.ucc[pos];
        ElementSet scaled = cell;
        for (auto& v : scaled.realized) v *= ta.scale;
        const WindowHit hit = find_in_window(scaled, cfg.k, window, RandomSearch{cfg.cell_trial_limit, &rng});
        CellAttempt ca{pos, backup, hit.trials, hit.combination.has_value(), {}};
        if (hit.combination) {
          ca.combination = hit.combination->indices;
          if (backup) dac.ucc[pos] = sample.backups[*backup];
          dac.selection[pos] = *hit.combination;
          ta.cells.push_back(std::move(ca));
          break;
        }
        ta.cells.push_back(std::move(ca));
        if (next_backup >= sample.backups.size()) {
          ok = false;
          break;
        }
        backup = next_backup++;
      }
    }
    ta.backups_used = next_backup;
    ta.healed = ok;
    out.trace.attempts.push_back(std::move(ta));
    out.dac = std::move(dac);
    if (ok) {
      out.healed = true;
      out.trace.healed = true;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error sensing
// ---------------------------------------------------------------------------

enum class SenseMode { Amplitude, Delay, DutyCycle };

struct CellParams {
  double amplitude = 1.0;  // current
  double delay = 0.0;      // seconds
  double duty = 0.0;       // seconds; positive widens the high phase
};

struct SensingConfig {
  double f_meas = 400e6;
  double sensing_gain = 1.0;

  void validate() const {
    if (!(f_meas > 0.0)) throw ConfigError("sense.f_meas must be positive");
  }
};

// Cell output toggled at f_meas: high on [delay - duty/2, T/2 + delay + duty/2).
inline EdgeWaveform cell_waveform(const CellParams& c, double f_meas) {
  const double rise = f_meas * (c.delay - 0.5 * c.duty);
  const double fall = 0.5 + f_meas * (c.delay + 0.5 * c.duty);
  return pulse_wave(rise, fall, c.amplitude, 0.0, 1.0 / f_meas);
}

// Modulation of each mode, t in fractions of 1/f_meas. Mean of
// (difference * modulation) over one period is -Im c1, -Re c1 and Re c2.
inline double modulation(SenseMode mode, double t) {
  const double w = 2.0 * std::numbers::pi * t;
  switch (mode) {
    case SenseMode::Amplitude: return std::sin(w);
    case SenseMode::Delay: return -std::cos(w);
    case SenseMode::DutyCycle: return std::cos(2.0 * w);
  }
  return 0.0;
}

inline double sense_error(const CellParams& cell_a, const CellParams& cell_ref, SenseMode mode,
                          const SensingConfig& cfg) {
  cfg.validate();
  const EdgeWaveform diff = superposition({{1.0, cell_waveform(cell_a, cfg.f_meas)},
                                           {-1.0, cell_waveform(cell_ref, cfg.f_meas)}});
  if (diff.is_constant()) return cfg.sensing_gain * 0.0;
  double v = 0.0;
  switch (mode) {
    case SenseMode::Amplitude: v = -fourier_coeff(diff, 1).imag(); break;
    case SenseMode::Delay: v = -fourier_coeff(diff, 1).real(); break;
    case SenseMode::DutyCycle: v = fourier_coeff(diff, 2).real(); break;
  }
  return cfg.sensing_gain * v;
}

// ---------------------------------------------------------------------------
// Yield studies
// ---------------------------------------------------------------------------

enum class DacFlow { EsesAmplitude, SesComparison, SelfHeal, Timing };

inline const char* flow_name(DacFlow f) {
  switch (f) {
    case DacFlow::EsesAmplitude: return "eses";
    case DacFlow::SesComparison: return "ses";
    case DacFlow::SelfHeal: return "self-heal";
    case DacFlow::Timing: return "timing";
  }
  return "";
}

// Amplitude flows fill the INL/DNL columns; the timing flow stores the RMS
// delay and duty errors over the 63 cells in seconds; self-heal stores
// `healed` and leaves post values NaN for failed samples.
struct YieldRow {
  std::size_t sample_id = 0;
  double pre_inl_max = 0.0;
  double post_inl_max = 0.0;
  double pre_dnl_max = 0.0;
  double post_dnl_max = 0.0;
  double pre_delay_rms = 0.0;
  double post_delay_rms = 0.0;
  double pre_duty_rms = 0.0;
  double post_duty_rms = 0.0;
  bool healed = true;
  std::size_t toplevel_attempts = 0;
};

struct Percentiles {
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
};

// Linear interpolation between order statistics (the common "type 7" rule).
inline double percentile(std::vector<double> v, double q) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Percentiles percentiles(const std::vector<double>& v) {
  return Percentiles{percentile(v, 0.50), percentile(v, 0.95), percentile(v, 0.99)};
}

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;  // values above hi land in the last bin
};

inline Histogram histogram(const std::vector<double>& v, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw UsageError("histogram needs bins >= 1 and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double x : v) {
    if (std::isnan(x)) continue;
    auto b = static_cast<std::ptrdiff_t>(std::floor((x - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

struct YieldStudyConfig {
  DacFlow flow = DacFlow::EsesAmplitude;
  DacConfig dac;
  SelfHealConfig heal;
  InlFit fit = InlFit::BestFit;
  std::size_t samples = 10000;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
};

struct YieldStudyResult {
  std::vector<YieldRow> rows;
  double heal_success = 0.0;      // self-heal only
  double pooled_pre_delay = 0.0;  // timing only, RMS over every cell of every sample
  double pooled_post_delay = 0.0;
  double pooled_pre_duty = 0.0;
  double pooled_post_duty = 0.0;
};

inline double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.size()));
}

// Seed of the self-heal controller for sample i; logged in the trace.
inline std::uint64_t self_heal_seed(std::uint64_t master, std::size_t i) {
  return RandomStream::derive(master, i, 1).seed();
}

inline YieldRow yield_sample(const YieldStudyConfig& cfg, std::size_t i) {
  YieldRow row;
  row.sample_id = i;
  RandomStream rng = RandomStream::derive(cfg.master_seed, i);
  switch (cfg.flow) {
    case DacFlow::EsesAmplitude:
    case DacFlow::SesComparison: {
      DacConfig dc = cfg.flow == DacFlow::SesComparison ? ses_comparison_config(cfg.dac) : cfg.dac;
      dc.sample_timing = false;
      const DacSample s = sample_dac(dc, rng);
      const DacSample post = cfg.flow == DacFlow::SesComparison ? calibrate_amplitude_ses_comparison(s, dc.k)
                                                                  : calibrate_amplitude_eses(s, dc.k);
      const auto a = linearity(s, cfg.fit);
      const auto b = linearity(post, cfg.fit);
      row.pre_inl_max = a.inl_max;
      row.pre_dnl_max = a.dnl_max;
      row.post_inl_max = b.inl_max;
      row.post_dnl_max = b.dnl_max;
      break;
    }
    case DacFlow::SelfHeal: {
      const SelfHealSample s = sample_self_heal(cfg.heal, rng);
      const auto a = linearity(s.dac, cfg.fit);
      row.pre_inl_max = a.inl_max;
      row.pre_dnl_max = a.dnl_max;
      const SelfHealOutcome o = self_heal_ses(s, cfg.heal, self_heal_seed(cfg.master_seed, i));
      row.healed = o.healed;
      row.toplevel_attempts = o.trace.attempts.size();
      if (o.healed) {
        const auto b = linearity(o.dac, cfg.fit);
        row.post_inl_max = b.inl_max;
        row.post_dnl_max = b.dnl_max;
      } else {
        row.post_inl_max = row.post_dnl_max = std::numeric_limits<double>::quiet_NaN();
      }
      break;
    }
    case DacFlow::Timing: {
      DacConfig dc = cfg.dac;
      dc.sample_timing = true;
      const DacSample s = sample_dac(dc, rng);
      const DacSample post = calibrate_timing(s, dc);
      const DacTimingDesign d = design_dac_timing(dc);
      std::vector<double> a, b, c, e;
      for (std::size_t u = 0; u < s.timing.size(); ++u) {
        a.push_back(delay_error(s.timing[u], d));
        b.push_back(delay_error(post.timing[u], d));
        c.push_back(duty_error(s.timing[u], d));
        e.push_back(duty_error(post.timing[u], d));
      }
      row.pre_delay_rms = rms(a);
      row.post_delay_rms = rms(b);
      row.pre_duty_rms = rms(c);
      row.post_duty_rms = rms(e);
      break;
    }
  }
  return row;
}

inline YieldStudyResult yield_study(const YieldStudyConfig& cfg) {
  if (cfg.samples < 1) throw ConfigError("dac.samples must be at least 1");
  if (cfg.flow == DacFlow::SelfHeal)
    cfg.heal.validate();
  else
    cfg.dac.validate();
  YieldStudyResult r;
  r.rows.resize(cfg.samples);
  parallel_for(cfg.samples, cfg.threads, [&](std::size_t i) { r.rows[i] = yield_sample(cfg, i); });
  if (cfg.flow == DacFlow::SelfHeal) {
    std::size_t ok = 0;
    for (const auto& row : r.rows) ok += row.healed ? 1 : 0;
    r.heal_success = static_cast<double>(ok) / static_cast<double>(r.rows.size());
  }
  if (cfg.flow == DacFlow::Timing) {
    // Every sample has the same cell count, so the pooled RMS is the RMS of
    // the per-sample RMS values.
    auto pool = [&](double YieldRow::*field) {
      double acc = 0.0;
      for (const auto& row : r.rows) acc += row.*field * (row.*field);
      return std::sqrt(acc / static_cast<double>(r.rows.size()));
    };
    r.pooled_pre_delay = pool(&YieldRow::pre_delay_rms);
    r.pooled_post_delay = pool(&YieldRow::post_delay_rms);
    r.pooled_pre_duty = pool(&YieldRow::pre_duty_rms);
    r.pooled_post_duty = pool(&YieldRow::post_duty_rms);
  }
  return r;
}

}  // namespace eses
