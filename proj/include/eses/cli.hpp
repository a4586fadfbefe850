#pragma once

// Command-line orchestration: config resolution, study dispatch and artifact
// emission. Every artifact depends only on the resolved config, never on the
// thread count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "eses/config.hpp"
#include "eses/csdac.hpp"
#include "eses/error.hpp"
#include "eses/hrmixer.hpp"
#include "eses/parallel.hpp"
#include "eses/report.hpp"
#include "eses/studies.hpp"

namespace eses {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::system_error(std::make_error_code(std::errc::io_error), "cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// ---------------------------------------------------------------------------
// Config to module structs
// ---------------------------------------------------------------------------

inline std::uint64_t cfg_seed(const Config& c) { return c.u64("run.seed"); }

inline unsigned cfg_threads(const Config& c) {
  const auto t = c.u64("run.threads");
  if (t < 1 || t > 1024) throw ConfigError("run.threads must lie in [1, 1024]");
  return static_cast<unsigned>(t);
}

inline OffsetSpec make_offset(const std::string& key, const std::string& kind, double value) {
  if (kind == "fixed") return FixedOffset{value};
  if (kind == "gaussian") return GaussianOffset{value};
  throw ConfigError(key + " must be 'fixed' or 'gaussian', got '" + kind + "'");
}

// n, k, central size, model, seed and threads from the study section.
inline StudyConfig study_template(const Config& c, const std::string& samples_key) {
  StudyConfig s;
  s.n = c.count("study.n");
  s.k = c.count("study.k");
  const double a = c.num("study.a");
  if (!(a > 0.0)) throw ConfigError("study.a must be positive");
  s.scheme = UniformSizing{a};
  s.model = MismatchModel{c.num("study.sigma_center"), a};
  if (!(s.model.sigma_ref > 0.0)) throw ConfigError("study.sigma_center must be positive");
  s.samples = c.count(samples_key);
  s.master_seed = cfg_seed(c);
  s.threads = cfg_threads(c);
  s.validate();
  return s;
}

inline HrConfig hr_config(const Config& c) {
  HrConfig h;
  h.n = c.count("hr.n");
  h.k = c.count("hr.k");
  h.f0 = c.num("hr.f0");
  h.f_low = c.num("hr.f_low");
  h.alpha = c.num("hr.alpha");
  h.weight_outer = c.num("hr.weight_outer");
  h.weight_center = c.num("hr.weight_center");
  h.gain_sigma = c.num("hr.gain_sigma");
  h.gain_intrinsic_fraction = c.num("hr.gain_intrinsic_fraction");
  h.clock_sigma = c.num("hr.clock_sigma");
  h.clock_intrinsic_fraction = c.num("hr.clock_intrinsic_fraction");
  h.buffer_sigma = c.num("hr.buffer_sigma");
  h.buffer_intrinsic_fraction = c.num("hr.buffer_intrinsic_fraction");
  h.timing_element_sigma = c.num("hr.timing_element_sigma");
  h.coverage_sigmas = c.num("hr.coverage_sigmas");
  h.range_margin = c.num("hr.range_margin");
  h.even_passes = c.integer("hr.even_passes");
  h.odd_passes = c.integer("hr.odd_passes");
  h.odd_iterations = c.integer("hr.odd_iterations");
  h.samples = c.count("hr.samples");
  h.master_seed = cfg_seed(c);
  h.threads = cfg_threads(c);
  h.sweep_frequencies = c.list("hr.sweep_frequencies");
  h.harmonics = c.int_list("hr.harmonics");
  h.validate();
  design_receiver(h);
  return h;
}

inline DacConfig dac_config(const Config& c) {
  DacConfig d;
  d.thermometer_bits = c.integer("dac.thermometer_bits");
  d.binary_bits = c.integer("dac.binary_bits");
  if (d.thermometer_bits < 1 || d.binary_bits < 1 || d.thermometer_bits + d.binary_bits > 20)
    throw ConfigError("dac bit counts need 1 <= bits and a total of at most 20");
  d.n = c.count("dac.n");
  d.k = c.count("dac.k");
  d.ucc_nominal = c.num("dac.ucc_nominal");
  const std::string scheme = c.str("dac.sub_scheme");
  if (scheme == "arithmetic")
    d.ucc_sub_scheme = ArithmeticSizing{c.num("dac.sub_mean"), c.num("dac.sub_step")};
  else if (scheme == "uniform")
    d.ucc_sub_scheme = UniformSizing{c.num("dac.sub_mean")};
  else if (scheme == "explicit")
    d.ucc_sub_scheme = ExplicitSizing{c.list("dac.sub_sizes")};
  else
    throw ConfigError("dac.sub_scheme must be arithmetic, uniform or explicit");
  d.sub_sigma = c.num("dac.sub_sigma");
  d.ucc_sigma = c.num("dac.ucc_sigma");
  d.lsb_sigma_factor = c.num("dac.lsb_sigma_factor");
  d.delay = DacTimingSpec{c.num("dac.delay_sigma"), c.num("dac.delay_intrinsic_fraction")};
  d.duty = DacTimingSpec{c.num("dac.duty_sigma"), c.num("dac.duty_intrinsic_fraction")};
  d.timing_element_sigma = c.num("dac.timing_element_sigma");
  d.coverage_sigmas = c.num("dac.coverage_sigmas");
  d.range_margin = c.num("dac.range_margin");
  return d;
}

inline SelfHealConfig heal_config(const Config& c) {
  SelfHealConfig h;
  h.thermometer_bits = c.integer("heal.thermometer_bits");
  h.binary_bits = c.integer("heal.binary_bits");
  if (h.thermometer_bits < 1 || h.binary_bits < 1 || h.thermometer_bits + h.binary_bits > 20)
    throw ConfigError("heal bit counts need 1 <= bits and a total of at most 20");
  h.n = c.count("heal.n");
  h.k = c.count("heal.k");
  h.sub_nominal = c.num("heal.sub_nominal");
  h.ucc_sigma = c.num("heal.ucc_sigma");
  h.i_tiny = c.num("heal.i_tiny");
  h.lsb_sigma_factor = c.num("heal.lsb_sigma_factor");
  h.cell_trial_limit = c.count("heal.cell_trial_limit");
  h.toplevel_trial_limit = c.count("heal.toplevel_trial_limit");
  h.backup_ucc_count = c.count("heal.backup_ucc_count");
  h.bias_relative_sigma = c.num("heal.bias_relative_sigma");
  h.validate();
  return h;
}

inline DacFlow parse_flow(const std::string& s) {
  if (s == "eses") return DacFlow::EsesAmplitude;
  if (s == "ses") return DacFlow::SesComparison;
  if (s == "self-heal") return DacFlow::SelfHeal;
  if (s == "timing") return DacFlow::Timing;
  throw ConfigError("dac.flow must be eses, ses, self-heal or timing, got '" + s + "'");
}

inline InlFit parse_fit(const std::string& s) {
  if (s == "best") return InlFit::BestFit;
  if (s == "endpoint") return InlFit::Endpoint;
  throw ConfigError("dac.inl_fit must be best or endpoint, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

struct RunContext {
  std::string subcommand;
  Config config;
  std::map<std::string, std::string> overrides;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> artifacts;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::string line;  // one-line summary
  bool infeasible = false;

  std::string figure_id(const std::string& fallback) const {
    const std::string& id = config.str("run.figure_id");
    return id.empty() ? fallback : id;
  }

  void emit(const FigureDataset& ds) {
    for (const auto& p : emit_figure(ds, out_dir)) artifacts.push_back(p);
  }

  void emit_json(const std::string& name, const nlohmann::ordered_json& j) {
    std::filesystem::create_directories(out_dir);
    const auto p = out_dir / name;
    write_file(p, dump_json(j));
    artifacts.push_back(p);
  }
};

// Caps +inf HRR for CSV output.
inline double hrr_csv(double v) { return std::min(v, kHrrCsvCap); }

// ---------------------------------------------------------------------------
// study
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& study_columns() {
  static const std::vector<std::string> cols{"method",  "d_eses",   "a_eses",       "offset_kind", "sigma_T",
                                             "width_over_sigmak", "samples", "failures", "failure_rate", "stderr"};
  return cols;
}

inline void add_study_rows(Table& t, const std::string& method, double d, double a, const OffsetSpec& off,
                           const StudyResult& r) {
  const bool gaussian = std::holds_alternative<GaussianOffset>(off);
  const double v = gaussian ? std::get<GaussianOffset>(off).sigma_T : std::get<FixedOffset>(off).value;
  for (const auto& p : r.points)
    t.add({method, d, a, std::string(gaussian ? "gaussian" : "fixed"), v, p.width,
           static_cast<long long>(p.samples), static_cast<long long>(p.failures), p.failure_rate, p.std_error});
}

inline void run_failure_rate(RunContext& ctx) {
  const Config& c = ctx.config;
  StudyConfig templ = study_template(c, "study.samples");
  templ.window_widths = c.list("study.widths");
  const double a = c.num("study.a");
  const auto d_values = c.list("study.d_values");
  const auto offsets = c.list("study.offset_values");
  const std::string kind = c.str("study.offset");
  FigureDataset ds{ctx.figure_id("fig3.3"), Table{study_columns(), {}}, {}};
  for (double off : offsets) {
    for (double d : d_values) {
      if (d < 0.0) throw ConfigError("study.d_values must be non-negative");
      StudyConfig cfg = templ;
      cfg.offset = make_offset("study.offset", kind, off);
      cfg.scheme = d == 0.0 ? SizingScheme{UniformSizing{a}} : SizingScheme{eses_sizing(a, d, cfg.model, cfg.k)};
      cfg.validate();
      add_study_rows(ds.table, d == 0.0 ? "SES" : "ESES", d, a, cfg.offset, run_study(cfg));
    }
  }
  ds.meta["x_axis"] = "width_over_sigmak";
  ds.meta["y_axis"] = "failure_rate";
  ds.meta["units"] = "window width, d_eses and sigma_T (or T_offset for fixed offsets) in sigma_k units";
  ds.meta["samples_per_curve"] = templ.samples;
  ctx.emit(ds);
  ctx.line = std::to_string(ds.table.rows.size()) + " rows";
}

inline void run_frontier(RunContext& ctx) {
  const Config& c = ctx.config;
  const StudyConfig templ = study_template(c, "frontier.samples");
  const auto entries = rcal_frontier(templ, c.list("frontier.sigma_T_values"), c.list("frontier.d_values"),
                                     c.list("frontier.widths"), c.num("frontier.yield_floor"));
  FigureDataset ds{ctx.figure_id("fig3.9"), Table{{"sigma_T_over_sigmak", "best_rcal", "d_eses", "width"}, {}}, {}};
  nlohmann::ordered_json detail = nlohmann::ordered_json::array();
  std::size_t infeasible = 0;
  for (const auto& e : entries) {
    if (!e.feasible) {
      ++infeasible;
      ds.table.add({e.sigma_T, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN()});
    } else {
      ds.table.add({e.sigma_T, e.best_rcal, e.d_eses, e.width});
    }
    detail.push_back({{"sigma_T", e.sigma_T}, {"feasible", e.feasible}, {"failure_rate", e.failure_rate}});
  }
  ds.meta["x_axis"] = "sigma_T_over_sigmak";
  ds.meta["y_axis"] = "best_rcal";
  ds.meta["yield_floor"] = c.num("frontier.yield_floor");
  ds.meta["samples"] = templ.samples;
  ds.meta["entries"] = detail;
  ctx.emit(ds);
  ctx.infeasible = infeasible > 0;
  ctx.summary["infeasible_entries"] = infeasible;
  ctx.line = std::to_string(entries.size()) + " sigma_T values, " + std::to_string(infeasible) + " infeasible";
}

inline void run_a_sweep(RunContext& ctx) {
  const Config& c = ctx.config;
  StudyConfig templ = study_template(c, "asweep.samples");
  templ.window_widths = c.list("asweep.widths");
  templ.offset = make_offset("asweep.offset", c.str("asweep.offset"), c.num("asweep.offset_value"));
  const double d_over = c.num("asweep.d_over_sigmak");
  const double sk = std::sqrt(static_cast<double>(templ.k)) * templ.model.element_sigma(c.num("study.a"));
  const auto curves = a_eses_sweep(templ, c.list("asweep.a_values"), d_over * sk);
  FigureDataset ds{ctx.figure_id("fig3.10"), Table{study_columns(), {}}, {}};
  nlohmann::ordered_json rel = nlohmann::ordered_json::array();
  for (const auto& cv : curves) {
    add_study_rows(ds.table, "ESES", d_over, cv.a, templ.offset, cv.result);
    rel.push_back({{"a_eses", cv.a}, {"relative_sigma", cv.relative_sigma}});
  }
  ds.meta["x_axis"] = "width_over_sigmak";
  ds.meta["y_axis"] = "failure_rate";
  ds.meta["d_abs"] = d_over * sk;
  ds.meta["curves"] = rel;
  ctx.emit(ds);
  ctx.line = std::to_string(curves.size()) + " curves";
}

// ---------------------------------------------------------------------------
// hr
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json selections_json(const HrReceiverSample& s) {
  auto sel = [](const Combination& c) { return nlohmann::ordered_json(c.indices); };
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["gm"] = nlohmann::ordered_json::array();
  for (const auto& b : s.branches) j["gm"].push_back(sel(b.gm_selection));
  j["clock"] = nlohmann::ordered_json::array();
  for (const auto& inv : s.lo.clock) j["clock"].push_back(sel(inv.selection));
  j["pull_up"] = nlohmann::ordered_json::array();
  for (const auto& inv : s.lo.pull_up) j["pull_up"].push_back(sel(inv.selection));
  j["pull_down"] = nlohmann::ordered_json::array();
  for (const auto& inv : s.lo.pull_down) j["pull_down"].push_back(sel(inv.selection));
  return j;
}

inline nlohmann::ordered_json trace_json(const CalibrationReport& r) {
  nlohmann::ordered_json t = nlohmann::ordered_json::array();
  for (const auto& st : r.trace)
    t.push_back({{"stage", st.stage},
                 {"iteration", st.iteration},
                 {"target", st.target},
                 {"objective_before", st.objective_before},
                 {"objective_after", st.objective_after}});
  return t;
}

struct HrRecord {
  std::size_t sample = 0;
  double f = 0.0;
  int n = 0;
  std::string phase;
  double hrr_i = 0.0;
  double hrr_q = 0.0;
  double hrr = 0.0;
};

// Medians per (phase, f, n) in first-seen order, plus the per-sample table.
inline void emit_hr(RunContext& ctx, const std::string& id, const std::vector<HrRecord>& records,
                    const nlohmann::ordered_json& meta) {
  std::vector<std::tuple<std::string, double, int>> keys;
  std::map<std::tuple<std::string, double, int>, std::vector<double>> groups;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.phase, r.f, r.n);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(hrr_csv(r.hrr));
  }
  FigureDataset med{id, Table{{"f_hz", "n", "hrr_db", "phase"}, {}}, meta};
  for (const auto& key : keys)
    med.table.add({std::get<1>(key), static_cast<long long>(std::get<2>(key)), percentile(groups[key], 0.5),
                   std::get<0>(key)});
  med.meta["statistic"] = "median over samples";
  med.meta["hrr_cap_db"] = kHrrCsvCap;
  ctx.emit(med);

  FigureDataset per{id + "_samples",
                    Table{{"sample_id", "f_hz", "n", "phase", "hrr_i_db", "hrr_q_db", "hrr_db"}, {}},
                    nlohmann::ordered_json::object()};
  for (const auto& r : records)
    per.table.add({static_cast<long long>(r.sample), r.f, static_cast<long long>(r.n), r.phase, hrr_csv(r.hrr_i),
                   hrr_csv(r.hrr_q), hrr_csv(r.hrr)});
  per.meta["hrr_cap_db"] = kHrrCsvCap;
  ctx.emit(per);
}

inline void append_points(std::vector<HrRecord>& out, std::size_t sample, const std::string& phase,
                          const std::vector<HrrPoint>& pts) {
  for (const auto& p : pts) out.push_back({sample, p.f, p.n, phase, p.hrr_i, p.hrr_q, p.hrr});
}

// Calibrate at f0 (sweep) or skip calibration (simulate), then sweep.
inline void run_hr_fixed(RunContext& ctx, bool calibrate) {
  const HrConfig h = hr_config(ctx.config);
  const auto results = run_hr_study(h, calibrate);
  std::vector<HrRecord> records;
  nlohmann::ordered_json cal = nlohmann::ordered_json::array();
  for (const auto& r : results) append_points(records, r.index, "pre", r.pre);
  for (const auto& r : results) append_points(records, r.index, "post", r.post);
  const std::string id = ctx.figure_id(calibrate ? "fig4.14" : "hr_simulate");
  nlohmann::ordered_json meta = {{"x_axis", "f_hz"}, {"y_axis", "hrr_db"}, {"samples", h.samples},
                                 {"calibration_f0_hz", calibrate ? h.f0 : 0.0}};
  emit_hr(ctx, id, records, meta);
  if (calibrate) {
    // Recomputing the selections keeps run_hr_study lean; the sample is a pure
    // function of (config, index).
    std::vector<nlohmann::ordered_json> per(h.samples);
    parallel_for(h.samples, h.threads, [&](std::size_t i) {
      const HrCalibration c = calibrate_receiver(sample_receiver(h, i), h);
      per[i] = {{"sample_id", i}, {"f0_hz", h.f0}, {"selections", selections_json(c.sample)},
                {"trace", trace_json(c.report)}};
    });
    for (auto& p : per) cal.push_back(std::move(p));
    ctx.emit_json(id + "_calibration.json", cal);
  }
  ctx.line = std::to_string(h.samples) + " receivers";
}

// Calibration frequency equal to each evaluation frequency; f_low keeps its
// ratio to f0.
inline HrConfig hr_config_at(const HrConfig& base, double f) {
  HrConfig c = base;
  c.f0 = f;
  c.f_low = f * (base.f_low / base.f0);
  return c;
}

inline void run_hr_calibrate(RunContext& ctx) {
  const HrConfig h = hr_config(ctx.config);
  const auto& fs = h.sweep_frequencies;
  const std::size_t tasks = h.samples * fs.size();
  std::vector<std::vector<HrRecord>> pre(tasks), post(tasks);
  std::vector<nlohmann::ordered_json> cal(tasks);
  parallel_for(tasks, h.threads, [&](std::size_t t) {
    const std::size_t fi = t / h.samples, i = t % h.samples;
    const HrConfig cf = hr_config_at(h, fs[fi]);
    cf.validate();
    const HrReceiverSample s = sample_receiver(cf, i);
    const HrCalibration c = calibrate_receiver(s, cf);
    append_points(pre[t], i, "pre", sweep_hrr(s, {fs[fi]}, h.harmonics));
    append_points(post[t], i, "post", sweep_hrr(c.sample, {fs[fi]}, h.harmonics));
    cal[t] = {{"sample_id", i}, {"f0_hz", cf.f0}, {"f_low_hz", cf.f_low}, {"selections", selections_json(c.sample)},
              {"trace", trace_json(c.report)}};
  });
  std::vector<HrRecord> records;
  for (const auto& v : pre) records.insert(records.end(), v.begin(), v.end());
  for (const auto& v : post) records.insert(records.end(), v.begin(), v.end());
  const std::string id = ctx.figure_id("fig4.13");
  nlohmann::ordered_json meta = {{"x_axis", "f_hz"}, {"y_axis", "hrr_db"}, {"samples", h.samples},
                                 {"calibration", "at each evaluation frequency"}};
  emit_hr(ctx, id, records, meta);
  ctx.emit_json(id + "_calibration.json", nlohmann::ordered_json(cal));
  ctx.line = std::to_string(h.samples) + " receivers x " + std::to_string(fs.size()) + " frequencies";
}

// ---------------------------------------------------------------------------
// dac
// ---------------------------------------------------------------------------

struct TypicalCurves {
  std::size_t sample = 0;
  LinearityReport pre;
  LinearityReport post;
  bool has_post = false;
};

inline TypicalCurves typical_curves(const YieldStudyConfig& y, std::size_t i) {
  TypicalCurves t;
  t.sample = i;
  RandomStream rng = RandomStream::derive(y.master_seed, i);
  if (y.flow == DacFlow::SelfHeal) {
    const SelfHealSample s = sample_self_heal(y.heal, rng);
    t.pre = linearity(s.dac, y.fit);
    const SelfHealOutcome o = self_heal_ses(s, y.heal, self_heal_seed(y.master_seed, i));
    if (o.healed) {
      t.post = linearity(o.dac, y.fit);
      t.has_post = true;
    }
    return t;
  }
  const bool ses = y.flow == DacFlow::SesComparison;
  DacConfig dc = ses ? ses_comparison_config(y.dac) : y.dac;
  dc.sample_timing = false;
  const DacSample s = sample_dac(dc, rng);
  t.pre = linearity(s, y.fit);
  t.post = linearity(ses ? calibrate_amplitude_ses_comparison(s, dc.k) : calibrate_amplitude_eses(s, dc.k), y.fit);
  t.has_post = true;
  return t;
}

// Sample whose post-calibration INL_max is nearest the median; lowest index on ties.
inline std::size_t typical_index(const std::vector<YieldRow>& rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.post_inl_max);
  const double med = percentile(v, 0.5);
  std::size_t best = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::isnan(rows[i].post_inl_max)) continue;
    const double g = std::abs(rows[i].post_inl_max - med);
    if (g < gap) {
      gap = g;
      best = i;
    }
  }
  return best;
}

inline void run_dac_flow(RunContext& ctx, DacFlow flow, const std::string& samples_key, const std::string& fallback,
                         bool traces) {
  const Config& c = ctx.config;
  YieldStudyConfig y;
  y.flow = flow;
  y.dac = dac_config(c);
  y.heal = heal_config(c);
  y.fit = parse_fit(c.str("dac.inl_fit"));
  y.samples = c.count(samples_key);
  y.master_seed = cfg_seed(c);
  y.threads = cfg_threads(c);
  const YieldStudyResult r = yield_study(y);
  const std::string id = ctx.figure_id(fallback);
  const bool timing = flow == DacFlow::Timing;

  FigureDataset rows{id + "_rows",
                     Table{{"sample_id", "pre_inl_max", "post_inl_max", "pre_dnl_max", "post_dnl_max",
                            "pre_delay_rms_s", "post_delay_rms_s", "pre_duty_rms_s", "post_duty_rms_s", "healed",
                            "toplevel_attempts"},
                           {}},
                     nlohmann::ordered_json::object()};
  for (const auto& row : r.rows)
    rows.table.add({static_cast<long long>(row.sample_id), row.pre_inl_max, row.post_inl_max, row.pre_dnl_max,
                    row.post_dnl_max, row.pre_delay_rms, row.post_delay_rms, row.pre_duty_rms, row.post_duty_rms,
                    static_cast<long long>(row.healed ? 1 : 0), static_cast<long long>(row.toplevel_attempts)});

  std::vector<std::pair<std::string, double YieldRow::*>> metrics;
  if (timing)
    metrics = {{"pre_delay_rms_s", &YieldRow::pre_delay_rms},
               {"post_delay_rms_s", &YieldRow::post_delay_rms},
               {"pre_duty_rms_s", &YieldRow::pre_duty_rms},
               {"post_duty_rms_s", &YieldRow::post_duty_rms}};
  else
    metrics = {{"pre_inl_max", &YieldRow::pre_inl_max},
               {"post_inl_max", &YieldRow::post_inl_max},
               {"pre_dnl_max", &YieldRow::pre_dnl_max},
               {"post_dnl_max", &YieldRow::post_dnl_max}};

  const std::size_t bins = c.count("dac.histogram_bins");
  if (bins < 1) throw ConfigError("dac.histogram_bins must be at least 1");
  FigureDataset pct{id + "_percentiles", Table{{"metric", "p50", "p95", "p99"}, {}}, nlohmann::ordered_json::object()};
  FigureDataset hist{id + "_histogram", Table{{"metric", "bin_lo", "bin_hi", "count"}, {}},
                     nlohmann::ordered_json::object()};
  nlohmann::ordered_json pj = nlohmann::ordered_json::object();
  for (const auto& [name, field] : metrics) {
    std::vector<double> v;
    for (const auto& row : r.rows) v.push_back(row.*field);
    const Percentiles p = percentiles(v);
    pct.table.add({name, p.p50, p.p95, p.p99});
    pj[name] = {{"p50", p.p50}, {"p95", p.p95}, {"p99", p.p99}};
    double hi = 0.0;
    for (double x : v)
      if (!std::isnan(x)) hi = std::max(hi, x);
    if (!(hi > 0.0)) hi = 1.0;
    const Histogram h = histogram(v, bins, 0.0, hi);
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b)
      hist.table.add({name, h.lo + width * static_cast<double>(b), h.lo + width * static_cast<double>(b + 1),
                      static_cast<long long>(h.counts[b])});
  }
  hist.meta["note"] = "values above the last bin edge are counted in the last bin";

  std::optional<FigureDataset> inl;
  if (!timing) {
    const TypicalCurves t = typical_curves(y, typical_index(r.rows));
    FigureDataset d{id + "_inl", Table{{"code", "phase", "inl_lsb", "dnl_lsb"}, {}}, nlohmann::ordered_json::object()};
    auto dump = [&](const std::string& phase, const LinearityReport& lr) {
      for (std::size_t code = 0; code < lr.inl.size(); ++code)
        d.table.add({static_cast<long long>(code), phase, lr.inl[code], lr.dnl[code]});
    };
    dump("pre", t.pre);
    if (t.has_post) dump("post", t.post);
    d.meta["sample_id"] = t.sample;
    d.meta["selection"] = "post-calibration INL_max nearest the median";
    d.meta["inl_fit"] = inl_fit_name(y.fit);
    inl = std::move(d);
  }

  // The figure's own CSV repeats one of the tables above.
  const std::string figure = c.str("dac.figure");
  FigureDataset main_ds;
  if (figure == "histogram")
    main_ds = hist;
  else if (figure == "percentiles")
    main_ds = pct;
  else if (figure == "rows")
    main_ds = rows;
  else if (figure == "inl" && inl)
    main_ds = *inl;
  else
    throw ConfigError("dac.figure must be histogram, percentiles, rows or inl (inl needs an amplitude flow)");
  main_ds.id = id;
  main_ds.meta["flow"] = flow_name(flow);
  main_ds.meta["samples"] = y.samples;
  main_ds.meta["inl_fit"] = inl_fit_name(y.fit);
  main_ds.meta["table"] = figure;

  ctx.emit(main_ds);
  ctx.emit(rows);
  ctx.emit(pct);
  ctx.emit(hist);
  if (inl) ctx.emit(*inl);

  ctx.summary["flow"] = flow_name(flow);
  ctx.summary["percentiles"] = pj;
  std::ostringstream line;
  line << y.samples << " samples, flow " << flow_name(flow);
  if (flow == DacFlow::SelfHeal) {
    ctx.summary["heal_success"] = r.heal_success;
    line << ", healed " << format_number(r.heal_success);
  }
  if (timing) {
    ctx.summary["pooled_delay_rms_s"] = {r.pooled_pre_delay, r.pooled_post_delay};
    ctx.summary["pooled_duty_rms_s"] = {r.pooled_pre_duty, r.pooled_post_duty};
  } else {
    line << ", post INL_max p99 " << format_number(pj["post_inl_max"]["p99"].get<double>());
  }
  ctx.line = line.str();

  if (traces) {
    std::vector<nlohmann::ordered_json> per(y.samples);
    parallel_for(y.samples, y.threads, [&](std::size_t i) {
      RandomStream rng = RandomStream::derive(y.master_seed, i);
      const SelfHealSample s = sample_self_heal(y.heal, rng);
      const SelfHealOutcome o = self_heal_ses(s, y.heal, self_heal_seed(y.master_seed, i));
      nlohmann::ordered_json attempts = nlohmann::ordered_json::array();
      for (const auto& a : o.trace.attempts) {
        nlohmann::ordered_json trials = nlohmann::ordered_json::array();
        nlohmann::ordered_json spares = nlohmann::ordered_json::array();
        for (const auto& cell : a.cells) {
          trials.push_back(cell.trials);
          if (cell.backup) spares.push_back({{"position", cell.position}, {"backup", *cell.backup}});
        }
        attempts.push_back({{"bias_combination", a.bias_combination},
                            {"scale", a.scale},
                            {"cell_trials", trials},
                            {"backups", spares},
                            {"backups_used", a.backups_used},
                            {"healed", a.healed}});
      }
      per[i] = {{"sample_id", i},
                {"seed", o.trace.seed},
                {"healed", o.trace.healed},
                {"toplevel_restarts", o.trace.attempts.empty() ? 0 : o.trace.attempts.size() - 1},
                {"attempts", attempts}};
    });
    ctx.emit_json(id + "_traces.json", nlohmann::ordered_json(per));
  }
}

inline void run_sense(RunContext& ctx) {
  const Config& c = ctx.config;
  SensingConfig sc{c.num("sense.f_meas"), c.num("sense.gain")};
  sc.validate();
  const double amp = c.num("sense.amplitude");
  const std::size_t points = c.count("sense.points");
  if (points < 2) throw ConfigError("sense.points must be at least 2");
  const std::array<std::pair<const char*, double>, 3> errors{{{"amplitude", c.num("sense.amplitude_error_max")},
                                                              {"delay", c.num("sense.delay_error_max")},
                                                              {"duty", c.num("sense.duty_error_max")}}};
  const std::array<std::pair<const char*, SenseMode>, 3> modes{
      {{"amplitude", SenseMode::Amplitude}, {"delay", SenseMode::Delay}, {"duty", SenseMode::DutyCycle}}};
  FigureDataset ds{ctx.figure_id("dac_sense"), Table{{"error_type", "error_value", "sense_mode", "output"}, {}},
                   nlohmann::ordered_json::object()};
  const CellParams ref{amp, 0.0, 0.0};
  nlohmann::ordered_json fits = nlohmann::ordered_json::object();
  for (std::size_t e = 0; e < errors.size(); ++e) {
    const auto [ename, emax] = errors[e];
    if (!(emax > 0.0)) throw ConfigError(std::string("sense.") + ename + "_error_max must be positive");
    std::vector<double> xs, ys;
    double matched = 0.0, cross = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      const double x = -emax + 2.0 * emax * static_cast<double>(p) / static_cast<double>(points - 1);
      CellParams cell = ref;
      if (e == 0) cell.amplitude = amp * (1.0 + x);
      if (e == 1) cell.delay = x;
      if (e == 2) cell.duty = x;
      for (std::size_t m = 0; m < modes.size(); ++m) {
        const double y = sense_error(cell, ref, modes[m].second, sc);
        ds.table.add({std::string(ename), x, std::string(modes[m].first), y});
        if (m == e) {
          xs.push_back(x);
          ys.push_back(y);
          matched = std::max(matched, std::abs(y));
        } else {
          cross = std::max(cross, std::abs(y));
        }
      }
    }
    // Least-squares line through the matching-mode outputs.
    const double nn = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i] / nn;
      my += ys[i] / nn;
    }
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    const double r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
    fits[ename] = {{"slope", sxy / sxx}, {"r2", r2}, {"cross_ratio", matched > 0.0 ? cross / matched : 0.0}};
  }
  ds.meta["x_axis"] = "error_value";
  ds.meta["units"] = "amplitude errors are relative; delay and duty errors in seconds";
  ds.meta["fits"] = fits;
  ctx.emit(ds);
  ctx.summary["fits"] = fits;
  ctx.line = std::to_string(ds.table.rows.size()) + " rows";
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline void write_manifest(RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const auto resolved = ctx.out_dir / "resolved.cfg";
  write_file(resolved, ctx.config.to_text());
  ctx.artifacts.push_back(resolved);
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  m["subcommand"] = ctx.subcommand;
  m["master_seed"] = ctx.config.u64("run.seed");
  m["threads"] = ctx.config.u64("run.threads");
  m["output_dir"] = ctx.out_dir.string();
  m["overrides"] = ctx.overrides;
  m["config"] = ctx.config.values();
  m["rerun"] = "eses " + ctx.subcommand + " --config " + resolved.string() + " --out " + ctx.out_dir.string();
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& p : ctx.artifacts)
    arts.push_back({{"path", p.filename().string()}, {"sha256", sha256_hex(read_file(p))}});
  m["artifacts"] = arts;
  m["summary"] = ctx.summary;
  write_file(ctx.out_dir / "manifest.json", dump_json(m));
}

struct CliOptions {
  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<std::uint64_t> threads;
  std::optional<std::string> flow;
  bool quiet = false;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Monte Carlo studies of selection-based mismatch calibration"};
  app.name("eses");
  app.require_subcommand(1);
  CliOptions opt;

  auto common = [&](CLI::App* sc) {
    sc->add_option("--config", opt.config_path, "flat key=value config file");
    sc->add_option("--out", opt.out, "output directory");
    sc->add_option("--seed", opt.seed, "master seed (overrides run.seed)");
    sc->add_option("--samples", opt.samples, "Monte Carlo samples (overrides the study's samples key)");
    sc->add_option("--threads", opt.threads, "worker threads (overrides run.threads)");
    sc->add_flag("--quiet", opt.quiet, "suppress the summary line");
  };

  struct Leaf {
    CLI::App* app;
    std::string name;
    std::string samples_key;
  };
  std::vector<Leaf> leaves;
  auto group = [&](const std::string& name, const std::string& help) {
    CLI::App* g = app.add_subcommand(name, help);
    g->require_subcommand(1);
    return g;
  };
  auto leaf = [&](CLI::App* g, const std::string& name, const std::string& help, const std::string& samples_key) {
    CLI::App* sc = g->add_subcommand(name, help);
    common(sc);
    leaves.push_back({sc, g->get_name() + " " + name, samples_key});
    return sc;
  };

  CLI::App* study = group("study", "mismatch calibration failure-rate studies");
  leaf(study, "failure-rate", "failure rate vs window width", "study.samples");
  leaf(study, "rcal-frontier", "best R_cal vs sigma_T at a yield floor", "frontier.samples");
  leaf(study, "a-sweep", "failure rate for several central sizes", "asweep.samples");
  CLI::App* hr = group("hr", "harmonic-rejection receiver");
  leaf(hr, "simulate", "HRR sweep without calibration", "hr.samples");
  leaf(hr, "calibrate", "HRR before and after calibration at each frequency", "hr.samples");
  leaf(hr, "sweep", "HRR sweep after calibration at hr.f0", "hr.samples");
  CLI::App* dac = group("dac", "current-steering DAC");
  CLI::App* yield = leaf(dac, "yield", "INL/DNL or timing yield study", "dac.samples");
  yield->add_option("--flow", opt.flow, "eses | ses | self-heal | timing");
  leaf(dac, "self-heal", "self-healing yield with controller traces", "heal.samples");
  leaf(dac, "sense", "error sensing sweeps", "sense.points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const Leaf* chosen = nullptr;
  for (const auto& l : leaves)
    if (l.app->parsed()) chosen = &l;
  if (!chosen) {
    err << "error: no subcommand given\n";
    return kExitConfig;
  }

  RunContext ctx;
  ctx.subcommand = chosen->name;
  ctx.out_dir = opt.out;
  try {
    if (!opt.config_path.empty()) ctx.config.merge_file(opt.config_path);
    auto override_key = [&](const std::string& key, const std::string& value) {
      ctx.config.set(key, value);
      ctx.overrides[key] = value;
    };
    if (opt.seed) override_key("run.seed", std::to_string(*opt.seed));
    if (opt.threads) override_key("run.threads", std::to_string(*opt.threads));
    if (opt.samples) override_key(chosen->samples_key, std::to_string(*opt.samples));
    if (opt.flow) override_key("dac.flow", *opt.flow);

    const std::string& name = chosen->name;
    if (name == "study failure-rate")
      run_failure_rate(ctx);
    else if (name == "study rcal-frontier")
      run_frontier(ctx);
    else if (name == "study a-sweep")
      run_a_sweep(ctx);
    else if (name == "hr simulate")
      run_hr_fixed(ctx, false);
    else if (name == "hr sweep")
      run_hr_fixed(ctx, true);
    else if (name == "hr calibrate")
      run_hr_calibrate(ctx);
    else if (name == "dac yield") {
      const DacFlow flow = parse_flow(ctx.config.str("dac.flow"));
      static const std::map<DacFlow, std::string> ids{{DacFlow::EsesAmplitude, "fig5.16"},
                                                      {DacFlow::SesComparison, "fig5.17"},
                                                      {DacFlow::SelfHeal, "dac_self_heal"},
                                                      {DacFlow::Timing, "dac_timing"}};
      run_dac_flow(ctx, flow, "dac.samples", ids.at(flow), false);
    } else if (name == "dac self-heal")
      run_dac_flow(ctx, DacFlow::SelfHeal, "heal.samples", "fig5.5", true);
    else if (name == "dac sense")
      run_sense(ctx);
    write_manifest(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  if (!opt.quiet) out << ctx.subcommand << ": " << ctx.line << " -> " << ctx.out_dir.string() << "\n";
  return ctx.infeasible ? kExitInfeasible : kExitOk;
}

}  // namespace eses
