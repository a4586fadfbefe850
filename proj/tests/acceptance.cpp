// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.
// Usage: acceptance [--only N]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "eses/csdac.hpp"
#include "eses/hrmixer.hpp"
#include "eses/studies.hpp"

using namespace eses;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

std::vector<double> width_grid(double step, double stop) {
  std::vector<double> w;
  for (int i = 1; i * step <= stop + 1e-12; ++i) w.push_back(i * step);
  return w;
}

StudyConfig study_base(std::size_t samples) {
  StudyConfig c;
  c.model = MismatchModel{0.01, 1.0};
  c.samples = samples;
  c.master_seed = 1;
  return c;
}

// ---------------------------------------------------------------------------

Verdict criterion_1() {
  Verdict v;
  const double a = r_cal(1.0, 0.05), b = r_cal(2.0, 0.07);
  v.check(std::abs(a - 97.98) <= 0.01, fmt("r_cal(1, 0.05) = %.4f, want 97.98 +- 0.01", a));
  v.check(std::abs(b - 110.66) <= 0.01, fmt("r_cal(2, 0.07) = %.4f, want 110.66 +- 0.01", b));
  return v;
}

Verdict criterion_2() {
  Verdict v;
  const std::size_t samples = 100000;
  const auto widths = width_grid(0.01, 0.2);

  StudyConfig a = study_base(samples);
  a.offset = FixedOffset{3.0};
  a.window_widths = widths;
  double worst = 1.0;
  for (const auto& p : run_study(a).points) worst = std::min(worst, p.failure_rate);
  v.check(worst >= 0.99, fmt("(a) SES, offset 3 sigma_k: min failure over widths <= 0.2 is %.4f, want >= 0.99", worst));

  StudyConfig b = study_base(samples);
  b.scheme = eses_sizing(1.0, 0.25, b.model, b.k);
  b.offset = GaussianOffset{0.25};
  const double fb = failure_rate(b, 0.03);
  v.check(fb < 0.01, fmt("(b) ESES d=0.25, sigma_T=0.25, width 0.03: failure %.5f, want < 0.01", fb));

  StudyConfig c = study_base(samples);
  c.scheme = eses_sizing(1.0, 0.5, c.model, c.k);
  c.offset = GaussianOffset{2.0};
  const double fc = failure_rate(c, 0.07);
  v.check(fc < 0.01, fmt("(c) ESES d=0.5, sigma_T=2, width 0.07: failure %.5f, want < 0.01", fc));

  for (double sT : {1.0, 2.0}) {
    StudyConfig d = study_base(samples);
    d.offset = GaussianOffset{sT};
    d.window_widths = widths;
    double lowest = 1.0;
    for (const auto& p : run_study(d).points) lowest = std::min(lowest, p.failure_rate);
    v.check(lowest > 0.10, fmt("(d) SES sigma_T=%g: min failure over widths <= 0.2 is %.4f, want > 0.10", sT, lowest));
  }
  return v;
}

Verdict criterion_3() {
  Verdict v;
  StudyConfig t = study_base(100000);
  const std::vector<double> sT{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 15};
  const std::vector<double> d{0.25, 0.5, 0.75, 1, 1.25, 1.5, 1.75, 2, 2.25, 2.5, 2.6, 2.75, 3};
  const auto f = rcal_frontier(t, sT, d, width_grid(0.001, 3.0), 0.99);
  for (const auto& e : f) {
    const double want = e.sigma_T <= 9.0 ? 85.0 : e.sigma_T >= 15.0 ? 50.0 : 0.0;
    if (want == 0.0) continue;
    v.check(e.feasible && e.best_rcal >= want,
            fmt("sigma_T=%g: best R_cal %.2f (d=%g, width=%g), want >= %g", e.sigma_T, e.best_rcal, e.d_eses,
                e.width, want));
  }
  return v;
}

Verdict criterion_4() {
  Verdict v;
  StudyConfig t = study_base(100000);
  t.window_widths = width_grid(0.01, 0.2);
  const double sk = std::sqrt(6.0) * 0.01;
  const auto curves = a_eses_sweep(t, {1.0, 0.0625}, 0.25 * sk);
  double worst = 0.0;
  for (std::size_t i = 0; i < t.window_widths.size(); ++i) {
    const auto& p = curves[0].result.points[i];
    const auto& q = curves[1].result.points[i];
    const double se = std::hypot(p.std_error, q.std_error);
    const double z = se > 0.0 ? std::abs(p.failure_rate - q.failure_rate) / se
                              : (p.failure_rate == q.failure_rate ? 0.0 : INFINITY);
    worst = std::max(worst, z);
  }
  v.check(worst <= 3.0, fmt("largest pointwise gap %.2f combined standard errors, want <= 3", worst));
  return v;
}

Verdict criterion_5() {
  Verdict v;
  HrConfig ideal;
  ideal.weight_outer = 1.0;
  ideal.weight_center = std::numbers::sqrt2;
  const auto s = ideal_receiver(ideal);
  double worst = 0.0;
  for (HrPath p : {HrPath::I, HrPath::Q}) {
    const double c1 = std::abs(path_coeff(s, p, 1, ideal.f0));
    for (int n : {3, 5}) worst = std::max(worst, std::abs(path_coeff(s, p, n, ideal.f0)) / c1);
  }
  v.check(worst < 1e-12, fmt("1:sqrt2:1 max |c3|,|c5| / |c1| = %.3g, want < 1e-12", worst));
  auto check_ratio = [&](double a, double b, double want) {
    HrConfig c;
    c.weight_outer = a;
    c.weight_center = b;
    const double sim = receiver_hrr(ideal_receiver(c), 3, c.f0);
    const double closed = closed_form_hrr(a, b, 3);
    v.check(std::abs(sim - want) <= 0.1 && std::abs(sim - closed) <= 0.01,
            fmt("%g:%g:%g HRR3 = %.3f dB (closed form %.3f), want %.1f +- 0.1", a, b, a, sim, closed, want));
  };
  check_ratio(29.0, 41.0, 86.1);
  check_ratio(12.0, 17.0, 70.5);
  return v;
}

Verdict criterion_6() {
  Verdict v;
  HrConfig cfg;
  cfg.samples = 200;
  cfg.sweep_frequencies = {150e6, 250e6, 350e6, 450e6, 550e6, 650e6, 750e6};
  cfg.harmonics = {2, 3, 4, 5, 6};
  const auto cov = tuning_coverage(cfg, design_receiver(cfg));
  v.check(std::min({cov.gain, cov.clock, cov.buffer}) >= 6.0,
          fmt("tuning coverage gain %.2f, clock %.2f, buffer %.2f sigma, want >= 6", cov.gain, cov.clock, cov.buffer));

  const auto r2 = run_hr_study(cfg, true, 2);
  const auto r3 = run_hr_study(cfg, true, 3);
  auto at = [&](const std::vector<HrrPoint>& pts, double f, int n) {
    for (const auto& p : pts)
      if (p.f == f && p.n == n) return p.hrr;
    throw std::logic_error("missing sweep point");
  };

  std::size_t regress = 0, both = 0;
  std::vector<double> h3_2, h5_2, h3_3, h5_3;
  for (std::size_t i = 0; i < r2.size(); ++i) {
    if (at(r2[i].post, cfg.f0, 2) < at(r2[i].pre, cfg.f0, 2)) ++regress;
    const double h3 = at(r2[i].post, cfg.f0, 3), h5 = at(r2[i].post, cfg.f0, 5);
    if (h3 >= 70.0 && h5 >= 70.0) ++both;
    h3_2.push_back(h3);
    h5_2.push_back(h5);
    h3_3.push_back(at(r3[i].post, cfg.f0, 3));
    h5_3.push_back(at(r3[i].post, cfg.f0, 5));
  }
  const double n = static_cast<double>(r2.size());
  v.check(regress == 0, fmt("HRR2 regressions after calibration: %zu of %zu", regress, r2.size()));
  v.check(both / n >= 0.90, fmt("HRR3 and HRR5 >= 70 dB at f0 for %.1f%% of receivers, want >= 90%%", 100.0 * both / n));
  const double d3 = std::abs(median(h3_3) - median(h3_2)), d5 = std::abs(median(h5_3) - median(h5_2));
  v.check(std::max(d3, d5) < 1.0,
          fmt("iteration 2 -> 3 median delta HRR3 %.2f dB, HRR5 %.2f dB, want < 1", d3, d5));
  std::string low;
  double worst_median = INFINITY;
  for (double f : cfg.sweep_frequencies) {
    if (f > cfg.f0) continue;
    for (int h : cfg.harmonics) {
      std::vector<double> col;
      for (const auto& r : r2) col.push_back(at(r.post, f, h));
      const double m = median(col);
      worst_median = std::min(worst_median, m);
      if (m < 70.0) low += fmt(" %.0fMHz/HRR%d=%.1f", f / 1e6, h, m);
    }
  }
  v.check(low.empty(), fmt("lowest sweep median for f <= f0 is %.1f dB, want >= 70;", worst_median) +
                           (low.empty() ? std::string(" none below") : low));
  return v;
}

YieldStudyResult dac_flow(DacFlow flow, std::size_t samples) {
  YieldStudyConfig y;
  y.flow = flow;
  y.samples = samples;
  y.fit = InlFit::BestFit;
  return yield_study(y);
}

std::vector<double> column(const YieldStudyResult& r, double YieldRow::*field) {
  std::vector<double> out;
  for (const auto& row : r.rows) out.push_back(row.*field);
  return out;
}

Verdict criterion_7() {
  Verdict v;
  const auto r = dac_flow(DacFlow::EsesAmplitude, 10000);
  const double pre = percentile(column(r, &YieldRow::pre_inl_max), 0.99);
  const double post = percentile(column(r, &YieldRow::post_inl_max), 0.99);
  const double dnl = percentile(column(r, &YieldRow::post_dnl_max), 0.99);
  v.check(std::abs(pre - 20.5) <= 0.15 * 20.5, fmt("pre INL_max p99 %.3f LSB, want 20.5 +- 15%%", pre));
  v.check(post <= 0.6, fmt("post INL_max p99 %.3f LSB, want <= 0.6", post));
  v.check(dnl <= 0.9, fmt("post DNL_max p99 %.3f LSB, want <= 0.9", dnl));
  return v;
}

Verdict criterion_8() {
  Verdict v;
  const double eses = percentile(column(dac_flow(DacFlow::EsesAmplitude, 10000), &YieldRow::post_inl_max), 0.99);
  const double ses = percentile(column(dac_flow(DacFlow::SesComparison, 10000), &YieldRow::post_inl_max), 0.99);
  v.check(ses >= 5.0 * eses, fmt("post SES p99 %.3f vs post ESES p99 %.3f: ratio %.2f, want >= 5", ses, eses, ses / eses));
  v.check(std::abs(ses - 5.6) <= 0.3 * 5.6, fmt("post SES p99 %.3f LSB, want 5.6 +- 30%%", ses));
  return v;
}

Verdict criterion_9() {
  Verdict v;
  const auto r = dac_flow(DacFlow::Timing, 1000);
  v.check(std::abs(r.pooled_pre_delay - 1.3e-12) <= 0.05 * 1.3e-12,
          fmt("pre delay sigma %.3f ps, want 1.3 +- 5%%", r.pooled_pre_delay * 1e12));
  v.check(std::abs(r.pooled_pre_duty - 1.8e-12) <= 0.05 * 1.8e-12,
          fmt("pre duty sigma %.3f ps, want 1.8 +- 5%%", r.pooled_pre_duty * 1e12));
  v.check(r.pooled_post_delay <= 0.05e-12, fmt("post delay sigma %.4f ps, want <= 0.05", r.pooled_post_delay * 1e12));
  v.check(r.pooled_post_duty <= 0.06e-12, fmt("post duty sigma %.4f ps, want <= 0.06", r.pooled_post_duty * 1e12));
  return v;
}

Verdict criterion_10() {
  Verdict v;
  YieldStudyConfig y;
  y.flow = DacFlow::SelfHeal;
  y.samples = 1000;
  y.fit = InlFit::BestFit;
  const auto r = yield_study(y);
  std::vector<double> healed;
  for (const auto& row : r.rows)
    if (row.healed) healed.push_back(row.post_inl_max);
  const double m = median(healed);
  v.check(r.heal_success >= 0.99, fmt("heal success %.4f, want >= 0.99", r.heal_success));
  v.check(m <= 1.0, fmt("healed INL_max median %.3f LSB, want <= 1", m));

  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    RandomStream rng = RandomStream::derive(y.master_seed, i);
    const auto s = sample_self_heal(y.heal, rng);
    const auto a = self_heal_ses(s, y.heal, self_heal_seed(y.master_seed, i));
    const auto b = self_heal_ses(s, y.heal, a.trace.seed);
    bool same = a.healed == b.healed && a.trace.attempts.size() == b.trace.attempts.size() &&
                transfer_curve(a.dac) == transfer_curve(b.dac);
    for (std::size_t t = 0; same && t < a.trace.attempts.size(); ++t) {
      const auto &x = a.trace.attempts[t], &z = b.trace.attempts[t];
      same = x.bias_combination == z.bias_combination && x.scale == z.scale && x.cells.size() == z.cells.size();
      for (std::size_t c = 0; same && c < x.cells.size(); ++c)
        same = x.cells[c].trials == z.cells[c].trials && x.cells[c].combination == z.cells[c].combination &&
               x.cells[c].backup == z.cells[c].backup;
    }
    if (!same) ++mismatched;
  }
  v.check(mismatched == 0, fmt("trace replays differing from the original: %zu of 100", mismatched));
  return v;
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
}

Verdict criterion_11() {
  Verdict v;
  const SensingConfig cfg;
  const CellParams ref;
  struct Sweep {
    SenseMode mode;
    const char* name;
    double max;
  };
  const Sweep sweeps[] = {{SenseMode::Amplitude, "amplitude", 0.01},
                          {SenseMode::Delay, "delay", 2.5e-12},
                          {SenseMode::DutyCycle, "duty", 2.5e-12}};
  const SenseMode modes[] = {SenseMode::Amplitude, SenseMode::Delay, SenseMode::DutyCycle};
  for (const auto& s : sweeps) {
    std::vector<double> x, y;
    double cross = 0.0;
    for (int i = 1; i <= 10; ++i) {
      const double e = s.max * i / 10.0;
      CellParams c = ref;
      if (s.mode == SenseMode::Amplitude) c.amplitude += e;
      if (s.mode == SenseMode::Delay) c.delay = e;
      if (s.mode == SenseMode::DutyCycle) c.duty = e;
      const double own = sense_error(c, ref, s.mode, cfg);
      x.push_back(e);
      y.push_back(own);
      for (SenseMode m : modes)
        if (m != s.mode) cross = std::max(cross, std::abs(sense_error(c, ref, m, cfg)) / std::abs(own));
    }
    const double r2 = r_squared(x, y);
    v.check(r2 > 0.999, fmt("%s sweep R^2 = %.7f, want > 0.999", s.name, r2));
    v.check(cross <= 0.01, fmt("%s sweep largest cross-mode ratio %.4f, want <= 0.01", s.name, cross));
  }
  bool zero = true;
  for (SenseMode m : modes) zero = zero && sense_error(ref, ref, m, cfg) == 0.0;
  v.check(zero, "identical cells sense exactly 0 in every mode");
  return v;
}

Verdict criterion_12() {
  Verdict v;
  for (const auto& c : testing::small_leaf_cases()) {
    const auto a = testing::fresh_dir("acc_t1_" + c.name), b = testing::fresh_dir("acc_t4_" + c.name);
    const int ca = testing::run_leaf(c, a, 1), cb = testing::run_leaf(c, b, 4);
    const auto fa = testing::csv_files(a), fb = testing::csv_files(b);
    v.check(ca == 0 && cb == 0 && !fa.empty() && fa == fb,
            fmt("%s: %zu CSV files byte-identical at 1 and 4 threads", c.name.c_str(), fa.size()));
  }
  return v;
}

const std::vector<std::pair<const char*, std::function<Verdict()>>>& criteria() {
  static const std::vector<std::pair<const char*, std::function<Verdict()>>> list{
      {"calibration range closed form", criterion_1},
      {"failure-rate regimes", criterion_2},
      {"R_cal frontier under a 99% yield floor", criterion_3},
      {"central-size invariance", criterion_4},
      {"harmonic rejection exactness", criterion_5},
      {"receiver calibration behavior", criterion_6},
      {"DAC amplitude yield", criterion_7},
      {"SES versus ESES DAC calibration", criterion_8},
      {"DAC timing calibration", criterion_9},
      {"self-heal flow", criterion_10},
      {"error sensing orthogonality", criterion_11},
      {"thread-count determinism of CLI output", criterion_12},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-12)")->check(CLI::Range(0, 12));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (std::size_t i = 0; i < criteria().size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria()[i].second();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, criteria()[i].first, secs);
    for (const auto& d : v.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
