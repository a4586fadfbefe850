#pragma once

// Piecewise-constant periodic waveforms with exact Fourier coefficients.
//
// Time is measured in fractions of the period. A waveform is an initial level
// plus a list of (time, new level) transitions; the level before the first
// transition is the level after the last one.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include "eses/error.hpp"

namespace eses {

using Complex = std::complex<double>;

struct Transition {
  double time = 0.0;   // [0, 1)
  double level = 0.0;  // level from this time on
};

class EdgeWaveform {
 public:
  EdgeWaveform() = default;

  // Constant waveform.
  explicit EdgeWaveform(double level, double period = 1.0) : period_(period), constant_(level) {}

  // Times are wrapped into [0, 1) and sorted; transitions at equal times are
  // merged, keeping the last level given for that time.
  EdgeWaveform(std::vector<Transition> transitions, double period = 1.0) : period_(period) {
    for (auto& t : transitions) t.time = wrap(t.time);
    std::stable_sort(transitions.begin(), transitions.end(),
                     [](const Transition& a, const Transition& b) { return a.time < b.time; });
    for (const auto& t : transitions) {
      if (!transitions_.empty() && transitions_.back().time == t.time)
        transitions_.back().level = t.level;
      else
        transitions_.push_back(t);
    }
    if (!transitions_.empty()) constant_ = transitions_.back().level;
  }

  double period() const { return period_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  bool is_constant() const { return transitions_.empty(); }

  // Level holding at the start of the period (wrapped from the last transition).
  double initial_level() const { return constant_; }

  double value_at(double t) const {
    t = wrap(t);
    double level = constant_;
    for (const auto& tr : transitions_) {
      if (tr.time > t) break;
      level = tr.level;
    }
    return level;
  }

  // Average level over one period.
  double mean() const {
    if (transitions_.empty()) return constant_;
    double acc = 0.0;
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
      const double end = i + 1 < transitions_.size() ? transitions_[i + 1].time : 1.0;
      acc += transitions_[i].level * (end - transitions_[i].time);
    }
    acc += constant_ * transitions_.front().time;
    return acc;
  }

  static double wrap(double t) {
    t -= std::floor(t);
    return t >= 1.0 ? 0.0 : t;
  }

 private:
  double period_ = 1.0;
  double constant_ = 0.0;
  std::vector<Transition> transitions_;
};

// Exact c_n = integral over one period of w(t) exp(-j 2 pi n t), n >= 1.
// Integrating by parts leaves only the jumps: c_n = (1/(j2pi n)) sum dL e^{-j2pi n t}.
inline Complex fourier_coeff(const EdgeWaveform& w, int n) {
  if (n < 1) throw UsageError("fourier_coeff needs n >= 1");
  const auto& tr = w.transitions();
  Complex acc{0.0, 0.0};
  double prev = w.initial_level();
  for (const auto& t : tr) {
    const double jump = t.level - prev;
    prev = t.level;
    if (jump == 0.0) continue;
    acc += jump * std::polar(1.0, -2.0 * std::numbers::pi * n * t.time);
  }
  return acc / Complex(0.0, 2.0 * std::numbers::pi * n);
}

// Coefficient of a single jump of height `jump` at `time`.
inline Complex edge_coeff(double jump, double time, int n) {
  return jump * std::polar(1.0, -2.0 * std::numbers::pi * n * time) / Complex(0.0, 2.0 * std::numbers::pi * n);
}

// Pointwise weighted sum of waveforms sharing one period.
inline EdgeWaveform superposition(const std::vector<std::pair<double, EdgeWaveform>>& terms) {
  if (terms.empty()) return EdgeWaveform(0.0);
  const double period = terms.front().second.period();
  std::vector<double> times;
  for (const auto& [g, w] : terms) {
    for (const auto& t : w.transitions()) times.push_back(t.time);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.empty()) {
    double level = 0.0;
    for (const auto& [g, w] : terms) level += g * w.initial_level();
    return EdgeWaveform(level, period);
  }
  std::vector<Transition> out;
  out.reserve(times.size());
  for (double t : times) {
    double level = 0.0;
    for (const auto& [g, w] : terms) level += g * w.value_at(t);
    out.push_back({t, level});
  }
  return EdgeWaveform(std::move(out), period);
}

// `high` on [rise, fall) modulo 1, `low` elsewhere.
inline EdgeWaveform pulse_wave(double rise, double fall, double high = 1.0, double low = 0.0, double period = 1.0) {
  return EdgeWaveform({{rise, high}, {fall, low}}, period);
}

// Unit square wave: +1 on [0, 1/2), -1 on [1/2, 1).
inline EdgeWaveform square_wave(double period = 1.0) { return pulse_wave(0.0, 0.5, 1.0, -1.0, period); }

}  // namespace eses
