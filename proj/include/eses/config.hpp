#pragma once

// Flat key=value configuration with section prefixes ("study.n = 12" or a
// "[study]" header followed by "n = 12"). Every key has a registered default;
// unknown keys are rejected together in one error.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/program_options/options_description.hpp>
#include <boost/program_options/parsers.hpp>

#include "eses/error.hpp"
#include "eses/report.hpp"

namespace eses {

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* help;
};

// clang-format off
inline const std::vector<KeySpec>& config_registry() {
  static const std::vector<KeySpec> keys{
    {"run.seed", "1", "master seed"},
    {"run.threads", "1", "worker threads; results do not depend on it"},
    {"run.figure_id", "", "output file stem; empty picks the subcommand default"},

    {"study.n", "12", "elements per set"},
    {"study.k", "6", "selected elements"},
    {"study.a", "1", "mean nominal size (a_ESES; SES width)"},
    {"study.sigma_center", "0.01", "element sigma at the central size"},
    {"study.d_values", "0,0.25,0.5,1,2", "d_ESES values in sigma_k units; 0 is SES"},
    {"study.offset", "fixed", "fixed | gaussian"},
    {"study.offset_values", "0", "T_offset (fixed) or sigma_T (gaussian) values, sigma_k units"},
    {"study.widths", "0.01:0.01:0.2", "window widths in sigma_k units (list or start:step:stop)"},
    {"study.samples", "100000", "Monte Carlo samples per curve"},

    {"frontier.sigma_T_values", "0,1,2,3,4,5,6,7,8,9,12,15", "sigma_T values, sigma_k units"},
    {"frontier.d_values", "0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,2.6,2.75,3", "d_ESES candidates, sigma_k units"},
    {"frontier.widths", "0.001:0.001:3", "window width grid, sigma_k units"},
    {"frontier.yield_floor", "0.99", "minimum calibration success rate"},
    {"frontier.samples", "100000", "Monte Carlo samples per (sigma_T, d)"},

    {"asweep.a_values", "1,0.5,0.25,0.125,0.0625", "central sizes"},
    {"asweep.d_over_sigmak", "0.25", "fixed absolute d, given in sigma_k units of the central element"},
    {"asweep.offset", "fixed", "fixed | gaussian"},
    {"asweep.offset_value", "0", "T_offset or sigma_T, sigma_k units"},
    {"asweep.widths", "0.01:0.01:0.2", "window widths, sigma_k units"},
    {"asweep.samples", "100000", "Monte Carlo samples per curve"},

    {"hr.n", "12", "segments per tunable network"},
    {"hr.k", "6", "selected segments"},
    {"hr.f0", "750e6", "calibration frequency, Hz"},
    {"hr.f_low", "150e6", "gain calibration frequency, Hz"},
    {"hr.alpha", "0.5", "gain law exponent"},
    {"hr.weight_outer", "12", "outer recombination weight"},
    {"hr.weight_center", "17", "center recombination weight"},
    {"hr.gain_sigma", "0.01", "total relative gain sigma"},
    {"hr.gain_intrinsic_fraction", "0.08", "share of gain variance in the tunable tail"},
    {"hr.clock_sigma", "3.5e-12", "total clock delay sigma, s"},
    {"hr.clock_intrinsic_fraction", "0.25", "share of clock variance in INV1-4"},
    {"hr.buffer_sigma", "1e-12", "total output-buffer edge sigma, s"},
    {"hr.buffer_intrinsic_fraction", "0.45", "share of buffer variance in INV5-12"},
    {"hr.timing_element_sigma", "0.02", "relative sigma of one inverter segment"},
    {"hr.coverage_sigmas", "6", "tuning range in sigmas of total variation"},
    {"hr.range_margin", "1.1", "extra range factor"},
    {"hr.even_passes", "2", "coordinate passes of even-order calibration"},
    {"hr.odd_passes", "3", "coordinate passes per odd-order stage"},
    {"hr.odd_iterations", "2", "gain/phase iterations"},
    {"hr.samples", "200", "Monte Carlo receivers"},
    {"hr.sweep_frequencies", "150e6,250e6,350e6,450e6,550e6,650e6,750e6", "evaluation frequencies, Hz"},
    {"hr.harmonics", "2,3,4,5,6", "harmonic orders"},

    {"dac.flow", "eses", "eses | ses | self-heal | timing"},
    {"dac.thermometer_bits", "6", "unary MSB bits"},
    {"dac.binary_bits", "8", "binary LSB bits"},
    {"dac.n", "12", "sub-currents per UCC"},
    {"dac.k", "6", "selected sub-currents"},
    {"dac.ucc_nominal", "312", "UCC current, uA"},
    {"dac.sub_scheme", "arithmetic", "arithmetic | uniform | explicit"},
    {"dac.sub_mean", "52", "mean sub-current, uA"},
    {"dac.sub_step", "0.76", "arithmetic step, uA"},
    {"dac.sub_sizes", "", "explicit sub-currents, uA"},
    {"dac.sub_sigma", "1.1", "sub-current sigma at the mean size, uA"},
    {"dac.ucc_sigma", "2.8", "total UCC sigma, uA"},
    {"dac.lsb_sigma_factor", "8", "LSB unit sigma improvement"},
    {"dac.delay_sigma", "1.3e-12", "UCC delay error sigma, s"},
    {"dac.delay_intrinsic_fraction", "0.25", "share of delay variance in the tunable buffer"},
    {"dac.duty_sigma", "1.8e-12", "UCC duty error sigma, s"},
    {"dac.duty_intrinsic_fraction", "0.25", "share of duty variance in M1/M2"},
    {"dac.timing_element_sigma", "0.02", "relative sigma of one timing segment"},
    {"dac.coverage_sigmas", "6", "timing tuning range in sigmas"},
    {"dac.range_margin", "1.1", "extra range factor"},
    {"dac.inl_fit", "best", "best | endpoint"},
    {"dac.histogram_bins", "50", "histogram bins"},
    {"dac.figure", "histogram", "table written as <figure_id>.csv: histogram | percentiles | rows | inl"},
    {"dac.samples", "10000", "Monte Carlo DAC samples"},

    {"heal.thermometer_bits", "6", "unary MSB bits"},
    {"heal.binary_bits", "8", "binary LSB bits"},
    {"heal.n", "16", "sub-currents per UCC"},
    {"heal.k", "8", "selected sub-currents"},
    {"heal.sub_nominal", "19.53", "sub-current, uA"},
    {"heal.ucc_sigma", "0.53", "UCC sigma, uA"},
    {"heal.i_tiny", "0.053", "window width above I_ref, uA"},
    {"heal.lsb_sigma_factor", "8", "LSB unit sigma improvement"},
    {"heal.cell_trial_limit", "1000", "random draws per UCC"},
    {"heal.toplevel_trial_limit", "20", "bias re-draws"},
    {"heal.backup_ucc_count", "4", "pooled spare UCCs"},
    {"heal.bias_relative_sigma", "0.003", "bias element relative sigma"},
    {"heal.samples", "1000", "Monte Carlo DAC samples"},

    {"sense.f_meas", "400e6", "toggling frequency, Hz"},
    {"sense.gain", "1", "output scale"},
    {"sense.amplitude", "1", "nominal cell amplitude"},
    {"sense.points", "10", "sweep points per error type"},
    {"sense.amplitude_error_max", "0.01", "largest amplitude error"},
    {"sense.delay_error_max", "2.5e-12", "largest delay error, s"},
    {"sense.duty_error_max", "2.5e-12", "largest duty error, s"},
  };
  return keys;
}
// clang-format on

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  return v;
}

// Comma list; an item "start:step:stop" expands inclusively (stop is hit when
// it lies within step/1e6 of a grid point). Values are start + i*step.
inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item.find(':') == std::string::npos) {
      out.push_back(parse_double(key, item));
      continue;
    }
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError(key + ": range '" + item + "' must be start:step:stop");
    const double a = parse_double(key, parts[0]), step = parse_double(key, parts[1]), b = parse_double(key, parts[2]);
    if (!(step > 0.0) || b < a) throw ConfigError(key + ": range '" + item + "' is empty or has a non-positive step");
    const auto count = static_cast<long long>(std::floor((b - a) / step + 1e-6));
    if (count > 10000000) throw ConfigError(key + ": range '" + item + "' is too long");
    for (long long i = 0; i <= count; ++i) out.push_back(a + static_cast<double>(i) * step);
  }
  return out;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_registry()) values_[k.key] = k.default_value;
  }

  static bool known(const std::string& key) {
    const auto& r = config_registry();
    return std::any_of(r.begin(), r.end(), [&](const KeySpec& k) { return key == k.key; });
  }

  // Parses with boost::program_options; every key must be registered.
  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    namespace po = boost::program_options;
    po::options_description none;
    po::parsed_options parsed(&none);
    try {
      parsed = po::parse_config_file(in, none, true);
    } catch (const po::error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    std::vector<std::string> unknown;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& opt : parsed.options) {
      const std::string value = opt.value.empty() ? std::string() : opt.value.front();
      if (!known(opt.string_key))
        unknown.push_back(opt.string_key);
      else
        pairs.emplace_back(opt.string_key, value);
    }
    if (!unknown.empty()) {
      std::string msg = path.string() + ": unknown keys:";
      for (const auto& u : unknown) msg += " " + u;
      throw ConfigError(msg);
    }
    for (auto& [k, v] : pairs) values_[k] = trim(v);
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown key: " + key);
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key: " + key);
    return it->second;
  }

  double num(const std::string& key) const { return parse_double(key, str(key)); }
  std::uint64_t u64(const std::string& key) const { return parse_u64(key, str(key)); }
  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }
  int integer(const std::string& key) const {
    const auto v = u64(key);
    if (v > 1000000) throw ConfigError(key + " is too large");
    return static_cast<int>(v);
  }
  std::vector<double> list(const std::string& key) const { return parse_list(key, str(key)); }
  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (double v : list(key)) {
      if (v != std::floor(v)) throw ConfigError(key + " must hold integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  // Keys of `section` only, sorted.
  std::map<std::string, std::string> section(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_)
      if (k.rfind(prefix + ".", 0) == 0) out[k] = v;
    return out;
  }

  // Re-loadable text form: one "key = value" line per key in sorted order.
  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace eses
