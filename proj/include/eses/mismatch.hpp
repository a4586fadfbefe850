#pragma once

// Element sizing, mismatch sampling and K-of-N subset search.
//
// An element set is N parallel segments (transistor widths, sub-currents,
// ...) of which K are switched on. The realized value of a selection is the
// sum of the realized values of its segments. Uniform sizing is the classic
// statistical element selection (SES); arithmetic sizing spreads the nominal
// subset sums over a designed range (extended SES).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "eses/error.hpp"
#include "eses/rng.hpp"

namespace eses {

// ---------------------------------------------------------------------------
// Sizing schemes
// ---------------------------------------------------------------------------

struct UniformSizing {
  double width = 1.0;
};

// Sizes mean + (i - (n-1)/2) * step, i = 0..n-1.
struct ArithmeticSizing {
  double mean = 1.0;
  double step = 0.0;
};

struct ExplicitSizing {
  std::vector<double> sizes;
};

using SizingScheme = std::variant<UniformSizing, ArithmeticSizing, ExplicitSizing>;

inline std::vector<double> nominal_sizes(const SizingScheme& scheme, std::size_t n) {
  if (n == 0) throw ConfigError("element count must be at least 1");
  std::vector<double> sizes(n);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSizing>) {
          std::fill(sizes.begin(), sizes.end(), s.width);
        } else if constexpr (std::is_same_v<T, ArithmeticSizing>) {
          const double mid = 0.5 * static_cast<double>(n - 1);
          for (std::size_t i = 0; i < n; ++i) sizes[i] = s.mean + (static_cast<double>(i) - mid) * s.step;
        } else {
          if (s.sizes.size() != n)
            throw ConfigError("explicit sizing lists " + std::to_string(s.sizes.size()) +
                              " sizes but " + std::to_string(n) + " elements were requested");
          sizes = s.sizes;
        }
      },
      scheme);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sizes[i] > 0.0))
      throw ConfigError("nominal size at index " + std::to_string(i) + " is not positive (" +
                        std::to_string(sizes[i]) + ")");
  }
  return sizes;
}

// The size the mismatch normalization refers to: the arithmetic mean of the
// nominal sizes (the uniform width, or a_ESES for arithmetic sizing).
inline double central_size(const SizingScheme& scheme) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSizing>) {
          return s.width;
        } else if constexpr (std::is_same_v<T, ArithmeticSizing>) {
          return s.mean;
        } else {
          if (s.sizes.empty()) throw ConfigError("explicit sizing has no sizes");
          return std::accumulate(s.sizes.begin(), s.sizes.end(), 0.0) / static_cast<double>(s.sizes.size());
        }
      },
      scheme);
}

inline bool is_uniform(const SizingScheme& scheme) {
  if (std::holds_alternative<UniformSizing>(scheme)) return true;
  if (const auto* a = std::get_if<ArithmeticSizing>(&scheme)) return a->step == 0.0;
  const auto& e = std::get<ExplicitSizing>(scheme).sizes;
  return std::adjacent_find(e.begin(), e.end(), std::not_equal_to<>()) == e.end();
}

// ---------------------------------------------------------------------------
// Mismatch model
// ---------------------------------------------------------------------------

// Pelgrom-type area scaling: sigma grows with the square root of size, so the
// relative sigma shrinks as 1/sqrt(size).
struct MismatchModel {
  double sigma_ref = 0.0;  // sigma of an element of nominal size size_ref
  double size_ref = 1.0;

  double element_sigma(double nominal) const {
    if (!(size_ref > 0.0)) throw ConfigError("mismatch size_ref must be positive");
    return sigma_ref * std::sqrt(nominal / size_ref);
  }
};

// Standard deviation of a K-element subset sum at the central size. This is
// the unit in which study windows and offsets are expressed.
inline double sigma_k(const MismatchModel& model, const SizingScheme& scheme, std::size_t k) {
  if (k == 0) throw UsageError("sigma_k needs k >= 1");
  return std::sqrt(static_cast<double>(k)) * model.element_sigma(central_size(scheme));
}

// ---------------------------------------------------------------------------
// Element sets and combinations
// ---------------------------------------------------------------------------

struct ElementSet {
  std::vector<double> nominal;
  std::vector<double> realized;
  std::size_t resamples = 0;  // non-positive Gaussian draws that were redrawn

  std::size_t size() const { return nominal.size(); }
};

inline ElementSet ideal_element_set(const SizingScheme& scheme, std::size_t n) {
  ElementSet set;
  set.nominal = nominal_sizes(scheme, n);
  set.realized = set.nominal;
  return set;
}

// realized_i ~ Normal(nominal_i, sigma_i), independent per element. Draws
// that come out non-positive are redrawn and counted in `resamples`.
inline ElementSet sample_element_set(const SizingScheme& scheme, const MismatchModel& model, std::size_t n,
                                     RandomStream& rng) {
  ElementSet set;
  set.nominal = nominal_sizes(scheme, n);
  set.realized.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sigma = model.element_sigma(set.nominal[i]);
    double v = rng.normal(set.nominal[i], sigma);
    while (!(v > 0.0)) {
      ++set.resamples;
      v = rng.normal(set.nominal[i], sigma);
    }
    set.realized[i] = v;
  }
  return set;
}

struct Combination {
  std::vector<std::size_t> indices;  // strictly increasing

  std::size_t size() const { return indices.size(); }
  friend bool operator==(const Combination&, const Combination&) = default;
};

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline void check_combination(const Combination& combo, std::size_t n) {
  for (std::size_t j = 0; j < combo.indices.size(); ++j) {
    if (combo.indices[j] >= n)
      throw UsageError("combination index " + std::to_string(combo.indices[j]) + " out of range for " +
                       std::to_string(n) + " elements");
    if (j > 0 && combo.indices[j] <= combo.indices[j - 1])
      throw UsageError("combination indices must be strictly increasing");
  }
}

// Sum of realized values at the selected indices.
inline double subset_value(const ElementSet& set, const Combination& combo) {
  check_combination(combo, set.size());
  double sum = 0.0;
  for (std::size_t i : combo.indices) sum += set.realized[i];
  return sum;
}

inline double nominal_subset_value(const ElementSet& set, const Combination& combo) {
  check_combination(combo, set.size());
  double sum = 0.0;
  for (std::size_t i : combo.indices) sum += set.nominal[i];
  return sum;
}

// Advances `idx` to the next k-combination of {0..n-1} in lexicographic
// order. Returns false after the last one.
inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  for (std::size_t j = k; j-- > 0;) {
    if (idx[j] < n - k + j) {
      ++idx[j];
      for (std::size_t t = j + 1; t < k; ++t) idx[t] = idx[t - 1] + 1;
      return true;
    }
  }
  return false;
}

inline std::vector<Combination> enumerate_combinations(std::size_t n, std::size_t k) {
  if (k > n) throw UsageError("enumerate_combinations needs k <= n");
  std::vector<Combination> out;
  out.reserve(binomial(n, k));
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  do {
    out.push_back(Combination{idx});
  } while (k > 0 && next_combination(idx, n));
  return out;
}

// Lexicographic rank -> combination (combinatorial number system).
inline Combination unrank_combination(std::size_t n, std::size_t k, std::uint64_t rank) {
  if (rank >= binomial(n, k)) throw UsageError("combination rank out of range");
  Combination c;
  c.indices.reserve(k);
  std::size_t next = 0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t v = next;; ++v) {
      const std::uint64_t below = binomial(n - v - 1, k - j - 1);
      if (rank < below) {
        c.indices.push_back(v);
        next = v + 1;
        break;
      }
      rank -= below;
    }
  }
  return c;
}

// Flat table of every k-combination of n in lexicographic order. Used by the
// hot loops that evaluate all subset sums of many element sets.
class CombinationTable {
 public:
  CombinationTable(std::size_t n, std::size_t k) : n_(n), k_(k) {
    if (k > n) throw UsageError("combination table needs k <= n");
    if (n > 255) throw UsageError("combination table supports at most 255 elements");
    count_ = binomial(n, k);
    flat_.reserve(count_ * k);
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    do {
      for (std::size_t i : idx) flat_.push_back(static_cast<std::uint8_t>(i));
    } while (k > 0 && next_combination(idx, n));
  }

  std::size_t n() const { return n_; }
  std::size_t k() const { return k_; }
  std::size_t size() const { return count_; }

  Combination at(std::size_t rank) const {
    Combination c;
    c.indices.assign(flat_.begin() + static_cast<std::ptrdiff_t>(rank * k_),
                     flat_.begin() + static_cast<std::ptrdiff_t>((rank + 1) * k_));
    return c;
  }

  // Sum of values over combination `rank`.
  double sum(std::size_t rank, const std::vector<double>& values) const {
    const std::uint8_t* p = flat_.data() + rank * k_;
    double s = 0.0;
    for (std::size_t j = 0; j < k_; ++j) s += values[p[j]];
    return s;
  }

  // All subset sums, in rank order, written to `out`.
  void all_sums(const std::vector<double>& values, std::vector<double>& out) const {
    out.resize(count_);
    const std::uint8_t* p = flat_.data();
    for (std::size_t r = 0; r < count_; ++r, p += k_) {
      double s = 0.0;
      for (std::size_t j = 0; j < k_; ++j) s += values[p[j]];
      out[r] = s;
    }
  }

 private:
  std::size_t n_, k_, count_;
  std::vector<std::uint8_t> flat_;
};

// ---------------------------------------------------------------------------
// Subset search
// ---------------------------------------------------------------------------

struct BestMatch {
  Combination combination;
  double residual = 0.0;  // subset_value - target
  std::size_t rank = 0;   // lexicographic rank of the winner
};

// Exhaustive closest-sum search over `values`; ties go to the earliest rank.
inline BestMatch find_best(const std::vector<double>& values, const CombinationTable& table, double target) {
  if (values.size() != table.n()) throw UsageError("combination table does not match the element count");
  double best = std::numeric_limits<double>::infinity();
  double best_sum = 0.0;
  std::size_t best_rank = 0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const double s = table.sum(r, values);
    const double dist = std::abs(s - target);
    if (dist < best) {
      best = dist;
      best_sum = s;
      best_rank = r;
    }
  }
  return BestMatch{table.at(best_rank), best_sum - target, best_rank};
}

inline BestMatch find_best(const ElementSet& set, const CombinationTable& table, double target) {
  return find_best(set.realized, table, target);
}

inline BestMatch find_best(const ElementSet& set, std::size_t k, double target) {
  if (k > set.size()) throw UsageError("find_best needs k <= n");
  return find_best(set, CombinationTable(set.size(), k), target);
}

// First lexicographic combination whose nominal sum is closest to k times the
// mean nominal size; the pre-calibration ("as designed") selection. Sums that
// differ from the best only by rounding count as ties.
inline Combination balanced_combination(const ElementSet& set, std::size_t k) {
  const double mean = std::accumulate(set.nominal.begin(), set.nominal.end(), 0.0) / static_cast<double>(set.size());
  const double target = mean * static_cast<double>(k);
  const CombinationTable table(set.size(), k);
  std::vector<double> sums;
  table.all_sums(set.nominal, sums);
  double best = std::numeric_limits<double>::infinity();
  for (double s : sums) best = std::min(best, std::abs(s - target));
  const double tol = best + 1e-12 * std::max(1.0, std::abs(target));
  for (std::size_t r = 0; r < sums.size(); ++r)
    if (std::abs(sums[r] - target) <= tol) return table.at(r);
  return table.at(0);
}

// Closed acceptance interval [center - width/2, center + width/2].
struct TargetWindow {
  double center = 0.0;
  double width = 0.0;

  double lower() const { return center - 0.5 * width; }
  double upper() const { return center + 0.5 * width; }
  bool contains(double v) const { return v >= lower() && v <= upper(); }
};

struct ExhaustiveSearch {};

// Uniform draws over all C(n,k) combinations, with replacement.
struct RandomSearch {
  std::size_t trial_limit = 1;
  RandomStream* rng = nullptr;
};

using SearchStrategy = std::variant<ExhaustiveSearch, RandomSearch>;

struct WindowHit {
  std::optional<Combination> combination;
  std::size_t trials = 0;  // subset sums evaluated

  explicit operator bool() const { return combination.has_value(); }
};

inline WindowHit find_in_window(const ElementSet& set, std::size_t k, const TargetWindow& window,
                                const SearchStrategy& strategy) {
  if (k > set.size()) throw UsageError("find_in_window needs k <= n");
  if (!(window.width >= 0.0)) throw UsageError("target window width must be non-negative");
  WindowHit hit;
  if (std::holds_alternative<ExhaustiveSearch>(strategy)) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    do {
      ++hit.trials;
      double s = 0.0;
      for (std::size_t i : idx) s += set.realized[i];
      if (window.contains(s)) {
        hit.combination = Combination{idx};
        return hit;
      }
    } while (k > 0 && next_combination(idx, set.size()));
    return hit;
  }
  const auto& rs = std::get<RandomSearch>(strategy);
  if (rs.rng == nullptr) throw UsageError("random search needs a random stream");
  const std::uint64_t total = binomial(set.size(), k);
  for (std::size_t t = 0; t < rs.trial_limit; ++t) {
    ++hit.trials;
    Combination c = unrank_combination(set.size(), k, rs.rng->index(total));
    if (window.contains(subset_value(set, c))) {
      hit.combination = std::move(c);
      return hit;
    }
  }
  return hit;
}

}  // namespace eses
