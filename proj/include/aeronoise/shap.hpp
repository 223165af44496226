#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aeronoise/error.hpp"
#include "aeronoise/gbm.hpp"
#include "aeronoise/parallel.hpp"

namespace aeronoise::shap {

using gbm::Ensemble;
using gbm::Tree;

/// phi0 + sum(phis) reproduces the model output for the row.
struct Attribution {
  std::string key;
  double phi0 = 0.0;
  std::vector<double> phis;
};

namespace detail {

// Path-dependent expectation of one tree: features in the coalition follow the
// row, the rest average both branches by training cover.
inline double expected_value(const Tree& t, std::span<const double> row,
                             const std::vector<char>& in_coalition, std::uint32_t i = 0) {
  const auto& n = t.nodes[i];
  if (n.is_leaf()) return n.weight;
  const auto f = static_cast<std::size_t>(n.feature);
  if (in_coalition[f]) return expected_value(t, row, in_coalition, row[f] < n.split ? n.left : n.right);
  return n.cover_left * expected_value(t, row, in_coalition, n.left) +
         n.cover_right * expected_value(t, row, in_coalition, n.right);
}

}  // namespace detail

/// Model value f(S) with only the features in `subset` known.
inline double coalition_value(const Ensemble& e, std::span<const double> row,
                              std::span<const std::size_t> subset) {
  std::vector<char> mask(e.features(), 0);
  for (auto f : subset) {
    if (f >= e.features())
      throw Error(ErrorKind::UnknownFeature, "feature index " + std::to_string(f));
    mask[f] = 1;
  }
  double s = 0.0;
  for (const auto& t : e.trees) s += detail::expected_value(t, row, mask);
  return e.base_score + e.learning_rate * s;
}

inline double expected_output(const Ensemble& e) {
  const std::vector<char> none(e.features(), 0);
  const std::vector<double> dummy(e.features(), 0.0);
  double s = 0.0;
  for (const auto& t : e.trees) s += detail::expected_value(t, dummy, none);
  return e.base_score + e.learning_rate * s;
}

inline constexpr std::size_t kMaxBruteForceFeatures = 15;

/// Direct evaluation of the Shapley formula over all 2^M coalitions.
inline Attribution shapley_bruteforce(const Ensemble& e, std::span<const double> row) {
  const std::size_t m = e.features();
  if (m > kMaxBruteForceFeatures)
    throw Error(ErrorKind::TooManyFeatures,
                std::to_string(m) + " features, enumeration limited to 15");
  if (row.size() < m) throw Error(ErrorKind::MissingFeature, e.feature_names[row.size()]);
  const std::uint32_t subsets = 1u << m;
  std::vector<double> value(subsets);
  std::vector<char> mask(m);
  for (std::uint32_t s = 0; s < subsets; ++s) {
    for (std::size_t f = 0; f < m; ++f) mask[f] = (s >> f) & 1u;
    double sum = 0.0;
    for (const auto& t : e.trees) sum += detail::expected_value(t, row, mask);
    value[s] = e.base_score + e.learning_rate * sum;
  }
  // |S|! (M - |S| - 1)! / M!
  std::vector<double> weight(m);
  for (std::size_t k = 0; k < m; ++k) {
    double w = 1.0 / static_cast<double>(m);
    for (std::size_t i = 1; i <= k; ++i)
      w *= static_cast<double>(i) / static_cast<double>(m - i);
    weight[k] = w;
  }
  Attribution a;
  a.phi0 = value[0];
  a.phis.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      a.phis[i] += weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]);
    }
  }
  return a;
}

namespace detail {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

inline void extend_path(PathElement* path, unsigned depth, double zero_fraction,
                        double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

inline void unwind_path(PathElement* path, unsigned depth, unsigned index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1) / static_cast<double>((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (unsigned i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

inline double unwound_path_sum(const PathElement* path, unsigned depth, unsigned index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / static_cast<double>((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * ((depth - i) / static_cast<double>(depth + 1));
    } else {
      total += (path[i].weight / zero) / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

// Polynomial-time path-dependent Shapley values of one tree (recursive
// TreeSHAP). `path` holds one scratch segment per depth level.
inline void tree_shap(const Tree& t, std::span<const double> row, double scale,
                      std::vector<double>& phi, std::uint32_t node, unsigned depth,
                      PathElement* parent_path, double zero_fraction, double one_fraction,
                      int feature) {
  PathElement* path = parent_path + depth + 1;
  std::copy(parent_path, parent_path + depth + 1, path);
  extend_path(path, depth, zero_fraction, one_fraction, feature);

  const auto& n = t.nodes[node];
  if (n.is_leaf()) {
    for (unsigned i = 1; i <= depth; ++i) {
      const double w = unwound_path_sum(path, depth, i);
      const auto& el = path[i];
      phi[static_cast<std::size_t>(el.feature)] +=
          w * (el.one_fraction - el.zero_fraction) * n.weight * scale;
    }
    return;
  }

  const bool go_left = row[static_cast<std::size_t>(n.feature)] < n.split;
  const std::uint32_t hot = go_left ? n.left : n.right;
  const std::uint32_t cold = go_left ? n.right : n.left;
  const double hot_zero = go_left ? n.cover_left : n.cover_right;
  const double cold_zero = go_left ? n.cover_right : n.cover_left;

  double incoming_zero = 1.0, incoming_one = 1.0;
  unsigned index = 0;
  for (; index <= depth; ++index)
    if (path[index].feature == n.feature) break;
  if (index != depth + 1) {
    incoming_zero = path[index].zero_fraction;
    incoming_one = path[index].one_fraction;
    unwind_path(path, depth, index);
    depth -= 1;
  }
  tree_shap(t, row, scale, phi, hot, depth + 1, path, hot_zero * incoming_zero, incoming_one,
            n.feature);
  tree_shap(t, row, scale, phi, cold, depth + 1, path, cold_zero * incoming_zero, 0.0, n.feature);
}

}  // namespace detail

/// Same attribution as shapley_bruteforce, in O(trees * leaves * depth^2).
inline Attribution shapley_fast(const Ensemble& e, std::span<const double> row) {
  const std::size_t m = e.features();
  if (row.size() < m) throw Error(ErrorKind::MissingFeature, e.feature_names[row.size()]);
  for (std::size_t j = 0; j < m; ++j)
    if (std::isnan(row[j])) throw Error(ErrorKind::MissingFeature, e.feature_names[j]);
  Attribution a;
  a.phi0 = expected_output(e);
  a.phis.assign(m, 0.0);
  int max_depth = 0;
  for (const auto& t : e.trees) max_depth = std::max(max_depth, t.depth());
  const auto d = static_cast<std::size_t>(max_depth) + 2;
  std::vector<detail::PathElement> scratch(d * (d + 1) / 2 + d);
  for (const auto& t : e.trees)
    detail::tree_shap(t, row, e.learning_rate, a.phis, 0, 0, scratch.data(), 1.0, 1.0, -1);
  return a;
}

/// Fast attributions for every row of a dataset, in row order.
inline std::vector<Attribution> explain(const Ensemble& e, const gbm::Dataset& d) {
  std::vector<Attribution> out(d.rows());
  parallel_for(d.rows(), [&](std::size_t i) {
    out[i] = shapley_fast(e, d.row(i));
    out[i].key = d.keys[i];
  });
  return out;
}

struct FeatureImportance {
  std::size_t feature = 0;
  std::string name;
  double mean_abs = 0.0;
};

/// Features ranked by mean |phi|, descending; ties keep feature order.
inline std::vector<FeatureImportance> summary(std::span<const Attribution> attributions,
                                              std::span<const std::string> names = {}) {
  if (attributions.empty()) throw Error(ErrorKind::EmptyInput, "no attributions to summarize");
  const std::size_t m = attributions.front().phis.size();
  std::vector<FeatureImportance> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    CompensatedSum s;
    for (const auto& a : attributions) s.add(std::abs(a.phis[j]));
    out[j] = {j, j < names.size() ? names[j] : "f" + std::to_string(j),
              s.value() / static_cast<double>(attributions.size())};
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.mean_abs > b.mean_abs;
  });
  return out;
}

struct DependencePoint {
  double value = 0.0;
  double phi = 0.0;
};

/// (feature value, phi) per row, sorted by feature value; ties keep row order.
inline std::vector<DependencePoint> dependence(std::span<const Attribution> attributions,
                                               const gbm::Dataset& rows, std::size_t feature) {
  if (feature >= rows.cols())
    throw Error(ErrorKind::UnknownFeature, "feature index " + std::to_string(feature));
  if (attributions.size() != rows.rows())
    throw Error(ErrorKind::LengthMismatch, "one attribution per row required");
  std::vector<DependencePoint> out(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i)
    out[i] = {rows.row(i)[feature], attributions[i].phis.at(feature)};
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.value < b.value; });
  return out;
}

inline std::vector<DependencePoint> dependence(std::span<const Attribution> attributions,
                                               const gbm::Dataset& rows, std::string_view name) {
  for (std::size_t j = 0; j < rows.cols(); ++j)
    if (rows.feature_names[j] == name) return dependence(attributions, rows, j);
  throw Error(ErrorKind::UnknownFeature, std::string(name));
}

/// Feature value where the mean phi first turns from non-positive to
/// positive: midpoint between the two adjacent distinct values. Used to read
/// threshold effects off dependence data.
inline std::optional<double> turning_point(std::span<const DependencePoint> sorted) {
  std::optional<std::pair<double, double>> prev;  // (value, mean phi)
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    CompensatedSum s;
    while (j < sorted.size() && sorted[j].value == sorted[i].value) s.add(sorted[j++].phi);
    const double mean = s.value() / static_cast<double>(j - i);
    if (prev && prev->second <= 0.0 && mean > 0.0) return (prev->first + sorted[i].value) / 2.0;
    prev = std::pair{sorted[i].value, mean};
    i = j;
  }
  return std::nullopt;
}

}  // namespace aeronoise::shap
