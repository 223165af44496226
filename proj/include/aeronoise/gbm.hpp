#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/fusion.hpp"
#include "aeronoise/rng.hpp"

namespace aeronoise::gbm {

// ---------------------------------------------------------------------------
// Data

/// Dense row-major design matrix with one regression target per row.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> keys;  // row identity, carried into exports
  std::vector<double> x;
  std::vector<double> y;

  std::size_t cols() const { return feature_names.size(); }
  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols(), cols()}; }

  void push_back(std::string key, std::span<const double> features, double target) {
    keys.push_back(std::move(key));
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(target);
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.feature_names = feature_names;
    for (auto i : idx) d.push_back(keys[i], row(i), y[i]);
    return d;
  }
};

/// Rows of one operation type whose target is present.
inline Dataset make_dataset(const FeatureTable& t, Operation op) {
  Dataset d;
  d.feature_names = t.feature_names;
  for (const auto& r : t.rows) {
    if (r.operation != op) continue;
    const auto target = r.target();
    if (!target) continue;
    d.push_back(r.nmt_id + "@" + to_string(r.hour_start) + "@" + std::string(to_string(op)), r.x,
                *target);
  }
  return d;
}

/// Deterministic uniform random partition; train gets round(fraction * n) rows.
inline std::pair<Dataset, Dataset> split_data(const Dataset& d, double fraction,
                                              std::uint64_t seed) {
  if (d.rows() < 10)
    throw Error(ErrorKind::TooFewRows, std::to_string(d.rows()) + " rows, need at least 10");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::InvalidConfig, "split fraction must be in (0, 1)");
  const auto n = d.rows();
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    throw Error(ErrorKind::InvalidConfig, "split leaves one side empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = Rng::stream(seed, "split");
  rng.shuffle(std::span(idx));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {d.subset(train), d.subset(test)};
}

// ---------------------------------------------------------------------------
// Model

struct TrainConfig {
  double learning_rate = 0.05;
  int rounds_max = 1000;
  int max_depth = 6;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  int early_stopping_patience = 25;
  double split_fraction = 0.9;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) bad("learning_rate must be in (0, 1]");
    if (rounds_max < 10 || rounds_max > 1000) bad("rounds_max must be in [10, 1000]");
    if (max_depth < 1 || max_depth > 16) bad("max_depth must be in [1, 16]");
    if (!(lambda >= 0.0)) bad("lambda must be >= 0");
    if (!(gamma >= 0.0)) bad("gamma must be >= 0");
    if (!(min_child_weight >= 0.0)) bad("min_child_weight must be >= 0");
    if (early_stopping_patience < 1) bad("early_stopping_patience must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) bad("split_fraction must be in (0, 1)");
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double split = 0.0;
  double weight = 0.0;  // leaf output before shrinkage
  double cover = 0.0;   // hessian sum of training rows reaching the node
  double cover_left = 0.0;
  double cover_right = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;

  bool is_leaf() const { return feature < 0; }
};

/// Nodes in preorder: root at 0, an internal node's left child directly follows it.
struct Tree {
  std::vector<TreeNode> nodes;

  double eval(std::span<const double> x) const {
    std::uint32_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
    }
    return nodes[i].weight;
  }

  int depth(std::uint32_t i = 0) const {
    if (nodes[i].is_leaf()) return 0;
    return 1 + std::max(depth(nodes[i].left), depth(nodes[i].right));
  }
};

struct Ensemble {
  double base_score = 0.0;
  double learning_rate = 0.05;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  std::size_t features() const { return feature_names.size(); }
};

/// base_score + eta * sum of tree outputs.
inline double predict(const Ensemble& e, std::span<const double> row) {
  if (row.size() < e.features())
    throw Error(ErrorKind::MissingFeature, e.feature_names[row.size()]);
  for (std::size_t j = 0; j < e.features(); ++j)
    if (std::isnan(row[j])) throw Error(ErrorKind::MissingFeature, e.feature_names[j]);
  double s = 0.0;
  for (const auto& t : e.trees) s += t.eval(row);
  return e.base_score + e.learning_rate * s;
}

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
};

inline Metrics metrics_of(std::span<const double> pred, std::span<const double> y) {
  if (y.empty()) throw Error(ErrorKind::EmptyInput, "no rows to evaluate");
  CompensatedSum abs_sum, sq_sum;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = pred[i] - y[i];
    abs_sum.add(std::abs(r));
    sq_sum.add(r * r);
  }
  const auto n = static_cast<double>(y.size());
  return {abs_sum.value() / n, std::sqrt(sq_sum.value() / n)};
}

inline Metrics evaluate(const Ensemble& e, const Dataset& d) {
  if (d.rows() == 0) throw Error(ErrorKind::EmptyInput, "no rows to evaluate");
  std::vector<double> pred(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) pred[i] = predict(e, d.row(i));
  return metrics_of(pred, d.y);
}

struct RoundMetrics {
  int round = 0;  // 1-based
  Metrics train;
  std::optional<Metrics> valid;
};

struct TrainResult {
  Ensemble model;
  TrainConfig config;
  std::vector<RoundMetrics> history;
  int best_round = 0;          // trees kept
  std::vector<double> fitted;  // training-row predictions of the kept model
};

namespace detail {

// Mean that returns c exactly for a constant input.
inline double stable_mean(std::span<const double> y) {
  const double anchor = y[0];
  CompensatedSum s;
  for (double v : y) s.add(v - anchor);
  return anchor + s.value() / static_cast<double>(y.size());
}

inline double leaf_weight(double g, double h, double lambda) { return -g / (h + lambda); }

inline double score(double g, double h, double lambda) { return g * g / (h + lambda); }

/// Midpoint strictly above `lo` and not above `hi`.
inline double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2.0;
  return m > lo ? m : hi;
}

/// Exact greedy, level-wise tree growth over presorted feature orders.
class TreeBuilder {
 public:
  TreeBuilder(const Dataset& d, const TrainConfig& cfg,
              const std::vector<std::vector<std::uint32_t>>& order)
      : d_(d), cfg_(cfg), order_(order), row_node_(d.rows()) {}

  Tree build(std::span<const double> grad, std::span<const double> hess) {
    struct Build {
      TreeNode node;
      double g = 0.0, h = 0.0;
      int left = -1, right = -1;
    };
    std::vector<Build> nodes(1);
    {
      CompensatedSum g, h;
      for (std::size_t r = 0; r < d_.rows(); ++r) {
        g.add(grad[r]);
        h.add(hess[r]);
      }
      nodes[0].g = g.value();
      nodes[0].h = h.value();
    }
    std::fill(row_node_.begin(), row_node_.end(), 0);
    std::vector<int> frontier{0};

    struct Best {
      double gain = 0.0;
      int feature = -1;
      double split = 0.0;
      double gl = 0.0, hl = 0.0;
    };

    for (int depth = 0; depth < cfg_.max_depth && !frontier.empty(); ++depth) {
      std::vector<int> slot_of(nodes.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s)
        slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
      const std::size_t k = frontier.size();
      std::vector<Best> best(k);
      std::vector<double> gl(k), hl(k), last(k);
      std::vector<char> seen(k);

      for (std::size_t f = 0; f < d_.cols(); ++f) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (std::uint32_t r : order_[f]) {
          const int node = row_node_[r];
          if (node < 0) continue;
          const int s = slot_of[static_cast<std::size_t>(node)];
          if (s < 0) continue;
          const auto si = static_cast<std::size_t>(s);
          const double v = d_.x[r * d_.cols() + f];
          if (seen[si] && v != last[si]) {
            const auto& nb = nodes[static_cast<std::size_t>(node)];
            const double gr = nb.g - gl[si], hr = nb.h - hl[si];
            if (hl[si] >= cfg_.min_child_weight && hr >= cfg_.min_child_weight) {
              const double gain = 0.5 * (score(gl[si], hl[si], cfg_.lambda) +
                                         score(gr, hr, cfg_.lambda) -
                                         score(nb.g, nb.h, cfg_.lambda)) -
                                  cfg_.gamma;
              if (gain > best[si].gain)
                best[si] = {gain, static_cast<int>(f), midpoint(last[si], v), gl[si], hl[si]};
            }
          }
          gl[si] += grad[r];
          hl[si] += hess[r];
          last[si] = v;
          seen[si] = 1;
        }
      }

      std::vector<int> next;
      std::vector<int> split_nodes;
      for (std::size_t s = 0; s < k; ++s) {
        if (best[s].feature < 0) continue;
        const int id = frontier[s];
        Build left, right;
        left.g = best[s].gl;
        left.h = best[s].hl;
        right.g = nodes[static_cast<std::size_t>(id)].g - best[s].gl;
        right.h = nodes[static_cast<std::size_t>(id)].h - best[s].hl;
        auto& parent = nodes[static_cast<std::size_t>(id)];
        parent.node.feature = best[s].feature;
        parent.node.split = best[s].split;
        parent.node.cover_left = left.h / parent.h;
        parent.node.cover_right = right.h / parent.h;
        parent.left = static_cast<int>(nodes.size());
        parent.right = static_cast<int>(nodes.size() + 1);
        next.push_back(parent.left);
        next.push_back(parent.right);
        split_nodes.push_back(id);
        nodes.push_back(left);
        nodes.push_back(right);
      }
      if (split_nodes.empty()) break;
      for (std::size_t r = 0; r < d_.rows(); ++r) {
        const int node = row_node_[r];
        if (node < 0) continue;
        const auto& b = nodes[static_cast<std::size_t>(node)];
        if (b.left < 0) {
          row_node_[r] = -1;  // settled in a leaf
          continue;
        }
        const double v = d_.x[r * d_.cols() + static_cast<std::size_t>(b.node.feature)];
        row_node_[r] = v < b.node.split ? b.left : b.right;
      }
      frontier = std::move(next);
    }

    // Leaves get Newton weights; emit in preorder.
    Tree tree;
    auto emit = [&](auto&& self, int id) -> std::uint32_t {
      const auto& b = nodes[static_cast<std::size_t>(id)];
      const auto at = static_cast<std::uint32_t>(tree.nodes.size());
      TreeNode n = b.node;
      n.cover = b.h;
      if (b.left < 0) {
        n.feature = -1;
        n.cover_left = n.cover_right = 0.0;
        n.weight = leaf_weight(b.g, b.h, cfg_.lambda);
        tree.nodes.push_back(n);
        return at;
      }
      tree.nodes.push_back(n);
      const auto l = self(self, b.left);
      const auto r = self(self, b.right);
      tree.nodes[at].left = l;
      tree.nodes[at].right = r;
      return at;
    };
    emit(emit, 0);
    return tree;
  }

 private:
  const Dataset& d_;
  const TrainConfig& cfg_;
  const std::vector<std::vector<std::uint32_t>>& order_;
  std::vector<int> row_node_;
};

inline void check_finite(const Dataset& d, const char* which) {
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (!std::isfinite(d.x[i * d.cols() + j]))
        throw Error(ErrorKind::NonFiniteFeature,
                    std::string(which) + " row " + std::to_string(i) + " feature " +
                        d.feature_names[j]);
    if (!std::isfinite(d.y[i]))
      throw Error(ErrorKind::NonFiniteTarget, std::string(which) + " row " + std::to_string(i));
  }
}

}  // namespace detail

/// Second-order boosting on squared error (g = prediction - y, h = 1).
/// Stops at rounds_max or when validation RMSE has not improved for
/// `early_stopping_patience` rounds; keeps the best-validation prefix.
/// With no validation rows every round is kept.
inline TrainResult train(const Dataset& train_set, const Dataset& valid_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.cols() == 0) throw Error(ErrorKind::InvalidConfig, "no feature columns");
  if (train_set.rows() == 0) throw Error(ErrorKind::TooFewRows, "empty training set");
  if (valid_set.rows() > 0 && valid_set.cols() != train_set.cols())
    throw Error(ErrorKind::InvalidConfig, "validation columns differ from training columns");
  detail::check_finite(train_set, "train");
  detail::check_finite(valid_set, "valid");

  const std::size_t n = train_set.rows();
  const std::size_t m = train_set.cols();
  std::vector<std::vector<std::uint32_t>> order(m);
  for (std::size_t f = 0; f < m; ++f) {
    auto& o = order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
      return train_set.x[a * m + f] < train_set.x[b * m + f];
    });
  }

  TrainResult res;
  res.config = cfg;
  res.model.base_score = detail::stable_mean(train_set.y);
  res.model.learning_rate = cfg.learning_rate;
  res.model.feature_names = train_set.feature_names;

  std::vector<double> pred(n, res.model.base_score);
  std::vector<double> vpred(valid_set.rows(), res.model.base_score);
  std::vector<double> grad(n), hess(n, 1.0);
  detail::TreeBuilder builder(train_set, cfg, order);

  double best_valid = std::numeric_limits<double>::infinity();
  int best_round = 0;
  res.fitted = pred;

  for (int round = 1; round <= cfg.rounds_max; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - train_set.y[i];
    res.model.trees.push_back(builder.build(grad, hess));
    const auto& tree = res.model.trees.back();
    for (std::size_t i = 0; i < n; ++i) pred[i] += cfg.learning_rate * tree.eval(train_set.row(i));
    for (std::size_t i = 0; i < vpred.size(); ++i)
      vpred[i] += cfg.learning_rate * tree.eval(valid_set.row(i));

    RoundMetrics rm;
    rm.round = round;
    rm.train = metrics_of(pred, train_set.y);
    if (!vpred.empty()) rm.valid = metrics_of(vpred, valid_set.y);
    res.history.push_back(rm);

    if (!rm.valid) {
      best_round = round;
      continue;
    }
    if (rm.valid->rmse < best_valid) {
      best_valid = rm.valid->rmse;
      best_round = round;
      res.fitted = pred;
    } else if (round - best_round >= cfg.early_stopping_patience) {
      break;
    }
  }
  if (vpred.empty()) res.fitted = pred;
  res.best_round = best_round;
  res.model.trees.resize(static_cast<std::size_t>(best_round));
  return res;
}

// ---------------------------------------------------------------------------
// Serialization: self-describing, key order fixed, doubles round-trip exactly.

using Json = nlohmann::ordered_json;

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["rounds_max"] = c.rounds_max;
  j["max_depth"] = c.max_depth;
  j["lambda"] = c.lambda;
  j["gamma"] = c.gamma;
  j["min_child_weight"] = c.min_child_weight;
  j["early_stopping_patience"] = c.early_stopping_patience;
  j["split_fraction"] = c.split_fraction;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig config_from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.rounds_max = j.at("rounds_max").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.min_child_weight = j.at("min_child_weight").get<double>();
  c.early_stopping_patience = j.at("early_stopping_patience").get<int>();
  c.split_fraction = j.at("split_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline Json to_json(const Tree& t) {
  Json arr = Json::array();
  for (const auto& n : t.nodes) {
    Json j;
    if (n.is_leaf()) {
      j["leaf"] = n.weight;
      j["cover"] = n.cover;
    } else {
      j["feature"] = n.feature;
      j["split"] = n.split;
      j["cover"] = n.cover;
      j["cover_left"] = n.cover_left;
      j["cover_right"] = n.cover_right;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline Tree tree_from_json(const Json& arr) {
  Tree t;
  std::size_t pos = 0;
  auto parse = [&](auto&& self) -> std::uint32_t {
    if (pos >= arr.size()) throw Error(ErrorKind::MalformedRow, "truncated tree");
    const auto& j = arr[pos++];
    const auto at = static_cast<std::uint32_t>(t.nodes.size());
    TreeNode n;
    n.cover = j.at("cover").get<double>();
    if (j.contains("leaf")) {
      n.weight = j.at("leaf").get<double>();
      t.nodes.push_back(n);
      return at;
    }
    n.feature = j.at("feature").get<int>();
    n.split = j.at("split").get<double>();
    n.cover_left = j.at("cover_left").get<double>();
    n.cover_right = j.at("cover_right").get<double>();
    t.nodes.push_back(n);
    const auto l = self(self);
    const auto r = self(self);
    t.nodes[at].left = l;
    t.nodes[at].right = r;
    return at;
  };
  parse(parse);
  if (pos != arr.size()) throw Error(ErrorKind::MalformedRow, "trailing tree nodes");
  return t;
}

inline Json to_json(const TrainResult& r) {
  Json j;
  j["format"] = "aeronoise-gbm";
  j["version"] = 1;
  j["config"] = to_json(r.config);
  j["feature_names"] = r.model.feature_names;
  j["base_score"] = r.model.base_score;
  j["learning_rate"] = r.model.learning_rate;
  j["best_round"] = r.best_round;
  Json trees = Json::array();
  for (const auto& t : r.model.trees) trees.push_back(to_json(t));
  j["trees"] = std::move(trees);
  Json hist = Json::array();
  for (const auto& h : r.history) {
    Json e;
    e["round"] = h.round;
    e["train_mae"] = h.train.mae;
    e["train_rmse"] = h.train.rmse;
    if (h.valid) {
      e["valid_mae"] = h.valid->mae;
      e["valid_rmse"] = h.valid->rmse;
    } else {
      e["valid_mae"] = nullptr;
      e["valid_rmse"] = nullptr;
    }
    hist.push_back(std::move(e));
  }
  j["history"] = std::move(hist);
  return j;
}

inline TrainResult result_from_json(const Json& j) {
  if (j.value("format", std::string{}) != "aeronoise-gbm")
    throw Error(ErrorKind::MalformedRow, "not an aeronoise-gbm model document");
  TrainResult r;
  r.config = config_from_json(j.at("config"));
  r.model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  r.model.base_score = j.at("base_score").get<double>();
  r.model.learning_rate = j.at("learning_rate").get<double>();
  r.best_round = j.at("best_round").get<int>();
  for (const auto& t : j.at("trees")) r.model.trees.push_back(tree_from_json(t));
  for (const auto& h : j.at("history")) {
    RoundMetrics m;
    m.round = h.at("round").get<int>();
    m.train = {h.at("train_mae").get<double>(), h.at("train_rmse").get<double>()};
    if (!h.at("valid_mae").is_null())
      m.valid = Metrics{h.at("valid_mae").get<double>(), h.at("valid_rmse").get<double>()};
    r.history.push_back(m);
  }
  return r;
}

inline std::string serialize(const TrainResult& r) { return to_json(r).dump(1) + "\n"; }

}  // namespace aeronoise::gbm
