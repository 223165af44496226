#include <gtest/gtest.h>

#include <set>

#include "aeronoise/gbm.hpp"
#include "test_util.hpp"

using namespace aeronoise;
using namespace aeronoise::gbm;

namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t m, double noise = 0.3) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = testing_util::feature_names(m);
  std::vector<double> row(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = std::round(rng.uniform(0, 20));
    const double y = 3.0 * (row[0] > 7) + 0.5 * row[1 % m] - 2.0 * (row[2 % m] > 12 && row[0] < 4) +
                     rng.normal(0, noise);
    d.push_back("r" + std::to_string(i), row, y);
  }
  return d;
}

double sq(double v) { return v * v; }

struct Candidate {
  double gain = 0;
  int feature = -1;
  double split = 0;
};

// Exhaustive root split search straight from the gain definition.
Candidate best_root_split(const Dataset& d, std::span<const double> g, const TrainConfig& c) {
  Candidate best;
  double G = 0, H = 0;
  for (std::size_t i = 0; i < d.rows(); ++i) G += g[i], H += 1;
  for (std::size_t f = 0; f < d.cols(); ++f) {
    std::set<double> values;
    for (std::size_t i = 0; i < d.rows(); ++i) values.insert(d.row(i)[f]);
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double split = (*it + *std::next(it)) / 2;
      double gl = 0, hl = 0;
      for (std::size_t i = 0; i < d.rows(); ++i)
        if (d.row(i)[f] < split) gl += g[i], hl += 1;
      const double gr = G - gl, hr = H - hl;
      if (hl < c.min_child_weight || hr < c.min_child_weight) continue;
      const double gain = 0.5 * (sq(gl) / (hl + c.lambda) + sq(gr) / (hr + c.lambda) -
                                 sq(G) / (H + c.lambda)) - c.gamma;
      if (gain > best.gain + 1e-9) best = {gain, static_cast<int>(f), split};
    }
  }
  return best;
}

}  // namespace

TEST(Split, DeterministicDisjointAndSized) {
  const auto d = random_dataset(1, 101, 3);
  const auto [a, b] = split_data(d, 0.9, 42);
  const auto [a2, b2] = split_data(d, 0.9, 42);
  const auto [a3, b3] = split_data(d, 0.9, 43);
  EXPECT_EQ(a.rows(), 91u);
  EXPECT_EQ(b.rows(), 10u);
  EXPECT_EQ(a.keys, a2.keys);
  EXPECT_NE(a.keys, a3.keys);
  std::set<std::string> all(a.keys.begin(), a.keys.end());
  for (const auto& k : b.keys) EXPECT_TRUE(all.insert(k).second);
  EXPECT_EQ(all.size(), 101u);
  EXPECT_THROW(split_data(random_dataset(1, 9, 2), 0.9, 1), Error);
  EXPECT_THROW(split_data(d, 1.0, 1), Error);
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& x) { x.learning_rate = 0; },
           [](TrainConfig& x) { x.rounds_max = 5; },
           [](TrainConfig& x) { x.rounds_max = 1001; },
           [](TrainConfig& x) { x.max_depth = 0; },
           [](TrainConfig& x) { x.lambda = -1; },
           [](TrainConfig& x) { x.gamma = std::nan(""); },
           [](TrainConfig& x) { x.early_stopping_patience = 0; },
           [](TrainConfig& x) { x.split_fraction = 1.0; }}) {
    TrainConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), Error);
  }
}

TEST(Tree, StepFunctionRecoveredExactly) {
  Dataset d;
  d.feature_names = {"x"};
  for (int i = 0; i < 10; ++i) d.push_back(std::to_string(i), std::vector<double>{double(i)}, i < 5 ? 0.0 : 10.0);
  TrainConfig c;
  c.learning_rate = 1.0;
  c.lambda = 0.0;
  c.max_depth = 1;
  c.rounds_max = 10;
  const auto r = train(d, Dataset{}, c);
  EXPECT_DOUBLE_EQ(r.model.base_score, 5.0);
  const auto& root = r.model.trees[0].nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_DOUBLE_EQ(root.split, 4.5);
  EXPECT_DOUBLE_EQ(r.model.trees[0].nodes[1].weight, -5.0);
  EXPECT_DOUBLE_EQ(r.model.trees[0].nodes[2].weight, 5.0);
  EXPECT_DOUBLE_EQ(root.cover_left, 0.5);
  EXPECT_EQ(r.best_round, 10);  // no validation rows: everything kept
  EXPECT_DOUBLE_EQ(predict(r.model, std::vector<double>{4.4}), 0.0);
  EXPECT_DOUBLE_EQ(predict(r.model, std::vector<double>{4.5}), 10.0);
}

TEST(Tree, RootSplitMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = random_dataset(seed, 80, 4);
    TrainConfig c;
    c.lambda = 0.5 + static_cast<double>(seed % 3);
    c.min_child_weight = static_cast<double>(seed % 4) * 5;
    c.max_depth = 1;
    c.rounds_max = 10;
    const auto r = train(d, Dataset{}, c);
    const double mean = r.model.base_score;
    std::vector<double> g(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) g[i] = mean - d.y[i];
    const auto want = best_root_split(d, g, c);
    const auto& root = r.model.trees[0].nodes[0];
    ASSERT_EQ(root.feature, want.feature) << "seed " << seed;
    EXPECT_DOUBLE_EQ(root.split, want.split);
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (std::size_t i = 0; i < d.rows(); ++i)
      (d.row(i)[want.feature] < want.split ? gl : gr) += g[i],
          (d.row(i)[want.feature] < want.split ? hl : hr) += 1;
    EXPECT_NEAR(r.model.trees[0].nodes[1].weight, -gl / (hl + c.lambda), 1e-9);
    EXPECT_NEAR(r.model.trees[0].nodes[2].weight, -gr / (hr + c.lambda), 1e-9);
    EXPECT_DOUBLE_EQ(r.model.trees[0].nodes[0].cover, static_cast<double>(d.rows()));
  }
}

TEST(Tree, TieGoesToLowestFeature) {
  Dataset d;
  d.feature_names = {"a", "b", "c"};
  for (int i = 0; i < 20; ++i) {
    const double v = i % 4;
    d.push_back(std::to_string(i), std::vector<double>{0.0, v, v}, v * v);
  }
  TrainConfig c;
  c.max_depth = 1;
  c.rounds_max = 10;
  const auto r = train(d, Dataset{}, c);
  EXPECT_EQ(r.model.trees[0].nodes[0].feature, 1);
}

TEST(Tree, GammaAndMinChildWeightPrune) {
  const auto d = random_dataset(3, 200, 3);
  TrainConfig c;
  c.rounds_max = 10;
  c.gamma = 1e9;
  for (const auto& t : train(d, Dataset{}, c).model.trees) EXPECT_EQ(t.nodes.size(), 1u);
  c.gamma = 0;
  c.min_child_weight = 30;
  c.max_depth = 8;
  for (const auto& t : train(d, Dataset{}, c).model.trees) {
    EXPECT_LE(t.depth(), 8);
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) EXPECT_GE(n.cover, 30.0);
      else EXPECT_NEAR(n.cover_left + n.cover_right, 1.0, 1e-12);
    }
  }
}

TEST(Training, LossNonIncreasingAndFittedConsistent) {
  const auto d = random_dataset(5, 300, 4);
  TrainConfig c;
  c.rounds_max = 60;
  const auto r = train(d, Dataset{}, c);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    EXPECT_LE(r.history[i].train.rmse, r.history[i - 1].train.rmse + 1e-12);
  for (std::size_t i = 0; i < d.rows(); ++i)
    EXPECT_NEAR(r.fitted[i], predict(r.model, d.row(i)), 1e-9);
}

TEST(Training, EarlyStoppingKeepsBestPrefix) {
  const auto all = random_dataset(9, 400, 4, 3.0);
  const auto [tr, va] = split_data(all, 0.9, 9);
  TrainConfig c;
  c.learning_rate = 0.5;
  c.max_depth = 8;
  c.min_child_weight = 0;
  c.lambda = 0;
  c.early_stopping_patience = 10;
  const auto r = train(tr, va, c);
  ASSERT_LT(r.history.size(), 1000u);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < r.history.size(); ++i)
    if (r.history[i].valid->rmse < r.history[argmin].valid->rmse) argmin = i;
  EXPECT_EQ(r.best_round, static_cast<int>(argmin) + 1);
  EXPECT_EQ(r.history.size(), argmin + 1 + 10);
  EXPECT_EQ(r.model.trees.size(), static_cast<std::size_t>(r.best_round));
  EXPECT_NEAR(evaluate(r.model, va).rmse, r.history[argmin].valid->rmse, 1e-9);
}

TEST(Training, DeterministicAndRoundTrips) {
  const auto d = random_dataset(12, 250, 5);
  const auto [tr, va] = split_data(d, 0.9, 1);
  TrainConfig c;
  c.rounds_max = 40;
  const auto a = train(tr, va, c);
  const auto b = train(tr, va, c);
  const auto text = serialize(a);
  EXPECT_EQ(text, serialize(b));
  const auto back = result_from_json(Json::parse(text));
  EXPECT_EQ(serialize(back), text);
  for (std::size_t i = 0; i < d.rows(); ++i)
    EXPECT_EQ(predict(back.model, d.row(i)), predict(a.model, d.row(i)));
  EXPECT_THROW(result_from_json(Json::parse("{\"format\":\"other\"}")), Error);
}

TEST(Training, RejectsNonFinite) {
  auto d = random_dataset(1, 30, 2);
  d.y[3] = std::nan("");
  try {
    train(d, Dataset{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteTarget);
  }
  d.y[3] = 1;
  d.x[5] = HUGE_VAL;
  try {
    train(d, Dataset{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteFeature);
  }
}

TEST(Predict, MissingFeature) {
  const auto d = random_dataset(2, 50, 3);
  TrainConfig c;
  c.rounds_max = 10;
  const auto r = train(d, Dataset{}, c);
  try {
    predict(r.model, std::vector<double>{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingFeature);
    EXPECT_EQ(e.detail(), "f2");
  }
  EXPECT_THROW(predict(r.model, std::vector<double>{1.0, std::nan(""), 3.0}), Error);
}

TEST(Metrics, Values) {
  const std::vector<double> p{1, 2, 3}, y{1, 4, 0};
  const auto m = metrics_of(p, y);
  EXPECT_DOUBLE_EQ(m.mae, 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(13.0 / 3.0));
}
