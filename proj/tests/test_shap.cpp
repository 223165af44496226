#include <gtest/gtest.h>

#include <numeric>

#include "aeronoise/shap.hpp"
#include "test_util.hpp"

using namespace aeronoise;
using namespace aeronoise::shap;
using testing_util::leaf;

namespace {

gbm::Ensemble random_ensemble(Rng& rng, std::size_t m, std::size_t trees, int depth) {
  gbm::Ensemble e;
  e.base_score = rng.uniform(50, 70);
  e.learning_rate = rng.uniform(0.05, 1.0);
  e.feature_names = testing_util::feature_names(m);
  for (std::size_t t = 0; t < trees; ++t) e.trees.push_back(testing_util::random_tree(rng, m, depth));
  return e;
}

std::vector<double> random_row(Rng& rng, std::size_t m) {
  std::vector<double> x(m);
  for (auto& v : x) v = std::round(rng.uniform(0, 11));
  return x;
}

// Stump on feature 0 at 5 with covers 0.25 / 0.75 and leaves -4 / +4.
gbm::Ensemble stump() {
  gbm::Tree t;
  gbm::TreeNode root;
  root.feature = 0;
  root.split = 5;
  root.cover_left = 0.25;
  root.cover_right = 0.75;
  root.left = 1;
  root.right = 2;
  t.nodes = {root, leaf(-4), leaf(4)};
  return {10.0, 1.0, {t}, {"a", "b"}};
}

}  // namespace

TEST(Shap, StumpByHand) {
  const auto e = stump();
  EXPECT_DOUBLE_EQ(expected_output(e), 10.0 + (-1.0 + 3.0));
  const std::vector<double> x{0.0, 99.0};
  for (const auto& a : {shapley_bruteforce(e, x), shapley_fast(e, x)}) {
    EXPECT_DOUBLE_EQ(a.phi0, 12.0);
    EXPECT_DOUBLE_EQ(a.phis[0], -6.0);
    EXPECT_DOUBLE_EQ(a.phis[1], 0.0);  // never split on
  }
}

TEST(Shap, InteractionSplitsEvenly) {
  // x0 < .5 and x1 < .5 -> 1 else 0, equal covers; at (0,0) both features matter equally.
  gbm::Tree t;
  gbm::TreeNode a, b, c;
  a.feature = 0, a.split = 0.5, a.cover_left = a.cover_right = 0.5, a.left = 1, a.right = 4;
  b.feature = 1, b.split = 0.5, b.cover_left = b.cover_right = 0.5, b.left = 2, b.right = 3;
  c.feature = 1, c.split = 0.5, c.cover_left = c.cover_right = 0.5, c.left = 5, c.right = 6;
  t.nodes = {a, b, leaf(1), leaf(0), c, leaf(0), leaf(0)};
  const gbm::Ensemble e{0.0, 1.0, {t}, {"x0", "x1"}};
  const std::vector<double> x{0, 0};
  const auto fast = shapley_fast(e, x);
  EXPECT_DOUBLE_EQ(fast.phi0, 0.25);
  EXPECT_NEAR(fast.phis[0], 0.375, 1e-15);
  EXPECT_NEAR(fast.phis[1], 0.375, 1e-15);
}

TEST(Shap, FastMatchesBruteForceOnRandomEnsembles) {
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.below(8);
    const auto e = random_ensemble(rng, m, 1 + rng.below(6), 1 + static_cast<int>(rng.below(6)));
    for (int r = 0; r < 5; ++r) {
      const auto x = random_row(rng, m);
      const auto slow = shapley_bruteforce(e, x);
      const auto fast = shapley_fast(e, x);
      EXPECT_NEAR(fast.phi0, slow.phi0, 1e-9);
      for (std::size_t j = 0; j < m; ++j) worst = std::max(worst, std::abs(fast.phis[j] - slow.phis[j]));
      // Local accuracy.
      const double total = std::accumulate(fast.phis.begin(), fast.phis.end(), fast.phi0);
      EXPECT_NEAR(total, gbm::predict(e, x), 1e-9);
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Shap, RepeatedFeaturesOnOnePath) {
  // Deep trees over two features force the unwind path.
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto e = random_ensemble(rng, 2, 3, 6);
    const auto x = random_row(rng, 2);
    const auto slow = shapley_bruteforce(e, x);
    const auto fast = shapley_fast(e, x);
    EXPECT_NEAR(fast.phis[0], slow.phis[0], 1e-9);
    EXPECT_NEAR(fast.phis[1], slow.phis[1], 1e-9);
  }
}

TEST(Shap, TrainedModelAgreesAndCoalitionEndpoints) {
  Rng rng(8);
  gbm::Dataset d;
  d.feature_names = testing_util::feature_names(6);
  for (int i = 0; i < 400; ++i) {
    const auto x = random_row(rng, 6);
    d.push_back(std::to_string(i), x, (x[0] > 4) * 10.0 + x[1] * x[2] * 0.05 + rng.normal(0, 0.2));
  }
  gbm::TrainConfig c;
  c.rounds_max = 30;
  const auto r = gbm::train(d, gbm::Dataset{}, c);
  const auto attrs = explain(r.model, d);
  ASSERT_EQ(attrs.size(), d.rows());
  std::vector<std::size_t> all(6);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto slow = shapley_bruteforce(r.model, d.row(i));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(attrs[i].phis[j], slow.phis[j], 1e-9);
    EXPECT_EQ(attrs[i].key, d.keys[i]);
    EXPECT_NEAR(coalition_value(r.model, d.row(i), all), gbm::predict(r.model, d.row(i)), 1e-9);
    EXPECT_NEAR(coalition_value(r.model, d.row(i), {}), expected_output(r.model), 1e-12);
  }
  const auto s = summary(attrs, d.feature_names);
  EXPECT_EQ(s.front().name, "f0");
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i - 1].mean_abs, s[i].mean_abs);
}

TEST(Shap, Errors) {
  Rng rng(1);
  const auto e = random_ensemble(rng, 16, 1, 2);
  EXPECT_THROW(shapley_bruteforce(e, random_row(rng, 16)), Error);
  EXPECT_NO_THROW(shapley_fast(e, random_row(rng, 16)));
  EXPECT_THROW(shapley_fast(e, random_row(rng, 3)), Error);
  const std::vector<std::size_t> bad{16};
  EXPECT_THROW(coalition_value(e, random_row(rng, 16), bad), Error);
  EXPECT_THROW(summary({}), Error);
}

TEST(Dependence, SortedAndTurningPoint) {
  gbm::Dataset d;
  d.feature_names = {"cloud", "other"};
  std::vector<Attribution> attrs;
  const double clouds[] = {4, 0, 2, 3, 1, 3, 2};
  for (double c : clouds) {
    d.push_back("k", std::vector<double>{c, 0.0}, 0.0);
    attrs.push_back({"k", 0.0, {c < 2.5 ? -1.0 : 1.0, 0.0}});
  }
  const auto pts = dependence(attrs, d, "cloud");
  ASSERT_EQ(pts.size(), 7u);
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE(pts[i - 1].value, pts[i].value);
  EXPECT_DOUBLE_EQ(*turning_point(pts), 2.5);
  EXPECT_FALSE(turning_point(dependence(attrs, d, std::size_t{1})));
  EXPECT_THROW(dependence(attrs, d, "nope"), Error);
  attrs.pop_back();
  EXPECT_THROW(dependence(attrs, d, std::size_t{0}), Error);
}
