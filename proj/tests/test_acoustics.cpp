#include <gtest/gtest.h>

#include <algorithm>

#include "aeronoise/acoustics.hpp"
#include "test_util.hpp"

using namespace aeronoise;
using testing_util::at;
using testing_util::laeq_oracle;

TEST(Laeq, WorkedValues) {
  const std::vector<double> a{70.0, 70.0, 70.0};
  EXPECT_DOUBLE_EQ(laeq(a), 70.0);
  // Two equal sources add 3.0103 dB over one, halved by the mean.
  const std::vector<double> b{70.0, 60.0};
  EXPECT_NEAR(laeq(b), 10.0 * std::log10((1e7 + 1e6) / 2.0), 1e-12);
  const std::vector<double> c{80.0, 0.0, 0.0, 0.0};
  // 0 dB is unit energy, not silence.
  EXPECT_NEAR(laeq(c), 10.0 * std::log10((1e8 + 3.0) / 4.0), 1e-12);
}

TEST(Laeq, EmptyIsAnError) {
  EXPECT_THROW(laeq(std::vector<double>{}), Error);
}

TEST(Laeq, PropertiesOnRandomInputs) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.below(400));
    for (auto& x : v) x = std::round(rng.uniform(40.0, 110.0) * 10.0) / 10.0;
    const double l = laeq(v);
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    // Bounded by extremes, never below the arithmetic mean, matches the direct formula.
    EXPECT_GE(l, *mn);
    EXPECT_LE(l, *mx);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    EXPECT_GE(l + 1e-9, mean);
    EXPECT_NEAR(l, laeq_oracle(v), 1e-9);
    // Order invariance, bit for bit.
    auto shuffled = v;
    rng.shuffle(std::span<double>(shuffled));
    EXPECT_EQ(laeq(shuffled), l);
    // Adding a constant shifts the result by that constant.
    auto shifted = v;
    for (auto& x : shifted) x += 5.0;
    EXPECT_NEAR(laeq(shifted), l + 5.0, 1e-9);
  }
}

TEST(Retention, StrictlyAbove) {
  const std::vector<SplSample> s{{"N", {}, 59.9}, {"N", {}, 60.0}, {"N", {}, 60.1}};
  const auto r = retain_above(s, 60.0);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].level, 60.1);
  EXPECT_EQ(retain_above(s, kRetainAll).size(), 3u);
}

TEST(Hourly, RetentionBeforeAggregation) {
  std::vector<SplSample> s;
  const auto h0 = at("2023-01-01T10:00:00");
  for (int i = 0; i < 1200; ++i) s.push_back({"N1", CivilTime{h0.seconds + 3 * i}, i < 600 ? 50.0 : 70.0});
  const auto out = hourly_series(s, 60.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(*out[0].laeq, 70.0);
  EXPECT_EQ(out[0].n_retained, 600);
  EXPECT_DOUBLE_EQ(out[0].completeness, 1.0);
  // With no retention the quiet half pulls the level down by ~3 dB.
  const auto all = hourly_series(s, kRetainAll);
  EXPECT_NEAR(*all[0].laeq, laeq_oracle(std::vector<double>{50, 70}), 1e-9);
}

TEST(Hourly, QuietHourHasNoLevel) {
  const std::vector<SplSample> s{{"N2", at("2023-01-01T01:00:03"), 45.0},
                                 {"N1", at("2023-01-01T01:59:57"), 60.0},
                                 {"N1", at("2023-01-01T00:00:00"), 61.0}};
  const auto out = hourly_series(s, 60.0);
  ASSERT_EQ(out.size(), 3u);
  // sorted by nmt then hour
  EXPECT_EQ(out[0].nmt_id, "N1");
  EXPECT_EQ(out[0].hour_start, at("2023-01-01T00:00:00"));
  EXPECT_EQ(out[1].hour_start, at("2023-01-01T01:00:00"));
  EXPECT_FALSE(out[1].laeq);
  EXPECT_EQ(out[1].n_retained, 0);
  EXPECT_FALSE(out[2].laeq);
  EXPECT_NEAR(out[2].completeness, 1.0 / 1200.0, 1e-15);
}

TEST(Hourly, SerializeRoundTrip) {
  Rng rng(5);
  std::vector<SplSample> s;
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 5000; ++i)
      s.push_back({"N" + std::to_string(n), CivilTime{static_cast<std::int64_t>(rng.below(6 * 3600))},
                   std::round(rng.uniform(50, 90) * 10) / 10});
  const auto out = hourly_series(s);
  const auto text = serialize_hourly_laeq(out);
  EXPECT_EQ(parse_hourly_laeq(text), out);
  EXPECT_EQ(serialize_hourly_laeq(parse_hourly_laeq(text)), text);
}

TEST(Hourly, NanRetentionRejected) {
  EXPECT_THROW(hourly_series({}, std::nan("")), Error);
}
