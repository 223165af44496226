// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is the number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "aeronoise/pipeline.hpp"
#include "test_util.hpp"

using namespace aeronoise;
namespace fs = std::filesystem;

namespace {

// -- tolerances and budgets ---------------------------------------------------
constexpr double kLaeqTol = 1e-9;           // dB
constexpr double kGiniTol = 1e-12;
constexpr double kMaeCeiling = 2.0;         // dBA
constexpr double kMaeRatioCeiling = 1.3;    // x irreducible MAE
constexpr double kLocalAccuracyTol = 1e-6;
constexpr double kShapOracleTol = 1e-8;
constexpr double kTurningPointBand = 1.0;   // tenths
constexpr double kCrossPairCeiling = -0.5;
constexpr double kSamePairFloor = 0.5;
constexpr double kR2Exact = 1e-12;
constexpr double kProviderR2Floor = 0.98;
constexpr double kProviderNoise = 0.02;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int failures = 0;

void criterion(int n, const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(s < budget_s, "runtime " + fmt(s) + " s over " + fmt(budget_s) + " s budget");
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << name << ":" << o.detail.str() << "  ("
            << fmt(s, "%.2f") << " s / " << fmt(budget_s, "%.0f") << " s)\n"
            << std::flush;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AERONOISE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// -- default synthetic month, shared by criteria 3 to 8 -----------------------
struct Month {
  synth::ScenarioConfig cfg;
  synth::Scenario sc;
  Window window;
  std::vector<HourlyLaeq> hourly;
  std::vector<TractHourRecord> fused;
  FeatureTable features;
  gbm::TrainConfig train;
  std::map<std::pair<std::string, std::int64_t>, double> expected;  // (nmt, hour) -> noise-free level
};

Month make_month() {
  Month m;
  m.sc = synth::generate(m.cfg);
  m.window = m.cfg.window();
  const auto& b = m.sc.bundle;
  m.hourly = hourly_series(b.spl, kDefaultRetentionDba);
  m.fused = fuse(b.population, m.hourly, map_tracts(b.nmts, b.tracts), b.tracts, m.window);
  m.features = build_features(b.flights, b.weather, b.nmts, m.hourly,
                              infer_runway_schedule(b.flights, m.window), m.window);
  // Same training settings a CLI run on this bundle would pick up.
  pipeline::RunConfig rc;
  rc.apply(pipeline::parse_key_values(synth::scenario_conf(m.cfg)));
  rc.normalize();
  m.train = rc.train;
  for (const auto& l : m.sc.truth.levels) m.expected[{l.nmt_id, l.hour_start.hour_index()}] = l.expected;
  return m;
}

struct Fitted {
  gbm::Dataset all, train, test;
  gbm::TrainResult result;
};

Fitted fit(const Month& m, Operation op) {
  Fitted f;
  f.all = gbm::make_dataset(m.features, op);
  std::tie(f.train, f.test) = gbm::split_data(f.all, m.train.split_fraction, m.train.seed);
  f.result = gbm::train(f.train, f.test, m.train);
  return f;
}

std::string nmt_of(const std::string& key) { return key.substr(0, key.find('@')); }

CivilTime hour_of(const std::string& key) {
  const auto a = key.find('@');
  return testing_util::at(key.substr(a + 1, key.find('@', a + 1) - a - 1));
}

}  // namespace

int main() {
  std::cout << "aeronoise acceptance\n";

  criterion(1, "LAeq oracle equivalence", 5, [](Outcome& o) {
    Rng rng(1001);
    double worst = 0;
    bool constant_exact = true;
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> v(1 + rng.below(1200));
      const double lo = rng.uniform(20, 90), span = rng.uniform(0, 50);
      for (auto& x : v) x = lo + span * rng.uniform();
      worst = std::max(worst, std::abs(laeq(v) - testing_util::laeq_oracle(v)));
      const double c = std::round(rng.uniform(0, 140) * 10) / 10;
      const std::vector<double> k(1 + rng.below(50), c);
      constant_exact = constant_exact && laeq(k) == c;
    }
    o.detail << " 10000 vectors, max |diff| " << fmt(worst) << " dB";
    o.require(worst <= kLaeqTol, "max diff > 1e-9 dB");
    o.require(constant_exact, "constant input not returned exactly");
  });

  criterion(2, "Gini correctness", 10, [](Outcome& o) {
    Rng rng(2002);
    double worst = 0, worst_scale = 0;
    bool bounds = true;
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> v(1 + rng.below(500));
      const double zero_share = rng.uniform();
      for (auto& x : v) x = rng.uniform() < zero_share ? 0.0 : std::round(rng.uniform(0, 5000));
      v[0] = std::max(v[0], 1.0);
      const double g = *gini(v);
      worst = std::max(worst, std::abs(g - testing_util::gini_oracle(v)));
      const auto d = static_cast<double>(v.size());
      bounds = bounds && g >= 0.0 && g <= (d - 1) / d;
      auto scaled = v;
      const double k = rng.uniform(0.01, 100);
      for (auto& x : scaled) x *= k;
      worst_scale = std::max(worst_scale, std::abs(*gini(scaled) - g));
    }
    const double example = *gini(std::vector<double>{100, 300, 0, 0});
    o.detail << " 1000 vectors, max |fast - pairwise| " << fmt(worst) << ", scale drift "
             << fmt(worst_scale) << ", G([100,300,0,0]) = " << fmt(example, "%.17g");
    o.require(worst <= kGiniTol, "oracle diff > 1e-12");
    o.require(worst_scale <= kGiniTol, "scale drift > 1e-12");
    o.require(bounds, "bounds 0 <= G <= (D-1)/D violated");
    o.require(example == 0.625, "worked example");
  });

  std::cout << "      generating the default synthetic month (seed 42, 31 days)...\n" << std::flush;
  const auto setup0 = std::chrono::steady_clock::now();
  const Month month = make_month();
  std::cout << "      setup " << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - setup0).count(), "%.2f")
            << " s: " << month.sc.bundle.spl.size() << " samples, " << month.fused.size()
            << " tract-hours, " << month.features.rows.size() << " feature rows\n";

  criterion(3, "Exposure monotonicity and bounds", 5, [&](Outcome& o) {
    const auto m65 = exposure_matrix(month.fused, 65.0);
    const auto m70 = exposure_matrix(month.fused, 70.0);
    std::size_t violations = 0, above_pop = 0, exposed_cells = 0;
    for (std::size_t k = 0; k < m65.cells.size(); ++k) {
      violations += m65.cells[k] < m70.cells[k];
      above_pop += m65.cells[k] > m65.population[k] || m70.cells[k] > m70.population[k];
      exposed_cells += m70.cells[k] > 0;
    }
    TractHourRecord r{"T", {}, 120.0, 80.0, 65.0, "N"};
    const bool at_theta = exposed(r, 65.0) == 0.0;
    r.laeq = std::nextafter(65.0, 100.0);
    const bool above_theta = exposed(r, 65.0) == 120.0;
    o.detail << " " << m65.cells.size() << " cells, " << violations << " with E65 < E70, " << above_pop
             << " above population, " << exposed_cells << " exposed at 70";
    o.require(violations == 0, "theta monotonicity");
    o.require(above_pop == 0, "population bound");
    o.require(at_theta && above_theta, "strict threshold at L = theta");
    o.require(exposed_cells > 0, "degenerate month (nothing exposed)");
  });

  criterion(4, "GBM sanity", 60, [&](Outcome& o) {
    // (a) 200 rounds, gamma 0, no early stop.
    {
      auto d = gbm::make_dataset(month.features, Operation::Departure);
      auto cfg = month.train;
      cfg.rounds_max = 200;
      cfg.gamma = 0.0;
      const auto r = gbm::train(d, gbm::Dataset{}, cfg);
      bool monotone = r.history.size() == 200;
      for (std::size_t i = 1; i < r.history.size(); ++i)
        monotone = monotone && r.history[i].train.rmse <= r.history[i - 1].train.rmse;
      o.detail << " (a) " << r.history.size() << " rounds, final train RMSE "
               << fmt(r.history.back().train.rmse) << ";";
      o.require(monotone, "(a) train RMSE increased");
    }
    // (b) two rows x = 0, 1; y = 0, 10; lambda 1, eta 1, depth 1.
    {
      gbm::Dataset d;
      d.feature_names = {"x"};
      d.push_back("a", std::vector<double>{0.0}, 0.0);
      d.push_back("b", std::vector<double>{1.0}, 10.0);
      gbm::TrainConfig cfg;
      cfg.learning_rate = 1.0;
      cfg.lambda = 1.0;
      cfg.max_depth = 1;
      cfg.rounds_max = 10;
      const auto r = gbm::train(d, gbm::Dataset{}, cfg);
      const auto& t = r.model.trees[0].nodes;
      // base 5; g = (5, -5); w = -g / (1 + 1) = (-2.5, 2.5); next round w = (-1.25, 1.25).
      const bool exact = r.model.base_score == 5.0 && t.size() == 3 && t[0].feature == 0 &&
                         t[0].split == 0.5 && t[1].weight == -2.5 && t[2].weight == 2.5 &&
                         r.history[0].train.rmse == 2.5 &&
                         r.model.trees[1].nodes[1].weight == -1.25 && r.history[1].train.rmse == 1.25;
      o.detail << " (b) " << (exact ? "exact" : "mismatch") << ";";
      o.require(exact, "(b) two-row Newton example");
    }
    // (c) synthetic month, both operations.
    for (Operation op : {Operation::Departure, Operation::Arrival}) {
      const auto f = fit(month, op);
      const auto mae = gbm::evaluate(f.result.model, f.test).mae;
      CompensatedSum irr;
      for (std::size_t i = 0; i < f.test.rows(); ++i)
        irr.add(std::abs(f.test.y[i] - month.expected.at({nmt_of(f.test.keys[i]), hour_of(f.test.keys[i]).hour_index()})));
      const double irreducible = irr.value() / static_cast<double>(f.test.rows());
      o.detail << " (c) " << pipeline::op_label(op) << " test MAE " << fmt(mae) << " dBA vs irreducible "
               << fmt(irreducible) << " (x" << fmt(mae / irreducible) << ", " << f.result.best_round
               << " trees);";
      o.require(mae <= kMaeCeiling, "(c) " + pipeline::op_label(op) + " MAE > 2.0 dBA");
      o.require(mae <= kMaeRatioCeiling * irreducible, "(c) " + pipeline::op_label(op) + " MAE > 1.3x irreducible");
      if (op == Operation::Departure) {
        // (d) same seed, same bytes.
        const bool same = gbm::serialize(f.result) == gbm::serialize(fit(month, op).result);
        o.detail << " (d) " << (same ? "byte-identical" : "differs") << ";";
        o.require(same, "(d) serialized model differs");
      }
    }
  });

  criterion(5, "Shapley correctness", 120, [&](Outcome& o) {
    Rng rng(5005);
    double worst = 0;
    bool dummies_zero = true;
    std::size_t dummies = 0;
    for (int e = 0; e < 200; ++e) {
      const std::size_t m = 1 + rng.below(10);
      gbm::Ensemble ens;
      ens.base_score = rng.uniform(40, 80);
      ens.learning_rate = rng.uniform(0.05, 1);
      ens.feature_names = testing_util::feature_names(m);
      const auto trees = 1 + rng.below(3);
      for (std::size_t t = 0; t < trees; ++t)
        ens.trees.push_back(testing_util::random_tree(rng, m, 1 + static_cast<int>(rng.below(3))));
      std::vector<char> used(m, 0);
      for (const auto& t : ens.trees)
        for (const auto& n : t.nodes)
          if (!n.is_leaf()) used[static_cast<std::size_t>(n.feature)] = 1;
      for (int r = 0; r < 5; ++r) {
        std::vector<double> x(m);
        for (auto& v : x) v = std::round(rng.uniform(0, 11));
        const auto slow = shap::shapley_bruteforce(ens, x);
        const auto fast = shap::shapley_fast(ens, x);
        worst = std::max(worst, std::abs(slow.phi0 - fast.phi0));
        for (std::size_t j = 0; j < m; ++j) {
          worst = std::max(worst, std::abs(slow.phis[j] - fast.phis[j]));
          if (!used[j]) {
            ++dummies;
            dummies_zero = dummies_zero && slow.phis[j] == 0.0 && fast.phis[j] == 0.0;
          }
        }
      }
    }
    o.detail << " 200 random ensembles, max |fast - brute force| " << fmt(worst) << ", " << dummies
             << " dummy attributions;";
    o.require(worst <= kShapOracleTol, "fast vs brute force > 1e-8");
    o.require(dummies_zero, "dummy feature with non-zero phi");

    const auto& truth = month.sc.truth;
    for (Operation op : {Operation::Departure, Operation::Arrival}) {
      const auto f = fit(month, op);
      const auto attrs = shap::explain(f.result.model, f.all);
      double local = 0;
      for (std::size_t i = 0; i < attrs.size(); ++i) {
        const double total = std::accumulate(attrs[i].phis.begin(), attrs[i].phis.end(), attrs[i].phi0);
        local = std::max(local, std::abs(total - gbm::predict(f.result.model, f.all.row(i))));
      }
      const auto ranking = shap::summary(attrs, f.all.feature_names);
      const auto tp = shap::turning_point(shap::dependence(attrs, f.all, truth.threshold_feature));
      const auto label = pipeline::op_label(op);
      o.detail << " " << label << ": " << attrs.size() << " rows, local error " << fmt(local) << ", top "
               << ranking[0].name << ", " << truth.threshold_feature << " sign change at "
               << (tp ? fmt(*tp) : std::string("none")) << ";";
      o.require(local <= kLocalAccuracyTol, label + " local accuracy");
      o.require(ranking[0].name == truth.dominant_feature, label + " dominant feature not first");
      o.require(tp && std::abs(*tp - truth.coef.cloud_threshold) <= kTurningPointBand,
                label + " threshold sign change off");
    }
  });

  criterion(6, "Rotation/respite reproduction", 5, [&](Outcome& o) {
    const auto pairs = rotation_contrast(month.hourly, month.cfg.block_hours);
    double cross_max = -1, same_min = 1;
    std::size_t cross = 0, same = 0;
    bool defined = true;
    for (const auto& p : pairs) {
      if (!p.correlation) {
        defined = false;
        continue;
      }
      if (month.sc.truth.cross_runway(p.nmt_a, p.nmt_b)) {
        ++cross;
        cross_max = std::max(cross_max, *p.correlation);
      } else {
        ++same;
        same_min = std::min(same_min, *p.correlation);
      }
    }
    o.detail << " " << cross << " cross-runway pairs, max r " << fmt(cross_max) << "; " << same
             << " same-side pairs, min r " << fmt(same_min);
    o.require(defined, "undefined correlation");
    o.require(cross > 0 && cross_max < kCrossPairCeiling, "cross-runway r >= -0.5");
    o.require(same > 0 && same_min > kSamePairFloor, "same-side r <= 0.5");
  });

  criterion(7, "Population-basis divergence", 5, [&](Outcome& o) {
    std::string tract;
    for (const auto& n : month.sc.truth.nmts)
      if (n.land_use == LandUse::Commercial) tract = n.tract_id;
    const auto de = exposure_matrix(month.fused, 65.0, PopulationBasis::DeFacto);
    const auto re = exposure_matrix(month.fused, 65.0, PopulationBasis::Residential);
    const auto row = static_cast<std::size_t>(
        std::find(de.tract_ids.begin(), de.tract_ids.end(), tract) - de.tract_ids.begin());
    std::array<double, 24> d{}, r{};
    std::array<int, 24> n{};
    for (std::size_t h = 0; h < de.width(); ++h) {
      const auto hod = static_cast<std::size_t>(de.hours[h].hour_of_day());
      d[hod] += de.at(row, h);
      r[hod] += re.at(row, h);
      ++n[hod];
    }
    int day_above = 0, night_hours = 0, night_below = 0;
    for (int h = 8; h < 18; ++h) day_above += d[h] > r[h];
    for (int h : {20, 21, 22, 23, 0, 1, 2, 3, 4, 5}) {
      if (r[static_cast<std::size_t>(h)] <= 0) continue;  // nobody exposed on either basis
      ++night_hours;
      night_below += d[static_cast<std::size_t>(h)] < r[static_cast<std::size_t>(h)];
    }
    o.detail << " commercial tract " << tract << " at theta 65: de facto above residential in " << day_above
             << "/10 daytime hours, below in " << night_below << "/" << night_hours
             << " exposed overnight hours";
    o.require(day_above >= 1, "no daytime hour with de facto > residential");
    o.require(night_hours >= 1 && night_below == night_hours, "overnight de facto not lower");
  });

  criterion(8, "Validation utilities", 5, [&](Outcome& o) {
    const auto& b = month.sc.bundle;
    const auto dmap = validation::district_map(b.tracts);
    const auto tracts = validation::tract_series(b.population);
    const auto districts = validation::aggregate_to_district(tracts, dmap);
    std::size_t mismatched = 0;
    for (std::size_t h = 0; h < districts.front().points.size(); ++h) {
      CompensatedSum from_tracts, from_districts;
      for (const auto& t : tracts) from_tracts.add(t.points[h].second);
      for (const auto& d : districts) from_districts.add(d.points[h].second);
      mismatched += from_tracts.value() != from_districts.value();
    }
    Rng rng(8008);
    double worst_affine = 0;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> a(2 + rng.below(500)), c;
      for (auto& x : a) x = rng.uniform(-1e3, 1e3);
      for (double x : a) c.push_back(3 * x + 7);
      worst_affine = std::max(worst_affine, std::abs(validation::r_squared(a, c) - 1.0));
    }
    auto alt = b.population;
    for (auto& p : alt) p.defacto_count *= 1.0 + rng.normal(0.0, kProviderNoise);
    const auto alt_districts = validation::aggregate_to_district(validation::tract_series(alt), dmap);
    double min_r2 = 1;
    for (std::size_t i = 0; i < districts.size(); ++i)
      min_r2 = std::min(min_r2, validation::compare_providers(districts[i], alt_districts[i]).r2_absolute.value());
    o.detail << " " << districts.front().points.size() << " hours, " << mismatched
             << " with unequal totals; max |R2(a, 3a+7) - 1| " << fmt(worst_affine) << "; provider R2 (2% noise) min "
             << fmt(min_r2, "%.4f") << " over " << districts.size() << " districts";
    o.require(mismatched == 0, "district totals differ");
    o.require(worst_affine <= kR2Exact, "affine R2 not 1");
    o.require(min_r2 >= kProviderR2Floor, "provider R2 < 0.98");
  });

  criterion(9, "End-to-end determinism", 120, [&](Outcome& o) {
    testing_util::TempDir tmp("acceptance_e2e");
    std::vector<std::string> reports;
    for (const char* run : {"a", "b"}) {
      const auto in = tmp.path / run / "bundle";
      const auto out = tmp.path / run / "out";
      const int s = run_cli("synth --seed 42 --out '" + in.string() + "'");
      const int r = run_cli("report --in '" + in.string() + "' --out '" + out.string() + "'");
      o.require(s == 0 && r == 0, std::string("cli run ") + run + " exit codes");
      reports.push_back(read_file((out / "report.json").string()));
      fs::remove_all(in);
    }
    const auto j = pipeline::Json::parse(reports[0]);
    std::size_t nulls = 0, zero_mean = 0;
    bool null_iff_zero = true;
    for (const auto& g : j.at("gini"))
      for (const auto& e : g.at("entries")) {
        const bool zero = e.at("mean_exposure").get<double>() == 0.0;
        zero_mean += zero;
        nulls += e.at("gini").is_null();
        null_iff_zero = null_iff_zero && (zero == e.at("gini").is_null());
      }
    const bool no_nan = reports[0].find("NaN") == std::string::npos && reports[0].find("nan") == std::string::npos;
    o.detail << " report.json " << reports[0].size() << " bytes, " << (reports[0] == reports[1] ? "identical" : "DIFFERENT")
             << "; " << nulls << " null Gini entries for " << zero_mean << " zero-mean hours";
    o.require(reports[0] == reports[1], "report.json differs");
    o.require(nulls > 0 && null_iff_zero, "null Gini only and always for zero-mean hours");
    o.require(no_nan, "NaN in report.json");
  });

  std::cout << (failures ? std::to_string(failures) + " criteria FAILED" : std::string("all criteria passed"))
            << "\n";
  return failures;
}
