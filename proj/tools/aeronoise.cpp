// aeronoise: hourly tract-level aircraft-noise exposure pipeline.
//
//   aeronoise synth    --out DIR [--seed N] [--config FILE]
//   aeronoise validate --in DIR --out DIR
//   aeronoise laeq | fuse | exposure | train | explain | report --in DIR --out DIR [options]

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "aeronoise/pipeline.hpp"

namespace {

using namespace aeronoise;
namespace pl = aeronoise::pipeline;

struct Flags {
  std::string in = ".";
  std::string out = "out";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<double> theta;
  std::optional<double> retention;
  std::string window_start, window_end;
  std::string mapping, format;
};

void add_run_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--in", f.in, "input directory with the six CSV files")->capture_default_str();
  sub->add_option("--out", f.out, "output directory")->capture_default_str();
  sub->add_option("--config", f.config, "key=value configuration file");
  sub->add_option("--seed", f.seed, "run seed (train/test split)");
  sub->add_option("--theta", f.theta, "exposure threshold in dBA (repeatable)");
  sub->add_option("--retention-dba", f.retention, "3-second retention threshold in dBA");
  sub->add_option("--window-start", f.window_start, "study window start, YYYY-MM-DDTHH:MM:SS");
  sub->add_option("--window-end", f.window_end, "study window end (exclusive)");
  sub->add_option("--mapping", f.mapping, "tract mapping mode")
      ->check(CLI::IsMember({"containing", "nearest"}));
  sub->add_option("--format", f.format, "table output format")->check(CLI::IsMember({"csv", "json"}));
}

pl::RunConfig run_config(const Flags& f) {
  auto c = pl::load_run_config(f.in, f.config.empty() ? std::nullopt
                                                      : std::optional<pl::fs::path>(f.config));
  c.in = f.in;
  c.out = f.out;
  pl::KeyValues kv;
  if (f.seed) kv["seed"] = std::to_string(*f.seed);
  if (f.retention) kv["retention_dba"] = format_number(*f.retention);
  if (!f.window_start.empty()) kv["window_start"] = f.window_start;
  if (!f.window_end.empty()) kv["window_end"] = f.window_end;
  if (!f.mapping.empty()) kv["mapping"] = f.mapping;
  if (!f.format.empty()) kv["format"] = f.format;
  c.apply(kv);
  if (!f.theta.empty()) c.thresholds = f.theta;
  c.normalize();
  return c;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
  return s;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int run(const std::string& name, const Flags& f, const std::string& synth_out,
        const std::string& synth_config, std::optional<std::uint64_t> synth_seed) {
  if (name == "synth") {
    synth::ScenarioConfig sc;
    if (!synth_config.empty())
      pl::apply_scenario(sc, pl::parse_key_values(read_file(synth_config)));
    if (synth_seed) sc.seed = *synth_seed;
    sc.validate();
    const auto scenario = synth::generate(sc);
    synth::write_scenario(scenario, sc, synth_out);
    std::cout << "synth: " << scenario.bundle.nmts.size() << " NMTs, " << sc.days << " days, "
              << scenario.bundle.spl.size() << " SPL samples, " << scenario.bundle.flights.size()
              << " flights -> " << synth_out << "\n";
    return 0;
  }

  pl::RunConfig cfg;
  try {
    cfg = run_config(f);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InvalidConfig) throw;
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
  pl::Session s(cfg);

  if (name == "validate") {
    const auto rep = s.validate_inputs();
    std::size_t errors = 0;
    for (const auto& x : rep.findings) errors += x.severity == Severity::Error;
    std::cout << "validate: " << rep.findings.size() << " findings (" << errors << " errors, "
              << rep.findings.size() - errors << " warnings)\n";
    return errors ? 1 : 0;
  }
  if (name == "laeq") {
    const auto& h = s.hourly();
    std::size_t present = 0;
    for (const auto& x : h) present += x.laeq.has_value();
    std::cout << "laeq: " << h.size() << " NMT-hours, " << present << " with retained samples\n";
  } else if (name == "fuse") {
    const auto& r = s.fused();
    const auto& t = s.features();
    std::cout << "fuse: " << r.size() << " tract-hours, " << t.rows.size() << " feature rows\n";
  } else if (name == "exposure") {
    const auto& ex = s.exposure();
    std::string parts;
    for (const auto& g : ex.gini) {
      std::size_t defined = 0;
      for (const auto& e : g.entries) defined += e.gini.has_value();
      parts += " theta=" + format_number(g.theta) + ": " + std::to_string(defined) + "/" +
               std::to_string(g.entries.size()) + " hours with defined gini;";
    }
    std::cout << "exposure:" << parts << " " << ex.rotation.size() << " NMT pairs\n";
  } else if (name == "train" || name == "explain") {
    for (Operation op : {Operation::Departure, Operation::Arrival}) {
      const auto& m = s.model(op);
      std::cout << name << " " << pl::op_label(op) << ": " << m.result.best_round << " trees, test MAE "
                << fixed(m.test_metrics.mae) << " dBA, RMSE " << fixed(m.test_metrics.rmse);
      if (name == "explain") {
        const auto& e = s.explanation(op);
        std::cout << ", top feature " << e.summary.front().name;
      }
      std::cout << "\n";
    }
  } else if (name == "report") {
    s.report();
    std::cout << "report: " << s.written().size() << " files written to " << cfg.out.string();
    if (!s.reused().empty()) std::cout << " (reused " << join(s.reused()) << ")";
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hourly census-tract aircraft-noise exposure pipeline"};
  app.require_subcommand(1);
  Flags flags;
  std::string synth_out, synth_config;
  std::optional<std::uint64_t> synth_seed;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scenario bundle");
  synth_cmd->add_option("--out", synth_out, "bundle directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "generation seed");
  synth_cmd->add_option("--config", synth_config, "scenario key=value file");

  const std::vector<std::pair<const char*, const char*>> stages{
      {"validate", "check the input bundle and report findings"},
      {"laeq", "hourly LAeq per NMT"},
      {"fuse", "tract-hour records and the feature table"},
      {"exposure", "exposure grids, Gini series, basis comparison, rotation contrast"},
      {"train", "take-off and landing boosting models"},
      {"explain", "Shapley attributions, summaries and dependence data"},
      {"report", "full pipeline into report.json"},
  };
  for (const auto& [n, d] : stages) add_run_flags(app.add_subcommand(n, d), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, flags, synth_out, synth_config, synth_seed);
  } catch (const aeronoise::Error& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return e.kind() == aeronoise::ErrorKind::InvalidConfig && name == "synth" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 1;
  }
}
