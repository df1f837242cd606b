// sslab: run, sweep and compare toy self-supervised experiments.
//
// Exit codes: 0 ok, 1 other error, 2 config validation, 3 numeric abort,
// 4 comparison failure.

#include "sslab/compare.hpp"
#include "sslab/registry.hpp"
#include "sslab/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace sslab;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCompare = 4;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  bool quiet = false;
};

RunOptions options_for(const Globals& g) {
  RunOptions o;
  o.out_dir = g.out_dir;
  o.quiet = g.quiet;
  return o;
}

ExperimentConfig prepared(ExperimentConfig cfg, const Globals& g, const std::vector<std::string>& overrides) {
  cfg = with_overrides(cfg, overrides);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

void print_summary(const RunResult& r, const Globals& g) {
  if (g.quiet) return;
  for (const auto& s : r.seeds) {
    if (s.records.empty()) continue;
    const auto& last = s.records.back();
    std::cout << r.name << "  seed " << s.seed << "  epoch " << last.epoch << "  center_norm "
              << (last.center_norm ? format_metric(*last.center_norm) : "-") << "  std_mean "
              << (last.std_mean ? format_metric(*last.std_mean) : "-") << "  knn "
              << (last.knn_accuracy ? format_metric(*last.knn_accuracy) : "-") << (s.aborted ? "  ABORTED" : "")
              << '\n';
  }
  if (!r.aggregate_path.empty()) std::cout << "wrote " << r.aggregate_path.string() << '\n';
}

int cmd_run(const std::string& path, const std::vector<std::string>& overrides, const Globals& g) {
  const ExperimentConfig cfg = prepared(load_config(path), g, overrides);
  const RunResult r = run_experiment(cfg, options_for(g));
  print_summary(r, g);
  return r.aborted() ? kExitNumeric : kExitOk;
}

int cmd_named(const std::string& key, const std::vector<std::string>& overrides,
              const std::vector<std::string>& only, bool dump, const Globals& g) {
  NamedExperiment e = named_experiment(key);
  for (auto& v : e.variants) v = prepared(v, g, overrides);
  if (dump) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : e.variants) j.push_back(to_json(v));
    std::cout << j.dump(2) << '\n';
    return kExitOk;
  }
  ComparisonSpec spec;
  bool aborted = false;
  for (const auto& v : e.variants) {
    const std::string short_name = variant_short_name(v);
    if (!only.empty() && std::find(only.begin(), only.end(), short_name) == only.end()) continue;
    const RunResult r = run_experiment(v, options_for(g));
    print_summary(r, g);
    aborted = aborted || r.aborted();
    for (const auto& s : r.seeds) spec.runs[short_name].push_back(s.metrics_path);
  }
  if (aborted) return kExitNumeric;
  for (const auto& c : e.claims) {
    const bool have_lhs = spec.runs.count(c.lhs) > 0;
    const bool have_rhs = c.rhs.empty() || spec.runs.count(c.rhs) > 0;
    if (have_lhs && have_rhs) spec.claims.push_back(c);
  }
  if (spec.claims.empty()) return kExitOk;
  const VerdictTable t = compare_runs(spec);
  std::cout << format_verdicts(t);
  return t.all_passed() ? kExitOk : kExitCompare;
}

// "a.b=1,2;c=x,y" -> [["a.b=1","a.b=2"],["c=x","c=y"]]
std::vector<std::vector<std::string>> parse_grid(const std::string& grid) {
  std::vector<std::vector<std::string>> axes;
  std::stringstream ss(grid);
  std::string axis;
  while (std::getline(ss, axis, ';')) {
    if (axis.empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw ConfigError("", "grid axis must look like key=v1,v2: " + axis);
    const std::string key = axis.substr(0, eq);
    std::vector<std::string> values;
    std::stringstream vs(axis.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) values.push_back(key + "=" + v);
    if (values.empty()) throw ConfigError(key, "grid axis has no values");
    axes.push_back(values);
  }
  if (axes.empty()) throw ConfigError("", "empty grid");
  return axes;
}

int cmd_sweep(const std::string& path, const std::string& grid, const Globals& g) {
  const ExperimentConfig base = load_config(path);
  const auto axes = parse_grid(grid);
  std::vector<std::size_t> idx(axes.size(), 0);
  bool aborted = false;
  while (true) {
    std::vector<std::string> assignment;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      assignment.push_back(axes[a][idx[a]]);
      label += (label.empty() ? "" : "_") + axes[a][idx[a]];
    }
    ExperimentConfig cfg = prepared(base, g, assignment);
    cfg.name = base.name + "/" + label;
    const RunResult r = run_experiment(cfg, options_for(g));
    print_summary(r, g);
    aborted = aborted || r.aborted();
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return aborted ? kExitNumeric : kExitOk;
}

int cmd_compare(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ComparisonError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ComparisonError(std::string("malformed comparison spec: ") + e.what());
  }
  const auto spec = comparison_from_json(j, std::filesystem::path(path).parent_path());
  const VerdictTable t = compare_runs(spec);
  std::cout << format_verdicts(t);
  return t.all_passed() ? kExitOk : kExitCompare;
}

int cmd_list() {
  for (const auto& k : named_experiment_keys()) {
    const NamedExperiment e = named_experiment(k);
    std::cout << k << "  " << e.description << '\n';
    for (const auto& v : e.variants) std::cout << "    " << variant_short_name(v) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy self-supervised learning lab"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Base seed (overrides the config)")->each([&](const std::string&) { g.seed = seed; });
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string config_path;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run an experiment config file");
  run->add_option("config", config_path, "Config file (JSON)")->required();
  run->add_option("--override", overrides, "key=value override");

  std::string key;
  std::vector<std::string> only;
  bool dump = false;
  auto* named = app.add_subcommand("named", "Run a registered experiment and check its claims");
  named->add_option("key", key, "Registry key")->required();
  named->add_option("--override", overrides, "key=value override applied to every variant");
  named->add_option("--variant", only, "Run only these variants");
  named->add_flag("--dump-config", dump, "Print the variant configs and exit");

  std::string grid;
  auto* sweep = app.add_subcommand("sweep", "Run a config over a parameter grid");
  sweep->add_option("config", config_path, "Config file (JSON)")->required();
  sweep->add_option("--grid", grid, "Grid, e.g. 'loss.ema_momentum=0.5,0.9;optimizer.lr=0.01,0.05'")->required();

  std::string spec_path;
  auto* compare = app.add_subcommand("compare", "Evaluate claims over metrics files");
  compare->add_option("spec", spec_path, "Comparison spec (JSON)")->required();

  auto* list = app.add_subcommand("list", "List registered experiments");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, overrides, g);
    if (*named) return cmd_named(key, overrides, only, dump, g);
    if (*sweep) return cmd_sweep(config_path, grid, g);
    if (*compare) return cmd_compare(spec_path);
    if (*list) return cmd_list();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnknownExperimentError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const ComparisonError& e) {
    std::cerr << "comparison error: " << e.what() << '\n';
    return kExitCompare;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}
