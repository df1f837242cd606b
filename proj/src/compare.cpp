#include "sslab/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sslab {

using nlohmann::json;

std::string to_string(ClaimKind k) {
  switch (k) {
    case ClaimKind::gap: return "gap";
    case ClaimKind::tolerance: return "tolerance";
    case ClaimKind::above: return "above";
    case ClaimKind::below: return "below";
  }
  return "gap";
}

std::string to_string(Reduction r) {
  switch (r) {
    case Reduction::final: return "final";
    case Reduction::max: return "max";
    case Reduction::min: return "min";
    case Reduction::mean: return "mean";
  }
  return "final";
}

namespace {

ClaimKind claim_kind_from_string(const std::string& s) {
  if (s == "gap") return ClaimKind::gap;
  if (s == "tolerance") return ClaimKind::tolerance;
  if (s == "above") return ClaimKind::above;
  if (s == "below") return ClaimKind::below;
  throw ComparisonError("unknown claim kind '" + s + "'");
}

Reduction reduction_from_string(const std::string& s) {
  if (s == "final") return Reduction::final;
  if (s == "max") return Reduction::max;
  if (s == "min") return Reduction::min;
  if (s == "mean") return Reduction::mean;
  throw ComparisonError("unknown reduction '" + s + "'");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_cell(const std::string& s, const std::filesystem::path& path) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ComparisonError(path.string() + ": bad numeric cell '" + s + "'");
  }
}

const std::optional<double>& field(const MetricsRecord& r, const std::string& metric) {
  if (metric == "loss") return r.loss;
  if (metric == "center_norm") return r.center_norm;
  if (metric == "mean_residual_norm") return r.mean_residual_norm;
  if (metric == "std_mean") return r.std_mean;
  if (metric == "delta_dist") return r.delta_dist;
  if (metric == "knn_accuracy") return r.knn_accuracy;
  if (metric == "wall_time_ms") return r.wall_time_ms;
  throw ComparisonError("unknown metric '" + metric + "'");
}

double reduce(const MetricsFile& f, const std::string& metric, Reduction red, const std::filesystem::path& path) {
  std::vector<double> vals;
  for (const auto& r : f.records) {
    if (const auto& v = field(r, metric)) vals.push_back(*v);
  }
  if (vals.empty()) throw ComparisonError(path.string() + ": metric '" + metric + "' never sampled");
  switch (red) {
    case Reduction::final: return vals.back();
    case Reduction::max: return *std::max_element(vals.begin(), vals.end());
    case Reduction::min: return *std::min_element(vals.begin(), vals.end());
    case Reduction::mean: return std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  }
  return vals.back();
}

std::vector<int> cadence(const MetricsFile& f) {
  std::vector<int> e;
  e.reserve(f.records.size());
  for (const auto& r : f.records) e.push_back(r.epoch);
  return e;
}

struct RunValue {
  double mean = 0.0;
  double sd = 0.0;
};

}  // namespace

bool VerdictTable::all_passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const ClaimVerdict& v) { return v.passed; });
}

MetricsFile read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ComparisonError("cannot open " + path.string());
  MetricsFile f;
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ComparisonError(path.string() + ": header does not match the metrics schema");
  }
  f.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != f.header.size()) throw ComparisonError(path.string() + ": row has wrong column count");
    MetricsRecord r;
    try {
      r.seed = std::stoull(cells[0]);
      r.epoch = std::stoi(cells[1]);
      r.step = std::stol(cells[2]);
    } catch (const std::exception&) {
      throw ComparisonError(path.string() + ": bad seed/epoch/step cell");
    }
    r.loss = parse_cell(cells[3], path);
    r.center_norm = parse_cell(cells[4], path);
    r.mean_residual_norm = parse_cell(cells[5], path);
    r.std_mean = parse_cell(cells[6], path);
    r.delta_dist = parse_cell(cells[7], path);
    r.knn_accuracy = parse_cell(cells[8], path);
    r.wall_time_ms = parse_cell(cells[9], path);
    r.non_finite = r.loss && !std::isfinite(*r.loss);
    f.records.push_back(r);
  }
  return f;
}

VerdictTable compare_runs(const ComparisonSpec& spec) {
  std::map<std::filesystem::path, MetricsFile> cache;
  auto load = [&](const std::filesystem::path& p) -> const MetricsFile& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, read_metrics_csv(p)).first;
    return it->second;
  };
  auto files_of = [&](const std::string& run) -> const std::vector<std::filesystem::path>& {
    auto it = spec.runs.find(run);
    if (it == spec.runs.end()) throw ComparisonError("unknown run '" + run + "'");
    if (it->second.empty()) throw ComparisonError("run '" + run + "' has no files");
    return it->second;
  };

  VerdictTable table;
  for (const auto& c : spec.claims) {
    std::vector<std::string> names{c.lhs};
    if (c.kind == ClaimKind::gap || c.kind == ClaimKind::tolerance) names.push_back(c.rhs);

    std::optional<std::vector<int>> ref;
    std::vector<RunValue> values;
    for (const auto& name : names) {
      std::vector<double> per_seed;
      for (const auto& p : files_of(name)) {
        const MetricsFile& f = load(p);
        const auto cad = cadence(f);
        if (!ref) {
          ref = cad;
        } else if (*ref != cad) {
          throw ComparisonError("claim '" + c.name + "': cadence of " + p.string() + " differs");
        }
        per_seed.push_back(reduce(f, c.metric, c.reduce, p));
      }
      RunValue v;
      v.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / static_cast<double>(per_seed.size());
      if (per_seed.size() > 1) {
        double ss = 0.0;
        for (double x : per_seed) ss += (x - v.mean) * (x - v.mean);
        v.sd = std::sqrt(ss / static_cast<double>(per_seed.size() - 1));
      }
      values.push_back(v);
    }

    ClaimVerdict verdict;
    verdict.claim = c;
    verdict.lhs_value = values[0].mean;
    switch (c.kind) {
      case ClaimKind::gap:
        verdict.rhs_value = values[1].mean + c.margin;
        verdict.passed = verdict.lhs_value > verdict.rhs_value;
        break;
      case ClaimKind::tolerance: {
        double tol = c.margin;
        if (c.add_pooled_std) tol += std::sqrt(0.5 * (values[0].sd * values[0].sd + values[1].sd * values[1].sd));
        verdict.rhs_value = values[1].mean - tol;
        verdict.passed = verdict.lhs_value >= verdict.rhs_value;
        break;
      }
      case ClaimKind::above:
        verdict.rhs_value = c.value;
        verdict.passed = verdict.lhs_value > c.value;
        break;
      case ClaimKind::below:
        verdict.rhs_value = c.value;
        verdict.passed = verdict.lhs_value < c.value;
        break;
    }
    table.rows.push_back(verdict);
  }
  return table;
}

json to_json(const Claim& c) {
  json j = {{"name", c.name}, {"metric", c.metric}, {"reduce", to_string(c.reduce)},
            {"kind", to_string(c.kind)}, {"lhs", c.lhs}};
  if (c.kind == ClaimKind::gap || c.kind == ClaimKind::tolerance) {
    j["rhs"] = c.rhs;
    j["margin"] = c.margin;
    if (c.add_pooled_std) j["pooled_std"] = true;
  } else {
    j["value"] = c.value;
  }
  return j;
}

Claim claim_from_json(const json& j) {
  if (!j.is_object()) throw ComparisonError("claim must be an object");
  static const std::vector<std::string> keys{"name", "metric", "reduce", "kind", "lhs", "rhs", "margin",
                                             "pooled_std", "value"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      throw ComparisonError("claim: unknown key '" + it.key() + "'");
    }
  }
  try {
    Claim c;
    c.name = j.value("name", std::string());
    c.metric = j.at("metric").get<std::string>();
    c.reduce = reduction_from_string(j.value("reduce", std::string("final")));
    c.kind = claim_kind_from_string(j.at("kind").get<std::string>());
    c.lhs = j.at("lhs").get<std::string>();
    if (c.kind == ClaimKind::gap || c.kind == ClaimKind::tolerance) c.rhs = j.at("rhs").get<std::string>();
    c.margin = j.value("margin", 0.0);
    c.add_pooled_std = j.value("pooled_std", false);
    if (c.kind == ClaimKind::above || c.kind == ClaimKind::below) c.value = j.at("value").get<double>();
    if (c.name.empty()) c.name = c.lhs + " " + to_string(c.kind) + " " + c.metric;
    return c;
  } catch (const json::exception& e) {
    throw ComparisonError(std::string("claim: ") + e.what());
  }
}

ComparisonSpec comparison_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("runs") || !j.contains("claims")) {
    throw ComparisonError("comparison spec needs 'runs' and 'claims'");
  }
  ComparisonSpec spec;
  for (auto it = j.at("runs").begin(); it != j.at("runs").end(); ++it) {
    auto& files = spec.runs[it.key()];
    const json& v = it.value();
    auto add = [&](const json& p) {
      std::filesystem::path path = p.get<std::string>();
      files.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
    };
    if (v.is_string()) {
      add(v);
    } else if (v.is_array()) {
      for (const auto& p : v) add(p);
    } else {
      throw ComparisonError("run '" + it.key() + "' must be a path or a list of paths");
    }
  }
  for (const auto& c : j.at("claims")) spec.claims.push_back(claim_from_json(c));
  return spec;
}

std::string format_verdicts(const VerdictTable& table) {
  std::string out;
  char buf[512];
  for (const auto& v : table.rows) {
    const char* op = v.claim.kind == ClaimKind::below ? "<" : (v.claim.kind == ClaimKind::tolerance ? ">=" : ">");
    std::snprintf(buf, sizeof buf, "%s  %-44s %s(%s) = %.4f %s %.4f\n", v.passed ? "PASS" : "FAIL",
                  v.claim.name.c_str(), to_string(v.claim.reduce).c_str(), v.claim.metric.c_str(), v.lhs_value, op,
                  v.rhs_value);
    out += buf;
  }
  return out;
}

}  // namespace sslab
