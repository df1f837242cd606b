#pragma once

// Directional claims over metrics CSVs, e.g.
//   final center_norm(A) > final center_norm(B) + margin      (gap)
//   final knn_accuracy(A) >= final knn_accuracy(B) - tol      (tolerance)
// A run is a list of per-seed files; its value is the seed mean of the
// reduced metric.

#include "sslab/runner.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sslab {

class ComparisonError : public Error {
 public:
  using Error::Error;
};

enum class ClaimKind { gap, tolerance, above, below };
enum class Reduction { final, max, min, mean };

std::string to_string(ClaimKind k);
std::string to_string(Reduction r);

struct Claim {
  std::string name;
  std::string metric;  // a metrics CSV column
  Reduction reduce = Reduction::final;
  ClaimKind kind = ClaimKind::gap;
  std::string lhs;
  std::string rhs;      // gap / tolerance
  double margin = 0.0;  // gap margin, or tolerance
  bool add_pooled_std = false;  // tolerance grows by the pooled seed std
  double value = 0.0;   // above / below: lhs > value, lhs < value
};

struct ComparisonSpec {
  std::map<std::string, std::vector<std::filesystem::path>> runs;
  std::vector<Claim> claims;
};

struct ClaimVerdict {
  Claim claim;
  double lhs_value = 0.0;
  double rhs_value = 0.0;  // the bound the lhs was tested against
  bool passed = false;
};

struct VerdictTable {
  std::vector<ClaimVerdict> rows;
  bool all_passed() const;
};

struct MetricsFile {
  std::vector<std::string> header;
  std::vector<MetricsRecord> records;
};

// Throws ComparisonError on a header that differs from kMetricsHeader.
MetricsFile read_metrics_csv(const std::filesystem::path& path);

// Throws ComparisonError on unknown runs or metrics, mismatched cadences
// between the files of one claim, or a metric never sampled.
VerdictTable compare_runs(const ComparisonSpec& spec);

// {"runs": {"A": ["a.csv", ...]}, "claims": [{"name", "metric", "reduce",
// "kind", "lhs", "rhs", "margin", "pooled_std", "value"}]}; relative paths
// resolve against base_dir.
ComparisonSpec comparison_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const Claim& c);
Claim claim_from_json(const nlohmann::json& j);

std::string format_verdicts(const VerdictTable& table);

}  // namespace sslab
