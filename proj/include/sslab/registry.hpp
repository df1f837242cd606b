#pragma once

#include "sslab/compare.hpp"
#include "sslab/config.hpp"

#include <string>
#include <vector>

namespace sslab {

class UnknownExperimentError : public Error {
 public:
  using Error::Error;
};

struct NamedExperiment {
  std::string key;
  std::string description;
  // Variant configs; each name is "<key>/<variant>".
  std::vector<ExperimentConfig> variants;
  // Claims over variant short names (the part after the slash).
  std::vector<Claim> claims;

  const ExperimentConfig& variant(const std::string& short_name) const;
};

std::vector<std::string> named_experiment_keys();
// Throws UnknownExperimentError listing the registered keys.
NamedExperiment named_experiment(const std::string& key);

std::string variant_short_name(const ExperimentConfig& cfg);

}  // namespace sslab
