#pragma once

#include "sslab/layers.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sslab {

// JSON document {"format": "sslab-checkpoint", "version": 1, "params": [...]},
// one entry per named array with rows, cols and row-major values. Doubles are
// written in shortest round-trip form, so load(save(x)) is bit-exact for
// finite values. Non-finite values are rejected on save.
std::string checkpoint_to_string(const std::vector<NamedMatrix>& params);
std::vector<NamedMatrix> checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& params);
std::vector<NamedMatrix> load_checkpoint(const std::filesystem::path& path);

}  // namespace sslab
