#include "sslab/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace sslab {

using nlohmann::json;

std::string checkpoint_to_string(const std::vector<NamedMatrix>& params) {
  json doc;
  doc["format"] = "sslab-checkpoint";
  doc["version"] = 1;
  json arr = json::array();
  for (const auto& p : params) {
    if (!p.value.allFinite()) throw NumericError("checkpoint: parameter '" + p.name + "' is not finite");
    json values = json::array();
    for (Index i = 0; i < p.value.rows(); ++i) {
      for (Index j = 0; j < p.value.cols(); ++j) values.push_back(p.value(i, j));
    }
    arr.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"values", values}});
  }
  doc["params"] = std::move(arr);
  return doc.dump(1);
}

std::vector<NamedMatrix> checkpoint_from_string(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.value("format", "") != "sslab-checkpoint") throw ContractError("checkpoint: unrecognised format");
  if (doc.value("version", 0) != 1) throw ContractError("checkpoint: unsupported version");
  std::vector<NamedMatrix> out;
  for (const auto& entry : doc.at("params")) {
    const auto rows = entry.at("rows").get<Index>();
    const auto cols = entry.at("cols").get<Index>();
    const auto& values = entry.at("values");
    if (static_cast<Index>(values.size()) != rows * cols) {
      throw DimensionError("checkpoint: value count does not match shape for " +
                           entry.at("name").get<std::string>());
    }
    Matrix m(rows, cols);
    for (Index k = 0; k < rows * cols; ++k) m(k / cols, k % cols) = values[static_cast<std::size_t>(k)].get<double>();
    out.push_back({entry.at("name").get<std::string>(), std::move(m)});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& params) {
  std::ofstream os(path);
  if (!os) throw Error("checkpoint: cannot write " + path.string());
  os << checkpoint_to_string(params) << '\n';
}

std::vector<NamedMatrix> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("checkpoint: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace sslab
