#include "sslab/toy_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sslab {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix default_blob_centers(int num_classes, double radius) {
  if (num_classes < 1) throw ParameterError("default_blob_centers: need at least one class");
  Matrix c(num_classes, 2);
  for (int k = 0; k < num_classes; ++k) {
    const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / num_classes;
    c(k, 0) = radius * std::cos(angle);
    c(k, 1) = radius * std::sin(angle);
  }
  return c;
}

ToyDataset gen_blobs(int n_per_class, int num_classes, const Matrix& centers, double sigma,
                     std::uint64_t seed) {
  if (num_classes < 2) throw ParameterError("gen_blobs: need at least two classes");
  if (!(sigma > 0.0)) throw ParameterError("gen_blobs: sigma must be > 0");
  if (n_per_class < 1) throw ParameterError("gen_blobs: n_per_class must be >= 1");
  if (centers.rows() != num_classes) {
    throw ParameterError("gen_blobs: " + std::to_string(centers.rows()) + " centers for " +
                         std::to_string(num_classes) + " classes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ToyDataset ds;
  ds.points.resize(static_cast<Index>(n_per_class) * num_classes, centers.cols());
  ds.labels.reserve(static_cast<std::size_t>(ds.points.rows()));
  Index row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (Index j = 0; j < centers.cols(); ++j) ds.points(row, j) = centers(k, j) + sigma * normal(rng);
      ds.labels.push_back(k);
    }
  }
  ds.num_classes = num_classes;
  ds.generator = "blobs";
  ds.seed = seed;
  return ds;
}

ToyDataset gen_moons(int n_per_class, double noise, std::uint64_t seed, bool three_classes) {
  if (!(noise >= 0.0)) throw ParameterError("gen_moons: noise must be >= 0");
  if (n_per_class < 1) throw ParameterError("gen_moons: n_per_class must be >= 1");
  const int classes = three_classes ? 3 : 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ToyDataset ds;
  ds.points.resize(static_cast<Index>(n_per_class) * classes, 2);
  Index row = 0;
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      const double t = n_per_class == 1 ? 0.0 : std::numbers::pi * i / (n_per_class - 1);
      double x = 0.0, y = 0.0;
      switch (k) {
        case 0: x = std::cos(t); y = std::sin(t); break;
        case 1: x = 1.0 - std::cos(t); y = 0.5 - std::sin(t); break;
        default: x = 1.0 + 2.0 * std::cos(t); y = 0.5 - 2.0 * std::sin(t); break;
      }
      ds.points(row, 0) = x;
      ds.points(row, 1) = y;
      ds.labels.push_back(k);
    }
  }
  if (noise > 0.0) {
    for (Index i = 0; i < ds.points.rows(); ++i) {
      ds.points(i, 0) += noise * normal(rng);
      ds.points(i, 1) += noise * normal(rng);
    }
  }
  ds.num_classes = classes;
  ds.generator = "moons";
  ds.seed = seed;
  return ds;
}

ToyDataset gen_gaussian_points(int count, int dim, std::uint64_t seed) {
  if (count < 1 || dim < 1) throw ParameterError("gen_gaussian_points: need N >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ToyDataset ds;
  ds.points.resize(count, dim);
  for (Index i = 0; i < ds.points.rows(); ++i) {
    for (Index j = 0; j < ds.points.cols(); ++j) ds.points(i, j) = normal(rng);
  }
  ds.labels.assign(static_cast<std::size_t>(count), 0);
  ds.num_classes = 1;
  ds.generator = "gaussian";
  ds.seed = seed;
  return ds;
}

std::string to_string(AugmentationKind k) {
  switch (k) {
    case AugmentationKind::class_as_augmentation: return "class_as_augmentation";
    case AugmentationKind::centered_jitter: return "centered_jitter";
    case AugmentationKind::shifted_jitter: return "shifted_jitter";
  }
  return "class_as_augmentation";
}

AugmentationKind augmentation_kind_from_string(const std::string& s) {
  if (s == "class_as_augmentation") return AugmentationKind::class_as_augmentation;
  if (s == "centered_jitter") return AugmentationKind::centered_jitter;
  if (s == "shifted_jitter") return AugmentationKind::shifted_jitter;
  throw ParameterError("unknown augmentation kind '" + s + "'");
}

RowVector default_shift(int dim) {
  return RowVector::Constant(dim, 0.5 / std::sqrt(static_cast<double>(dim)));
}

AugmentedSet augment(const ToyDataset& ds, const AugmentationModel& model, std::uint64_t seed) {
  if (model.per_point < 1) throw ParameterError("augment: per_point must be >= 1");
  AugmentedSet out;
  if (model.kind == AugmentationKind::class_as_augmentation) {
    out.points = ds.points;
    out.labels = ds.labels;
    out.source.resize(static_cast<std::size_t>(ds.size()));
    for (Index i = 0; i < ds.size(); ++i) out.source[static_cast<std::size_t>(i)] = i;
    return out;
  }
  if (!(model.sigma >= 0.0)) throw ParameterError("augment: sigma must be >= 0");
  RowVector shift = RowVector::Zero(ds.dim());
  if (model.kind == AugmentationKind::shifted_jitter) {
    if (model.shift.size() != ds.dim()) {
      throw ParameterError("augment: shift has dimension " + std::to_string(model.shift.size()) +
                           ", data has " + std::to_string(ds.dim()));
    }
    shift = model.shift;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index a = model.per_point;
  out.points.resize(ds.size() * a, ds.dim());
  out.source.reserve(static_cast<std::size_t>(ds.size() * a));
  out.labels.reserve(static_cast<std::size_t>(ds.size() * a));
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index k = 0; k < a; ++k) {
      const Index row = i * a + k;
      for (Index j = 0; j < ds.dim(); ++j) {
        out.points(row, j) = ds.points(i, j) + shift(j) + model.sigma * normal(rng);
      }
      out.source.push_back(i);
      out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

std::vector<Index> sample_positive_partners(const ToyDataset& ds, std::span<const Index> rows,
                                            std::mt19937_64& rng) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (Index i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<Index> out;
  out.reserve(rows.size());
  for (Index r : rows) {
    const auto& members = by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(r)])];
    if (members.size() < 2) {
      out.push_back(r);
      continue;
    }
    // Draw among the other members of the class.
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 2);
    std::size_t k = pick(rng);
    const auto self = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), r) - members.begin());
    if (k >= self) ++k;
    out.push_back(members[k]);
  }
  return out;
}

std::string to_string(BatchMode m) { return m == BatchMode::full_batch ? "full_batch" : "mini_batch"; }

BatchMode batch_mode_from_string(const std::string& s) {
  if (s == "mini_batch") return BatchMode::mini_batch;
  if (s == "full_batch") return BatchMode::full_batch;
  throw ParameterError("unknown batch mode '" + s + "'");
}

BatchSampler::BatchSampler(BatchMode mode, Index batch_size, std::uint64_t seed)
    : mode_(mode), batch_size_(batch_size), seed_(seed) {
  if (mode == BatchMode::mini_batch && batch_size < 2) {
    throw ParameterError("BatchSampler: mini-batch size must be >= 2");
  }
}

std::vector<std::vector<Index>> BatchSampler::epoch_batches(Index n, int epoch) const {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  if (mode_ == BatchMode::full_batch) return {order};

  std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < n; start += batch_size_) {
    const Index stop = std::min(n, start + batch_size_);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

void write_dataset_csv(std::ostream& os, const ToyDataset& ds) {
  for (Index j = 0; j < ds.dim(); ++j) os << 'x' << j << ',';
  os << "label\n";
  char buf[64];
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), ds.points(i, j));
      os.write(buf, res.ptr - buf);
      os << ',';
    }
    os << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const ToyDataset& ds) {
  std::ofstream os(path);
  if (!os) throw Error("write_dataset_csv: cannot open " + path.string());
  write_dataset_csv(os, ds);
}

ToyDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("read_dataset_csv: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") throw ParameterError("read_dataset_csv: bad header");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) throw ParameterError("read_dataset_csv: bad header column " + header[j]);
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(ss, cell, ',')) throw ParameterError("read_dataset_csv: short row");
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw ParameterError("read_dataset_csv: bad number '" + cell + "'");
      row.push_back(v);
    }
    if (!std::getline(ss, cell, ',')) throw ParameterError("read_dataset_csv: missing label");
    labels.push_back(std::stoi(cell));
    rows.push_back(std::move(row));
  }
  ToyDataset ds;
  ds.points.resize(static_cast<Index>(rows.size()), static_cast<Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.points(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  int max_label = 0;
  for (int l : labels) {
    if (l < 0) throw ParameterError("read_dataset_csv: negative label");
    max_label = std::max(max_label, l);
  }
  ds.labels = std::move(labels);
  ds.num_classes = max_label + 1;
  ds.generator = "csv";
  return ds;
}

ToyDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("read_dataset_csv: cannot open " + path.string());
  return read_dataset_csv(is);
}

}  // namespace sslab
