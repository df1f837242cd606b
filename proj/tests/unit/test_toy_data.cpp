#include "sslab/toy_data.hpp"

#include "../test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

using namespace sslab;

TEST_SUITE("toy-data") {

TEST_CASE("gen_blobs") {
  const ToyDataset ds = gen_blobs(100, 3, default_blob_centers(3, 3.0), 0.5, 1);
  CHECK(ds.size() == 300);
  CHECK(ds.dim() == 2);
  CHECK(ds.num_classes == 3);
  for (int k = 0; k < 3; ++k) CHECK(std::count(ds.labels.begin(), ds.labels.end(), k) == 100);

  const Matrix c = default_blob_centers(3, 3.0);
  CHECK(c(0, 0) == doctest::Approx(0.0));
  CHECK(c(0, 1) == doctest::Approx(3.0));
  for (Index i = 0; i < 3; ++i) CHECK(c.row(i).norm() == doctest::Approx(3.0));

  SUBCASE("tight clusters stay near their centers") {
    const double sigma = 1e-4;
    const ToyDataset t = gen_blobs(200, 3, c, sigma, 2);
    for (Index i = 0; i < t.size(); ++i) CHECK((t.points.row(i) - c.row(t.labels[i])).norm() < 5 * sigma);
  }

  SUBCASE("pure function of the seed") {
    CHECK(gen_blobs(50, 3, c, 0.5, 9).points == gen_blobs(50, 3, c, 0.5, 9).points);
    CHECK(gen_blobs(50, 3, c, 0.5, 9).points != gen_blobs(50, 3, c, 0.5, 10).points);
  }

  CHECK_THROWS_AS(gen_blobs(10, 4, c, 0.5, 1), ParameterError);
  CHECK_THROWS_AS(gen_blobs(10, 1, c.topRows(1), 0.5, 1), ParameterError);
  CHECK_THROWS_AS(gen_blobs(10, 3, c, 0.0, 1), ParameterError);
}

TEST_CASE("gen_moons") {
  SUBCASE("noise 0 lies on the arcs") {
    const ToyDataset ds = gen_moons(40, 0.0, 3);
    CHECK(ds.num_classes == 3);
    for (Index i = 0; i < ds.size(); ++i) {
      const double x = ds.points(i, 0), y = ds.points(i, 1);
      switch (ds.labels[i]) {
        case 0: CHECK(std::hypot(x, y) == doctest::Approx(1.0).epsilon(1e-12)); CHECK(y >= -1e-12); break;
        case 1: CHECK(std::hypot(x - 1.0, y - 0.5) == doctest::Approx(1.0).epsilon(1e-12)); CHECK(y <= 0.5 + 1e-12); break;
        default: CHECK(std::hypot(x - 1.0, y - 0.5) == doctest::Approx(2.0).epsilon(1e-12)); CHECK(y <= 0.5 + 1e-12);
      }
    }
  }

  SUBCASE("balanced labels, two-class fallback") {
    const ToyDataset three = gen_moons(25, 0.1, 4);
    for (int k = 0; k < 3; ++k) CHECK(std::count(three.labels.begin(), three.labels.end(), k) == 25);
    const ToyDataset two = gen_moons(25, 0.1, 4, false);
    CHECK(two.num_classes == 2);
    CHECK(two.size() == 50);
  }

  CHECK(gen_moons(30, 0.1, 5).points == gen_moons(30, 0.1, 5).points);
  CHECK_THROWS_AS(gen_moons(30, -0.1, 5), ParameterError);
}

TEST_CASE("gen_gaussian_points") {
  const ToyDataset ds = gen_gaussian_points(100, 3, 6);
  CHECK(ds.size() == 100);
  CHECK(ds.dim() == 3);
  CHECK(ds.num_classes == 1);
  CHECK(ds.points.colwise().mean().norm() < 4.0 / std::sqrt(100.0));
  CHECK(gen_gaussian_points(100, 3, 6).points == ds.points);
  CHECK_THROWS_AS(gen_gaussian_points(0, 3, 6), ParameterError);
}

TEST_CASE("augment") {
  const ToyDataset ds = gen_gaussian_points(100, 3, 7);

  SUBCASE("ten per point gives one thousand rows") {
    AugmentationModel m{AugmentationKind::centered_jitter, 0.1, {}, 10};
    const AugmentedSet a = augment(ds, m, 8);
    CHECK(a.points.rows() == 1000);
    for (Index r = 0; r < a.points.rows(); ++r) CHECK(a.labels[r] == ds.labels[a.source[r]]);
  }

  SUBCASE("zero noise copies the inputs") {
    AugmentationModel m{AugmentationKind::centered_jitter, 0.0, {}, 3};
    const AugmentedSet a = augment(ds, m, 8);
    for (Index r = 0; r < a.points.rows(); ++r) CHECK(a.points.row(r) == ds.points.row(a.source[r]));
  }

  SUBCASE("jitter means converge to x and x + k") {
    ToyDataset one;
    one.points = Matrix::Zero(1, 3);
    one.points.row(0) << 0.3, -1.2, 2.0;
    one.labels = {0};
    const double sigma = 0.5;
    const RowVector k = default_shift(3);
    CHECK(k.norm() == doctest::Approx(0.5));
    CHECK(k(0) == doctest::Approx(k(2)));
    for (auto kind : {AugmentationKind::centered_jitter, AugmentationKind::shifted_jitter}) {
      AugmentationModel m{kind, sigma, k, 10000};
      const AugmentedSet a = augment(one, m, 11);
      RowVector expect = one.points.row(0);
      if (kind == AugmentationKind::shifted_jitter) expect += k;
      const RowVector mean = a.points.colwise().mean();
      for (Index j = 0; j < 3; ++j) CHECK(std::abs(mean(j) - expect(j)) < 3 * sigma / 100);
    }
  }

  SUBCASE("shift dimension must match") {
    AugmentationModel m{AugmentationKind::shifted_jitter, 0.1, RowVector::Ones(2), 1};
    CHECK_THROWS_AS(augment(ds, m, 1), ParameterError);
  }

  SUBCASE("pure function of the seed") {
    AugmentationModel m{AugmentationKind::shifted_jitter, 0.2, default_shift(3), 4};
    CHECK(augment(ds, m, 3).points == augment(ds, m, 3).points);
  }
}

TEST_CASE("class-as-augmentation partners share a label") {
  const ToyDataset ds = gen_blobs(30, 3, default_blob_centers(), 0.5, 2);
  std::vector<Index> rows(static_cast<std::size_t>(ds.size()));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::mt19937_64 rng(4);
  const auto partners = sample_positive_partners(ds, rows, rng);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(ds.labels[partners[i]] == ds.labels[rows[i]]);
    CHECK(partners[i] != rows[i]);
  }
}

TEST_CASE("batch sampler") {
  SUBCASE("full batch is one ordered batch") {
    const BatchSampler s(BatchMode::full_batch, 50, 1);
    const auto b = s.epoch_batches(1000, 0);
    REQUIRE(b.size() == 1);
    CHECK(b[0].size() == 1000);
    for (std::size_t i = 0; i < b[0].size(); ++i) CHECK(b[0][i] == static_cast<Index>(i));
  }

  SUBCASE("mini batch partitions without replacement") {
    const BatchSampler s(BatchMode::mini_batch, 50, 1);
    for (Index n : {1000, 301, 51}) {
      for (int epoch = 0; epoch < 3; ++epoch) {
        std::set<Index> seen;
        std::size_t total = 0;
        for (const auto& batch : s.epoch_batches(n, epoch)) {
          CHECK(batch.size() >= 2);
          total += batch.size();
          seen.insert(batch.begin(), batch.end());
        }
        CHECK(total == static_cast<std::size_t>(n));
        CHECK(seen.size() == static_cast<std::size_t>(n));
      }
    }
    CHECK(s.epoch_batches(300, 0) != s.epoch_batches(300, 1));
    CHECK(s.epoch_batches(300, 2) == BatchSampler(BatchMode::mini_batch, 50, 1).epoch_batches(300, 2));
  }
}

TEST_CASE("dataset CSV round trip") {
  const ToyDataset ds = gen_moons(20, 0.1, 12);
  std::stringstream ss;
  write_dataset_csv(ss, ds);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "x0,x1,label");
  const ToyDataset back = read_dataset_csv(ss);
  CHECK(back.points == ds.points);
  CHECK(back.labels == ds.labels);
}

}  // TEST_SUITE
