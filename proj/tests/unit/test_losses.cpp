#include "sslab/losses.hpp"

#include "../test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace sslab;
using namespace sslab::testing;
using ad::Tensor;

namespace {

Tensor C(const Matrix& m) { return Tensor::constant(m); }

// Single linear layer with identity weights: forward is plain row normalisation.
EncoderStack identity_encoder(Index d, bool normalize = true) {
  std::vector<LinearLayer> l(1);
  l[0].weight = Tensor::leaf(Matrix::Identity(d, d));
  l[0].bias = Tensor::leaf(Matrix::Zero(1, d));
  return EncoderStack(l, normalize);
}

Matrix permute_rows(const Matrix& m, const std::vector<Index>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

// softmax(x / t) computed directly.
Matrix softmax_direct(const Matrix& x, double t) {
  Matrix p(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double z = 0.0;
    for (Index j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) / t);
    for (Index j = 0; j < x.cols(); ++j) p(i, j) = std::exp(x(i, j) / t) / z;
  }
  return p;
}

}  // namespace

TEST_SUITE("loss-catalog") {

TEST_CASE("invariance_loss") {
  std::mt19937_64 rng(1);
  const Matrix z = random_unit_rows(6, 4, rng), zw = random_unit_rows(6, 4, rng);
  CHECK(invariance_loss(C(z), C(z)).item() == doctest::Approx(-1.0).epsilon(1e-14));

  Matrix a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 0, 1, -1, 0;
  CHECK(invariance_loss(C(a), C(b)).item() == 0.0);

  double direct = 0.0;
  for (Index i = 0; i < 6; ++i) direct += 0.5 * (z.row(i) - zw.row(i)).squaredNorm() - 1.0;
  CHECK(invariance_loss(C(z), C(zw)).item() == doctest::Approx(direct / 6).epsilon(1e-13));

  Tensor zl = Tensor::leaf(z);
  ad::backward(invariance_loss(zl, C(zw)));
  CHECK((zl.grad() + zw / 6.0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(ad::grad_check([&](const Tensor& x) { return invariance_loss(x, C(zw)); }, z).max_rel_error < 1e-4);

  CHECK_THROWS_AS(invariance_loss(C(z), C(zw.topRows(5))), DimensionError);
}

TEST_CASE("triplet_loss") {
  std::mt19937_64 rng(2);
  Matrix za(1, 2), zn(1, 2);
  za << 1, 0;
  zn << 0, 1;
  CHECK(triplet_loss(C(za), C(za), C(zn)).item() == doctest::Approx(-1.0));

  SUBCASE("infinite margin gradient is the batch mean of -z_p + z_n") {
    const Matrix a = random_unit_rows(8, 5, rng), p = random_unit_rows(8, 5, rng), n = random_unit_rows(8, 5, rng);
    Tensor al = Tensor::leaf(a);
    ad::backward(triplet_loss(al, C(p), C(n)));
    CHECK(((-p + n) / 8.0 - al.grad()).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("satisfied finite margin gives zero loss and gradient") {
    Matrix a(2, 2), p(2, 2), n(2, 2);
    a << 1, 0, 0, 1;
    p = a;
    n << -1, 0, 0, -1;  // |a-p|^2 - |a-n|^2 = -4
    Tensor al = Tensor::leaf(a);
    const Tensor loss = triplet_loss(al, C(p), C(n), 1.0);
    CHECK(loss.item() == 0.0);
    ad::backward(loss);
    CHECK(grad_or_zero(al) == Matrix::Zero(2, 2));
  }

  SUBCASE("finite margin value") {
    const Matrix a = random_unit_rows(5, 3, rng), p = random_unit_rows(5, 3, rng), n = random_unit_rows(5, 3, rng);
    double direct = 0.0;
    for (Index i = 0; i < 5; ++i) {
      direct += std::max((a.row(i) - p.row(i)).squaredNorm() - (a.row(i) - n.row(i)).squaredNorm() + 0.5, 0.0) / 2;
    }
    CHECK(triplet_loss(C(a), C(p), C(n), 0.5).item() == doctest::Approx(direct / 5).epsilon(1e-13));
  }

  CHECK_THROWS_AS(triplet_loss(C(za), C(za), C(zn), -0.1), ParameterError);
}

TEST_CASE("infonce_loss") {
  std::mt19937_64 rng(3);
  SUBCASE("one negative at the positive's similarity gives log 2") {
    Matrix a(1, 2), p(1, 2), n(1, 2);
    a << 1, 0;
    p << std::cos(0.4), std::sin(0.4);
    n << std::cos(0.4), -std::sin(0.4);
    CHECK(infonce_loss(C(a), C(p), {C(n)}, 0.1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(infonce_loss_bank(C(a), C(p), C(n), 0.1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("direct evaluation, within-batch negatives") {
    const Matrix a = random_unit_rows(5, 3, rng), p = random_unit_rows(5, 3, rng);
    const double tau = 0.3;
    double direct = 0.0;
    for (Index i = 0; i < 5; ++i) {
      double denom = 0.0;
      for (Index j = 0; j < 5; ++j) denom += std::exp(a.row(i).dot(p.row(j)) / tau);
      direct += -std::log(std::exp(a.row(i).dot(p.row(i)) / tau) / denom);
    }
    CHECK(infonce_loss(C(a), C(p), tau).item() == doctest::Approx(direct / 5).epsilon(1e-12));
  }

  SUBCASE("low temperature approaches the hardest-negative form") {
    const double tau = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = random_unit_rows(1, 4, rng), p = random_unit_rows(1, 4, rng);
      std::vector<Tensor> negs;
      double smax = a.row(0).dot(p.row(0));
      for (int k = 0; k < 6; ++k) {
        const Matrix n = random_unit_rows(1, 4, rng);
        smax = std::max(smax, a.row(0).dot(n.row(0)));
        negs.push_back(C(n));
      }
      const double l = infonce_loss(C(a), C(p), negs, tau).item();
      CHECK(std::abs(tau * l - (smax - a.row(0).dot(p.row(0)))) <= tau * std::log(7.0) + 1e-12);
    }
  }

  SUBCASE("gradient") {
    const Matrix a = random_unit_rows(6, 4, rng), p = random_unit_rows(6, 4, rng);
    CHECK(ad::grad_check([&](const Tensor& x) { return infonce_loss(x, C(p), 0.2); }, a).max_rel_error < 1e-4);
    CHECK(ad::grad_check([&](const Tensor& x) { return infonce_loss(C(a), x, 0.2); }, p).max_rel_error < 1e-4);
  }

  const Matrix a = random_unit_rows(2, 2, rng);
  CHECK_THROWS_AS(infonce_loss(C(a), C(a), 0.0), ParameterError);
}

TEST_CASE("simsiam_loss") {
  std::mt19937_64 rng(4);
  const EncoderStack ident = identity_encoder(3);
  PredictorHead pred;
  pred.net = identity_encoder(3);
  const Matrix x = random_matrix(5, 3, rng);
  CHECK(simsiam_loss(ident, &pred, C(x), C(x)).item() == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(simsiam_loss(ident, nullptr, C(x), C(x), true, false).item() == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(simsiam_loss(ident, nullptr, C(x), C(x)), ContractError);

  const std::vector<int> dims{3, 8, 3};
  const EncoderStack enc = EncoderStack::init(dims, 5);
  const PredictorHead head = PredictorHead::init(3, 6, 6);
  const Matrix xa = random_matrix(6, 3, rng), xb = random_matrix(6, 3, rng);

  SUBCASE("stop-gradient blocks the target branch") {
    // Same loss with the targets replaced by constants must give the same
    // encoder gradient.
    EncoderStack e1 = enc.clone(true), e2 = enc.clone(true);
    ad::backward(simsiam_loss(e1, &head, C(xa), C(xb)));
    const Matrix za = e2.embed(xa), zb = e2.embed(xb);
    ad::backward(ad::scale(ad::add(invariance_loss(head.forward(e2.forward(C(xa))), C(zb)),
                                   invariance_loss(head.forward(e2.forward(C(xb))), C(za))),
                           0.5));
    for (std::size_t i = 0; i < e1.layers().size(); ++i) {
      CHECK((e1.layers()[i].weight.grad() - e2.layers()[i].weight.grad()).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  SUBCASE("gradient checks with and without stop-gradient and predictor") {
    for (bool sg : {true, false}) {
      for (bool use_pred : {true, false}) {
        auto f = [&](const Tensor& x) { return simsiam_loss(enc, &head, x, C(xb), sg, use_pred); };
        CHECK(ad::grad_check(f, xa).max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("byol_loss") {
  std::mt19937_64 rng(5);
  const std::vector<int> dims{2, 8, 3};
  const EncoderStack online = EncoderStack::init(dims, 1);
  const PredictorHead head = PredictorHead::init(3, 6, 2);
  const Matrix xa = random_matrix(7, 2, rng), xb = random_matrix(7, 2, rng);

  EmaTwin twin = EmaTwin::from(EncoderStack::init(dims, 9), 0.0);
  ema_update(twin, online);
  CHECK(byol_loss(online, head, twin, C(xa), C(xb)).item() ==
        doctest::Approx(simsiam_loss(online, &head, C(xa), C(xb)).item()).epsilon(1e-14));

  ad::backward(byol_loss(online, head, twin, C(xa), C(xb)));
  for (const auto& l : twin.shadow.layers()) {
    CHECK_FALSE(l.weight.has_grad());
    CHECK_FALSE(l.bias.has_grad());
  }
  for (const auto& l : online.layers()) CHECK(l.weight.has_grad());

  const EmaTwin other = EmaTwin::from(EncoderStack::init(dims, 10), 0.99);
  CHECK(ad::grad_check([&](const Tensor& x) { return byol_loss(online, head, other, x, C(xb)); }, xa).max_rel_error <
        1e-4);
}

TEST_CASE("dino_loss") {
  std::mt19937_64 rng(6);
  const std::vector<int> dims{2, 8, 4};
  const EncoderStack student = EncoderStack::init(dims, 3);
  const EmaTwin twin = EmaTwin::from(student, 0.9);
  const Matrix x = random_matrix(5, 2, rng);

  SUBCASE("identical student and teacher: self cross-entropy") {
    const DinoCenterState c0 = DinoCenterState::zeros(4, 0.9);
    const double t = 0.3;
    const Matrix p = softmax_direct(student.embed(x), t);
    double entropy = 0.0;
    for (Index i = 0; i < p.rows(); ++i)
      for (Index j = 0; j < p.cols(); ++j) entropy -= p(i, j) * std::log(p(i, j));
    const auto r = dino_loss(student, twin, c0, C(x), C(x), t, t);
    CHECK(r.loss.item() == doctest::Approx(entropy / 5).epsilon(1e-12));
  }

  SUBCASE("center update with momentum 0 equals the teacher batch mean") {
    DinoCenterState c = DinoCenterState::zeros(4, 0.0);
    const Matrix xb = random_matrix(5, 2, rng);
    const auto r = dino_loss(student, twin, c, C(x), C(xb), 0.1, 0.04);
    Matrix both(10, 4);
    both << twin.embed(x), twin.embed(xb);
    const RowVector mean = both.colwise().mean();
    c.update(r.teacher_mean);
    CHECK((c.center - mean).cwiseAbs().maxCoeff() < 1e-15);
    const Matrix centered = both.rowwise() - c.center;
    CHECK(centered.colwise().mean().cwiseAbs().maxCoeff() < 1e-15);

    DinoCenterState slow = DinoCenterState::zeros(4, 0.9);
    slow.update(mean);
    CHECK((slow.center - 0.1 * mean).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("centering toggle changes the teacher targets only") {
    DinoCenterState c = DinoCenterState::zeros(4, 0.9);
    c.center = RowVector::Constant(4, 0.2);
    c.center(0) = 0.7;
    const Matrix xb = random_matrix(5, 2, rng);
    const double with = dino_loss(student, twin, c, C(x), C(xb), 0.1, 0.04, true).loss.item();
    const double without = dino_loss(student, twin, c, C(x), C(xb), 0.1, 0.04, false).loss.item();
    CHECK(with != without);
    const DinoCenterState zero = DinoCenterState::zeros(4, 0.9);
    CHECK(without == dino_loss(student, twin, zero, C(x), C(xb), 0.1, 0.04, true).loss.item());
  }

  SUBCASE("gradient") {
    const DinoCenterState c = DinoCenterState::zeros(4, 0.9);
    const EmaTwin teacher = EmaTwin::from(EncoderStack::init(dims, 4), 0.9);
    const Matrix xb = random_matrix(5, 2, rng);
    auto f = [&](const Tensor& xa) { return dino_loss(student, teacher, c, xa, C(xb), 0.1, 0.04).loss; };
    CHECK(ad::grad_check(f, x).max_rel_error < 1e-4);
  }

  const DinoCenterState c = DinoCenterState::zeros(4, 0.9);
  CHECK_THROWS_AS(dino_loss(student, twin, c, C(x), C(x), 0.0, 0.04), ParameterError);
  CHECK_THROWS_AS(dino_loss(student, twin, c, C(x), C(x), 0.1, -1.0), ParameterError);
}

TEST_CASE("sinkhorn_knopp") {
  std::mt19937_64 rng(7);
  SUBCASE("uniform scores are a fixed point") {
    const Matrix q = sinkhorn_knopp(Matrix::Constant(12, 4, 0.3), 0.05, 3);
    for (Index j = 0; j < 4; ++j) CHECK(q.col(j).sum() == doctest::Approx(3.0).epsilon(1e-15));
    for (Index i = 0; i < 12; ++i) CHECK(q.row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("rows stochastic, entries nonnegative") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix s = random_matrix(16, 5, rng);
      for (int iters : {1, 3, 10}) {
        const Matrix q = sinkhorn_knopp(s, 0.1, iters);
        CHECK(q.minCoeff() >= 0.0);
        for (Index i = 0; i < q.rows(); ++i) CHECK(std::abs(q.row(i).sum() - 1.0) < 1e-9);
      }
    }
  }

  SUBCASE("more iterations balance the columns further") {
    const Matrix s = random_matrix(64, 8, rng);
    auto dev = [&](int iters) {
      const Matrix q = sinkhorn_knopp(s, 1.0, iters);
      return ((q.colwise().sum().array() - 8.0).abs()).maxCoeff();
    };
    CHECK(dev(10) < dev(3));
    CHECK(dev(3) < dev(1));
  }

  CHECK_THROWS_AS(sinkhorn_knopp(Matrix::Constant(2, 2, std::nan("")), 0.05, 3), NumericError);
  CHECK_THROWS_AS(sinkhorn_knopp(Matrix::Ones(2, 2), 0.05, 0), ParameterError);
  CHECK_THROWS_AS(sinkhorn_knopp(Matrix::Ones(2, 2), 0.0, 3), ParameterError);
}

TEST_CASE("swav_loss") {
  std::mt19937_64 rng(8);
  SUBCASE("separable scores with a sharp softmax give near-zero loss") {
    const EncoderStack ident = identity_encoder(2);
    PrototypeBank protos;
    Matrix p(2, 2);
    p << 1, 0, -1, 0;
    protos.prototypes = Tensor::constant(p);
    Matrix x(6, 2);
    x << 1, 0, -1, 0, 2, 0, -3, 0, 0.5, 0, -0.5, 0;
    CHECK(swav_loss(ident, protos, C(x), C(x), 0.01, 0.05, 3).item() < 1e-6);
  }

  const std::vector<int> dims{2, 8, 3};
  const EncoderStack enc = EncoderStack::init(dims, 2);
  const Matrix xa = random_matrix(8, 2, rng), xb = random_matrix(8, 2, rng);

  SUBCASE("fixed prototypes get no gradient, trainable ones do") {
    const PrototypeBank fixed = init_prototypes(4, 3, 1, false);
    ad::backward(swav_loss(enc, fixed, C(xa), C(xb), 0.1, 0.05, 3));
    CHECK_FALSE(fixed.prototypes.has_grad());
    const PrototypeBank learn = init_prototypes(4, 3, 1, true);
    ad::backward(swav_loss(enc, learn, C(xa), C(xb), 0.1, 0.05, 3));
    CHECK(learn.prototypes.grad().cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("gradient on the encoder input and the prototypes") {
    const PrototypeBank fixed = init_prototypes(4, 3, 1, false);
    auto f = [&](const Tensor& x) { return swav_loss(enc, fixed, x, C(xb), 0.1, 0.05, 3); };
    CHECK(ad::grad_check(f, xa).max_rel_error < 1e-4);
    auto g = [&](const Tensor& p) { return swav_loss(enc, PrototypeBank{p, true}, C(xa), C(xb), 0.1, 0.05, 3); };
    CHECK(ad::grad_check(g, fixed.prototypes.value()).max_rel_error < 1e-4);
  }
}

TEST_CASE("barlow_twins_loss") {
  std::mt19937_64 rng(9);
  SUBCASE("identical views with identity cross-correlation give zero") {
    Matrix z(4, 2);
    z << 1, 1, 1, -1, -1, 1, -1, -1;
    CHECK(barlow_twins_loss(C(z), C(z), 5e-3).item() == 0.0);
  }

  const Matrix a = random_matrix(10, 4, rng), b = random_matrix(10, 4, rng);
  const Tensor na = ad::batch_norm_cols(C(a)), nb = ad::batch_norm_cols(C(b));

  SUBCASE("direct evaluation") {
    const Matrix corr = na.value().transpose() * nb.value() / 10.0;
    double inv = 0.0, off = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < 4; ++j) {
        if (i == j) inv += (1 - corr(i, i)) * (1 - corr(i, i));
        else off += corr(i, j) * corr(i, j);
      }
    }
    CHECK(barlow_twins_loss(na, nb, 0.3).item() == doctest::Approx(inv + 0.3 * off).epsilon(1e-12));
    CHECK(barlow_twins_loss(na, nb, 0.3, false).item() == doctest::Approx(inv).epsilon(1e-12));
  }

  CHECK(barlow_twins_loss(na, nb, 0.0).item() == doctest::Approx(barlow_twins_loss(na, nb, 7.0, false).item()).epsilon(1e-14));

  SUBCASE("without decorrelation only the diagonal matters") {
    // Add to each column of b a direction orthogonal to the matching column of
    // a: diag(C) is unchanged, off-diagonal entries move.
    Matrix b2 = nb.value();
    const Matrix an = na.value();
    for (Index j = 0; j < 4; ++j) {
      Eigen::VectorXd d = random_matrix(10, 1, rng);
      d -= an.col(j) * (an.col(j).dot(d) / an.col(j).squaredNorm());
      b2.col(j) += d;
    }
    CHECK(barlow_twins_loss(na, C(b2), 0.0, false).item() ==
          doctest::Approx(barlow_twins_loss(na, nb, 0.0, false).item()).epsilon(1e-12));
    CHECK(barlow_twins_loss(na, C(b2), 0.5).item() != doctest::Approx(barlow_twins_loss(na, nb, 0.5).item()));
  }

  SUBCASE("gradient through batch norm and correlation") {
    auto f = [&](const Tensor& x) { return barlow_twins_loss(ad::batch_norm_cols(x), nb, 0.3); };
    CHECK(ad::grad_check(f, a).max_rel_error < 1e-4);
  }

  CHECK_THROWS_AS(barlow_twins_loss(C(a.topRows(1)), C(b.topRows(1)), 0.1), BatchSizeError);

  LossConfig cfg;
  CHECK(effective_bt_lambda(cfg, 64) == cfg.bt_lambda);
  cfg.bt_lambda_mode = BtLambdaMode::inverse_sqrt_batch;
  CHECK(effective_bt_lambda(cfg, 64) == doctest::Approx(0.125));
}

TEST_CASE("simple_objective") {
  std::mt19937_64 rng(10);
  SUBCASE("symmetric batch: penalty vanishes") {
    Matrix z = random_unit_rows(6, 3, rng);
    z.bottomRows(3) = -z.topRows(3);
    Matrix zw = random_unit_rows(6, 3, rng);
    zw.bottomRows(3) = -zw.topRows(3);
    const double inv = invariance_loss(C(z), C(zw)).item();
    CHECK(simple_objective(C(z), C(zw), -1.0).item() == doctest::Approx(0.5 * inv).epsilon(1e-14));
  }

  SUBCASE("collapsed batch") {
    const Matrix u = random_unit_rows(1, 3, rng);
    const Matrix z = u.replicate(5, 1);
    CHECK(std::abs(simple_objective(C(z), C(z), -1.0).item()) < 1e-14);
    CHECK(simple_objective(C(z), C(z), 0.5).item() == doctest::Approx(0.5 * (-1.0 - 0.5)).epsilon(1e-14));
    CHECK(simple_objective(C(z), C(z), -1.0, CenterPenalty::norm).item() == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("penalty gradient") {
    const Matrix z = random_unit_rows(6, 3, rng), zw = random_unit_rows(6, 3, rng);
    const double lambda = -1.0;
    Tensor zl = Tensor::leaf(z);
    ad::backward(simple_objective(zl, C(zw), lambda));
    Matrix both(12, 3);
    both << z, zw;
    const RowVector s = both.colwise().mean();
    // d/dz_i [0.5 * (-mean <z, zw> - lambda |s|^2)] = -zw_i / 12 - lambda * s / 12
    const Matrix expect = (-zw).rowwise() - lambda * s;
    CHECK((zl.grad() - expect / 12.0).cwiseAbs().maxCoeff() < 1e-14);
    for (auto pen : {CenterPenalty::squared_norm, CenterPenalty::norm}) {
      auto f = [&](const Tensor& x) { return simple_objective(x, C(zw), lambda, pen); };
      CHECK(ad::grad_check(f, z).max_rel_error < 1e-4);
    }
  }

  SUBCASE("prior center blends into the estimate") {
    const Matrix z = random_unit_rows(4, 2, rng), zw = random_unit_rows(4, 2, rng);
    const RowVector prior = RowVector::Constant(2, 0.3);
    Matrix both(8, 2);
    both << z, zw;
    const RowVector s = 0.75 * prior + 0.25 * both.colwise().mean();
    const double inv = invariance_loss(C(z), C(zw)).item();
    CHECK(simple_objective(C(z), C(zw), -1.0, CenterPenalty::squared_norm, &prior, 0.75).item() ==
          doctest::Approx(0.5 * (inv + s.squaredNorm())).epsilon(1e-13));
  }
}

TEST_CASE("every loss is invariant to a common row permutation") {
  std::mt19937_64 rng(11);
  const Index m = 12, d = 3;
  std::vector<Index> perm(m);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  const Matrix za = random_unit_rows(m, d, rng), zb = random_unit_rows(m, d, rng), zn = random_unit_rows(m, d, rng);
  const Matrix pa = permute_rows(za, perm), pb = permute_rows(zb, perm), pn = permute_rows(zn, perm);
  auto same = [](double x, double y) { CHECK(std::abs(x - y) < 1e-12); };
  same(invariance_loss(C(za), C(zb)).item(), invariance_loss(C(pa), C(pb)).item());
  same(triplet_loss(C(za), C(zb), C(zn)).item(), triplet_loss(C(pa), C(pb), C(pn)).item());
  same(triplet_loss(C(za), C(zb), C(zn), 0.5).item(), triplet_loss(C(pa), C(pb), C(pn), 0.5).item());
  same(infonce_loss(C(za), C(zb), 0.1).item(), infonce_loss(C(pa), C(pb), 0.1).item());
  same(infonce_loss(C(za), C(zb), {C(zn)}, 0.1).item(), infonce_loss(C(pa), C(pb), {C(pn)}, 0.1).item());
  same(simple_objective(C(za), C(zb)).item(), simple_objective(C(pa), C(pb)).item());
  same(barlow_twins_loss(ad::batch_norm_cols(C(za)), ad::batch_norm_cols(C(zb)), 0.1).item(),
       barlow_twins_loss(ad::batch_norm_cols(C(pa)), ad::batch_norm_cols(C(pb)), 0.1).item());

  const std::vector<int> dims{2, 8, d};
  const EncoderStack enc = EncoderStack::init(dims, 1);
  const PredictorHead head = PredictorHead::init(d, 6, 2);
  const EmaTwin twin = EmaTwin::from(EncoderStack::init(dims, 3), 0.9);
  const PrototypeBank protos = init_prototypes(4, d, 4, true);
  DinoCenterState center = DinoCenterState::zeros(d, 0.9);
  center.center = RowVector::Constant(d, 0.1);
  const Matrix xa = random_matrix(m, 2, rng), xb = random_matrix(m, 2, rng);
  const Matrix ya = permute_rows(xa, perm), yb = permute_rows(xb, perm);
  same(simsiam_loss(enc, &head, C(xa), C(xb)).item(), simsiam_loss(enc, &head, C(ya), C(yb)).item());
  same(byol_loss(enc, head, twin, C(xa), C(xb)).item(), byol_loss(enc, head, twin, C(ya), C(yb)).item());
  same(dino_loss(enc, twin, center, C(xa), C(xb), 0.1, 0.04).loss.item(),
       dino_loss(enc, twin, center, C(ya), C(yb), 0.1, 0.04).loss.item());
  same(swav_loss(enc, protos, C(xa), C(xb), 0.1, 0.05, 3).item(),
       swav_loss(enc, protos, C(ya), C(yb), 0.1, 0.05, 3).item());
  same(barlow_twins_objective(enc, C(xa), C(xb), 0.1).item(), barlow_twins_objective(enc, C(ya), C(yb), 0.1).item());
}

TEST_CASE("LossConfig validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    LossConfig x;
    mutate(x);
    CHECK_THROWS_AS(x.validate(), ParameterError);
  };
  bad([](LossConfig& x) { x.temperature = 0.0; });
  bad([](LossConfig& x) { x.teacher_temperature = -1.0; });
  bad([](LossConfig& x) { x.sinkhorn_iters = 0; });
  bad([](LossConfig& x) { x.ema_momentum = 1.0; });
  bad([](LossConfig& x) { x.center_momentum = -0.1; });
  bad([](LossConfig& x) { x.triplet_margin = -1.0; });
  for (auto k : {LossKind::invariance, LossKind::triplet, LossKind::infonce, LossKind::simsiam, LossKind::byol,
                 LossKind::dino, LossKind::swav, LossKind::barlow_twins, LossKind::simple}) {
    CHECK(loss_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(loss_kind_from_string("vicreg"), ParameterError);
}

}  // TEST_SUITE
