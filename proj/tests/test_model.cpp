#include "fedida/model.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace fedida;
using fedida::test::random_labels;
using fedida::test::random_matrix;

namespace {

using Real = long double;

// Central differences of the mean BCE in long double.
Vec<Real> fd_gradient(const ModelParams& p, const Matrix& a, const Labels& y, Real h = 1e-5L) {
  const auto pl = p.cast<Real>();
  const Mat<Real> al = a.cast<Real>();
  Vec<Real> flat = pl.flatten();
  Vec<Real> g(flat.size());
  auto loss_at = [&](const Vec<Real>& v) {
    auto q = pl;
    q.assign(v);
    return bce_from_logits(forward_logits(q, al), y);
  };
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    Vec<Real> up = flat, dn = flat;
    up(i) += h;
    dn(i) -= h;
    g(i) = (loss_at(up) - loss_at(dn)) / (2 * h);
  }
  return g;
}

double max_rel_err(const Vector& analytic, const Vec<Real>& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double num = static_cast<double>(numeric(i));
    const double denom = std::max({std::abs(analytic(i)), std::abs(num), 1e-6});
    worst = std::max(worst, std::abs(analytic(i) - num) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("linear forward with zero weights gives 0.5") {
  const auto p = init_linear(3);
  Rng rng(1);
  const auto out = forward(p, random_matrix(4, 3, rng));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(out.probs(i) == 0.5);
}

TEST_CASE("linear forward of unit weight at zero input") {
  auto p = init_linear(1);
  p.layers[0].weight(0, 0) = 1.0;
  const Matrix a = Matrix::Zero(1, 1);
  CHECK(forward(p, a).probs(0) == 0.5);
}

TEST_CASE("fcnn forward matches a hand-rolled pass") {
  Rng rng(2);
  const auto p = init_fcnn(5, 11);
  const Matrix a = random_matrix(7, 5, rng);
  const auto& l1 = p.layers[0];
  const auto& l2 = p.layers[1];
  REQUIRE(l1.weight.rows() == 100);
  REQUIRE(l2.weight.rows() == 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double z = l2.bias(0);
    for (Eigen::Index h = 0; h < 100; ++h) {
      double pre = l1.bias(h);
      for (Eigen::Index j = 0; j < 5; ++j) pre += l1.weight(h, j) * a(r, j);
      z += l2.weight(0, h) * std::max(pre, 0.0);
    }
    const auto out = forward(p, a);
    CHECK(out.logits(r) == doctest::Approx(z).epsilon(1e-12));
    CHECK(std::abs(out.probs(r) - 1.0 / (1.0 + std::exp(-z))) < 1e-12);
  }
}

TEST_CASE("forward rejects bad input") {
  const auto p = init_linear(2);
  CHECK_THROWS_AS(forward(p, Matrix(Matrix::Zero(3, 3))), Error);
  Matrix a = Matrix::Zero(2, 2);
  a(1, 1) = std::nan("");
  CHECK_THROWS_AS(forward(p, a), Error);
}

TEST_CASE("sigmoid stays inside (0, 1) for large logits") {
  CHECK(sigmoid(30.0) < 1.0);
  CHECK(sigmoid(800.0) == 1.0);  // saturates without overflow
  CHECK(sigmoid(-700.0) > 0.0);
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(1000.0) == doctest::Approx(1000.0));
}

TEST_CASE("loss of the uniform predictor is ln 2") {
  const auto p = init_linear(4);
  Rng rng(3);
  const auto lg = loss_and_grad(p, random_matrix(10, 4, rng), random_labels(10, rng));
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("confident correct predictions drive the loss to zero") {
  auto p = init_linear(1);
  p.layers[0].weight(0, 0) = 50.0;
  Matrix a(2, 1);
  a << 1.0, -1.0;
  Labels y(2);
  y << 1, 0;
  CHECK(loss_and_grad(p, a, y).loss < 1e-20);
}

TEST_CASE("empty batch and bad labels are rejected") {
  const auto p = init_linear(2);
  CHECK_THROWS_AS(loss_and_grad(p, Matrix(0, 2), Labels(0)), Error);
  Labels y(1);
  y << 2;
  CHECK_THROWS_AS(loss_and_grad(p, Matrix(Matrix::Zero(1, 2)), y), Error);
}

TEST_CASE("gradients agree with finite differences") {
  Rng rng(4);
  for (int draw = 0; draw < 30; ++draw) {
    const bool fcnn = draw % 2 == 1;
    const Eigen::Index p = 2 + draw % 5;
    ModelParams params = fcnn ? init_fcnn(p, 100 + draw, 8) : init_linear(p);
    params.assign(random_matrix(params.size(), 1, rng, 0.7).col(0));
    const Matrix a = random_matrix(12, p, rng);
    const Labels y = random_labels(12, rng);
    const auto lg = loss_and_grad(params, a, y);
    CAPTURE(draw);
    CHECK(max_rel_err(lg.grad.flatten(), fd_gradient(params, a, y)) < 1e-4);
  }
}

TEST_CASE("apply_update arithmetic") {
  auto p = init_linear(1);
  p.layers[0].weight(0, 0) = 1.0;
  auto g = p.zeros_like();
  CHECK(apply_update(p, g, 0.1) == p);
  g.layers[0].weight(0, 0) = 0.5;
  CHECK(apply_update(p, g, 0.0) == p);
  CHECK(apply_update(p, g, 0.1).layers[0].weight(0, 0) == doctest::Approx(0.95));
  CHECK_THROWS_AS(apply_update(p, init_linear(2), 0.1), Error);
}

TEST_CASE("initialization is deterministic and within the fan-in bound") {
  const auto a = init_fcnn(6, 9);
  const auto b = init_fcnn(6, 9);
  CHECK(a == b);
  CHECK_FALSE(a == init_fcnn(6, 10));
  CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK(a.layers[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(100.0));
  CHECK(init_linear(3).flatten().isZero());
}

TEST_CASE("parameters round-trip through JSON exactly") {
  Rng rng(5);
  auto p = init_fcnn(4, 3, 6);
  p.assign(random_matrix(p.size(), 1, rng).col(0));
  const auto back = params_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK(back == p);
  CHECK(checksum(back) == checksum(p));
  CHECK_THROWS_AS(params_from_json(nlohmann::json{{"kind", "linear"}}), Error);
}

TEST_CASE("model kind names") {
  CHECK(parse_model_kind("linear") == ModelKind::linear);
  CHECK(parse_model_kind("fcnn") == ModelKind::fcnn);
  CHECK_THROWS_AS(parse_model_kind("cnn"), Error);
}
