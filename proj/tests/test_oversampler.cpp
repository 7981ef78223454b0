#include "fedida/oversampler.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace fedida;
namespace t = fedida::test;

namespace {

// Two (s, y) subgroups of the given sizes: (0, 0) then (1, 1).
TabularDataset two_groups(int first, int second, Rng& rng) {
  const int n = first + second;
  IndexMatrix s(n, 1);
  Labels y(n);
  for (int i = 0; i < n; ++i) {
    s(i, 0) = i < first ? 0 : 1;
    y(i) = i < first ? 0 : 1;
  }
  return t::make_dataset(t::random_matrix(n, 3, rng), s, y);
}

void check_postconditions(const TabularDataset& in, const AugmentedBatch& out) {
  const auto before = build_subgroup_index(in.s, in.y, true);
  const auto after = build_subgroup_index(out.s, out.y, true);
  CHECK(after.group_count() == before.group_count());
  for (const auto& [key, rows] : after.groups) {
    CHECK(before.groups.count(key) == 1);
    CHECK(rows.size() == out.n_target);
  }
  std::set<Eigen::Index> originals;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto src = out.source_row[static_cast<std::size_t>(r)];
    CHECK(out.s.row(r) == in.s.row(src));
    CHECK(out.y(r) == in.y(src));
    if (!out.synthetic_mask[static_cast<std::size_t>(r)]) {
      CHECK(out.a.row(r) == in.a.row(src));
      CHECK(originals.insert(src).second);
    }
  }
}

}  // namespace

TEST_CASE("oversized subgroup is downsampled without replacement") {
  Rng rng(1);
  const auto ds = two_groups(7, 3, rng);
  RoseConfig cfg;
  cfg.n_target = 5;
  const auto out = fairness_aware_rose(ds, cfg);
  CHECK(out.rows() == 10);
  int original_first = 0, synthetic_second = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const bool syn = out.synthetic_mask[static_cast<std::size_t>(r)];
    if (out.y(r) == 0) original_first += syn ? 0 : 1;
    if (out.y(r) == 1) synthetic_second += syn ? 1 : 0;
    CHECK(!(syn && out.y(r) == 0));
  }
  CHECK(original_first == 5);
  CHECK(synthetic_second == 2);
  check_postconditions(ds, out);
}

TEST_CASE("undersized subgroup keeps its rows and gains synthetic ones") {
  Rng rng(2);
  const auto ds = two_groups(5, 2, rng);
  RoseConfig cfg;
  cfg.n_target = 5;
  const auto out = fairness_aware_rose(ds, cfg);
  int orig = 0, syn = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (out.y(r) == 1) (out.synthetic_mask[static_cast<std::size_t>(r)] ? syn : orig) += 1;
  CHECK(orig == 2);
  CHECK(syn == 3);
  check_postconditions(ds, out);
}

TEST_CASE("a vanishing kernel reproduces the seed rows") {
  Rng rng(3);
  const auto ds = two_groups(9, 2, rng);
  RoseConfig cfg;
  cfg.smoothing = 1e-12;
  const auto out = fairness_aware_rose(ds, cfg);
  CHECK(out.n_target == 9);
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (out.synthetic_mask[static_cast<std::size_t>(r)])
      CHECK((out.a.row(r) - ds.a.row(out.source_row[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("noise covariance estimate") {
  Matrix g(2, 2);
  g << 0.0, 0.0, 2.0, 4.0;  // population sd (1, 2)
  const Vector fallback = Vector::Constant(2, 7.0);
  const Vector sigma = estimate_sigma(g, 0.5, fallback);
  CHECK(sigma(0) == doctest::Approx(0.25));
  CHECK(sigma(1) == doctest::Approx(1.0));

  Matrix one(1, 2);
  one << 3.0, 4.0;
  Vector fb(2);
  fb << 2.0, 3.0;
  const Vector single = estimate_sigma(one, 0.5, fb);
  CHECK(single(0) == doctest::Approx(1.0));
  CHECK(single(1) == doctest::Approx(2.25));

  Matrix constant(3, 2);
  constant << 1.0, 0.0, 1.0, 1.0, 1.0, 2.0;
  const Vector c = estimate_sigma(constant, 1.0, fb);
  CHECK(c(0) == doctest::Approx(4.0));
  CHECK(c(1) == doctest::Approx(2.0 / 3.0));

  CHECK(column_scale(g)(1) == doctest::Approx(2.0));
  CHECK(default_smoothing(16, 0) == doctest::Approx(0.1 * std::pow(16.0, -0.25)));
}

TEST_CASE("synthetic rows follow the kernel scale") {
  // Single seed row per draw; spread of synthetic rows estimates h * sigma.
  Rng rng(4);
  const int big = 4000;
  Matrix a(big + 4, 1);
  IndexMatrix s(big + 4, 1);
  Labels y(big + 4);
  std::normal_distribution<double> n01;
  for (int i = 0; i < big; ++i) {
    a(i, 0) = n01(rng);
    s(i, 0) = 0;
    y(i) = 0;
  }
  const double minority[] = {-1.0, 1.0, -1.0, 1.0};  // population sd 1
  for (int i = 0; i < 4; ++i) {
    a(big + i, 0) = minority[i];
    s(big + i, 0) = 1;
    y(big + i) = 1;
  }
  RoseConfig cfg;
  cfg.smoothing = 0.5;
  Rng draw(5);
  const auto out = fairness_aware_rose(a, s, y, build_subgroup_index(s, y, true), cfg, draw);
  double sq = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (out.synthetic_mask[static_cast<std::size_t>(r)]) {
      const double e = out.a(r, 0) - a(out.source_row[static_cast<std::size_t>(r)], 0);
      sq += e * e;
      ++count;
    }
  const double sd = std::sqrt(sq / count);
  // 3996 draws: sd of the sd estimate is about 0.5 / sqrt(2 * 3996) < 0.006.
  CHECK(std::abs(sd - 0.5) < 0.025);
}

TEST_CASE("random batches satisfy the postconditions") {
  Rng rng(6);
  std::uniform_int_distribution<int> size(4, 64);
  std::uniform_int_distribution<int> fixed(1, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    const auto ds = t::make_dataset(t::random_matrix(n, 4, rng), t::random_groups(n, 3, rng), t::random_labels(n, rng, 0.3));
    RoseConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    if (trial % 3 == 0) cfg.n_target = static_cast<std::size_t>(fixed(rng));
    const auto out = fairness_aware_rose(ds, cfg);
    if (out.passthrough) continue;
    check_postconditions(ds, out);
  }
}

TEST_CASE("single subgroup under the automatic target passes through") {
  Rng rng(7);
  const auto ds = t::make_dataset(t::random_matrix(6, 2, rng), IndexMatrix::Zero(6, 1), Labels::Ones(6));
  const auto out = fairness_aware_rose(ds, {});
  CHECK(out.passthrough);
  CHECK(out.a == ds.a);
  CHECK(std::none_of(out.synthetic_mask.begin(), out.synthetic_mask.end(), [](bool b) { return b; }));
}

TEST_CASE("configuration errors") {
  RoseConfig cfg;
  cfg.n_target = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n_target.reset();
  cfg.smoothing = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.smoothing = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  Rng rng(8);
  CHECK_THROWS_AS(fairness_aware_rose(t::make_dataset(Matrix(0, 2), IndexMatrix(0, 1), Labels(0)), {}), Error);
}

TEST_CASE("augmentation is deterministic given the seed") {
  Rng rng(9);
  const auto ds = t::make_dataset(t::random_matrix(50, 3, rng), t::random_groups(50, 4, rng), t::random_labels(50, rng));
  RoseConfig cfg;
  cfg.seed = 99;
  const auto a = fairness_aware_rose(ds, cfg);
  const auto b = fairness_aware_rose(ds, cfg);
  CHECK(a.a == b.a);
  CHECK(a.y == b.y);
  CHECK(a.source_row == b.source_row);
  cfg.seed = 100;
  CHECK(fairness_aware_rose(ds, cfg).a != a.a);
}

TEST_CASE("columns outside the perturbation mask are copied from the seed row") {
  Rng rng(10);
  auto ds = two_groups(12, 3, rng);
  for (Eigen::Index i = 0; i < ds.rows(); ++i) ds.a(i, 2) = static_cast<double>(i % 2);
  ds.continuous = {true, true, false};
  const auto out = fairness_aware_rose(ds, {});
  int synthetic = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (!out.synthetic_mask[static_cast<std::size_t>(r)]) continue;
    ++synthetic;
    const auto src = out.source_row[static_cast<std::size_t>(r)];
    CHECK(out.a(r, 2) == ds.a(src, 2));
    CHECK(out.a(r, 0) != ds.a(src, 0));
  }
  CHECK(synthetic == 9);
  Rng draw(1);
  CHECK_THROWS_AS(fairness_aware_rose(ds.a, ds.s, ds.y, build_subgroup_index(ds, true), {}, draw, {true}), Error);
}
