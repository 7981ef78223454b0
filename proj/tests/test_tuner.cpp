#include "fedida/tuner.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace fedida;
namespace t = fedida::test;

namespace {

// One informative feature, balanced classes, two random groups.
TabularDataset cliff_data(Eigen::Index n, Rng& rng) {
  Matrix a = t::random_matrix(n, 1, rng);
  Labels y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = a(i, 0) > 0.0 ? 1 : 0;
  return t::make_dataset(std::move(a), t::random_groups(n, 2, rng), y);
}

double accuracy(const ModelParams& m, const TabularDataset& ds) {
  const auto p = forward(m, ds.a).probs;
  int hit = 0;
  for (Eigen::Index i = 0; i < ds.rows(); ++i) hit += ((p(i) >= 0.5 ? 1 : 0) == ds.y(i)) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ds.rows());
}

GammaCandidate cand(double g, double auroc, double dpd) { return {g, auroc, dpd, {}}; }

TabularDataset learnable(Eigen::Index n, Rng& rng) {
  Matrix a = t::random_matrix(n, 3, rng);
  std::normal_distribution<double> noise(0.0, 0.5);
  IndexMatrix s = t::random_groups(n, 2, rng);
  Labels y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = a(i, 0) + 0.8 * s(i, 0) + noise(rng) > 0.4 ? 1 : 0;
  return t::make_dataset(std::move(a), s, y);
}

}  // namespace

TEST_CASE("lambda search stopping rule") {
  const std::vector<double> grid{0.0, 1.0, 2.0, 3.0};
  auto decreasing = [](double l) { return 0.9 - 0.01 * l; };
  CHECK(search_lambda(grid, 1.0, decreasing).selected == 0.0);
  auto flat = [](double) { return 0.8; };
  const auto tr = search_lambda(grid, 0.995, flat);
  CHECK(tr.selected == 3.0);
  CHECK(tr.lambdas.size() == 4);
  CHECK(tr.acc0 == 0.8);
  // 0.9 * 0.995 = 0.8955: the candidate at 2 drops below and ends the walk.
  auto step = [](double l) { return l < 1.5 ? 0.9 : l < 2.5 ? 0.89 : 0.95; };
  const auto s = search_lambda(grid, 0.995, step);
  CHECK(s.selected == 1.0);
  CHECK(s.lambdas == std::vector<double>{0.0, 1.0, 2.0});

  LambdaSearchConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.grid = {0.5, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.grid = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.grid = {0.0, 1.0};
  cfg.degradation_factor = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("local lambda search stops before an accuracy cliff") {
  Rng rng(1);
  const auto train = cliff_data(2000, rng);
  const auto val = cliff_data(500, rng);
  FederationConfig base;
  base.batch_size = 64;
  LambdaSearchConfig cfg;
  cfg.grid = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  cfg.epochs = 5;

  // Direct evaluation: with lambda >= 2 the penalty's slope at w = 0 exceeds
  // the loss gradient, leaving a near-constant predictor.
  const auto init = initial_params(base, 1);
  FederationConfig at0 = base, at2 = base;
  at2.penalty.lambda = 2.0;
  const double acc0 = accuracy(local_train(init, train, at0, cfg.epochs, 5).params, val);
  const double acc2 = accuracy(local_train(init, train, at2, cfg.epochs, 5).params, val);
  CHECK(acc0 > 0.95);
  CHECK(acc2 < 0.995 * acc0);

  const auto tr = search_lambda_local(train, val, base, cfg, 5);
  CHECK(tr.selected < 2.0);
  CHECK(tr.acc0 == acc0);
}

TEST_CASE("combining client lambdas") {
  CHECK(combine_lambda({3.0, 2.0, 4.0}, 4) == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  CHECK(combine_lambda({1.0}, 1) == std::vector<double>{1.0});
  CHECK(combine_lambda({2.0, 2.0}, 2) == std::vector<double>{1.0, 2.0});
  std::string warning;
  CHECK(combine_lambda({0.0, 1.0}, 3, &warning) == std::vector<double>{0.0});
  CHECK(!warning.empty());
  CHECK_THROWS_AS(combine_lambda({}, 3), Error);

  Rng rng(2);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> per{u(rng), u(rng), u(rng)};
    const auto v = combine_lambda(per, 1 + trial % 7);
    CHECK(v.size() == static_cast<std::size_t>(1 + trial % 7));
    CHECK(std::is_sorted(v.begin(), v.end()));
    CHECK(std::adjacent_find(v.begin(), v.end()) == v.end());
    CHECK(v.back() == doctest::Approx(*std::min_element(per.begin(), per.end())).epsilon(1e-15));
  }
}

TEST_CASE("gamma grids") {
  const auto g = linspace(0.0001, 0.1, 10);
  REQUIRE(g.size() == 10);
  const double expected[] = {0.0001, 0.0112, 0.0223, 0.0334, 0.0445, 0.0556, 0.0667, 0.0778, 0.0889, 0.1};
  for (std::size_t i = 0; i < 10; ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  CHECK(g.back() == 0.1);

  auto r = refine_grid(g, 2, 10);
  CHECK(r.front() == doctest::Approx(0.0112));
  CHECK(r.back() == doctest::Approx(0.0334));
  CHECK(std::find(r.begin(), r.end(), g[2]) != r.end());
  CHECK(std::is_sorted(r.begin(), r.end()));

  r = refine_grid(g, 0, 10);
  CHECK(r.front() == g[0]);
  CHECK(r.back() == g[1]);
  r = refine_grid(g, 9, 10);
  CHECK(r.front() == g[8]);
  CHECK(r.back() == g[9]);

  for (std::size_t s = 0; s < g.size(); ++s)
    for (int m = 2; m <= 12; ++m) {
      const auto rr = refine_grid(g, s, m);
      CHECK(std::find(rr.begin(), rr.end(), g[s]) != rr.end());
      CHECK(rr.front() >= g[s == 0 ? 0 : s - 1]);
      CHECK(rr.back() <= g[std::min(s + 1, g.size() - 1)]);
    }
}

TEST_CASE("gamma selection rule") {
  CHECK(select_gamma({cand(0.1, 0.8, 0.3)}) == 0);
  CHECK(select_gamma({cand(0.1, 0.8, 0.30), cand(0.2, 0.8, 0.25)}) == 1);
  // The lower-DPD candidate fails the AUROC guard.
  CHECK(select_gamma({cand(0.1, 0.80, 0.30), cand(0.2, 0.79, 0.10)}) == 0);
  CHECK(select_gamma({cand(0.1, 0.80, 0.30), cand(0.2, 0.7965, 0.10)}) == 1);
  CHECK(select_gamma({cand(0.2, 0.8, 0.25), cand(0.1, 0.8, 0.25)}) == 1);
  CHECK(select_gamma({cand(0.1, 0.8, std::nan("")), cand(0.2, 0.8, 0.4)}) == 1);
  CHECK_THROWS_AS(select_gamma({}), Error);
}

TEST_CASE("gamma optimization is deterministic and the full pipeline ends on the refined grid") {
  Rng rng(3);
  std::vector<TabularDataset> train, val;
  for (int k = 0; k < 2; ++k) {
    train.push_back(learnable(200, rng));
    val.push_back(learnable(60, rng));
  }
  FederationConfig base;
  base.rounds = 2;
  base.local_epochs = {1};
  base.batch_size = 32;
  base.penalty.lambda = 0.2;
  base.seed = 11;
  const auto grid = linspace(0.0001, 0.1, 4);
  const auto a = optimize_gamma(grid, base, train, val, {});
  base.parallelism = 3;
  const auto b = optimize_gamma(grid, base, train, val, {});
  CHECK(a.best == b.best);
  REQUIRE(a.candidates.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.candidates[i].auroc == b.candidates[i].auroc);
    CHECK(a.candidates[i].client_reports.size() == 2);
  }
  CHECK(select_gamma(a.candidates) == a.best);

  const auto run = fedida_full(train, val, base, 0.0001, 0.1, 4, 3, {});
  CHECK(run.coarse_grid == grid);
  CHECK(std::find(run.refined_grid.begin(), run.refined_grid.end(), run.gamma_final) != run.refined_grid.end());
  CHECK(std::find(run.refined_grid.begin(), run.refined_grid.end(), run.coarse.gamma()) != run.refined_grid.end());
  FederationConfig final_cfg = base;
  final_cfg.penalty.gamma = run.gamma_final;
  CHECK(run.model.global == run_federation(train, final_cfg).global);
  const auto j = to_json(run);
  CHECK(j.at("gamma_final") == run.gamma_final);
}
