#include "fedida/experiment.hpp"

#include "support.hpp"

#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <sys/wait.h>

using namespace fedida;
namespace t = fedida::test;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = FEDIDA_SOURCE_DIR;

json smoke_config() { return json::parse(t::read_file(kSource / "configs/synthetic_smoke.json")); }

fs::path write_config(const fs::path& dir, const json& cfg) {
  const auto p = dir / "config.json";
  t::write_file(p, cfg.dump(2));
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FEDIDA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) { return json::parse(t::read_file(p)); }

}  // namespace

TEST_CASE("configuration errors exit with code 2 before any output") {
  const auto dir = t::temp_dir("cli_errors");
  auto cfg = smoke_config();
  cfg["setups"][1]["penalty"]["lambda"] = -1.0;
  const auto path = write_config(dir, cfg);
  CHECK(cli("run -c " + path.string() + " -o " + (dir / "out").string()) == 2);
  CHECK(!fs::exists(dir / "out" / "results.csv"));

  cfg = smoke_config();
  cfg["dataset"] = {{"type", "csv"}, {"path", "nowhere.csv"}, {"schema", "nowhere.json"}};
  CHECK(cli("run -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 2);

  cfg = smoke_config();
  cfg["federation"]["learning_rate"] = 0.1;  // unknown key
  CHECK(cli("run -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 2);

  CHECK(cli("run -c " + (dir / "missing.json").string()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK_THROWS_AS(parse_config(cfg), ConfigError);
}

TEST_CASE("smoke run is fast, complete and reproducible") {
  const auto dir = t::temp_dir("cli_smoke");
  const auto cfg_path = write_config(dir, smoke_config());
  const auto start = std::chrono::steady_clock::now();
  REQUIRE(cli("run -c " + cfg_path.string() + " -o " + (dir / "a").string()) == 0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60.0);

  const auto manifest = read_json(dir / "a" / "manifest.json");
  CHECK(manifest.at("status") == "ok");
  for (const auto& artifact : manifest.at("artifacts")) CHECK(fs::exists(dir / "a" / artifact.get<std::string>()));
  for (const char* f : {"results.csv", "results.json", "client_reports.jsonl", "traces.jsonl", "plot_data.csv"})
    CHECK(std::find(manifest.at("artifacts").begin(), manifest.at("artifacts").end(), f) != manifest.at("artifacts").end());
  // Every file in the output directory is listed.
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a"))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") ++files;
  CHECK(files == manifest.at("artifacts").size());

  REQUIRE(cli("run -c " + cfg_path.string() + " -o " + (dir / "b").string()) == 0);
  for (const char* f : {"results.csv", "results.json", "client_reports.jsonl", "traces.jsonl", "plot_data.csv"})
    CHECK(t::read_file(dir / "a" / f) == t::read_file(dir / "b" / f));

  const auto results = read_json(dir / "a" / "results.json");
  CHECK(results.at("rows").size() == 2);
}

TEST_CASE("seed flag and environment output directory") {
  const auto dir = t::temp_dir("cli_flags");
  auto cfg = smoke_config();
  cfg.erase("output_dir");
  cfg["setups"] = json::array({cfg["setups"][0]});
  const auto path = write_config(dir, cfg);
  const std::string env = "FEDIDA_OUTPUT_DIR=" + (dir / "env").string() + " ";
  const int status = std::system((env + FEDIDA_CLI + " run -c " + path.string() + " -s 3 >/dev/null 2>&1").c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  CHECK(read_json(dir / "env" / "manifest.json").at("seeds").at("seed") == 3);
  REQUIRE(cli("run -c " + path.string() + " -o " + (dir / "other").string()) == 0);
  CHECK(t::read_file(dir / "env" / "results.csv") != t::read_file(dir / "other" / "results.csv"));
}

TEST_CASE("config hash changes exactly when the content does") {
  auto a = smoke_config();
  auto b = smoke_config();
  CHECK(config_hash(a) == config_hash(b));
  b["output_dir"] = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b["federation"]["rounds"] = 4;
  CHECK(config_hash(a) != config_hash(b));
  b = json::parse(a.dump(4));
  CHECK(config_hash(a) == config_hash(b));
}

TEST_CASE("variance study") {
  const auto dir = t::temp_dir("cli_variance");
  auto cfg = smoke_config();
  cfg["evaluation"]["bootstrap_replicates"] = 5;
  CHECK(cli("variance-study -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 2);

  cfg["evaluation"]["bootstrap_replicates"] = 10;
  REQUIRE(cli("variance-study -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 0);
  const auto v = read_json(dir / "out" / "variance.json").at("models").at("linear");
  CHECK(v.at("replicates") == 10);
  CHECK(v.at("rows").size() == 4);

  Rng rng(1);
  const auto test = t::make_dataset(t::random_matrix(300, 2, rng), t::random_groups(300, 3, rng), t::random_labels(300, rng));
  ModelParams m = init_linear(2);
  m.layers[0].weight << 1.0, -0.5;
  const auto same = variance_study(m, m, test, {}, 20, true, 4);
  for (const auto& row : same.rows) CHECK(row.difference() == 0.0);

  ModelParams constant = init_linear(2);
  constant.layers[0].bias(0) = 2.0;
  const auto flat = variance_study(constant, m, test, {}, 20, true, 4);
  CHECK(flat.rows[0].metric == MetricId::dpd);
  CHECK(flat.rows[0].var_baseline == 0.0);
  for (const auto& rep : flat.baseline_values) CHECK(rep[0] == 0.0);
  CHECK_THROWS_AS(variance_study(m, m, test, {}, 9, true, 4), ConfigError);

  // Stratified resampling keeps every subgroup's size.
  const auto index = build_subgroup_index(test, false);
  Rng draw(2);
  const auto rows = bootstrap_rows(index, test.rows(), true, draw);
  const auto resampled = test.select(rows);
  CHECK(build_subgroup_index(resampled, false).sizes() == index.sizes());
}

TEST_CASE("ablation cells") {
  auto cells = ablation_cells({{2.0, 3.0}, {true, false}});
  REQUIRE(cells.size() == 6);
  const char* variants[] = {"Baseline", "Fairness Only", "Fairness Only", "Oversampling Only", "FedIDA", "FedIDA"};
  for (std::size_t i = 0; i < 6; ++i) CHECK(cells[i].variant == variants[i]);
  CHECK(cells[2].lambda == 3.0);
  CHECK(cells[4].oversampling);
  cells = ablation_cells({{0.0}, {false}});
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].variant == "Baseline");
}

TEST_CASE("fairness-only training lowers DPD on engineered-bias synthetic data") {
  const auto dir = t::temp_dir("cli_ablation");
  auto cfg = smoke_config();
  // Outcome rates differ by group and x0 is a pure proxy for the group.
  cfg["dataset"] = {{"type", "synthetic"},
                    {"spec",
                     {{"n", 3000},
                      {"seed", 5},
                      {"sensitive", {{{"name", "group"}, {"categories", {"a", "b"}}}}},
                      {"coefficients", {0.0, 1.5}},
                      {"subgroups",
                       {{{"sensitive", {0}}, {"share", 0.6}, {"intercept", 1.0}, {"mean", {1.5, 0.0}}},
                        {{"sensitive", {1}}, {"share", 0.4}, {"intercept", -1.0}, {"mean", {-1.5, 0.0}}}}}}}};
  cfg["ablation"] = {{"lambdas", {3.0}}, {"oversampling", {false}}};
  REQUIRE(cli("ablation -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 0);
  const auto rows = read_json(dir / "out" / "ablation.json").at("rows");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].at("variant") == "Fairness Only");
  CHECK(rows[1].at("dpd").at("mean").get<double>() <= rows[0].at("dpd").at("mean").get<double>());
}

TEST_CASE("tuning commands and report") {
  const auto dir = t::temp_dir("cli_tune");
  const auto path = write_config(dir, smoke_config());
  const auto out = (dir / "out").string();
  REQUIRE(cli("tune-lambda -c " + path.string() + " -o " + out) == 0);
  const auto lam = read_json(dir / "out" / "lambda_search.json").at("models").at("linear");
  CHECK(lam.at("candidates").size() == 4);
  REQUIRE(cli("tune-gamma -c " + path.string() + " -o " + out) == 0);
  const auto gam = read_json(dir / "out" / "gamma_search.json").at("models").at("linear");
  const auto refined = gam.at("refined_grid").get<std::vector<double>>();
  CHECK(std::find(refined.begin(), refined.end(), gam.at("gamma_final").get<double>()) != refined.end());
  REQUIRE(cli("report -c " + path.string() + " -o " + out) == 0);
  CHECK(fs::exists(dir / "out" / "report.md"));
  const auto manifest = read_json(dir / "out" / "manifest.json");
  CHECK(manifest.at("runs").contains("tune-lambda"));
  CHECK(manifest.at("runs").contains("tune-gamma"));

  CHECK(cli("report -c " + path.string() + " -o " + (dir / "empty").string()) == 3);
}

TEST_CASE("summary statistics over clients") {
  const auto one = summarize({0.7});
  CHECK(one.sd == 0.0);
  CHECK(one.mean == 0.7);
  const auto two = summarize({0.2, 0.4, std::nan("")});
  CHECK(two.n == 2);
  CHECK(two.mean == doctest::Approx(0.3));
  CHECK(two.sd == doctest::Approx(std::sqrt(0.02)));
  CHECK(two.ci_lo == doctest::Approx(0.3 - 1.96 * std::sqrt(0.02) / std::sqrt(2.0)));

  const auto dir = t::temp_dir("cli_one_client");
  auto cfg = smoke_config();
  cfg["partition"]["clients"] = 1;
  cfg["setups"] = json::array({cfg["setups"][0]});
  REQUIRE(cli("run -c " + write_config(dir, cfg).string() + " -o " + (dir / "out").string()) == 0);
  const auto row = read_json(dir / "out" / "results.json").at("rows").at(0);
  for (const char* m : {"auroc", "dpd", "dfpr"}) CHECK(row.at(m).at("sd") == 0.0);
}
