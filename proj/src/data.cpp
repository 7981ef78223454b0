#include "fedida/data.hpp"

#include "fedida/model.hpp"
#include "fedida/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace fedida {

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::sensitive: return "sensitive-categorical";
    case ColumnKind::outcome: return "outcome";
  }
  return "?";
}

ColumnKind parse_column_kind(const std::string& name) {
  if (name == "continuous") return ColumnKind::continuous;
  if (name == "categorical") return ColumnKind::categorical;
  if (name == "sensitive-categorical" || name == "sensitive") return ColumnKind::sensitive;
  if (name == "outcome") return ColumnKind::outcome;
  throw ConfigError("unknown column kind '" + name + "'");
}

void validate_schema(const Schema& schema) {
  int outcomes = 0, sensitive = 0;
  std::set<std::string> names;
  for (const auto& c : schema) {
    if (!names.insert(c.name).second) throw ConfigError("schema: duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::continuous) continue;
    if (c.categories.empty()) throw ConfigError("schema: column '" + c.name + "' has no categories");
    std::set<std::string> levels(c.categories.begin(), c.categories.end());
    if (levels.size() != c.categories.size())
      throw ConfigError("schema: column '" + c.name + "' has duplicate categories");
    if (c.kind == ColumnKind::outcome) {
      ++outcomes;
      if (c.categories.size() != 2)
        throw ConfigError("schema: outcome column '" + c.name + "' needs exactly two categories");
    }
    if (c.kind == ColumnKind::sensitive) ++sensitive;
  }
  if (outcomes != 1) throw ConfigError("schema: expected exactly one outcome column, found " + std::to_string(outcomes));
  if (sensitive < 1) throw ConfigError("schema: at least one sensitive column is required");
}

Schema schema_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("schema JSON must be a list of columns");
  Schema schema;
  for (const auto& cj : j) {
    ColumnSchema c;
    c.name = cj.at("name").get<std::string>();
    c.kind = parse_column_kind(cj.at("kind").get<std::string>());
    if (cj.contains("categories")) c.categories = cj.at("categories").get<std::vector<std::string>>();
    schema.push_back(std::move(c));
  }
  validate_schema(schema);
  return schema;
}

nlohmann::json to_json(const Schema& schema) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : schema) {
    nlohmann::json cj{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.kind != ColumnKind::continuous) cj["categories"] = c.categories;
    j.push_back(std::move(cj));
  }
  return j;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema file " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

TabularDataset TabularDataset::select(const RowList& rows) const {
  TabularDataset out;
  out.a = a(rows, Eigen::all);
  out.s = s(rows, Eigen::all);
  out.y = y(rows);
  out.row_ids.reserve(rows.size());
  for (auto r : rows) out.row_ids.push_back(row_ids[static_cast<std::size_t>(r)]);
  out.feature_names = feature_names;
  out.continuous = continuous;
  out.sensitive = sensitive;
  return out;
}

TabularDataset TabularDataset::concat(const std::vector<TabularDataset>& parts) {
  if (parts.empty()) throw Error("concat: no datasets");
  TabularDataset out;
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.rows();
  const auto& first = parts.front();
  out.a.resize(n, first.a.cols());
  out.s.resize(n, first.s.cols());
  out.y.resize(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (p.a.cols() != first.a.cols() || p.s.cols() != first.s.cols()) throw Error("concat: column mismatch");
    out.a.middleRows(at, p.rows()) = p.a;
    out.s.middleRows(at, p.rows()) = p.s;
    out.y.segment(at, p.rows()) = p.y;
    out.row_ids.insert(out.row_ids.end(), p.row_ids.begin(), p.row_ids.end());
    at += p.rows();
  }
  out.feature_names = first.feature_names;
  out.continuous = first.continuous;
  out.sensitive = first.sensitive;
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// RFC-4180 record splitting (quoted fields, doubled quotes).
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

int level_index(const ColumnSchema& col, const std::string& value) {
  const auto it = std::find(col.categories.begin(), col.categories.end(), value);
  if (it == col.categories.end())
    throw Error("column '" + col.name + "': value '" + value + "' is not among the schema categories");
  return static_cast<int>(it - col.categories.begin());
}

}  // namespace

TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema, LoadOptions options) {
  validate_schema(schema);
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("CSV file " + path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  std::vector<std::size_t> position(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end()) throw Error("schema column '" + schema[c].name + "' not found in CSV header");
    position[c] = static_cast<std::size_t>(it - header.begin());
  }

  TabularDataset ds;
  for (const auto& c : schema) {
    if (c.kind == ColumnKind::continuous) {
      ds.feature_names.push_back(c.name);
      ds.continuous.push_back(true);
    } else if (c.kind == ColumnKind::categorical) {
      for (const auto& level : c.categories) {
        ds.feature_names.push_back(c.name + "=" + level);
        ds.continuous.push_back(false);
      }
    } else if (c.kind == ColumnKind::sensitive) {
      ds.sensitive.push_back(c);
    }
  }

  std::vector<std::vector<double>> a_rows;
  std::vector<std::vector<int>> s_rows;
  std::vector<int> ys;
  std::vector<std::int64_t> ids;
  std::size_t line_no = 1, raw = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                  " fields, header has " + std::to_string(header.size()));
    const auto id = static_cast<std::int64_t>(raw++);
    if (std::any_of(cells.begin(), cells.end(), is_missing)) {
      ++ds.dropped_rows;
      continue;
    }
    std::vector<double> a_row;
    std::vector<int> s_row;
    int y = 0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& col = schema[c];
      const auto& cell = cells[position[c]];
      switch (col.kind) {
        case ColumnKind::continuous: {
          std::size_t used = 0;
          double v = 0.0;
          try {
            v = std::stod(cell, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != cell.size() || !std::isfinite(v))
            throw Error("column '" + col.name + "': '" + cell + "' is not a number (line " +
                        std::to_string(line_no) + ")");
          a_row.push_back(v);
          break;
        }
        case ColumnKind::categorical: {
          const int k = level_index(col, cell);
          for (std::size_t l = 0; l < col.categories.size(); ++l) a_row.push_back(static_cast<int>(l) == k ? 1.0 : 0.0);
          break;
        }
        case ColumnKind::sensitive: s_row.push_back(level_index(col, cell)); break;
        case ColumnKind::outcome: y = level_index(col, cell); break;
      }
    }
    a_rows.push_back(std::move(a_row));
    s_rows.push_back(std::move(s_row));
    ys.push_back(y);
    ids.push_back(id);
  }
  if (ys.empty()) throw Error("CSV file " + path.string() + " has no complete rows");

  const auto n = static_cast<Eigen::Index>(ys.size());
  ds.a.resize(n, static_cast<Eigen::Index>(ds.feature_names.size()));
  ds.s.resize(n, static_cast<Eigen::Index>(ds.sensitive.size()));
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < ds.a.cols(); ++j) ds.a(i, j) = a_rows[ui][static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < ds.s.cols(); ++j) ds.s(i, j) = s_rows[ui][static_cast<std::size_t>(j)];
    ds.y(i) = ys[ui];
  }
  ds.row_ids = std::move(ids);
  if (options.standardize) Standardizer::fit(ds).apply(ds);
  return ds;
}

Standardizer Standardizer::fit(const TabularDataset& train) {
  if (train.empty()) throw Error("Standardizer::fit: empty dataset");
  Standardizer st;
  const auto p = train.a.cols();
  st.mean = Vector::Zero(p);
  st.scale = Vector::Ones(p);
  st.mask = train.continuous;
  const double n = static_cast<double>(train.rows());
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!st.mask[static_cast<std::size_t>(j)]) continue;
    const double mu = train.a.col(j).sum() / n;
    const double var = (train.a.col(j).array() - mu).square().sum() / n;
    st.mean(j) = mu;
    st.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

void Standardizer::apply(TabularDataset& ds) const {
  if (ds.a.cols() != mean.size()) throw Error("Standardizer::apply: column count mismatch");
  for (Eigen::Index j = 0; j < ds.a.cols(); ++j)
    if (mask[static_cast<std::size_t>(j)]) ds.a.col(j) = (ds.a.col(j).array() - mean(j)) / scale(j);
}

void write_jsonl(const TabularDataset& ds, std::ostream& out) {
  nlohmann::json head{{"features", ds.feature_names},
                      {"continuous", ds.continuous},
                      {"sensitive", to_json(Schema(ds.sensitive.begin(), ds.sensitive.end()))},
                      {"rows", ds.rows()},
                      {"dropped_rows", ds.dropped_rows}};
  out << head.dump() << '\n';
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    nlohmann::json r;
    r["id"] = ds.row_ids[static_cast<std::size_t>(i)];
    std::vector<double> a(static_cast<std::size_t>(ds.a.cols()));
    for (Eigen::Index j = 0; j < ds.a.cols(); ++j) a[static_cast<std::size_t>(j)] = ds.a(i, j);
    std::vector<int> s(static_cast<std::size_t>(ds.s.cols()));
    for (Eigen::Index j = 0; j < ds.s.cols(); ++j) s[static_cast<std::size_t>(j)] = ds.s(i, j);
    r["a"] = std::move(a);
    r["s"] = std::move(s);
    r["y"] = ds.y(i);
    out << r.dump() << '\n';
  }
}

TabularDataset read_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("read_jsonl: missing header line");
  const auto head = nlohmann::json::parse(line);
  TabularDataset ds;
  ds.feature_names = head.at("features").get<std::vector<std::string>>();
  ds.continuous = head.at("continuous").get<std::vector<bool>>();
  for (const auto& cj : head.at("sensitive")) {
    ds.sensitive.push_back({cj.at("name").get<std::string>(), ColumnKind::sensitive,
                            cj.at("categories").get<std::vector<std::string>>()});
  }
  ds.dropped_rows = head.value("dropped_rows", std::size_t{0});
  const auto n = head.at("rows").get<Eigen::Index>();
  const auto p = static_cast<Eigen::Index>(ds.feature_names.size());
  const auto ps = static_cast<Eigen::Index>(ds.sensitive.size());
  ds.a.resize(n, p);
  ds.s.resize(n, ps);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw Error("read_jsonl: truncated input");
    const auto r = nlohmann::json::parse(line);
    ds.row_ids.push_back(r.at("id").get<std::int64_t>());
    for (Eigen::Index j = 0; j < p; ++j) ds.a(i, j) = r.at("a").at(static_cast<std::size_t>(j)).get<double>();
    for (Eigen::Index j = 0; j < ps; ++j) ds.s(i, j) = r.at("s").at(static_cast<std::size_t>(j)).get<int>();
    ds.y(i) = r.at("y").get<int>();
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> SubgroupIndex::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(groups.size());
  for (const auto& [key, rows] : groups) out.push_back(rows.size());
  return out;
}

std::size_t SubgroupIndex::total() const {
  std::size_t n = 0;
  for (const auto& [key, rows] : groups) n += rows.size();
  return n;
}

const GroupKey* SubgroupIndex::key_of(Eigen::Index row) const {
  for (const auto& [key, rows] : groups)
    if (std::find(rows.begin(), rows.end(), row) != rows.end()) return &key;
  return nullptr;
}

SubgroupIndex build_subgroup_index(const IndexMatrix& s, const Labels& y, bool by_outcome) {
  SubgroupIndex index;
  index.by_outcome = by_outcome;
  GroupKey key(static_cast<std::size_t>(s.cols()) + (by_outcome ? 1 : 0));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) key[static_cast<std::size_t>(j)] = s(i, j);
    if (by_outcome) key.back() = y(i);
    index.groups[key].push_back(i);
  }
  return index;
}

SubgroupIndex build_subgroup_index(const TabularDataset& ds, bool by_outcome) {
  return build_subgroup_index(ds.s, ds.y, by_outcome);
}

std::string key_label(const GroupKey& key, const std::vector<ColumnSchema>& sensitive) {
  std::string out;
  for (std::size_t j = 0; j < key.size(); ++j) {
    if (!out.empty()) out += ',';
    if (j < sensitive.size()) {
      const auto& col = sensitive[j];
      const auto k = static_cast<std::size_t>(key[j]);
      out += col.name + "=" + (k < col.categories.size() ? col.categories[k] : std::to_string(key[j]));
    } else {
      out += "y=" + std::to_string(key[j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

RowList iota_rows(Eigen::Index n) {
  RowList rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

// Splits `total` into parts proportional to `weights`, largest remainder first,
// ties broken by position.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  if (wsum <= 0.0) return counts;
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++counts[rema[k % rema.size()].second];
  return counts;
}

void require_both_outcomes(const TabularDataset& ds, const std::string& what) {
  const auto pos = ds.y.sum();
  if (pos == 0 || pos == ds.rows()) throw Error(what + " would receive no samples of outcome " + (pos == 0 ? "1" : "0"));
}

}  // namespace

std::vector<TabularDataset> partition(const TabularDataset& ds, const PartitionPlan& plan) {
  if (plan.client_count < 1) throw Error("partition: client_count must be at least 1");
  const auto clients = static_cast<std::size_t>(plan.client_count);
  if (static_cast<std::size_t>(ds.rows()) < clients) throw Error("partition: fewer rows than clients");
  Rng rng(derive_seed(plan.seed, {0x7061727469ULL}));
  std::vector<RowList> assignment(clients);

  if (plan.mode == PartitionMode::homogeneous) {
    RowList rows = iota_rows(ds.rows());
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto counts = apportion(rows.size(), std::vector<double>(clients, 1.0));
    std::size_t at = 0;
    for (std::size_t c = 0; c < clients; ++c) {
      assignment[c].assign(rows.begin() + static_cast<std::ptrdiff_t>(at),
                           rows.begin() + static_cast<std::ptrdiff_t>(at + counts[c]));
      at += counts[c];
    }
  } else {
    const auto it = std::find_if(ds.sensitive.begin(), ds.sensitive.end(),
                                 [&](const ColumnSchema& c) { return c.name == plan.skew_attribute; });
    if (it == ds.sensitive.end()) throw Error("partition: unknown skew attribute '" + plan.skew_attribute + "'");
    const auto col = static_cast<Eigen::Index>(it - ds.sensitive.begin());
    const auto strata = it->categories.size();
    if (plan.skew_weights.size() != clients) throw Error("partition: skew weights must list every client");
    for (std::size_t c = 0; c < clients; ++c) {
      const auto& w = plan.skew_weights[c];
      if (w.size() != strata) throw Error("partition: skew weights for client " + std::to_string(c) + " have wrong length");
      const double sum = std::accumulate(w.begin(), w.end(), 0.0);
      if (std::any_of(w.begin(), w.end(), [](double v) { return v < 0.0 || !std::isfinite(v); }) ||
          std::abs(sum - 1.0) > 1e-9)
        throw Error("partition: skew weights for client " + std::to_string(c) + " are not a distribution");
    }
    std::vector<RowList> by_stratum(strata);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) by_stratum[static_cast<std::size_t>(ds.s(i, col))].push_back(i);
    for (std::size_t j = 0; j < strata; ++j) {
      auto& rows = by_stratum[j];
      std::shuffle(rows.begin(), rows.end(), rng);
      std::vector<double> share(clients);
      for (std::size_t c = 0; c < clients; ++c) share[c] = plan.skew_weights[c][j];
      const auto counts = apportion(rows.size(), share);
      std::size_t at = 0;
      for (std::size_t c = 0; c < clients; ++c) {
        assignment[c].insert(assignment[c].end(), rows.begin() + static_cast<std::ptrdiff_t>(at),
                             rows.begin() + static_cast<std::ptrdiff_t>(at + counts[c]));
        at += counts[c];
      }
    }
    for (auto& rows : assignment) std::sort(rows.begin(), rows.end());
  }

  std::vector<TabularDataset> out;
  out.reserve(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    if (assignment[c].empty()) throw Error("partition: client " + std::to_string(c) + " would receive no rows");
    out.push_back(ds.select(assignment[c]));
    require_both_outcomes(out.back(), "partition: client " + std::to_string(c));
  }
  return out;
}

Split split_train_val_test(const TabularDataset& ds, double train, double val, double test, std::uint64_t seed) {
  if (train <= 0.0 || val <= 0.0 || test <= 0.0) throw Error("split ratios must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  std::array<RowList, 3> parts;
  for (int cls = 0; cls <= 1; ++cls) {
    RowList rows;
    for (Eigen::Index i = 0; i < ds.rows(); ++i)
      if (ds.y(i) == cls) rows.push_back(i);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto counts = apportion(rows.size(), {train, val, test});
    std::size_t at = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      parts[k].insert(parts[k].end(), rows.begin() + static_cast<std::ptrdiff_t>(at),
                      rows.begin() + static_cast<std::ptrdiff_t>(at + counts[k]));
      at += counts[k];
    }
  }
  static constexpr const char* names[] = {"train", "validation", "test"};
  for (std::size_t k = 0; k < 3; ++k) {
    if (parts[k].empty()) throw Error(std::string("split: ") + names[k] + " split would be empty");
    std::sort(parts[k].begin(), parts[k].end());
  }
  return {ds.select(parts[0]), ds.select(parts[1]), ds.select(parts[2])};
}

// ---------------------------------------------------------------------------

TabularDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 50) throw Error("generate_synthetic: n must be at least 50");
  if (spec.subgroups.size() < 2) throw Error("generate_synthetic: need at least two subgroups");
  if (spec.sensitive.empty()) throw Error("generate_synthetic: need at least one sensitive attribute");
  const auto p = spec.coefficients.size();
  if (p < 1) throw Error("generate_synthetic: coefficient vector is empty");
  if (!(spec.noise_scale >= 0.0)) throw Error("generate_synthetic: noise scale must be non-negative");
  double total = 0.0;
  std::vector<double> shares;
  for (std::size_t g = 0; g < spec.subgroups.size(); ++g) {
    const auto& sg = spec.subgroups[g];
    if (sg.share == 0.0)
      throw Error("generate_synthetic: subgroup " + std::to_string(g) + " has zero probability but rows are requested");
    if (!(sg.share > 0.0 && sg.share < 1.0))
      throw Error("generate_synthetic: subgroup " + std::to_string(g) + " share must lie in (0,1)");
    if (sg.sensitive.size() != spec.sensitive.size())
      throw Error("generate_synthetic: subgroup " + std::to_string(g) + " has wrong number of sensitive values");
    for (std::size_t j = 0; j < sg.sensitive.size(); ++j)
      if (sg.sensitive[j] < 0 || static_cast<std::size_t>(sg.sensitive[j]) >= spec.sensitive[j].categories.size())
        throw Error("generate_synthetic: subgroup " + std::to_string(g) + " sensitive value out of range");
    if (sg.mean.size() != 0 && sg.mean.size() != p)
      throw Error("generate_synthetic: subgroup " + std::to_string(g) + " mean has wrong length");
    total += sg.share;
    shares.push_back(sg.share);
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("generate_synthetic: subgroup shares must sum to 1");

  Rng rng(derive_seed(spec.seed, {0x73796e7468ULL}));
  std::discrete_distribution<std::size_t> pick(shares.begin(), shares.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  TabularDataset ds;
  ds.a.resize(spec.n, p);
  ds.s.resize(spec.n, static_cast<Eigen::Index>(spec.sensitive.size()));
  ds.y.resize(spec.n);
  for (Eigen::Index j = 0; j < p; ++j) {
    ds.feature_names.push_back("x" + std::to_string(j));
    ds.continuous.push_back(true);
  }
  ds.sensitive = spec.sensitive;
  for (auto& c : ds.sensitive) c.kind = ColumnKind::sensitive;
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const auto& sg = spec.subgroups[pick(rng)];
    for (Eigen::Index j = 0; j < p; ++j) {
      const double mu = sg.mean.size() ? sg.mean(j) : 0.0;
      ds.a(i, j) = mu + spec.noise_scale * normal(rng);
    }
    for (std::size_t j = 0; j < sg.sensitive.size(); ++j) ds.s(i, static_cast<Eigen::Index>(j)) = sg.sensitive[j];
    const double logit = ds.a.row(i).dot(spec.coefficients) + sg.intercept;
    ds.y(i) = unif(rng) < sigmoid(logit) ? 1 : 0;
    ds.row_ids.push_back(i);
  }
  return ds;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  try {
    for (const auto& cj : j.at("sensitive")) {
      spec.sensitive.push_back({cj.at("name").get<std::string>(), ColumnKind::sensitive,
                                cj.at("categories").get<std::vector<std::string>>()});
    }
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    spec.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    for (const auto& gj : j.at("subgroups")) {
      SyntheticSubgroup sg;
      sg.sensitive = gj.at("sensitive").get<std::vector<int>>();
      sg.share = gj.at("share").get<double>();
      sg.intercept = gj.value("intercept", 0.0);
      if (gj.contains("mean")) {
        const auto m = gj.at("mean").get<std::vector<double>>();
        sg.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
      }
      spec.subgroups.push_back(std::move(sg));
    }
    spec.noise_scale = j.value("noise_scale", 1.0);
    spec.n = j.at("n").get<Eigen::Index>();
    spec.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic dataset spec: ") + e.what());
  }
  return spec;
}

SyntheticSpec imbalanced_synthetic_spec(Eigen::Index n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.sensitive = {{"group", ColumnKind::sensitive, {"g0", "g1", "g2", "g3"}},
                    {"sex", ColumnKind::sensitive, {"M", "F"}}};
  spec.coefficients = (Vector(4) << 1.0, -0.8, 0.6, 0.4).finished();
  spec.noise_scale = 1.0;
  spec.n = n;
  spec.seed = seed;
  const double shares[8] = {0.40, 0.25, 0.12, 0.08, 0.07, 0.04, 0.032, 0.008};
  const double intercepts[8] = {0.5, -0.6, 0.2, -1.2, 0.0, -1.0, 0.4, -1.6};
  for (int g = 0; g < 8; ++g) {
    SyntheticSubgroup sg;
    sg.sensitive = {g / 2, g % 2};
    sg.share = shares[g];
    sg.intercept = intercepts[g];
    sg.mean = Vector::Constant(4, 0.15 * (g % 3) - 0.15);
    spec.subgroups.push_back(std::move(sg));
  }
  return spec;
}

}  // namespace fedida
