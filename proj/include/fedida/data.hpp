#ifndef FEDIDA_DATA_HPP
#define FEDIDA_DATA_HPP

#include "fedida/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedida {

enum class ColumnKind { continuous, categorical, sensitive, outcome };

std::string to_string(ColumnKind kind);
ColumnKind parse_column_kind(const std::string& name);

/// One column of the input table. Categorical kinds carry their ordered levels;
/// for the outcome column the levels are {negative, positive}.
struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;
};

using Schema = std::vector<ColumnSchema>;

/// Throws ConfigError unless: exactly one outcome column with two levels,
/// at least one sensitive column, non-empty duplicate-free level lists.
void validate_schema(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

/// Rows of model inputs `a`, sensitive category indices `s` and 0/1 outcomes `y`.
/// Sensitive attributes never enter `a`.
struct TabularDataset {
  Matrix a;
  IndexMatrix s;
  Labels y;
  std::vector<std::int64_t> row_ids;
  std::vector<std::string> feature_names;
  std::vector<bool> continuous;          // per column of `a`
  std::vector<ColumnSchema> sensitive;   // per column of `s`
  std::size_t dropped_rows = 0;

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index feature_count() const { return a.cols(); }
  bool empty() const { return rows() == 0; }

  TabularDataset select(const RowList& rows) const;
  /// Same columns, rows concatenated in argument order.
  static TabularDataset concat(const std::vector<TabularDataset>& parts);
};

struct LoadOptions {
  bool standardize = true;
};

/// Reads a header-first, comma-delimited UTF-8 file. "?" or empty cells mark a
/// row missing; such rows are dropped (any column counts, including columns the
/// schema does not use). Every schema column must appear in the header.
TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema, LoadOptions options = {});

/// Per-column affine map fitted on one dataset and frozen for the others.
struct Standardizer {
  Vector mean;
  Vector scale;
  std::vector<bool> mask;

  static Standardizer fit(const TabularDataset& train);
  void apply(TabularDataset& ds) const;
};

void write_jsonl(const TabularDataset& ds, std::ostream& out);
TabularDataset read_jsonl(std::istream& in);

// ---------------------------------------------------------------------------
// Subgroups

/// Sensitive category indices, with the outcome appended when grouped by outcome.
using GroupKey = std::vector<int>;

struct SubgroupIndex {
  std::map<GroupKey, RowList> groups;
  bool by_outcome = false;

  std::size_t group_count() const { return groups.size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t total() const;
  /// Group of a given row, or nullptr.
  const GroupKey* key_of(Eigen::Index row) const;
};

SubgroupIndex build_subgroup_index(const IndexMatrix& s, const Labels& y, bool by_outcome);
SubgroupIndex build_subgroup_index(const TabularDataset& ds, bool by_outcome);

/// "race=White,sex=Male" (plus ",y=1" for outcome keys); falls back to indices.
std::string key_label(const GroupKey& key, const std::vector<ColumnSchema>& sensitive);

// ---------------------------------------------------------------------------
// Partitioning and splitting

enum class PartitionMode { homogeneous, attribute_skewed };

struct PartitionPlan {
  int client_count = 5;
  PartitionMode mode = PartitionMode::homogeneous;
  /// attribute-skewed: name of the sensitive column defining the strata and
  /// per-client weights over its categories.
  std::string skew_attribute;
  std::vector<std::vector<double>> skew_weights;
  std::uint64_t seed = 0;
};

std::vector<TabularDataset> partition(const TabularDataset& ds, const PartitionPlan& plan);

struct Split {
  TabularDataset train;
  TabularDataset val;
  TabularDataset test;
};

/// Outcome-stratified split; per class, counts are allotted by largest remainder.
Split split_train_val_test(const TabularDataset& ds, double train, double val, double test, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSubgroup {
  std::vector<int> sensitive;  // one category index per sensitive attribute
  double share = 0.0;          // population probability
  Vector mean;                 // feature mean; empty = zeros
  double intercept = 0.0;      // logistic offset for this subgroup
};

/// Features ~ N(mean_k, noise^2 I); y ~ Bernoulli(sigmoid(coef . a + intercept_k)).
struct SyntheticSpec {
  std::vector<ColumnSchema> sensitive;
  std::vector<SyntheticSubgroup> subgroups;
  Vector coefficients;
  double noise_scale = 1.0;
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
};

TabularDataset generate_synthetic(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Eight subgroups over two binary-or-more attributes with one rare (0.8%)
/// cell and group-dependent outcome offsets. Used by smoke configs and tests.
SyntheticSpec imbalanced_synthetic_spec(Eigen::Index n, std::uint64_t seed);

}  // namespace fedida

#endif  // FEDIDA_DATA_HPP
