#ifndef FEDIDA_TESTS_SUPPORT_HPP
#define FEDIDA_TESTS_SUPPORT_HPP

#include "fedida/data.hpp"
#include "fedida/random.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace fedida::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Labels random_labels(Eigen::Index rows, Rng& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Labels y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) y(i) = b(rng) ? 1 : 0;
  return y;
}

/// Single-column sensitive matrix with values in [0, groups).
inline IndexMatrix random_groups(Eigen::Index rows, int groups, Rng& rng) {
  std::uniform_int_distribution<int> u(0, groups - 1);
  IndexMatrix s(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) s(i, 0) = u(rng);
  return s;
}

inline TabularDataset make_dataset(Matrix a, IndexMatrix s, Labels y) {
  TabularDataset ds;
  ds.a = std::move(a);
  ds.s = std::move(s);
  ds.y = std::move(y);
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) ds.row_ids.push_back(i);
  for (Eigen::Index j = 0; j < ds.a.cols(); ++j) {
    ds.feature_names.push_back("x" + std::to_string(j));
    ds.continuous.push_back(true);
  }
  for (Eigen::Index j = 0; j < ds.s.cols(); ++j) {
    ColumnSchema c{"s" + std::to_string(j), ColumnKind::sensitive, {}};
    const int levels = ds.s.rows() ? ds.s.col(j).maxCoeff() + 1 : 1;
    for (int l = 0; l < levels; ++l) c.categories.push_back("v" + std::to_string(l));
    ds.sensitive.push_back(std::move(c));
  }
  return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fedida_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fedida::test

#endif  // FEDIDA_TESTS_SUPPORT_HPP
