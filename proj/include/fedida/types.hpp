#ifndef FEDIDA_TYPES_HPP
#define FEDIDA_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedida {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using Labels = Eigen::VectorXi;

using RowList = std::vector<Eigen::Index>;

/// Failure raised by library operations (bad input, violated precondition).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure in user-supplied configuration; detected before any compute.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedida

#endif  // FEDIDA_TYPES_HPP
