#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcd {

inline constexpr const char* kVersion = "0.1.0";

// Row-major so that .row(id) is a contiguous embedding vector.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Which entity anchors a ranking: a user ranking items, or an item ranking users.
enum class Side { User, Item };

inline const char* side_name(Side s) { return s == Side::User ? "user" : "item"; }

// Bad or inconsistent input data (exit code 2 at the CLI).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, divergence (exit code 3 at the CLI).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcd
