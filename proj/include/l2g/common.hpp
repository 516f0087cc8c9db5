#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace l2g {

/// External node identifier (arbitrary non-negative 64-bit integer).
using NodeId = std::uint64_t;
/// Dense internal index (0..n-1).
using Index = std::int64_t;

// Coordinates are stored row-major: one row per node, matching the on-disk
// embedding layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Error category, mapped to CLI exit codes (config=2, data=3, numerical=4).
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw Error(ErrorKind::config, msg);
}
[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void fail_numerical(const std::string& msg) {
  throw Error(ErrorKind::numerical, msg);
}

}  // namespace l2g
