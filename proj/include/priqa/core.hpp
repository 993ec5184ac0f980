#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace priqa {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class ErrorCategory {
  usage,
  config,
  ingestion,
  integrity,
  range,
  shape,
  size,
  domain,
  numeric,
  alignment,
  correlation,
  io,
};

inline const char* to_string(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::ingestion: return "ingestion";
    case ErrorCategory::integrity: return "integrity";
    case ErrorCategory::range: return "range";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::size: return "size";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::alignment: return "alignment";
    case ErrorCategory::correlation: return "correlation";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

[[noreturn]] inline void fail(ErrorCategory cat, const std::string& msg) {
  throw Error(cat, msg);
}

#define PRIQA_REQUIRE(cond, cat, msg)                  \
  do {                                                 \
    if (!(cond)) ::priqa::fail((cat), (msg));          \
  } while (0)

}  // namespace priqa
