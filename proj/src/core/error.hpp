// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace splitplot {

enum class ErrorKind {
  structural,         // shape or dimension mismatch
  factorization,      // Cholesky pivot failure
  invalid_dimension,  // covariance / scenario dimension constraints
  unsupported,        // scenario not defined for this design
  invalid_tuple,      // repeated index inside an index tuple
  enumeration_cap,    // full U-statistic too large to enumerate
  invalid_design,     // sample sizes too small for the requested estimator
  degenerate,         // numerically degenerate quantity (t2 <= 0, t3 == 0, ...)
  domain,             // argument outside a function's domain
  usage,              // bad configuration or command line
  data,               // malformed input data
  io,                 // file system failures
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace splitplot
