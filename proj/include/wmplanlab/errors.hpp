#pragma once

#include <stdexcept>
#include <string>

namespace wmplan {

// Precondition or shape contract broken by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced during a forward or backward computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}
// Literal messages: no string is built unless the check fails.
inline void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

}  // namespace wmplan
