#ifndef ATRS_ERRORS_HPP_
#define ATRS_ERRORS_HPP_

#include <stdexcept>

namespace atrs {

/// Malformed or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or corrupt serialized data: instances, checkpoints.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace atrs

#endif  // ATRS_ERRORS_HPP_
