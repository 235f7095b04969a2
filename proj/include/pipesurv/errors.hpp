#pragma once

#include <stdexcept>
#include <string>

namespace pipesurv {

// Bad parameters, inconsistent config values or invalid arguments to an
// estimator.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that cannot be used: empty datasets, schema mismatches, missing
// mandatory columns, failed quality review.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pipesurv
