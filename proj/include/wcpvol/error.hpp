#pragma once

#include <stdexcept>
#include <string>

namespace wcpvol {

// Bad configuration or violated precondition on user-supplied parameters.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent data (files, masks, feature matrices).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wcpvol
