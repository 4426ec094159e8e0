#pragma once

#include <stdexcept>
#include <string>

namespace mdprune {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: configuration files, CSV tables, CLI arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector/config/store dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A latency query falls outside the measured range of a layer.
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity produced during a forward or backward pass.
class NumericalFault : public Error {
 public:
  NumericalFault(const std::string& what, int layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

}  // namespace mdprune
