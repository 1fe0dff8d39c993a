#pragma once

#include <stdexcept>
#include <string>

namespace dmlshift {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input dimensions disagree with what the operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite input or an arithmetic breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Quadratic program has a zero-curvature coordinate with a nonzero
// unpenalized linear term, so the objective is unbounded below.
class DegenerateCoordinateError : public Error {
 public:
  DegenerateCoordinateError(long coordinate, const std::string& what)
      : Error(what), coordinate_(coordinate) {}
  long coordinate() const noexcept { return coordinate_; }

 private:
  long coordinate_;
};

class EmptySampleError : public Error {
 public:
  using Error::Error;
};

// A fold (or its complement) is too small for the learner being fit.
class FoldSizeError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmlshift
