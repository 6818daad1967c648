#pragma once

#include <stdexcept>
#include <string>

namespace dysat {

/// Malformed input file (message carries the line number).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index or id outside its declared domain.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Tensor shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Softmax row with every entry masked out.
class DegenerateRowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required (gradients, losses).
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent model / run configuration, rejected before any computation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Negative-sampling distribution over an edgeless snapshot.
class EmptyDistributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classifier training split that contains a single class.
class DegenerateSplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metric undefined for the given inputs (e.g. AUC with one class).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dysat
