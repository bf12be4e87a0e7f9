#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rdmkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Estimator { biased, unbiased };
enum class Metric { euclidean, mahalanobis };

inline const char* to_string(Estimator e) {
    return e == Estimator::biased ? "biased" : "unbiased";
}
inline const char* to_string(Metric m) {
    return m == Metric::euclidean ? "euclidean" : "mahalanobis";
}

// Error hierarchy. The CLI maps these onto its exit-code contract:
// InvalidArgument -> 2, InputError -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgument : public Error {
  public:
    using Error::Error;
};

// Problems with user-supplied data: files, shapes, value domains.
class InputError : public Error {
  public:
    using Error::Error;
};

class IngestionError : public InputError {
  public:
    using InputError::InputError;
};

class DomainError : public InputError {
  public:
    using InputError::InputError;
};

class MissingResidualsError : public InputError {
  public:
    using InputError::InputError;
};

class DegreesOfFreedomError : public InputError {
  public:
    using InputError::InputError;
};

// Numerical failures: conditioning, degeneracy, undefined quantities.
class NumericalError : public Error {
  public:
    using Error::Error;
};

class ConditioningError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class RegularizationError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class UndefinedSimilarityError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class DegenerateModelError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class CrossvalidationError : public InvalidArgument {
  public:
    using InvalidArgument::InvalidArgument;
};

inline Index pair_count(Index k) { return k * (k - 1) / 2; }

}  // namespace rdmkit
