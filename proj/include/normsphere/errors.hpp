#pragma once

#include <stdexcept>
#include <string>

namespace normsphere {

// Bad arguments: dimension mismatch, zero base point, out-of-range parameters.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The norm has no Frechet derivative at the requested point.
class NotDifferentiable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A point lies outside the validity radius of a chart.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two subspaces fail to form a direct sum of the ambient space.
class DecompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sphere samples are degenerate (rank deficient fit).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sphere samples do not lie on a hyperplane to first order: a corner or ridge.
class NonManifoldSuspected : public EstimationError {
 public:
  NonManifoldSuspected(const std::string& what, double residual, double threshold)
      : EstimationError(what), residual_(residual), threshold_(threshold) {}

  double residual() const { return residual_; }
  double threshold() const { return threshold_; }

 private:
  double residual_;
  double threshold_;
};

}  // namespace normsphere
