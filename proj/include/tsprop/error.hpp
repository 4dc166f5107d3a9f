#pragma once

#include <stdexcept>
#include <string>

namespace tsprop {

// All library failures derive from Error so callers (the CLI in particular)
// can map them onto exit codes by category.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Malformed or unreadable input (files, JSON, flags).
class InputError : public Error {
   public:
    using Error::Error;
};

// Argument outside the mathematical domain of an operation, or inconsistent
// dimensions.
class DomainError : public Error {
   public:
    using Error::Error;
};

// Covariance not symmetric / not positive semidefinite within tolerance.
class MatrixError : public Error {
   public:
    using Error::Error;
};

// Problem too large for the requested route (e.g. 2^(n-1) subsets).
class SizeError : public Error {
   public:
    using Error::Error;
};

// A belief whose variance collapsed to zero where a proper density is needed.
class DegenerateError : public Error {
   public:
    using Error::Error;
};

// Logged record with zero logging propensity.
class SupportError : public Error {
   public:
    using Error::Error;
};

// Numerical routine failed to reach its tolerance. Carries the best value
// found so callers may decide whether it is good enough.
class AccuracyError : public Error {
   public:
    AccuracyError(const std::string& what, double best_estimate,
                  double error_estimate)
        : Error(what),
          best_estimate_(best_estimate),
          error_estimate_(error_estimate) {}

    double best_estimate() const noexcept { return best_estimate_; }
    double error_estimate() const noexcept { return error_estimate_; }

   private:
    double best_estimate_;
    double error_estimate_;
};

// Optimizer did not converge while fitting a model.
class FitError : public Error {
   public:
    FitError(const std::string& what, int iterations, double grad_norm)
        : Error(what), iterations_(iterations), grad_norm_(grad_norm) {}

    int iterations() const noexcept { return iterations_; }
    double grad_norm() const noexcept { return grad_norm_; }

   private:
    int iterations_;
    double grad_norm_;
};

}  // namespace tsprop
