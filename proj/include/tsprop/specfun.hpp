#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "tsprop/error.hpp"

namespace tsprop {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Natural log of a non-negative quantity. -inf encodes exact zero.
struct LogProb {
    double value = kNegInf;

    static LogProb from_prob(double p) {
        return LogProb{p > 0.0 ? std::log(p) : kNegInf};
    }
    static constexpr LogProb zero() { return LogProb{kNegInf}; }
    static constexpr LogProb one() { return LogProb{0.0}; }

    double prob() const { return std::exp(value); }
    bool is_zero() const { return value == kNegInf; }

    friend LogProb operator*(LogProb a, LogProb b) {
        return LogProb{a.value + b.value};
    }
    friend LogProb operator/(LogProb a, LogProb b) {
        return LogProb{a.value - b.value};
    }
    friend bool operator==(LogProb, LogProb) = default;
};

// Streaming log-sum-exp over non-negative terms given by their logs.
class LogSumAccumulator {
   public:
    void add(double log_term) {
        if (log_term == kNegInf) return;
        if (log_term <= max_) {
            sum_ += std::exp(log_term - max_);
        } else {
            sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
            max_ = log_term;
        }
    }
    void add(LogProb p) { add(p.value); }

    double log_value() const {
        return max_ == kNegInf ? kNegInf : max_ + std::log(sum_);
    }
    LogProb value() const { return LogProb{log_value()}; }

   private:
    double max_ = kNegInf;
    double sum_ = 0.0;
};

// Neumaier's compensated summation.
class CompensatedSum {
   public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

   private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double log_sum_exp(std::span<const double> log_terms) {
    LogSumAccumulator acc;
    for (double t : log_terms) acc.add(t);
    return acc.log_value();
}

// ln Gamma(x), x > 0. Backed by Boost's Lanczos-based lgamma.
inline double log_gamma(double x) {
    if (!(x > 0.0)) {
        throw DomainError("log_gamma: argument must be positive, got " +
                          std::to_string(x));
    }
    return boost::math::lgamma(x);
}

// ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b).
inline double log_beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw DomainError("log_beta: arguments must be positive");
    }
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

inline double std_normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Phi(z), evaluated through erfc so the lower tail keeps full relative
// precision; the upper tail saturates to 1.
inline double std_normal_cdf(double z) {
    if (std::isnan(z)) return z;
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// Phi^{-1}(p) for p in (0, 1); returns -inf / +inf at the endpoints.
inline double std_normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("std_normal_quantile: p outside [0,1]");
    }
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace detail {

// ln sum_{k=0}^{terms-1} C(r+k-1, k) q^k (1-q)^r, i.e. the negative-binomial
// CDF mass, accumulated in log space via the term ratio (r+k)/(k+1) * q.
inline double log_negbin_series(double log_q, double log_1mq, long r,
                                long terms) {
    LogSumAccumulator acc;
    double log_term = static_cast<double>(r) * log_1mq;
    for (long k = 0; k < terms; ++k) {
        acc.add(log_term);
        log_term += std::log(static_cast<double>(r + k) /
                             static_cast<double>(k + 1)) +
                    log_q;
    }
    return acc.log_value();
}

}  // namespace detail

// Regularised incomplete beta I_x(a, b) for integer a, b >= 1 using the
// finite series
//   I_x(a,b) = 1 - sum_{k<a} x^k (1-x)^b / ((b+k) B(1+k, b))
// and its mirror I_x(a,b) = sum_{k<b} (1-x)^k x^a / ((a+k) B(1+k, a)).
// Both series have non-negative terms; the smaller of the two tails is
// returned directly so small probabilities keep relative accuracy.
inline double reg_inc_beta_int(double x, long a, long b) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError("reg_inc_beta_int: x outside [0,1]");
    }
    if (a < 1 || b < 1) {
        throw DomainError("reg_inc_beta_int: a and b must be integers >= 1");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_x = std::log(x);
    const double log_1mx = std::log1p(-x);
    // upper = 1 - I_x(a,b), lower = I_x(a,b)
    const double log_upper = detail::log_negbin_series(log_x, log_1mx, b, a);
    const double log_lower = detail::log_negbin_series(log_1mx, log_x, a, b);
    double result = log_lower <= log_upper ? std::exp(log_lower)
                                           : 1.0 - std::exp(log_upper);
    return std::clamp(result, 0.0, 1.0);
}

}  // namespace tsprop
