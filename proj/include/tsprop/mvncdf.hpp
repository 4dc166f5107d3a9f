#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "tsprop/error.hpp"
#include "tsprop/random.hpp"
#include "tsprop/specfun.hpp"

namespace tsprop {

// P(Z <= upper) for Z ~ N(mean, cov).
struct MvnProblem {
    Eigen::VectorXd upper;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct MvnResult {
    double value = 0.0;
    double error_estimate = 0.0;
    std::size_t samples_used = 0;
};

struct MvnOptions {
    double target_abs_err = 1e-5;
    std::size_t max_points = std::size_t{1} << 20;  // per random shift
    Seed seed = 0;
};

namespace detail {

inline constexpr int kMvnShifts = 12;
inline constexpr std::size_t kMvnFirstPoints = 1024;

inline std::vector<double> first_primes(std::size_t count) {
    std::vector<double> primes;
    primes.reserve(count);
    for (long c = 2; primes.size() < count; ++c) {
        bool is_prime = true;
        for (long d = 2; d * d <= c; ++d) {
            if (c % d == 0) {
                is_prime = false;
                break;
            }
        }
        if (is_prime) primes.push_back(static_cast<double>(c));
    }
    return primes;
}

// Genz's separation-of-variables form of the MVN orthant-type probability,
// after a prioritized pivoted Cholesky factorization. Rows whose conditional
// variance vanishes become hard linear constraints on the earlier variables.
class MvnIntegrand {
   public:
    MvnIntegrand(Eigen::MatrixXd cov, Eigen::VectorXd b) {
        const Eigen::Index k = b.size();
        const double trace = std::abs(cov.trace());
        const double max_diag = cov.diagonal().maxCoeff();
        const double zero_tol = 1e-12 * std::max(max_diag, 0.0);
        const double neg_tol = -1e-8 * trace;

        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(k, k);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(k);
        Eigen::Index active = 0;
        for (Eigen::Index i = 0; i < k; ++i) {
            Eigen::Index best = -1;
            double best_p = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = i; j < k; ++j) {
                const double s2 = cov(j, j) - L.row(j).head(i).squaredNorm();
                if (s2 < neg_tol) {
                    throw MatrixError("covariance is not positive semidefinite");
                }
                if (s2 <= zero_tol) continue;
                const double num = b[j] - L.row(j).head(i).dot(y.head(i));
                const double p = std_normal_cdf(num / std::sqrt(s2));
                if (p < best_p) {
                    best_p = p;
                    best = j;
                }
            }
            if (best < 0) break;
            if (best != i) {
                std::swap(b[i], b[best]);
                L.row(i).swap(L.row(best));
                cov.row(i).swap(cov.row(best));
                cov.col(i).swap(cov.col(best));
            }
            const double s = std::sqrt(cov(i, i) - L.row(i).head(i).squaredNorm());
            L(i, i) = s;
            for (Eigen::Index r = i + 1; r < k; ++r) {
                L(r, i) = (cov(r, i) - L.row(r).head(i).dot(L.row(i).head(i))) / s;
            }
            const double t = (b[i] - L.row(i).head(i).dot(y.head(i))) / s;
            const double p = std_normal_cdf(t);
            y[i] = p > 1e-300 ? -std_normal_pdf(t) / p : t;
            active = i + 1;
        }
        for (Eigen::Index r = active; r < k; ++r) {
            const double s2 = cov(r, r) - L.row(r).head(active).squaredNorm();
            if (s2 < neg_tol) {
                throw MatrixError("covariance is not positive semidefinite");
            }
        }
        active_ = active;
        constraints_ = k - active;
        L_ = std::move(L);
        b_ = std::move(b);
        z_.resize(std::max<Eigen::Index>(active_, 1));
    }

    // Number of uniforms the integrand consumes.
    Eigen::Index dim() const noexcept {
        if (active_ == 0) return 0;
        return active_ - 1 + (constraints_ > 0 ? 1 : 0);
    }
    Eigen::Index active() const noexcept { return active_; }

    double operator()(const double* w) {
        if (active_ == 0) return constraints_satisfied(0) ? 1.0 : 0.0;
        double f = 1.0;
        const bool need_last = constraints_ > 0;
        for (Eigen::Index i = 0; i < active_; ++i) {
            const double num = b_[i] - L_.row(i).head(i).dot(z_.head(i));
            const double e = std_normal_cdf(num / L_(i, i));
            f *= e;
            if (f <= 0.0) return 0.0;
            if (i + 1 < active_ || need_last) {
                double u = w[i] * e;
                u = std::clamp(u, 1e-300, 1.0 - 1e-16);
                z_[i] = std_normal_quantile(u);
            }
        }
        if (need_last && !constraints_satisfied(active_)) return 0.0;
        return f;
    }

   private:
    bool constraints_satisfied(Eigen::Index used) const {
        for (Eigen::Index r = active_; r < active_ + constraints_; ++r) {
            double lhs = 0.0;
            double mag = std::abs(b_[r]);
            for (Eigen::Index m = 0; m < used; ++m) {
                lhs += L_(r, m) * z_[m];
                mag += std::abs(L_(r, m) * z_[m]);
            }
            if (b_[r] - lhs < -1e-10 * (1.0 + mag)) return false;
        }
        return true;
    }

    Eigen::MatrixXd L_;
    Eigen::VectorXd b_;
    Eigen::VectorXd z_;
    Eigen::Index active_ = 0;
    Eigen::Index constraints_ = 0;
};

}  // namespace detail

// Multivariate normal CDF by randomized quasi-Monte Carlo over Genz's
// separation-of-variables transform. The point set is the extensible
// rank-1 lattice with generator frac(sqrt(prime_j)), periodized with the
// baker's transform and symmetrized antithetically. The error estimate is
// three standard errors across 12 independent random shifts.
inline MvnResult mvn_cdf(const MvnProblem& p, const MvnOptions& opt = {}) {
    const Eigen::Index k = p.upper.size();
    if (k < 1) throw DomainError("mvn_cdf: dimension must be >= 1");
    if (p.mean.size() != k || p.cov.rows() != k || p.cov.cols() != k) {
        throw DomainError("mvn_cdf: dimension mismatch");
    }
    if (!(opt.target_abs_err > 0.0 && opt.target_abs_err <= 0.1)) {
        throw DomainError("mvn_cdf: target_abs_err must lie in (0, 0.1]");
    }
    if (opt.max_points < 1) throw DomainError("mvn_cdf: max_points must be >= 1");
    if (!p.cov.allFinite() || !p.mean.allFinite()) {
        throw DomainError("mvn_cdf: mean and covariance must be finite");
    }
    const double scale = std::max(1.0, p.cov.cwiseAbs().maxCoeff());
    if ((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw MatrixError("mvn_cdf: covariance is not symmetric");
    }

    // Coordinates with an infinite upper limit never bind.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::isnan(p.upper[i])) throw DomainError("mvn_cdf: NaN upper limit");
        if (p.upper[i] == -std::numeric_limits<double>::infinity()) return {};
        if (p.upper[i] != std::numeric_limits<double>::infinity()) keep.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    if (m == 0) return {1.0, 0.0, 0};

    Eigen::VectorXd b(m);
    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        b[i] = p.upper[keep[i]] - p.mean[keep[i]];
        for (Eigen::Index j = 0; j < m; ++j) cov(i, j) = p.cov(keep[i], keep[j]);
        if (cov(i, i) < -1e-8 * scale) {
            throw MatrixError("mvn_cdf: negative variance");
        }
    }

    if (m == 1) {
        const double s2 = cov(0, 0);
        if (s2 > 0.0) return {std_normal_cdf(b[0] / std::sqrt(s2)), 0.0, 0};
        return {b[0] >= 0.0 ? 1.0 : 0.0, 0.0, 0};
    }

    detail::MvnIntegrand integrand(std::move(cov), std::move(b));
    const Eigen::Index dim = integrand.dim();
    if (dim == 0) {
        const double v = integrand(nullptr);
        return {std::clamp(v, 0.0, 1.0), 0.0, 0};
    }

    const auto primes = detail::first_primes(static_cast<std::size_t>(dim));
    std::vector<double> gen(primes.size());
    for (std::size_t j = 0; j < gen.size(); ++j) {
        const double r = std::sqrt(primes[j]);
        gen[j] = r - std::floor(r);
    }

    constexpr int S = detail::kMvnShifts;
    Rng rng = make_rng(opt.seed);
    std::vector<std::vector<double>> shifts(S, std::vector<double>(gen.size()));
    for (auto& s : shifts) {
        for (double& v : s) v = uniform01(rng);
    }

    std::array<double, S> sums{};
    std::vector<double> w(gen.size()), wa(gen.size());
    std::size_t done = 0;
    std::size_t next = std::min<std::size_t>(opt.max_points, detail::kMvnFirstPoints);
    double mean = 0.0;
    double err = 0.0;
    for (;;) {
        for (int s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t i = done + 1; i <= next; ++i) {
                const double fi = static_cast<double>(i);
                for (std::size_t j = 0; j < gen.size(); ++j) {
                    double x = fi * gen[j] + shifts[s][j];
                    x -= std::floor(x);
                    w[j] = std::abs(2.0 * x - 1.0);
                    wa[j] = 1.0 - w[j];
                }
                acc += 0.5 * (integrand(w.data()) + integrand(wa.data()));
            }
            sums[s] += acc;
        }
        done = next;
        mean = 0.0;
        for (double v : sums) mean += v / static_cast<double>(done);
        mean /= S;
        double ss = 0.0;
        for (double v : sums) {
            const double d = v / static_cast<double>(done) - mean;
            ss += d * d;
        }
        err = 3.0 * std::sqrt(ss / (S * (S - 1.0)));
        if (err <= opt.target_abs_err || done >= opt.max_points) break;
        next = std::min(opt.max_points, 2 * done);
    }
    return {std::clamp(mean, 0.0, 1.0), err, 2 * done * S};
}

}  // namespace tsprop
