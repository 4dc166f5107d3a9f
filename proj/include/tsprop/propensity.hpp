#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "tsprop/beliefs.hpp"
#include "tsprop/error.hpp"
#include "tsprop/mvncdf.hpp"
#include "tsprop/specfun.hpp"

namespace tsprop {

// A probability together with an estimate of its absolute error.
struct ProbEstimate {
    double value = 0.0;
    double abs_err = 0.0;
};

enum class PropensityMethod {
    GaussianMvn,
    GaussianJoint,
    BetaDirect,
    BetaInclExcl,
    Quadrature,
    MonteCarlo
};

inline std::string_view to_string(PropensityMethod m) {
    switch (m) {
        case PropensityMethod::GaussianMvn: return "gaussian_mvn";
        case PropensityMethod::GaussianJoint: return "gaussian_joint";
        case PropensityMethod::BetaDirect: return "beta_direct";
        case PropensityMethod::BetaInclExcl: return "beta_inclexcl";
        case PropensityMethod::Quadrature: return "quadrature";
        case PropensityMethod::MonteCarlo: return "monte_carlo";
    }
    return "?";
}

// Selection probability of every action under Thompson sampling.
struct PropensityVector {
    std::vector<double> probs;
    PropensityMethod method = PropensityMethod::Quadrature;
    double abs_err = 0.0;

    double sum() const {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }
};

enum class BetaRoute { Auto, Direct, InclExcl };
enum class GaussianRoute { Auto, Mvn, Joint, Quadrature };

inline constexpr std::size_t kMaxInclExclActions = 20;

namespace detail {

inline void check_target(const BeliefSet& set, std::size_t target) {
    if (target >= set.size()) {
        throw DomainError("target action index " + std::to_string(target) +
                          " out of range");
    }
}

inline void require_kind(const BeliefSet& set, BeliefKind kind,
                         std::string_view op) {
    if (set.kind() != kind) {
        throw DomainError(std::string(op) + " requires " +
                          std::string(to_string(kind)) + " beliefs, got " +
                          std::string(to_string(set.kind())));
    }
}

// Multivariate-normal form of the argmax probability for independent
// Gaussian beliefs: P(r_t >= r_j for all j) = F(mu_t 1 | m, V) where m holds
// the other means and V = diag(sigma_j^2) + sigma_t^2 11^T.
inline ProbEstimate gaussian_argmax_mvn(const Vector& mu, const Vector& s2,
                                        std::size_t target,
                                        const MvnOptions& opt) {
    const auto n = mu.size();
    const auto t = static_cast<Eigen::Index>(target);
    MvnProblem p;
    p.upper = Vector::Constant(n - 1, mu[t]);
    p.mean.resize(n - 1);
    p.cov = Matrix::Constant(n - 1, n - 1, s2[t]);
    Eigen::Index row = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == t) continue;
        p.mean[row] = mu[j];
        p.cov(row, row) += s2[j];
        ++row;
    }
    const MvnResult r = mvn_cdf(p, opt);
    return {r.value, r.error_estimate};
}

// P_min of the first entry of `params` among all of them, in the
// orientation where each other action's pseudo-count `first` bounds the
// nested sums. The summand depends on the inner indices only through their
// sum, so the per-action weights are convolved instead of enumerated.
inline double beta_pmin_dp(std::span<const std::pair<long, long>> params) {
    const auto [a1, b1] = params.front();
    long beta_total = 0;
    for (auto [a, b] : params) beta_total += b;

    std::vector<double> h{0.0};  // log weights indexed by s = sum of j's
    for (std::size_t k = 1; k < params.size(); ++k) {
        const auto [ak, bk] = params[k];
        std::vector<double> g(static_cast<std::size_t>(ak));
        for (long j = 0; j < ak; ++j) {
            g[j] = -std::log(static_cast<double>(bk + j)) -
                   log_beta(1.0 + static_cast<double>(j), static_cast<double>(bk));
        }
        std::vector<double> next(h.size() + g.size() - 1);
        for (std::size_t s = 0; s < next.size(); ++s) {
            LogSumAccumulator acc;
            const std::size_t jlo = s >= h.size() ? s - h.size() + 1 : 0;
            const std::size_t jhi = std::min(s, g.size() - 1);
            for (std::size_t j = jlo; j <= jhi; ++j) acc.add(h[s - j] + g[j]);
            next[s] = acc.log_value();
        }
        h = std::move(next);
    }

    const double log_norm = log_beta(static_cast<double>(a1), static_cast<double>(b1));
    LogSumAccumulator total;
    for (std::size_t s = 0; s < h.size(); ++s) {
        total.add(h[s] +
                  log_beta(static_cast<double>(a1) + static_cast<double>(s),
                           static_cast<double>(beta_total)) -
                  log_norm);
    }
    return std::clamp(std::exp(total.log_value()), 0.0, 1.0);
}

// (alpha, beta) of the target first, then the others in index order.
inline std::vector<std::pair<long, long>> relabel_beta(const BeliefSet& set,
                                                       std::size_t target,
                                                       bool swap_params) {
    std::vector<std::pair<long, long>> out;
    out.reserve(set.size());
    auto push = [&](const RewardBelief& b) {
        if (swap_params) {
            out.emplace_back(b.beta(), b.alpha());
        } else {
            out.emplace_back(b.alpha(), b.beta());
        }
    };
    push(set[target]);
    for (std::size_t j = 0; j < set.size(); ++j) {
        if (j != target) push(set[j]);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian and log-normal beliefs

// Independent Normal beliefs (joint_cov, if any, is ignored).
inline ProbEstimate gaussian_propensity(const BeliefSet& set, std::size_t target,
                                        const MvnOptions& opt = {}) {
    detail::require_kind(set, BeliefKind::Normal, "gaussian_propensity");
    detail::check_target(set, target);
    return detail::gaussian_argmax_mvn(set.mus(), set.sigma2s(), target, opt);
}

// exp is monotone, so this is exactly the Gaussian computation on the
// underlying (mu, sigma2).
inline ProbEstimate lognormal_propensity(const BeliefSet& set, std::size_t target,
                                         const MvnOptions& opt = {}) {
    detail::require_kind(set, BeliefKind::Lognormal, "lognormal_propensity");
    detail::check_target(set, target);
    return detail::gaussian_argmax_mvn(set.mus(), set.sigma2s(), target, opt);
}

// Correlated Normal beliefs: P(d_j > 0 for all j != t) where
// d_j = r_t - r_j has covariance C_tt - C_tj - C_kt + C_jk. Actions that are
// exact copies of the target (zero-variance, zero-mean difference) share the
// target's mass uniformly.
inline ProbEstimate gaussian_propensity_joint(const BeliefSet& set,
                                              std::size_t target,
                                              const MvnOptions& opt = {}) {
    detail::require_kind(set, BeliefKind::Normal, "gaussian_propensity_joint");
    detail::check_target(set, target);
    if (!set.has_joint_cov()) {
        throw DomainError("gaussian_propensity_joint requires joint_cov");
    }
    const Matrix& C = *set.joint_cov();
    const Vector mu = set.mus();
    const auto n = static_cast<Eigen::Index>(set.size());
    const auto t = static_cast<Eigen::Index>(target);
    const double var_tol = 1e-12 * C.diagonal().maxCoeff();

    std::vector<Eigen::Index> keep;
    int ties = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == t) continue;
        const double var = C(t, t) - 2.0 * C(t, j) + C(j, j);
        if (var > var_tol) {
            keep.push_back(j);
            continue;
        }
        const double diff = mu[t] - mu[j];
        const double mean_tol =
            1e-12 * (1.0 + std::abs(mu[t]) + std::abs(mu[j]));
        if (diff > mean_tol) continue;      // always beaten
        if (diff < -mean_tol) return {};    // never the maximum
        ++ties;
    }
    const double share = 1.0 / static_cast<double>(ties + 1);
    if (keep.empty()) return {share, 0.0};

    const auto k = static_cast<Eigen::Index>(keep.size());
    MvnProblem p;
    p.upper = Vector::Zero(k);
    p.mean.resize(k);
    p.cov.resize(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        const Eigen::Index j = keep[a];
        // P(d > 0) = P(-d <= 0), -d_j has mean mu_j - mu_t.
        p.mean[a] = mu[j] - mu[t];
        for (Eigen::Index b = 0; b < k; ++b) {
            const Eigen::Index l = keep[b];
            p.cov(a, b) = C(t, t) - C(t, j) - C(l, t) + C(j, l);
        }
    }
    p.cov = 0.5 * (p.cov + p.cov.transpose());
    const MvnResult r = mvn_cdf(p, opt);
    return {share * r.value, share * r.error_estimate};
}

// ---------------------------------------------------------------------------
// Beta beliefs with integer parameters

// P(p_i > p_j) for p_i ~ Beta(alpha_i, beta_i), p_j ~ Beta(alpha_j, beta_j):
//   sum_{m<alpha_i} B(alpha_j+m, beta_i+beta_j)
//                   / ((beta_i+m) B(1+m, beta_i) B(alpha_j, beta_j))
inline double beta_pairwise(long alpha_i, long beta_i, long alpha_j, long beta_j) {
    if (alpha_i < 1 || beta_i < 1 || alpha_j < 1 || beta_j < 1) {
        throw DomainError("beta_pairwise: parameters must be integers >= 1");
    }
    const double bi = static_cast<double>(beta_i);
    const double aj = static_cast<double>(alpha_j);
    const double bj = static_cast<double>(beta_j);
    const double log_bj = log_beta(aj, bj);
    LogSumAccumulator acc;
    for (long m = 0; m < alpha_i; ++m) {
        const double dm = static_cast<double>(m);
        acc.add(log_beta(aj + dm, bi + bj) - std::log(bi + dm) -
                log_beta(1.0 + dm, bi) - log_bj);
    }
    return std::clamp(std::exp(acc.log_value()), 0.0, 1.0);
}

// Probability that the target's draw is the strict minimum.
inline double beta_pmin(const BeliefSet& set, std::size_t target) {
    detail::require_kind(set, BeliefKind::BetaInt, "beta_pmin");
    detail::check_target(set, target);
    const auto params = detail::relabel_beta(set, target, false);
    return detail::beta_pmin_dp(params);
}

// Probability that the target's draw is the strict maximum. Beta(a, b) and
// 1 - Beta(b, a) are equal in law, so this is P_min with every pair swapped.
inline double beta_pmax_direct(const BeliefSet& set, std::size_t target) {
    detail::require_kind(set, BeliefKind::BetaInt, "beta_pmax_direct");
    detail::check_target(set, target);
    const auto params = detail::relabel_beta(set, target, true);
    return detail::beta_pmin_dp(params);
}

// Same quantity via inclusion-exclusion over subsets S of the other actions:
//   1 + sum_{S nonempty} (-1)^{|S|} P_min(target | S + target)
inline double beta_pmax_inclexcl(const BeliefSet& set, std::size_t target) {
    detail::require_kind(set, BeliefKind::BetaInt, "beta_pmax_inclexcl");
    detail::check_target(set, target);
    if (set.size() > kMaxInclExclActions) {
        throw SizeError("beta_pmax_inclexcl: at most " +
                        std::to_string(kMaxInclExclActions) + " actions");
    }
    const auto params = detail::relabel_beta(set, target, false);
    const std::size_t others = params.size() - 1;
    CompensatedSum total;
    total.add(1.0);
    std::vector<std::pair<long, long>> subset;
    subset.reserve(params.size());
    for (std::uint32_t mask = 1; mask < (std::uint32_t{1} << others); ++mask) {
        subset.clear();
        subset.push_back(params.front());
        for (std::size_t j = 0; j < others; ++j) {
            if (mask & (std::uint32_t{1} << j)) subset.push_back(params[j + 1]);
        }
        const double term = detail::beta_pmin_dp(subset);
        total.add((subset.size() - 1) % 2 == 1 ? -term : term);
    }
    return std::clamp(total.value(), 0.0, 1.0);
}

// Which route Auto resolves to for this set.
inline BetaRoute resolve_beta_route(const BeliefSet& set, BetaRoute route) {
    if (route != BetaRoute::Auto) return route;
    long sum_alpha = 0;
    long sum_beta = 0;
    for (const auto& b : set.beliefs()) {
        sum_alpha += b.alpha();
        sum_beta += b.beta();
    }
    if (sum_beta <= sum_alpha) return BetaRoute::Direct;
    if (set.size() <= 10) return BetaRoute::InclExcl;
    return BetaRoute::Direct;
}

inline PropensityVector beta_propensities(const BeliefSet& set,
                                          BetaRoute route = BetaRoute::Auto) {
    detail::require_kind(set, BeliefKind::BetaInt, "beta_propensities");
    const BetaRoute r = resolve_beta_route(set, route);
    PropensityVector out;
    out.probs.resize(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.probs[i] = r == BetaRoute::Direct ? beta_pmax_direct(set, i)
                                              : beta_pmax_inclexcl(set, i);
    }
    out.method = r == BetaRoute::Direct ? PropensityMethod::BetaDirect
                                        : PropensityMethod::BetaInclExcl;
    // Rounding only; inclusion-exclusion cancellation is bounded by the
    // compensated sum and the per-term log-space accuracy.
    out.abs_err = 1e-13;
    return out;
}

// ---------------------------------------------------------------------------
// One-dimensional integral  int f_t(r) prod_{j != t} F_j(r) dr

namespace detail {

// Absolute error accepted regardless of the relative target; error estimates
// from the quadrature rules bottom out near this level from roundoff alone.
inline constexpr double kQuadAbsFloor = 1e-13;

template <class F>
double integrate_gk(F&& f, double a, double b, double rel_tol) {
    double err = 0.0;
    double l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, a, b, 20, rel_tol, &err, &l1);
    if (err > std::max(rel_tol * std::abs(v), kQuadAbsFloor)) {
        throw AccuracyError("quadrature did not reach requested tolerance", v, err);
    }
    return v;
}

// Phi rounds to exactly 1 above this.
inline constexpr double kPhiOne = 8.3;
// Standardized cut-off; the mass dropped outside is below Phi(-8.5) ~ 1e-17.
inline constexpr double kQuadCut = 8.5;

}  // namespace detail

// Gaussian argmax probability by adaptive Gauss-Kronrod in the target's
// standardized variable z. Each factor Phi((r - mu_j) / s_j) bounds the
// integrand, which fixes the lower end of the range.
inline double gaussian_propensity_quadrature(std::span<const double> mu,
                                             std::span<const double> sigma2,
                                             std::size_t target,
                                             double rel_tol = 1e-10) {
    const std::size_t n = mu.size();
    if (sigma2.size() != n || target >= n) {
        throw DomainError("gaussian_propensity_quadrature: bad dimensions");
    }
    const double mt = mu[target];
    const double st = std::sqrt(sigma2[target]);
    // Factor j is Phi(a_j + b_j z).
    std::vector<double> a, b;
    a.reserve(n);
    b.reserve(n);
    double lo = -detail::kQuadCut;
    const double hi = detail::kQuadCut;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == target) continue;
        const double sj = std::sqrt(sigma2[j]);
        a.push_back((mt - mu[j]) / sj);
        b.push_back(st / sj);
        if (b.back() > 0.0) {
            lo = std::max(lo, (-detail::kQuadCut - a.back()) / b.back());
        } else if (a.back() < -detail::kQuadCut) {
            return 0.0;
        }
    }
    if (!(lo < hi)) return 0.0;
    auto f = [&](double z) {
        double v = std_normal_pdf(z);
        for (std::size_t k = 0; k < a.size() && v > 0.0; ++k) {
            const double u = a[k] + b[k] * z;
            if (u < detail::kPhiOne) v *= std_normal_cdf(u);
        }
        return v;
    };
    return std::clamp(detail::integrate_gk(f, lo, hi, rel_tol), 0.0, 1.0);
}

// Beta argmax probability for real-valued parameters by tanh-sinh
// quadrature on (0, 1); handles the endpoint singularities of a < 1 or b < 1.
inline double beta_propensity_quadrature(
    std::span<const std::pair<double, double>> params, std::size_t target,
    double rel_tol = 1e-10) {
    const std::size_t n = params.size();
    if (target >= n) throw DomainError("beta_propensity_quadrature: bad target");
    for (auto [a, b] : params) {
        if (!(a > 0.0) || !(b > 0.0)) {
            throw DomainError("beta_propensity_quadrature: parameters must be positive");
        }
    }
    const auto [at, bt] = params[target];
    const double log_norm = log_beta(at, bt);
    auto f = [&](double x) {
        if (x <= 0.0 || x >= 1.0) return 0.0;
        double v = std::exp((at - 1.0) * std::log(x) + (bt - 1.0) * std::log1p(-x) -
                            log_norm);
        for (std::size_t j = 0; j < n && v > 0.0; ++j) {
            if (j == target) continue;
            v *= boost::math::ibeta(params[j].first, params[j].second, x);
        }
        return v;
    };
    // A bounded target density is smooth enough for Gauss-Kronrod; tanh-sinh
    // is kept for the endpoint singularities of a < 1 or b < 1.
    const bool smooth = std::all_of(params.begin(), params.end(),
                                    [](auto p) { return p.first >= 1.0 && p.second >= 1.0; });
    if (smooth) return std::clamp(detail::integrate_gk(f, 0.0, 1.0, rel_tol), 0.0, 1.0);
    boost::math::quadrature::tanh_sinh<double> integrator;
    double err = 0.0;
    double l1 = 0.0;
    std::size_t levels = 0;
    const double v = integrator.integrate(f, 0.0, 1.0, rel_tol, &err, &l1, &levels);
    if (err > std::max(rel_tol * std::abs(v), detail::kQuadAbsFloor)) {
        throw AccuracyError("quadrature did not reach requested tolerance", v, err);
    }
    return std::clamp(v, 0.0, 1.0);
}

// Universal cross-check: one-dimensional quadrature of the argmax integral
// over the marginals of any belief kind.
inline double quadrature_propensity(const BeliefSet& set, std::size_t target,
                                    double rel_tol = 1e-10) {
    detail::check_target(set, target);
    if (set.kind() == BeliefKind::BetaInt) {
        std::vector<std::pair<double, double>> params;
        params.reserve(set.size());
        for (const auto& b : set.beliefs()) {
            params.emplace_back(static_cast<double>(b.alpha()),
                                static_cast<double>(b.beta()));
        }
        return beta_propensity_quadrature(params, target, rel_tol);
    }
    // Log-normal reduces to its underlying normal.
    const Vector mu = set.mus();
    const Vector s2 = set.sigma2s();
    return gaussian_propensity_quadrature(
        std::span<const double>(mu.data(), static_cast<std::size_t>(mu.size())),
        std::span<const double>(s2.data(), static_cast<std::size_t>(s2.size())),
        target, rel_tol);
}

// ---------------------------------------------------------------------------
// Whole-vector dispatch

struct PropensityOptions {
    BetaRoute beta_route = BetaRoute::Auto;
    GaussianRoute gaussian_route = GaussianRoute::Auto;
    MvnOptions mvn{};
    double quad_rel_tol = 1e-10;
};

inline GaussianRoute resolve_gaussian_route(const BeliefSet& set,
                                            GaussianRoute route) {
    if (route != GaussianRoute::Auto) return route;
    return set.has_joint_cov() ? GaussianRoute::Joint : GaussianRoute::Mvn;
}

inline PropensityVector propensities(const BeliefSet& set,
                                     const PropensityOptions& opt = {}) {
    if (set.kind() == BeliefKind::BetaInt &&
        opt.gaussian_route != GaussianRoute::Quadrature) {
        return beta_propensities(set, opt.beta_route);
    }
    PropensityVector out;
    out.probs.resize(set.size());
    const GaussianRoute route = set.kind() == BeliefKind::BetaInt
                                    ? GaussianRoute::Quadrature
                                    : resolve_gaussian_route(set, opt.gaussian_route);
    if (route == GaussianRoute::Joint && set.kind() != BeliefKind::Normal) {
        throw DomainError("joint route requires normal beliefs");
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
        switch (route) {
            case GaussianRoute::Quadrature:
                out.probs[i] = quadrature_propensity(set, i, opt.quad_rel_tol);
                break;
            case GaussianRoute::Joint: {
                const ProbEstimate e = gaussian_propensity_joint(set, i, opt.mvn);
                out.probs[i] = e.value;
                out.abs_err = std::max(out.abs_err, e.abs_err);
                break;
            }
            default: {
                const ProbEstimate e =
                    set.kind() == BeliefKind::Lognormal
                        ? lognormal_propensity(set, i, opt.mvn)
                        : gaussian_propensity(set, i, opt.mvn);
                out.probs[i] = e.value;
                out.abs_err = std::max(out.abs_err, e.abs_err);
                break;
            }
        }
    }
    switch (route) {
        case GaussianRoute::Quadrature:
            out.method = PropensityMethod::Quadrature;
            out.abs_err = opt.quad_rel_tol;
            break;
        case GaussianRoute::Joint: out.method = PropensityMethod::GaussianJoint; break;
        default: out.method = PropensityMethod::GaussianMvn; break;
    }
    return out;
}

}  // namespace tsprop
