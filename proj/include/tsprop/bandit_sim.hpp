#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tsprop/beliefs.hpp"
#include "tsprop/error.hpp"
#include "tsprop/ope.hpp"
#include "tsprop/oracle.hpp"
#include "tsprop/parallel.hpp"
#include "tsprop/propensity.hpp"
#include "tsprop/random.hpp"
#include "tsprop/specfun.hpp"

namespace tsprop {

struct EnvConfig {
    int d = 10;
    int n = 10;
    double logger_temp = -1.5;
    double prior_var = 1e3;
    bool binary_rewards = true;
    Seed env_seed = 0;

    void validate() const {
        if (d < 1) throw DomainError("EnvConfig: d must be >= 1");
        if (n < 2) throw DomainError("EnvConfig: n must be >= 2");
        if (!std::isfinite(logger_temp)) throw DomainError("EnvConfig: bad logger_temp");
        if (!(prior_var > 0.0)) throw DomainError("EnvConfig: prior_var must be positive");
    }
};

inline double logistic(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Synthetic contextual bandit: x ~ N(0, I_d), expected reward
// q(x, a) = logistic(x . e_a / sqrt(d) + b_a).
class Environment {
   public:
    explicit Environment(const EnvConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng = make_rng(derive_seed(cfg_.env_seed, "environment"));
        std::normal_distribution<double> normal(0.0, 1.0);
        embeddings_.resize(cfg_.n, cfg_.d);
        for (int a = 0; a < cfg_.n; ++a) {
            for (int k = 0; k < cfg_.d; ++k) embeddings_(a, k) = normal(rng);
        }
        biases_.resize(cfg_.n);
        for (int a = 0; a < cfg_.n; ++a) biases_[a] = -0.5 + 0.5 * normal(rng);
        scale_ = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    }

    const EnvConfig& config() const noexcept { return cfg_; }
    int dim() const noexcept { return cfg_.d; }
    int actions() const noexcept { return cfg_.n; }
    const Matrix& embeddings() const noexcept { return embeddings_; }
    const Vector& biases() const noexcept { return biases_; }

    std::vector<double> sample_context(Rng& rng) const {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> x(static_cast<std::size_t>(cfg_.d));
        for (double& v : x) v = normal(rng);
        return x;
    }

    double true_q(std::span<const double> x, std::size_t a) const {
        double z = biases_[static_cast<Eigen::Index>(a)];
        for (int k = 0; k < cfg_.d; ++k) {
            z += scale_ * embeddings_(static_cast<Eigen::Index>(a), k) * x[k];
        }
        return logistic(z);
    }

    std::vector<double> true_q_all(std::span<const double> x) const {
        std::vector<double> q(static_cast<std::size_t>(cfg_.n));
        for (std::size_t a = 0; a < q.size(); ++a) q[a] = true_q(x, a);
        return q;
    }

    // softmax(logger_temp * q(x, .))
    std::vector<double> logging_propensities(std::span<const double> x) const {
        std::vector<double> p = true_q_all(x);
        double mx = -std::numeric_limits<double>::infinity();
        for (double& v : p) {
            v *= cfg_.logger_temp;
            mx = std::max(mx, v);
        }
        double s = 0.0;
        for (double& v : p) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : p) v /= s;
        return p;
    }

   private:
    EnvConfig cfg_;
    Matrix embeddings_;
    Vector biases_;
    double scale_ = 1.0;
};

inline constexpr std::size_t kLogChunk = 1024;

// Logged data under the softmax logger. Chunks of kLogChunk records draw
// from independent sub-seeds, so output is the same for any `jobs`.
inline LoggedDataset generate_log(const Environment& env, std::size_t size,
                                  Seed seed, unsigned jobs = 1) {
    if (size < 1) throw DomainError("generate_log: size must be >= 1");
    LoggedDataset data;
    data.records.resize(size);
    const std::size_t chunks = (size + kLogChunk - 1) / kLogChunk;
    auto run_chunk = [&](std::size_t c) {
        Rng rng = make_rng(derive_seed(seed, "log-chunk", c));
        const std::size_t end = std::min(size, (c + 1) * kLogChunk);
        for (std::size_t i = c * kLogChunk; i < end; ++i) {
            LoggedRecord& rec = data.records[i];
            rec.x = env.sample_context(rng);
            const std::vector<double> p = env.logging_propensities(rec.x);
            const double u = uniform01(rng);
            double cum = 0.0;
            std::size_t a = p.size() - 1;
            for (std::size_t k = 0; k < p.size(); ++k) {
                cum += p[k];
                if (u < cum) {
                    a = k;
                    break;
                }
            }
            rec.a = a;
            rec.p0 = p[a];
            const double q = env.true_q(rec.x, a);
            const double v = uniform01(rng);
            rec.r = env.config().binary_rewards ? (v < q ? 1.0 : 0.0) : q;
        }
    };
    parallel_for(chunks, jobs, run_chunk);
    return data;
}

// Per-action Bayesian logistic regression with a diagonal Laplace posterior.
struct BayesLogReg {
    Matrix means;       // n x d
    Matrix precisions;  // n x d
    double prior_var = 1e3;

    Eigen::Index actions() const noexcept { return means.rows(); }
    Eigen::Index dim() const noexcept { return means.cols(); }

    static BayesLogReg prior(int n, int d, double prior_var) {
        return {Matrix::Zero(n, d), Matrix::Constant(n, d, 1.0 / prior_var), prior_var};
    }
};

struct FitOptions {
    double grad_tol = 1e-8;
    int max_iter = 500;
};

namespace detail {

// MAP weights for one action: minimise
//   0.5 lambda |w|^2 + sum_i log(1 + exp(w.x_i)) - y_i w.x_i
// by damped Newton. Returns the weights; throws FitError on non-convergence.
inline Vector fit_logistic_map(const Matrix& X, const Vector& y, double lambda,
                               const FitOptions& opt) {
    const Eigen::Index d = X.cols();
    Vector w = Vector::Zero(d);
    auto objective = [&](const Vector& v) {
        const Vector z = X * v;
        double f = 0.5 * lambda * v.squaredNorm();
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            // log(1 + e^z) - y z, stable for large |z|
            const double zi = z[i];
            f += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) -
                 y[i] * zi;
        }
        return f;
    };
    double f = objective(w);
    double gnorm = 0.0;
    for (int it = 0; it < opt.max_iter; ++it) {
        const Vector z = X * w;
        Vector p(z.size());
        Vector s(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            p[i] = logistic(z[i]);
            s[i] = p[i] * (1.0 - p[i]);
        }
        const Vector grad = lambda * w + X.transpose() * (p - y);
        gnorm = grad.cwiseAbs().maxCoeff();
        if (gnorm <= opt.grad_tol) return w;
        Matrix H = X.transpose() * s.asDiagonal() * X;
        H.diagonal().array() += lambda;
        const Vector step = H.ldlt().solve(grad);
        const double predicted = grad.dot(step);
        if (predicted <= 1e-13 * (1.0 + std::abs(f))) {
            // Near the optimum f no longer resolves the decrease; trust Newton.
            w -= step;
            f = objective(w);
            continue;
        }
        double t = 1.0;
        for (int ls = 0; ls < 60; ++ls) {
            const Vector cand = w - t * step;
            const double fc = objective(cand);
            if (fc <= f - 1e-4 * t * grad.dot(step) || ls == 59) {
                w = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    throw FitError("logistic regression did not converge", opt.max_iter, gnorm);
}

}  // namespace detail

inline BayesLogReg fit_blr(const LoggedDataset& data, int n_actions, double prior_var,
                           const FitOptions& opt = {}) {
    if (n_actions < 2) throw DomainError("fit_blr: need at least two actions");
    if (!(prior_var > 0.0)) throw DomainError("fit_blr: prior_var must be positive");
    if (data.empty()) throw DomainError("fit_blr: empty dataset");
    const auto d = static_cast<Eigen::Index>(data.records.front().x.size());
    const double lambda = 1.0 / prior_var;
    BayesLogReg model = BayesLogReg::prior(n_actions, static_cast<int>(d), prior_var);

    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(n_actions));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& rec = data.records[i];
        if (static_cast<Eigen::Index>(rec.x.size()) != d) {
            throw DomainError("fit_blr: inconsistent context dimension");
        }
        if (rec.a >= static_cast<std::size_t>(n_actions)) {
            throw DomainError("fit_blr: action index out of range");
        }
        rows[rec.a].push_back(i);
    }
    for (int a = 0; a < n_actions; ++a) {
        const auto& idx = rows[static_cast<std::size_t>(a)];
        if (idx.empty()) continue;
        Matrix X(static_cast<Eigen::Index>(idx.size()), d);
        Vector y(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& rec = data.records[idx[i]];
            for (Eigen::Index k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), k) = rec.x[k];
            y[static_cast<Eigen::Index>(i)] = rec.r;
        }
        const Vector w = detail::fit_logistic_map(X, y, lambda, opt);
        model.means.row(a) = w.transpose();
        Vector prec = Vector::Constant(d, lambda);
        const Vector z = X * w;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const double p = logistic(z[i]);
            prec += p * (1.0 - p) * X.row(i).transpose().cwiseAbs2();
        }
        model.precisions.row(a) = prec.transpose();
    }
    return model;
}

// Variance floor for beliefs on an all-zero context, where every action's
// linear score is exactly 0 with no uncertainty.
inline constexpr double kBeliefVarianceFloor = 1e-200;

// Normal beliefs on each action's linear score w_a . x. Actions share no
// weights, so the beliefs are independent.
inline BeliefSet ts_beliefs(const BayesLogReg& model, std::span<const double> x) {
    const Eigen::Index d = model.dim();
    if (static_cast<Eigen::Index>(x.size()) != d) {
        throw DomainError("ts_beliefs: context has wrong dimension");
    }
    std::vector<RewardBelief> beliefs;
    beliefs.reserve(static_cast<std::size_t>(model.actions()));
    for (Eigen::Index a = 0; a < model.actions(); ++a) {
        double m = 0.0;
        double v = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            m += model.means(a, k) * x[k];
            v += x[k] * x[k] / model.precisions(a, k);
        }
        beliefs.push_back(RewardBelief::normal(m, std::max(v, kBeliefVarianceFloor)));
    }
    return BeliefSet(std::move(beliefs));
}

// Thompson-sampling policy induced by a fitted model. Propensities come
// from one-dimensional quadrature of the argmax integral by default (the
// beliefs are independent, so this equals the MVN form); the MVN route is
// available for cross-checking.
class TsPolicy {
   public:
    explicit TsPolicy(BayesLogReg model, GaussianRoute route = GaussianRoute::Quadrature,
                      MvnOptions mvn = {})
        : model_(std::move(model)), route_(route), mvn_(mvn) {}

    const BayesLogReg& model() const noexcept { return model_; }
    std::size_t actions() const noexcept { return static_cast<std::size_t>(model_.actions()); }

    BeliefSet beliefs(std::span<const double> x) const { return ts_beliefs(model_, x); }

    double propensity(std::span<const double> x, std::size_t a) const {
        return propensity_of(beliefs(x), a);
    }

    std::vector<double> propensities(std::span<const double> x) const {
        const BeliefSet set = beliefs(x);
        std::vector<double> p(actions());
        for (std::size_t a = 0; a < p.size(); ++a) p[a] = propensity_of(set, a);
        return p;
    }

   private:
    double propensity_of(const BeliefSet& set, std::size_t a) const {
        const double p = route_ == GaussianRoute::Quadrature
                             ? quadrature_propensity(set, a)
                             : gaussian_propensity(set, a, mvn_).value;
        // Strictly positive mathematically; guard against underflow.
        return std::max(p, std::numeric_limits<double>::min());
    }

    BayesLogReg model_;
    GaussianRoute route_;
    MvnOptions mvn_;
};

struct TrueValue {
    double mc_value = 0.0;
    double exact_value = 0.0;
    double exact_std_err = 0.0;  // context-sampling error of exact_value
    double diff_std_err = 0.0;   // standard error of mc_value - exact_value
    std::size_t contexts = 0;
    std::size_t draws = 0;
};

// V(pi) over fresh contexts two ways: Monte-Carlo Thompson draws
// (mc_value) and analytic propensities (exact_value). With draws == 0 only
// the analytic value is computed.
template <class Policy>
TrueValue true_value(const Environment& env, const Policy& policy, std::size_t n_contexts,
                     std::size_t draws, Seed seed, unsigned jobs = 1) {
    if (n_contexts < 1) throw DomainError("true_value: need at least one context");
    std::vector<double> exact(n_contexts), mc(n_contexts, 0.0);
    auto run = [&](std::size_t c) {
        Rng rng = make_rng(derive_seed(seed, "truth-context", c));
        const std::vector<double> x = env.sample_context(rng);
        const std::vector<double> q = env.true_q_all(x);
        const std::vector<double> pi = policy.propensities(x);
        double v = 0.0;
        for (std::size_t a = 0; a < q.size(); ++a) v += pi[a] * q[a];
        exact[c] = v;
        if (draws > 0) {
            RewardSampler sampler(policy.beliefs(x));
            std::vector<double> r(q.size());
            double acc = 0.0;
            for (std::size_t k = 0; k < draws; ++k) {
                sampler.draw(rng, r);
                acc += q[detail::argmax_random_ties(r, rng)];
            }
            mc[c] = acc / static_cast<double>(draws);
        }
    };
    parallel_for(n_contexts, jobs, run);
    TrueValue out;
    out.contexts = n_contexts;
    out.draws = draws;
    out.exact_value = detail::mean_of(exact);
    out.exact_std_err = detail::std_err_of_mean(exact);
    if (draws > 0) {
        out.mc_value = detail::mean_of(mc);
        std::vector<double> diff(n_contexts);
        for (std::size_t c = 0; c < n_contexts; ++c) diff[c] = mc[c] - exact[c];
        out.diff_std_err = detail::std_err_of_mean(diff);
    } else {
        out.mc_value = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace tsprop
