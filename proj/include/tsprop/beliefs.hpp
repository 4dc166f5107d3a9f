#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tsprop/error.hpp"
#include "tsprop/random.hpp"

namespace tsprop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class BeliefKind { Normal, Lognormal, BetaInt };

inline std::string_view to_string(BeliefKind k) {
    switch (k) {
        case BeliefKind::Normal: return "normal";
        case BeliefKind::Lognormal: return "lognormal";
        case BeliefKind::BetaInt: return "beta";
    }
    return "?";
}

// One action's posterior over its reward. Normal/Lognormal use (mu, sigma2)
// of the underlying Gaussian; BetaInt uses integer pseudo-counts.
class RewardBelief {
   public:
    static RewardBelief normal(double mu, double sigma2) {
        check_gaussian(mu, sigma2);
        return RewardBelief(BeliefKind::Normal, mu, sigma2, 0, 0);
    }
    static RewardBelief lognormal(double mu, double sigma2) {
        check_gaussian(mu, sigma2);
        return RewardBelief(BeliefKind::Lognormal, mu, sigma2, 0, 0);
    }
    static RewardBelief beta(long alpha, long beta) {
        if (alpha < 1 || beta < 1) {
            throw DomainError("Beta belief needs integer alpha, beta >= 1");
        }
        return RewardBelief(BeliefKind::BetaInt, 0.0, 0.0, alpha, beta);
    }

    BeliefKind kind() const noexcept { return kind_; }
    double mu() const noexcept { return mu_; }
    double sigma2() const noexcept { return sigma2_; }
    long alpha() const noexcept { return alpha_; }
    long beta() const noexcept { return beta_; }

    // Mean and variance of the reward itself (not of log-reward).
    double mean() const {
        switch (kind_) {
            case BeliefKind::Normal: return mu_;
            case BeliefKind::Lognormal: return std::exp(mu_ + 0.5 * sigma2_);
            case BeliefKind::BetaInt:
                return static_cast<double>(alpha_) /
                       static_cast<double>(alpha_ + beta_);
        }
        return 0.0;
    }
    double variance() const {
        switch (kind_) {
            case BeliefKind::Normal: return sigma2_;
            case BeliefKind::Lognormal:
                return std::expm1(sigma2_) * std::exp(2.0 * mu_ + sigma2_);
            case BeliefKind::BetaInt: {
                const double a = static_cast<double>(alpha_);
                const double b = static_cast<double>(beta_);
                return a * b / ((a + b) * (a + b) * (a + b + 1.0));
            }
        }
        return 0.0;
    }

    friend bool operator==(const RewardBelief&, const RewardBelief&) = default;

   private:
    RewardBelief(BeliefKind kind, double mu, double sigma2, long alpha,
                 long beta)
        : kind_(kind), mu_(mu), sigma2_(sigma2), alpha_(alpha), beta_(beta) {}

    static void check_gaussian(double mu, double sigma2) {
        if (!std::isfinite(mu)) throw DomainError("belief mean must be finite");
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
            throw DomainError("belief variance must be positive and finite");
        }
    }

    BeliefKind kind_;
    double mu_;
    double sigma2_;
    long alpha_;
    long beta_;
};

// Beliefs for every action of one decision, optionally with a joint Gaussian
// covariance across actions (Normal kind only).
class BeliefSet {
   public:
    explicit BeliefSet(std::vector<RewardBelief> beliefs,
                       std::optional<Matrix> joint_cov = std::nullopt)
        : beliefs_(std::move(beliefs)), joint_cov_(std::move(joint_cov)) {
        if (beliefs_.size() < 2) {
            throw DomainError("BeliefSet needs at least two actions");
        }
        const BeliefKind k = beliefs_.front().kind();
        for (const auto& b : beliefs_) {
            if (b.kind() != k) {
                throw DomainError("BeliefSet mixes belief kinds");
            }
        }
        if (joint_cov_) {
            const auto n = static_cast<Eigen::Index>(beliefs_.size());
            if (k != BeliefKind::Normal) {
                throw DomainError("joint_cov is only valid for normal beliefs");
            }
            if (joint_cov_->rows() != n || joint_cov_->cols() != n) {
                throw DomainError("joint_cov dimension does not match action count");
            }
            for (Eigen::Index i = 0; i < n; ++i) {
                const double s2 = beliefs_[i].sigma2();
                if (std::abs((*joint_cov_)(i, i) - s2) >
                    1e-12 * std::max(1.0, std::abs(s2))) {
                    throw DomainError("joint_cov diagonal must equal sigma2");
                }
                for (Eigen::Index j = 0; j < i; ++j) {
                    const double a = (*joint_cov_)(i, j);
                    const double b = (*joint_cov_)(j, i);
                    if (std::abs(a - b) >
                        1e-10 * std::max({1.0, std::abs(a), std::abs(b)})) {
                        throw MatrixError("joint_cov is not symmetric");
                    }
                }
            }
        }
    }

    static BeliefSet normal(const std::vector<std::pair<double, double>>& p) {
        return from_pairs(p, &RewardBelief::normal);
    }
    static BeliefSet lognormal(const std::vector<std::pair<double, double>>& p) {
        return from_pairs(p, &RewardBelief::lognormal);
    }
    static BeliefSet beta(const std::vector<std::pair<long, long>>& p) {
        std::vector<RewardBelief> b;
        b.reserve(p.size());
        for (auto [a, c] : p) b.push_back(RewardBelief::beta(a, c));
        return BeliefSet(std::move(b));
    }

    BeliefKind kind() const noexcept { return beliefs_.front().kind(); }
    std::size_t size() const noexcept { return beliefs_.size(); }
    const RewardBelief& operator[](std::size_t i) const { return beliefs_[i]; }
    const std::vector<RewardBelief>& beliefs() const noexcept { return beliefs_; }
    const std::optional<Matrix>& joint_cov() const noexcept { return joint_cov_; }
    bool has_joint_cov() const noexcept { return joint_cov_.has_value(); }

    Vector mus() const {
        Vector v(static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < size(); ++i) v[i] = beliefs_[i].mu();
        return v;
    }
    Vector sigma2s() const {
        Vector v(static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < size(); ++i) v[i] = beliefs_[i].sigma2();
        return v;
    }

   private:
    static BeliefSet from_pairs(const std::vector<std::pair<double, double>>& p,
                                RewardBelief (*make)(double, double)) {
        std::vector<RewardBelief> b;
        b.reserve(p.size());
        for (auto [m, s] : p) b.push_back(make(m, s));
        return BeliefSet(std::move(b));
    }

    std::vector<RewardBelief> beliefs_;
    std::optional<Matrix> joint_cov_;
};

// Gaussian posterior over a linear model's weights together with the
// per-action feature vectors f(a, x), stored as the rows of `features`.
struct LinearGaussianPosterior {
    Vector mean;      // d
    Matrix cov;       // d x d
    Matrix features;  // n x d

    LinearGaussianPosterior(Vector mean_, Matrix cov_, Matrix features_)
        : mean(std::move(mean_)), cov(std::move(cov_)),
          features(std::move(features_)) {
        const auto d = mean.size();
        if (d < 1) throw DomainError("posterior dimension must be >= 1");
        if (cov.rows() != d || cov.cols() != d) {
            throw DomainError("posterior covariance must be d x d");
        }
        if (features.cols() != d) {
            throw DomainError("feature vectors must have length d");
        }
        if (features.rows() < 2) {
            throw DomainError("need at least two actions");
        }
        const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
        if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
            throw MatrixError("posterior covariance is not symmetric");
        }
    }

    Eigen::Index dim() const noexcept { return mean.size(); }
    Eigen::Index actions() const noexcept { return features.rows(); }
};

// F with F F^T = m for symmetric PSD m. Eigenvalues in [-1e-8 trace, 0) are
// clipped to zero; anything more negative is rejected.
inline Matrix symmetric_factor(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) {
        throw MatrixError("eigendecomposition failed");
    }
    const double trace = std::abs(m.trace());
    Vector ev = eig.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < 0.0) {
            if (ev[i] < -1e-8 * trace) {
                throw MatrixError("covariance is not positive semidefinite");
            }
            ev[i] = 0.0;
        }
    }
    return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

// Reusable sampler for one BeliefSet; avoids refactorizing the joint
// covariance per draw.
class RewardSampler {
   public:
    explicit RewardSampler(const BeliefSet& set) : set_(set) {
        if (set_.has_joint_cov()) factor_ = symmetric_factor(*set_.joint_cov());
    }

    std::size_t size() const noexcept { return set_.size(); }

    void draw(Rng& rng, std::span<double> out) {
        const std::size_t n = set_.size();
        if (factor_) {
            Vector z(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) z[i] = normal_(rng);
            Vector r = *factor_ * z;
            for (std::size_t i = 0; i < n; ++i) out[i] = set_[i].mu() + r[i];
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const RewardBelief& b = set_[i];
            switch (b.kind()) {
                case BeliefKind::Normal:
                    out[i] = b.mu() + std::sqrt(b.sigma2()) * normal_(rng);
                    break;
                case BeliefKind::Lognormal:
                    out[i] = std::exp(b.mu() + std::sqrt(b.sigma2()) * normal_(rng));
                    break;
                case BeliefKind::BetaInt: {
                    std::gamma_distribution<double> ga(static_cast<double>(b.alpha()));
                    std::gamma_distribution<double> gb(static_cast<double>(b.beta()));
                    const double x = ga(rng);
                    const double y = gb(rng);
                    out[i] = x / (x + y);
                    break;
                }
            }
        }
    }

   private:
    BeliefSet set_;
    std::optional<Matrix> factor_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// One reward draw per action. Deterministic given the seed.
inline std::vector<double> sample_rewards(const BeliefSet& set, Seed seed) {
    Rng rng = make_rng(seed);
    RewardSampler sampler(set);
    std::vector<double> out(set.size());
    sampler.draw(rng, out);
    return out;
}

// Outcome-space view of a linear Gaussian parameter posterior: marginal
// Normal beliefs with mean mu^T f_a and variance f_a^T Sigma f_a, plus the
// full cross-action covariance f_a^T Sigma f_b.
inline BeliefSet posterior_to_outcome(const LinearGaussianPosterior& post) {
    const Vector means = post.features * post.mean;
    Matrix cov = post.features * post.cov * post.features.transpose();
    cov = 0.5 * (cov + cov.transpose());
    std::vector<RewardBelief> beliefs;
    beliefs.reserve(static_cast<std::size_t>(post.actions()));
    for (Eigen::Index a = 0; a < post.actions(); ++a) {
        if (!(cov(a, a) > 0.0)) {
            throw DegenerateError("action " + std::to_string(a) +
                                  " has non-positive outcome variance");
        }
        beliefs.push_back(RewardBelief::normal(means[a], cov(a, a)));
    }
    return BeliefSet(std::move(beliefs), std::move(cov));
}

}  // namespace tsprop
