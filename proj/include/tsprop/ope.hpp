#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsprop/error.hpp"
#include "tsprop/parallel.hpp"
#include "tsprop/random.hpp"
#include "tsprop/specfun.hpp"

namespace tsprop {

struct LoggedRecord {
    std::vector<double> x;  // context
    std::size_t a = 0;      // logged action
    double r = 0.0;         // observed reward
    double p0 = 1.0;        // logging propensity pi_0(a | x)
};

struct LoggedDataset {
    std::vector<LoggedRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }

    // Every logging propensity must lie in (0, 1].
    void validate() const {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const double p = records[i].p0;
            if (!(p > 0.0)) {
                throw SupportError("record " + std::to_string(i) +
                                   " has zero logging propensity");
            }
            if (!(p <= 1.0)) {
                throw DomainError("record " + std::to_string(i) +
                                  " has logging propensity above 1");
            }
        }
    }
};

enum class Estimator { Ips, Snips, BetaIps };

inline std::string_view to_string(Estimator e) {
    switch (e) {
        case Estimator::Ips: return "ips";
        case Estimator::Snips: return "snips";
        case Estimator::BetaIps: return "beta_ips";
    }
    return "?";
}

inline std::optional<Estimator> parse_estimator(std::string_view name) {
    if (name == "ips") return Estimator::Ips;
    if (name == "snips") return Estimator::Snips;
    if (name == "beta_ips" || name == "beta-ips" || name == "betaips") {
        return Estimator::BetaIps;
    }
    return std::nullopt;
}

inline constexpr double kZ99 = 2.5758293035489004;

struct EstimateReport {
    Estimator estimator = Estimator::Ips;
    double estimate = 0.0;
    double std_err = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ess = 0.0;  // (sum w)^2 / sum w^2
    std::size_t n = 0;
    // beta_ips only: the fitted baseline, and whether it fell back to ips.
    double baseline = 0.0;
    bool fallback = false;
};

struct EstimatorOptions {
    // Importance weights above this are clipped. Off by default.
    std::optional<double> max_weight;
    // Percentile bootstrap for the 99% interval when > 0.
    std::size_t bootstrap_replicates = 0;
    Seed bootstrap_seed = 0;
};

namespace detail {

inline std::vector<double> importance_weights(const LoggedDataset& data,
                                              std::span<const double> target_props,
                                              const EstimatorOptions& opt) {
    if (target_props.size() != data.size()) {
        throw DomainError("target propensities do not match record count");
    }
    if (data.empty()) throw DomainError("empty dataset");
    std::vector<double> w(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p0 = data.records[i].p0;
        if (!(p0 > 0.0)) {
            throw SupportError("record " + std::to_string(i) +
                               " has zero logging propensity");
        }
        if (!(target_props[i] >= 0.0)) {
            throw DomainError("target propensity must be non-negative");
        }
        w[i] = target_props[i] / p0;
        if (opt.max_weight) w[i] = std::min(w[i], *opt.max_weight);
    }
    return w;
}

inline double mean_of(std::span<const double> v) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
}

// Sample standard deviation divided by sqrt(n); 0 for a single term.
inline double std_err_of_mean(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) return 0.0;
    const double m = mean_of(v);
    CompensatedSum ss;
    for (double x : v) ss.add((x - m) * (x - m));
    return std::sqrt(ss.value() / static_cast<double>(n - 1) / static_cast<double>(n));
}

inline double effective_sample_size(std::span<const double> w) {
    CompensatedSum s, s2;
    for (double x : w) {
        s.add(x);
        s2.add(x * x);
    }
    if (!(s2.value() > 0.0)) return 0.0;
    return s.value() * s.value() / s2.value();
}

struct Fitted {
    double estimate;
    double std_err;
    double baseline = 0.0;
    bool fallback = false;
};

inline Fitted fit_ips(std::span<const double> w, std::span<const double> r) {
    std::vector<double> t(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) t[i] = w[i] * r[i];
    return {mean_of(t), std_err_of_mean(t)};
}

inline Fitted fit_snips(std::span<const double> w, std::span<const double> r) {
    CompensatedSum sw, swr;
    for (std::size_t i = 0; i < w.size(); ++i) {
        sw.add(w[i]);
        swr.add(w[i] * r[i]);
    }
    if (!(sw.value() > 0.0)) {
        throw DegenerateError("snips: importance weights sum to zero");
    }
    const double est = swr.value() / sw.value();
    const std::size_t n = w.size();
    if (n < 2) return {est, 0.0};
    // Delta method for a ratio of means.
    CompensatedSum se2;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = w[i] * (r[i] - est);
        se2.add(e * e);
    }
    const double nd = static_cast<double>(n);
    const double mean_w = sw.value() / nd;
    return {est, std::sqrt(se2.value() / (nd - 1.0) / nd) / mean_w};
}

// Constant-baseline control variate: terms w (r - b) + b with b chosen to
// minimise their sample variance, b = cov(w r, w - 1) / var(w - 1).
inline Fitted fit_beta_ips(std::span<const double> w, std::span<const double> r) {
    const std::size_t n = w.size();
    std::vector<double> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = w[i] * r[i];
        v[i] = w[i] - 1.0;
    }
    const double mu = mean_of(u);
    const double mv = mean_of(v);
    CompensatedSum sxy, sxx, svv;
    for (std::size_t i = 0; i < n; ++i) {
        sxy.add((u[i] - mu) * (v[i] - mv));
        sxx.add((v[i] - mv) * (v[i] - mv));
        svv.add(v[i] * v[i]);
    }
    if (!(sxx.value() > 1e-14 * (svv.value() + 1.0))) {
        Fitted f = fit_ips(w, r);
        f.fallback = true;
        return f;
    }
    const double b = sxy.value() / sxx.value();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = u[i] - b * v[i];
    return {mean_of(t), std_err_of_mean(t), b, false};
}

inline Fitted fit(Estimator e, std::span<const double> w, std::span<const double> r) {
    switch (e) {
        case Estimator::Ips: return fit_ips(w, r);
        case Estimator::Snips: return fit_snips(w, r);
        case Estimator::BetaIps: return fit_beta_ips(w, r);
    }
    return fit_ips(w, r);
}

}  // namespace detail

inline EstimateReport estimate(Estimator kind, const LoggedDataset& data,
                               std::span<const double> target_props,
                               const EstimatorOptions& opt = {}) {
    const std::vector<double> w = detail::importance_weights(data, target_props, opt);
    std::vector<double> r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) r[i] = data.records[i].r;

    const detail::Fitted f = detail::fit(kind, w, r);
    EstimateReport rep;
    rep.estimator = kind;
    rep.n = data.size();
    rep.estimate = f.estimate;
    rep.std_err = f.std_err;
    rep.baseline = f.baseline;
    rep.fallback = f.fallback;
    rep.ess = detail::effective_sample_size(w);
    rep.ci_low = f.estimate - kZ99 * f.std_err;
    rep.ci_high = f.estimate + kZ99 * f.std_err;

    if (opt.bootstrap_replicates > 0) {
        const std::size_t n = w.size();
        Rng rng = make_rng(opt.bootstrap_seed);
        std::vector<double> bw(n), br(n), stats;
        stats.reserve(opt.bootstrap_replicates);
        for (std::size_t b = 0; b < opt.bootstrap_replicates; ++b) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
                bw[i] = w[std::min(k, n - 1)];
                br[i] = r[std::min(k, n - 1)];
            }
            try {
                stats.push_back(detail::fit(kind, bw, br).estimate);
            } catch (const DegenerateError&) {
                // resample with all-zero weights; skip it
            }
        }
        if (stats.size() >= 2) {
            std::sort(stats.begin(), stats.end());
            auto q = [&](double p) {
                const double pos = p * static_cast<double>(stats.size() - 1);
                const auto lo = static_cast<std::size_t>(std::floor(pos));
                const auto hi = std::min(lo + 1, stats.size() - 1);
                return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
            };
            const double m = detail::mean_of(stats);
            CompensatedSum ss;
            for (double s : stats) ss.add((s - m) * (s - m));
            rep.std_err = std::sqrt(ss.value() / static_cast<double>(stats.size() - 1));
            rep.ci_low = std::min(q(0.005), rep.estimate);
            rep.ci_high = std::max(q(0.995), rep.estimate);
        }
    }
    return rep;
}

// (1/n) sum r pi_t / pi_0
inline EstimateReport ips(const LoggedDataset& data, std::span<const double> target_props,
                          const EstimatorOptions& opt = {}) {
    return estimate(Estimator::Ips, data, target_props, opt);
}

// sum w r / sum w
inline EstimateReport snips(const LoggedDataset& data, std::span<const double> target_props,
                            const EstimatorOptions& opt = {}) {
    return estimate(Estimator::Snips, data, target_props, opt);
}

inline EstimateReport beta_ips(const LoggedDataset& data,
                               std::span<const double> target_props,
                               const EstimatorOptions& opt = {}) {
    return estimate(Estimator::BetaIps, data, target_props, opt);
}

// pi_t(a_logged | x) for every record. `Policy` needs
//   double propensity(std::span<const double> x, std::size_t a) const;
// Records are independent, so any split across `jobs` threads gives the same
// values as the serial loop.
template <class Policy>
std::vector<double> target_propensities_for_log(const LoggedDataset& data,
                                                const Policy& policy,
                                                unsigned jobs = 1) {
    std::vector<double> out(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        const LoggedRecord& rec = data.records[i];
        out[i] = policy.propensity(rec.x, rec.a);
    });
    return out;
}

}  // namespace tsprop
