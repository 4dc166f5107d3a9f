#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tsprop/beliefs.hpp"
#include "tsprop/parallel.hpp"
#include "tsprop/random.hpp"

namespace tsprop {

// Empirical argmax frequencies from plain Monte Carlo.
struct McEstimate {
    std::vector<double> probs;
    std::size_t draws = 0;
    std::vector<double> std_err;
};

namespace detail {

inline constexpr std::size_t kMcChunk = std::size_t{1} << 16;

// Index of the maximum, ties broken uniformly at random.
inline std::size_t argmax_random_ties(std::span<const double> v, Rng& rng) {
    std::size_t best = 0;
    std::size_t ties = 1;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
            ties = 1;
        } else if (v[i] == v[best]) {
            // Reservoir choice among equal maxima.
            ++ties;
            if (uniform01(rng) * static_cast<double>(ties) < 1.0) best = i;
        }
    }
    return best;
}

// Runs `chunk_fn(chunk_index, draws_in_chunk, counts)` over fixed-size
// chunks, each seeded independently, so the tally is identical for any
// number of worker threads.
template <class ChunkFn>
std::vector<std::uint64_t> tally_chunks(std::size_t n, std::size_t draws,
                                        unsigned jobs, ChunkFn&& chunk_fn) {
    const std::size_t chunks = (draws + kMcChunk - 1) / kMcChunk;
    std::vector<std::vector<std::uint64_t>> per_chunk(
        chunks, std::vector<std::uint64_t>(n, 0));
    auto run = [&](std::size_t c) {
        const std::size_t len = std::min(kMcChunk, draws - c * kMcChunk);
        chunk_fn(c, len, per_chunk[c]);
    };
    parallel_for(chunks, jobs, run);
    std::vector<std::uint64_t> counts(n, 0);
    for (const auto& pc : per_chunk) {
        for (std::size_t i = 0; i < n; ++i) counts[i] += pc[i];
    }
    return counts;
}

inline McEstimate finish_estimate(const std::vector<std::uint64_t>& counts,
                                  std::size_t draws) {
    McEstimate out;
    out.draws = draws;
    out.probs.resize(counts.size());
    out.std_err.resize(counts.size());
    const double d = static_cast<double>(draws);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double p = static_cast<double>(counts[i]) / d;
        out.probs[i] = p;
        out.std_err[i] = std::sqrt(p * (1.0 - p) / d);
    }
    return out;
}

}  // namespace detail

// Sample every action's reward, tally the argmax.
inline McEstimate mc_propensities(const BeliefSet& set, std::size_t draws,
                                  Seed seed, unsigned jobs = 1) {
    if (draws < 1) throw DomainError("mc_propensities: draws must be >= 1");
    const std::size_t n = set.size();
    const auto counts = detail::tally_chunks(
        n, draws, jobs,
        [&](std::size_t c, std::size_t len, std::vector<std::uint64_t>& tally) {
            Rng rng = make_rng(derive_seed(seed, "mc-chunk", c));
            RewardSampler sampler(set);
            std::vector<double> r(n);
            for (std::size_t i = 0; i < len; ++i) {
                sampler.draw(rng, r);
                ++tally[detail::argmax_random_ties(r, rng)];
            }
        });
    return detail::finish_estimate(counts, draws);
}

// Sample weights theta from the parameter posterior, score every action as
// theta^T f_a, tally the argmax.
inline McEstimate mc_propensities_param(const LinearGaussianPosterior& post,
                                        std::size_t draws, Seed seed,
                                        unsigned jobs = 1) {
    if (draws < 1) throw DomainError("mc_propensities_param: draws must be >= 1");
    const auto n = static_cast<std::size_t>(post.actions());
    const Matrix factor = symmetric_factor(post.cov);
    const auto counts = detail::tally_chunks(
        n, draws, jobs,
        [&](std::size_t c, std::size_t len, std::vector<std::uint64_t>& tally) {
            Rng rng = make_rng(derive_seed(seed, "mc-param-chunk", c));
            std::normal_distribution<double> normal(0.0, 1.0);
            Vector z(post.dim());
            Vector scores(post.actions());
            for (std::size_t i = 0; i < len; ++i) {
                for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
                const Vector theta = post.mean + factor * z;
                scores.noalias() = post.features * theta;
                ++tally[detail::argmax_random_ties(
                    std::span<const double>(scores.data(), n), rng)];
            }
        });
    return detail::finish_estimate(counts, draws);
}

}  // namespace tsprop
