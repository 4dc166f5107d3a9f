#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "tsprop/bandit_sim.hpp"
#include "tsprop/error.hpp"
#include "tsprop/ope.hpp"
#include "tsprop/parallel.hpp"
#include "tsprop/random.hpp"

namespace tsprop {

// Environment + logged training data + the TS policy fitted on it.
struct Experiment {
    Environment env;
    LoggedDataset train;
    TsPolicy policy;
};

inline Experiment make_experiment(const EnvConfig& cfg, std::size_t train_size, Seed master,
                                  unsigned jobs = 1) {
    Environment env(cfg);
    LoggedDataset train = generate_log(env, train_size, derive_seed(master, "train"), jobs);
    BayesLogReg model = fit_blr(train, cfg.n, cfg.prior_var);
    return {std::move(env), std::move(train), TsPolicy(std::move(model))};
}

inline Seed eval_seed(Seed master, std::size_t size, std::size_t replicate) {
    return derive_seed(derive_seed(master, "eval-size", size), "replicate", replicate);
}

struct SweepRow {
    std::size_t size = 0;
    std::size_t replicate = 0;
    EstimateReport report;
};

// One fresh evaluation log per (size, replicate) cell, every estimator on
// each. Rows come back in (size, replicate, estimator) order regardless of
// how cells were scheduled across threads.
template <class Policy>
std::vector<SweepRow> run_sweep(const Environment& env, const Policy& policy,
                                const std::vector<std::size_t>& sizes, std::size_t replicates,
                                const std::vector<Estimator>& estimators, Seed master,
                                unsigned jobs = 1) {
    if (sizes.empty()) throw DomainError("sweep: no sizes given");
    if (!std::is_sorted(sizes.begin(), sizes.end())) {
        throw DomainError("sweep: sizes must be ascending");
    }
    if (replicates < 1) throw DomainError("sweep: replicates must be >= 1");
    if (estimators.empty()) throw DomainError("sweep: no estimators given");

    const std::size_t cells = sizes.size() * replicates;
    std::vector<std::vector<SweepRow>> results(cells);
    auto run_cell = [&](std::size_t c) {
        const std::size_t size = sizes[c / replicates];
        const std::size_t rep = c % replicates;
        const LoggedDataset data = generate_log(env, size, eval_seed(master, size, rep));
        const std::vector<double> props = target_propensities_for_log(data, policy);
        for (Estimator e : estimators) {
            results[c].push_back({size, rep, estimate(e, data, props)});
        }
    };
    parallel_for(cells, jobs, run_cell);
    std::vector<SweepRow> rows;
    rows.reserve(cells * estimators.size());
    for (auto& r : results) {
        for (auto& row : r) rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace tsprop
