#pragma once

// Command-line front end: propensity | simulate | evaluate | sweep.
// Exit codes: 0 ok, 2 usage/input, 3 domain, 4 numerical failure.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsprop/experiment.hpp"
#include "tsprop/io.hpp"
#include "tsprop/tsprop.hpp"

#ifndef TSPROP_VERSION
#define TSPROP_VERSION "0.0.0"
#endif

namespace tsprop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDomain = 3;
inline constexpr int kExitNumerical = 4;

using json = nlohmann::json;

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

inline std::string hex_digest(const std::string& text) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a64(text);
    return s.str();
}

// Written next to every output file as <out>.manifest.json.
struct RunManifest {
    std::string command;
    json resolved;  // everything that determines the output
    std::vector<Seed> seeds;
    std::string started;
    std::string finished;
    json extra = json::object();

    json to_json() const {
        json j = {{"command", command},
                  {"config_hash", hex_digest(resolved.dump())},
                  {"resolved", resolved},
                  {"seeds", seeds},
                  {"artifact_version", TSPROP_VERSION},
                  {"started", started},
                  {"finished", finished}};
        for (auto& [k, v] : extra.items()) j[k] = v;
        return j;
    }
};

inline void write_manifest(const std::string& out_path, const RunManifest& m) {
    std::ofstream f(out_path + ".manifest.json", std::ios::binary);
    if (!f) throw InputError("cannot write manifest for " + out_path);
    f << m.to_json().dump(2) << '\n';
}

inline std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<Estimator> parse_estimators(const std::string& list) {
    std::vector<Estimator> out;
    for (const auto& name : split_csv_list(list)) {
        const auto e = parse_estimator(name);
        if (!e) {
            throw InputError("unknown estimator \"" + name +
                             "\"; valid names: ips, snips, beta_ips");
        }
        out.push_back(*e);
    }
    if (out.empty()) throw InputError("no estimators given; valid names: ips, snips, beta_ips");
    return out;
}

// Output sink: a file when a path is given, otherwise `fallback`.
class Sink {
   public:
    Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw InputError("cannot write " + path);
            os_ = &file_;
        }
    }
    std::ostream& stream() { return *os_; }

   private:
    std::ofstream file_;
    std::ostream* os_;
};

struct GlobalFlags {
    Seed seed = 0;
    unsigned jobs = 1;
    std::string out;
};

inline EnvConfig config_or_default(const std::string& path) {
    return path.empty() ? EnvConfig{} : io::load_env_config(path);
}

inline std::string joined_argv(int argc, const char* const* argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

// ---------------------------------------------------------------------------

struct PropensityArgs {
    std::string input;
    std::string route = "auto";
    double target_err = 1e-5;
    std::size_t max_points = std::size_t{1} << 20;
};

inline int cmd_propensity(const PropensityArgs& a, const GlobalFlags& g, const std::string& argv,
                          std::ostream& out) {
    const std::string started = utc_now();
    const BeliefSet set = io::belief_set_from_json(io::parse_json(io::read_file(a.input), a.input));
    PropensityOptions opt;
    opt.mvn = {a.target_err, a.max_points, g.seed};
    if (a.route == "auto") {
    } else if (a.route == "direct") {
        opt.beta_route = BetaRoute::Direct;
    } else if (a.route == "inclexcl") {
        opt.beta_route = BetaRoute::InclExcl;
    } else if (a.route == "mvn") {
        opt.gaussian_route = GaussianRoute::Mvn;
    } else if (a.route == "joint") {
        opt.gaussian_route = GaussianRoute::Joint;
    } else if (a.route == "quadrature") {
        opt.gaussian_route = GaussianRoute::Quadrature;
    } else {
        throw InputError("unknown route \"" + a.route +
                         "\"; valid: auto, direct, inclexcl, mvn, joint, quadrature");
    }
    if (set.kind() == BeliefKind::BetaInt &&
        (opt.gaussian_route == GaussianRoute::Mvn || opt.gaussian_route == GaussianRoute::Joint)) {
        throw DomainError("route \"" + a.route + "\" needs normal or lognormal beliefs");
    }
    if (set.kind() != BeliefKind::BetaInt && opt.beta_route != BetaRoute::Auto) {
        throw DomainError("route \"" + a.route + "\" needs beta beliefs");
    }
    const PropensityVector v = propensities(set, opt);
    const std::string text = io::to_json(v).dump();
    out << text << '\n';
    if (!g.out.empty()) {
        Sink sink(g.out, out);
        sink.stream() << text << '\n';
        RunManifest m{argv,
                      {{"command", "propensity"},
                       {"input", io::to_json(set)},
                       {"route", a.route},
                       {"target_err", a.target_err},
                       {"max_points", a.max_points},
                       {"seed", g.seed}},
                      {g.seed},
                      started,
                      utc_now()};
        write_manifest(g.out, m);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::size_t size = 2048;
};

inline int cmd_simulate(const SimulateArgs& a, const GlobalFlags& g, const std::string& argv,
                        std::ostream& out) {
    const std::string started = utc_now();
    const EnvConfig cfg = config_or_default(a.config);
    if (a.size < 1) throw DomainError("--size must be >= 1");
    const Environment env(cfg);
    const LoggedDataset data = generate_log(env, a.size, g.seed, g.jobs);
    Sink sink(g.out, out);
    io::write_jsonl(sink.stream(), data);
    if (!g.out.empty()) {
        RunManifest m{argv,
                      {{"command", "simulate"}, {"config", io::to_json(cfg)}, {"size", a.size},
                       {"seed", g.seed}},
                      {g.seed, cfg.env_seed},
                      started,
                      utc_now()};
        write_manifest(g.out, m);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string config;
    std::string train;
    std::string eval;
    std::string estimators = "ips,snips,beta_ips";
    std::size_t truth_contexts = 10000;
    std::size_t truth_draws = 100;
    bool behavior_as_target = false;
    std::optional<double> max_weight;
    std::size_t bootstrap = 0;
    std::string model_out;
};

// CSV rows per estimator, then one `truth` row: estimate = analytic value
// V(pi_TS); std_err = standard error of (Monte-Carlo value - analytic value);
// ci_low/ci_high = 99% interval around the Monte-Carlo value; ess = contexts.
inline int cmd_evaluate(const EvaluateArgs& a, const GlobalFlags& g, const std::string& argv,
                        std::ostream& out) {
    const std::string started = utc_now();
    const std::vector<Estimator> estimators = parse_estimators(a.estimators);
    const EnvConfig cfg = config_or_default(a.config);
    if (a.train.empty() || a.eval.empty()) throw InputError("--train and --eval are required");
    const LoggedDataset train = io::read_jsonl(a.train);
    const LoggedDataset eval = io::read_jsonl(a.eval);
    for (const auto* d : {&train, &eval}) {
        for (const auto& rec : d->records) {
            if (rec.x.size() != static_cast<std::size_t>(cfg.d)) {
                throw DomainError("dataset context dimension does not match config d");
            }
            if (rec.a >= static_cast<std::size_t>(cfg.n)) {
                throw DomainError("dataset action index exceeds config n");
            }
        }
    }
    const Environment env(cfg);
    const TsPolicy policy(fit_blr(train, cfg.n, cfg.prior_var));
    if (!a.model_out.empty()) {
        std::ofstream f(a.model_out, std::ios::binary);
        if (!f) throw InputError("cannot write " + a.model_out);
        f << io::to_json(policy.model()).dump(2) << '\n';
    }

    std::vector<double> props;
    if (a.behavior_as_target) {
        for (const auto& rec : eval.records) props.push_back(rec.p0);
    } else {
        props = target_propensities_for_log(eval, policy, g.jobs);
    }
    EstimatorOptions eopt;
    eopt.max_weight = a.max_weight;
    eopt.bootstrap_replicates = a.bootstrap;
    eopt.bootstrap_seed = derive_seed(g.seed, "bootstrap");

    Sink sink(g.out, out);
    std::ostream& os = sink.stream();
    os << io::kReportHeader << '\n';
    for (Estimator e : estimators) os << io::to_csv_row(estimate(e, eval, props, eopt)) << '\n';

    const Seed truth_seed = derive_seed(g.seed, "truth");
    json truth_json = nullptr;
    if (a.truth_contexts > 0) {
        const TrueValue tv =
            true_value(env, policy, a.truth_contexts, a.truth_draws, truth_seed, g.jobs);
        const double center = a.truth_draws > 0 ? tv.mc_value : tv.exact_value;
        const double se = a.truth_draws > 0 ? tv.diff_std_err : tv.exact_std_err;
        os << "truth," << tv.contexts << ',' << io::format_real(tv.exact_value) << ','
           << io::format_real(se) << ',' << io::format_real(center - kZ99 * se) << ','
           << io::format_real(center + kZ99 * se) << ','
           << io::format_real(static_cast<double>(tv.contexts)) << '\n';
        truth_json = {{"exact_value", tv.exact_value},
                      {"exact_std_err", tv.exact_std_err},
                      {"mc_value", a.truth_draws > 0 ? json(tv.mc_value) : json(nullptr)},
                      {"diff_std_err", tv.diff_std_err},
                      {"contexts", tv.contexts},
                      {"draws", tv.draws}};
    }
    if (!g.out.empty()) {
        RunManifest m{argv,
                      {{"command", "evaluate"},
                       {"config", io::to_json(cfg)},
                       {"train", a.train},
                       {"eval", a.eval},
                       {"estimators", a.estimators},
                       {"truth_contexts", a.truth_contexts},
                       {"truth_draws", a.truth_draws},
                       {"behavior_as_target", a.behavior_as_target},
                       {"seed", g.seed}},
                      {g.seed, truth_seed, cfg.env_seed},
                      started,
                      utc_now()};
        m.extra["truth"] = truth_json;
        write_manifest(g.out, m);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config;
    std::string sizes = "100,1000,10000,100000";
    std::size_t replicates = 100;
    std::string estimators = "ips,snips,beta_ips";
    std::size_t train_size = 2048;
    std::size_t truth_contexts = 0;
    std::size_t truth_draws = 0;
};

inline constexpr const char* kSweepHeader =
    "size,replicate,estimator,estimate,std_err,ci_low,ci_high,ess";

inline int cmd_sweep(const SweepArgs& a, const GlobalFlags& g, const std::string& argv,
                     std::ostream& out) {
    const std::string started = utc_now();
    const std::vector<Estimator> estimators = parse_estimators(a.estimators);
    std::vector<std::size_t> sizes;
    for (const auto& s : split_csv_list(a.sizes)) {
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(s, &pos);
            if (pos != s.size() || v == 0) throw std::invalid_argument(s);
            sizes.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw InputError("invalid size \"" + s + "\" in --sizes");
        }
    }
    const EnvConfig cfg = config_or_default(a.config);
    const Experiment exp = make_experiment(cfg, a.train_size, g.seed, g.jobs);
    const auto rows =
        run_sweep(exp.env, exp.policy, sizes, a.replicates, estimators, g.seed, g.jobs);

    Sink sink(g.out, out);
    std::ostream& os = sink.stream();
    os << kSweepHeader << '\n';
    for (const auto& r : rows) {
        os << r.size << ',' << r.replicate << ',' << to_string(r.report.estimator) << ','
           << io::format_real(r.report.estimate) << ',' << io::format_real(r.report.std_err)
           << ',' << io::format_real(r.report.ci_low) << ','
           << io::format_real(r.report.ci_high) << ',' << io::format_real(r.report.ess)
           << '\n';
    }
    json truth_json = nullptr;
    const Seed truth_seed = derive_seed(g.seed, "truth");
    if (a.truth_contexts > 0) {
        const TrueValue tv =
            true_value(exp.env, exp.policy, a.truth_contexts, a.truth_draws, truth_seed, g.jobs);
        truth_json = {{"exact_value", tv.exact_value},
                      {"exact_std_err", tv.exact_std_err},
                      {"mc_value", a.truth_draws > 0 ? json(tv.mc_value) : json(nullptr)},
                      {"diff_std_err", tv.diff_std_err},
                      {"contexts", tv.contexts},
                      {"draws", tv.draws}};
    }
    if (!g.out.empty()) {
        RunManifest m{argv,
                      {{"command", "sweep"},
                       {"config", io::to_json(cfg)},
                       {"sizes", sizes},
                       {"replicates", a.replicates},
                       {"estimators", a.estimators},
                       {"train_size", a.train_size},
                       {"truth_contexts", a.truth_contexts},
                       {"truth_draws", a.truth_draws},
                       {"seed", g.seed}},
                      {g.seed, truth_seed, cfg.env_seed},
                      started,
                      utc_now()};
        m.extra["truth"] = truth_json;
        write_manifest(g.out, m);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Exact Thompson-sampling propensities and off-policy evaluation", "tsprop"};
    app.require_subcommand(1);
    app.set_version_flag("--version", TSPROP_VERSION);

    GlobalFlags g;
    app.add_option("--seed", g.seed, "Master seed (u64)");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output path (a manifest is written beside it)");

    PropensityArgs pa;
    auto* prop = app.add_subcommand("propensity", "Propensity vector for a belief-set JSON file");
    prop->fallthrough();
    prop->add_option("input", pa.input, "BeliefSet JSON file")->required();
    prop->add_option("--route", pa.route, "auto|direct|inclexcl|mvn|joint|quadrature");
    prop->add_option("--target-err", pa.target_err, "MVN absolute error target");
    prop->add_option("--max-points", pa.max_points, "MVN lattice points per shift");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Generate a logged dataset (JSON Lines)");
    sim->fallthrough();
    sim->add_option("config", sa.config, "Environment config JSON");
    sim->add_option("--size", sa.size, "Number of records");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "Fit the TS policy and estimate its value");
    ev->fallthrough();
    ev->add_option("config", ea.config, "Environment config JSON");
    ev->add_option("--train", ea.train, "Training log (JSONL)")->required();
    ev->add_option("--eval", ea.eval, "Evaluation log (JSONL)")->required();
    ev->add_option("--estimators", ea.estimators, "Comma list of ips,snips,beta_ips");
    ev->add_option("--truth-contexts", ea.truth_contexts, "Contexts for the ground truth (0 = skip)");
    ev->add_option("--truth-draws", ea.truth_draws, "Monte-Carlo draws per truth context");
    ev->add_flag("--behavior-as-target", ea.behavior_as_target,
                 "Use the logging propensities as target propensities");
    ev->add_option("--max-weight", ea.max_weight, "Clip importance weights (off by default)");
    ev->add_option("--bootstrap", ea.bootstrap, "Bootstrap replicates for the CI (0 = normal)");
    ev->add_option("--model-out", ea.model_out, "Write the fitted model checkpoint");

    SweepArgs wa;
    auto* sw = app.add_subcommand("sweep", "Dataset-size sweep of all estimators");
    sw->fallthrough();
    sw->add_option("config", wa.config, "Environment config JSON");
    sw->add_option("--sizes", wa.sizes, "Ascending comma list of eval sizes");
    sw->add_option("--replicates", wa.replicates, "Replicates per size");
    sw->add_option("--estimators", wa.estimators, "Comma list of ips,snips,beta_ips");
    sw->add_option("--train-size", wa.train_size, "Training log size");
    sw->add_option("--truth-contexts", wa.truth_contexts, "Contexts for the ground truth (0 = skip)");
    sw->add_option("--truth-draws", wa.truth_draws, "Monte-Carlo draws per truth context");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::string cmdline = joined_argv(argc, argv);
    try {
        if (*prop) return cmd_propensity(pa, g, cmdline, out);
        if (*sim) return cmd_simulate(sa, g, cmdline, out);
        if (*ev) return cmd_evaluate(ea, g, cmdline, out);
        if (*sw) return cmd_sweep(wa, g, cmdline, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const AccuracyError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const FitError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "domain error: " << e.what() << '\n';
        return kExitDomain;
    }
    return kExitUsage;
}

}  // namespace tsprop::cli
