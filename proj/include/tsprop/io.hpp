#pragma once

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsprop/bandit_sim.hpp"
#include "tsprop/beliefs.hpp"
#include "tsprop/error.hpp"
#include "tsprop/ope.hpp"
#include "tsprop/propensity.hpp"

namespace tsprop::io {

using json = nlohmann::json;

// Shortest form that still round-trips: 17 significant digits, '.' decimal.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw InputError("malformed JSON in " + what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// BeliefSet:
//   {"kind": "normal"|"lognormal"|"beta",
//    "params": [[mu, sigma2], ...] | [[alpha, beta], ...],
//    "joint_cov": optional row-major matrix}

inline json to_json(const BeliefSet& set) {
    json j;
    j["kind"] = std::string(to_string(set.kind()));
    json params = json::array();
    for (const auto& b : set.beliefs()) {
        if (b.kind() == BeliefKind::BetaInt) {
            params.push_back({b.alpha(), b.beta()});
        } else {
            params.push_back({b.mu(), b.sigma2()});
        }
    }
    j["params"] = std::move(params);
    if (set.has_joint_cov()) {
        const Matrix& c = *set.joint_cov();
        json rows = json::array();
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index k = 0; k < c.cols(); ++k) row.push_back(c(r, k));
            rows.push_back(std::move(row));
        }
        j["joint_cov"] = std::move(rows);
    }
    return j;
}

inline BeliefSet belief_set_from_json(const json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind != "normal" && kind != "lognormal" && kind != "beta") {
            throw InputError("unknown belief kind \"" + kind + "\"");
        }
        const json& params = j.at("params");
        if (!params.is_array()) throw InputError("\"params\" must be an array");
        std::vector<RewardBelief> beliefs;
        for (const json& p : params) {
            if (!p.is_array() || p.size() != 2) {
                throw InputError("each entry of \"params\" must be a pair");
            }
            if (kind == "normal") {
                beliefs.push_back(RewardBelief::normal(p[0].get<double>(), p[1].get<double>()));
            } else if (kind == "lognormal") {
                beliefs.push_back(RewardBelief::lognormal(p[0].get<double>(), p[1].get<double>()));
            } else {
                const double a = p[0].get<double>();
                const double b = p[1].get<double>();
                if (a != std::floor(a) || b != std::floor(b)) {
                    throw DomainError("beta parameters must be integers");
                }
                beliefs.push_back(RewardBelief::beta(static_cast<long>(a), static_cast<long>(b)));
            }
        }
        std::optional<Matrix> cov;
        if (j.contains("joint_cov") && !j.at("joint_cov").is_null()) {
            const json& rows = j.at("joint_cov");
            const auto n = static_cast<Eigen::Index>(rows.size());
            Matrix c(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                if (static_cast<Eigen::Index>(rows[r].size()) != n) {
                    throw DomainError("joint_cov must be square");
                }
                for (Eigen::Index k = 0; k < n; ++k) c(r, k) = rows[r][k].get<double>();
            }
            cov = std::move(c);
        }
        return BeliefSet(std::move(beliefs), std::move(cov));
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid belief set: ") + e.what());
    }
}

inline json to_json(const PropensityVector& v) {
    return {{"probs", v.probs}, {"method", std::string(to_string(v.method))}, {"abs_err", v.abs_err}};
}

// ---------------------------------------------------------------------------
// EnvConfig: {"d","n","logger_temp","prior_var","env_seed"}; missing keys
// keep their defaults.

inline json to_json(const EnvConfig& c) {
    return {{"d", c.d},
            {"n", c.n},
            {"logger_temp", c.logger_temp},
            {"prior_var", c.prior_var},
            {"env_seed", c.env_seed},
            {"binary_rewards", c.binary_rewards}};
}

inline EnvConfig env_config_from_json(const json& j) {
    EnvConfig c;
    try {
        if (!j.is_object()) throw InputError("config must be a JSON object");
        if (j.contains("d")) c.d = j.at("d").get<int>();
        if (j.contains("n")) c.n = j.at("n").get<int>();
        if (j.contains("logger_temp")) c.logger_temp = j.at("logger_temp").get<double>();
        if (j.contains("prior_var")) c.prior_var = j.at("prior_var").get<double>();
        if (j.contains("env_seed")) c.env_seed = j.at("env_seed").get<Seed>();
        if (j.contains("binary_rewards")) c.binary_rewards = j.at("binary_rewards").get<bool>();
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

inline EnvConfig load_env_config(const std::string& path) {
    return env_config_from_json(parse_json(read_file(path), path));
}

// ---------------------------------------------------------------------------
// Model checkpoint: {"prior_var", "means": [[...]], "precisions": [[...]]}

inline json to_json(const BayesLogReg& m) {
    auto rows = [](const Matrix& x) {
        json out = json::array();
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index k = 0; k < x.cols(); ++k) row.push_back(x(r, k));
            out.push_back(std::move(row));
        }
        return out;
    };
    return {{"prior_var", m.prior_var}, {"means", rows(m.means)}, {"precisions", rows(m.precisions)}};
}

inline BayesLogReg model_from_json(const json& j) {
    try {
        auto mat = [](const json& rows) {
            const auto n = static_cast<Eigen::Index>(rows.size());
            const auto d = n > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
            Matrix x(n, d);
            for (Eigen::Index r = 0; r < n; ++r) {
                if (static_cast<Eigen::Index>(rows[r].size()) != d) {
                    throw InputError("ragged matrix in model checkpoint");
                }
                for (Eigen::Index k = 0; k < d; ++k) x(r, k) = rows[r][k].get<double>();
            }
            return x;
        };
        BayesLogReg m{mat(j.at("means")), mat(j.at("precisions")), j.at("prior_var").get<double>()};
        if (m.means.rows() != m.precisions.rows() || m.means.cols() != m.precisions.cols()) {
            throw InputError("model means and precisions differ in shape");
        }
        if ((m.precisions.array() <= 0.0).any()) {
            throw DomainError("model precisions must be positive");
        }
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid model checkpoint: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// LoggedDataset as JSON Lines: {"x": [...], "a": int, "r": float, "p0": float}

inline std::string to_jsonl_line(const LoggedRecord& rec) {
    std::string s = "{\"x\":[";
    for (std::size_t k = 0; k < rec.x.size(); ++k) {
        if (k) s += ',';
        s += format_real(rec.x[k]);
    }
    s += "],\"a\":" + std::to_string(rec.a) + ",\"r\":" + format_real(rec.r) +
         ",\"p0\":" + format_real(rec.p0) + "}";
    return s;
}

inline void write_jsonl(std::ostream& out, const LoggedDataset& data) {
    for (const auto& rec : data.records) out << to_jsonl_line(rec) << '\n';
}

inline void write_jsonl(const std::string& path, const LoggedDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    write_jsonl(out, data);
}

inline LoggedDataset read_jsonl(std::istream& in, const std::string& what = "dataset") {
    LoggedDataset data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            LoggedRecord rec;
            rec.x = j.at("x").get<std::vector<double>>();
            const auto a = j.at("a").get<long long>();
            if (a < 0) throw DomainError("negative action index");
            rec.a = static_cast<std::size_t>(a);
            rec.r = j.at("r").get<double>();
            rec.p0 = j.at("p0").get<double>();
            data.records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw InputError(what + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    data.validate();
    return data;
}

inline LoggedDataset read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return read_jsonl(in, path);
}

// ---------------------------------------------------------------------------
// EstimateReport CSV: estimator,n,estimate,std_err,ci_low,ci_high,ess

inline constexpr const char* kReportHeader = "estimator,n,estimate,std_err,ci_low,ci_high,ess";

inline std::string to_csv_row(const EstimateReport& r) {
    return std::string(to_string(r.estimator)) + "," + std::to_string(r.n) + "," +
           format_real(r.estimate) + "," + format_real(r.std_err) + "," +
           format_real(r.ci_low) + "," + format_real(r.ci_high) + "," + format_real(r.ess);
}

}  // namespace tsprop::io
