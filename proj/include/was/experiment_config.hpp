#pragma once

// Experiment description read from a single JSON file. Every subcommand
// accepts --config pointing at one of these; command-line flags override
// whatever the file set, and WAS_SEED in the environment overrides both.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "was/config.hpp"
#include "was/graph.hpp"

namespace was {

struct SbmSpec {
    int n = 300;
    int classes = 3;
    double p_in = 0.1;
    double p_out = 0.01;
    int feat_dim = 16;
    double noise = 1.0;
};

struct ExperimentConfig {
    std::string dataset;          // directory produced by gen-data
    SbmSpec sbm;                  // inline generator spec (gen-data only)
    std::vector<TaskKind> tasks;  // empty means all five
    std::string strategy = "was";
    std::string bank;
    std::string out;
    int repeat = 1;
    int jobs = 1;
    RunConfig run;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw config_error("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw config_error(std::string("config: bad value for '") + key + "'");
        }
    }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("config: top level must be a JSON object");
    detail::reject_unknown_keys(
        j,
        {"dataset", "sbm", "tasks", "strategy", "bank", "out", "repeat", "jobs",
         "alpha", "tau_kd", "tau_gumbel", "m", "lr", "weight_decay", "epochs", "pretrain_epochs", "hidden", "seed",
         "clu_k", "par_parts", "pairdis_max_hop", "pair_budget_factor"},
        "config");
    ExperimentConfig c;
    detail::read_if(j, "dataset", c.dataset);
    if (j.contains("sbm")) {
        const nlohmann::json& s = j.at("sbm");
        if (!s.is_object()) throw config_error("config: 'sbm' must be an object");
        detail::reject_unknown_keys(s, {"n", "classes", "p_in", "p_out", "feat_dim", "noise"}, "sbm");
        detail::read_if(s, "n", c.sbm.n);
        detail::read_if(s, "classes", c.sbm.classes);
        detail::read_if(s, "p_in", c.sbm.p_in);
        detail::read_if(s, "p_out", c.sbm.p_out);
        detail::read_if(s, "feat_dim", c.sbm.feat_dim);
        detail::read_if(s, "noise", c.sbm.noise);
    }
    if (j.contains("tasks")) {
        if (!j.at("tasks").is_array()) throw config_error("config: 'tasks' must be an array of task names");
        for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from_name(t.get<std::string>()));
    }
    detail::read_if(j, "strategy", c.strategy);
    detail::read_if(j, "bank", c.bank);
    detail::read_if(j, "out", c.out);
    detail::read_if(j, "repeat", c.repeat);
    detail::read_if(j, "jobs", c.jobs);
    detail::read_if(j, "alpha", c.run.alpha);
    detail::read_if(j, "tau_kd", c.run.tau_kd);
    detail::read_if(j, "tau_gumbel", c.run.tau_gumbel);
    detail::read_if(j, "m", c.run.m);
    detail::read_if(j, "lr", c.run.lr);
    detail::read_if(j, "weight_decay", c.run.weight_decay);
    detail::read_if(j, "epochs", c.run.epochs);
    detail::read_if(j, "pretrain_epochs", c.run.pretrain_epochs);
    detail::read_if(j, "hidden", c.run.hidden);
    detail::read_if(j, "seed", c.run.seed);
    detail::read_if(j, "clu_k", c.run.clu_k);
    detail::read_if(j, "par_parts", c.run.par_parts);
    detail::read_if(j, "pairdis_max_hop", c.run.pairdis_max_hop);
    detail::read_if(j, "pair_budget_factor", c.run.pair_budget_factor);
    if (c.repeat < 1) throw config_error("config: repeat must be >= 1");
    if (c.jobs < 1) throw config_error("config: jobs must be >= 1");
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

// Hyperparameter echo embedded in checkpoints and bank descriptors.
inline nlohmann::json run_config_json(const RunConfig& cfg) {
    return nlohmann::json{{"alpha", cfg.alpha},
                          {"tau_kd", cfg.tau_kd},
                          {"tau_gumbel", cfg.tau_gumbel},
                          {"m", cfg.m},
                          {"lr", cfg.lr},
                          {"weight_decay", cfg.weight_decay},
                          {"epochs", cfg.epochs},
                          {"pretrain_epochs", cfg.pretrain_epochs},
                          {"hidden", cfg.hidden},
                          {"seed", cfg.seed},
                          {"clu_k", cfg.clu_k},
                          {"par_parts", cfg.par_parts},
                          {"pairdis_max_hop", cfg.pairdis_max_hop},
                          {"pair_budget_factor", cfg.pair_budget_factor}};
}

}  // namespace was
