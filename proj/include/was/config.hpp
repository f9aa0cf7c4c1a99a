#pragma once

#include <cstdint>
#include <string>

#include "was/tensor.hpp"

namespace was {

// The five node-level self-supervised pre-training tasks.
enum class TaskKind { DGI, CLU, PAR, PAIRSIM, PAIRDIS };

inline const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::DGI: return "dgi";
        case TaskKind::CLU: return "clu";
        case TaskKind::PAR: return "par";
        case TaskKind::PAIRSIM: return "pairsim";
        case TaskKind::PAIRDIS: return "pairdis";
    }
    throw config_error("task_name: bad enum value");
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "dgi") return TaskKind::DGI;
    if (s == "clu") return TaskKind::CLU;
    if (s == "par") return TaskKind::PAR;
    if (s == "pairsim") return TaskKind::PAIRSIM;
    if (s == "pairdis") return TaskKind::PAIRDIS;
    throw config_error("unknown task '" + s + "' (expected dgi|clu|par|pairsim|pairdis)");
}

// Hyperparameters of one training run. Defaults follow the node-task
// regime: alpha 1, distillation temperature 1.2, momentum 0.3, Adam lr 0.01
// with weight decay 5e-4. tau_gumbel is fixed at 1.0 by the sampling rule.
struct RunConfig {
    double alpha = 1.0;       // weight of the distillation term
    double tau_kd = 1.2;      // distillation temperature
    double tau_gumbel = 1.0;  // Gumbel-sigmoid temperature
    double m = 0.3;           // momentum rate of the siamese body
    double lr = 0.01;
    double weight_decay = 5e-4;
    int epochs = 500;
    int pretrain_epochs = 200;  // also used for the linear probes
    int hidden = 64;            // encoder width F
    std::uint64_t seed = 0;

    // per-task knobs
    int clu_k = 10;            // k-means clusters for CLU
    int par_parts = 10;        // regions for PAR
    int pairdis_max_hop = 4;   // distance classes for PAIRDIS
    int pair_budget_factor = 4;  // pairs per epoch = factor * n

    void validate() const {
        if (alpha < 0.0) throw config_error("config: alpha must be >= 0");
        if (tau_kd <= 0.0) throw config_error("config: tau_kd must be > 0");
        if (tau_gumbel <= 0.0) throw config_error("config: tau_gumbel must be > 0");
        if (m < 0.0 || m > 1.0) throw config_error("config: m must lie in [0,1]");
        if (lr <= 0.0) throw config_error("config: lr must be > 0");
        if (weight_decay < 0.0) throw config_error("config: weight_decay must be >= 0");
        if (epochs < 1) throw config_error("config: epochs must be >= 1");
        if (pretrain_epochs < 1) throw config_error("config: pretrain_epochs must be >= 1");
        if (hidden < 1) throw config_error("config: hidden must be >= 1");
        if (clu_k < 1 || par_parts < 1) throw config_error("config: clu_k and par_parts must be >= 1");
        if (pairdis_max_hop < 1) throw config_error("config: pairdis_max_hop must be >= 1");
        if (pair_budget_factor < 1) throw config_error("config: pair_budget_factor must be >= 1");
    }
};

}  // namespace was
