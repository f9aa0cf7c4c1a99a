#pragma once

// Teacher-combination strategies. The full method weighs and hard-selects per
// node; the others fix one of the two sides (always select, random select,
// uniform weights, rank-based top-k) or strip a component (no projection MLP,
// no re-normalization after selection) so runs stay comparable on one bank.

#include <functional>
#include <string>

#include "was/rng.hpp"
#include "was/tensor.hpp"
#include "was/weigh_select.hpp"

namespace was {

enum class StrategyKind { Was, AverageWeight, RandomSelect, SelectAll, ImportanceTopk, WasNoMlp, WasNoReweigh };

struct Strategy {
    StrategyKind kind = StrategyKind::Was;
    int topk = 0;  // only ImportanceTopk
};

inline std::string strategy_name(const Strategy& s) {
    switch (s.kind) {
        case StrategyKind::Was: return "was";
        case StrategyKind::AverageWeight: return "average";
        case StrategyKind::RandomSelect: return "random";
        case StrategyKind::SelectAll: return "all";
        case StrategyKind::ImportanceTopk: return "topk" + std::to_string(s.topk);
        case StrategyKind::WasNoMlp: return "was-no-mlp";
        case StrategyKind::WasNoReweigh: return "was-no-reweigh";
    }
    throw config_error("strategy_name: bad kind");
}

inline Strategy parse_strategy(const std::string& name) {
    if (name == "was") return {StrategyKind::Was, 0};
    if (name == "average") return {StrategyKind::AverageWeight, 0};
    if (name == "random") return {StrategyKind::RandomSelect, 0};
    if (name == "all") return {StrategyKind::SelectAll, 0};
    if (name == "was-no-mlp") return {StrategyKind::WasNoMlp, 0};
    if (name == "was-no-reweigh") return {StrategyKind::WasNoReweigh, 0};
    if (name.rfind("topk", 0) == 0 && name.size() > 4) {
        int k = 0;
        for (std::size_t i = 4; i < name.size(); ++i) {
            if (name[i] < '0' || name[i] > '9') throw config_error("unknown strategy '" + name + "'");
            k = k * 10 + (name[i] - '0');
        }
        if (k <= 0) throw config_error("topk strategy needs a positive k, got '" + name + "'");
        return {StrategyKind::ImportanceTopk, k};
    }
    throw config_error("unknown strategy '" + name + "' (expected was|average|random|all|topk<k>|was-no-mlp|was-no-reweigh)");
}

// Whether the strategy owns a momentum-updated siamese scorer.
inline bool strategy_uses_select_module(const Strategy& s) {
    return s.kind == StrategyKind::Was || s.kind == StrategyKind::WasNoMlp || s.kind == StrategyKind::WasNoReweigh;
}

// Whether the strategy's MLP receives straight-through gradients.
inline bool strategy_trains_mlp(const Strategy& s) {
    return s.kind == StrategyKind::Was || s.kind == StrategyKind::WasNoReweigh;
}

// Whether the weighing body (mu, nu) receives gradients from the weigh loss.
inline bool strategy_trains_weigh(const Strategy& s) { return s.kind != StrategyKind::AverageWeight; }

inline Tensor topk_mask(const Tensor& omega, int k) {
    check_rank2(omega, "topk_mask");
    const int n = omega.shape[0], kk = omega.shape[1];
    if (k > kk) throw config_error("topk: k=" + std::to_string(k) + " exceeds teacher count " + std::to_string(kk));
    Tensor kap = Tensor::zeros(omega.shape);
    for (int i = 0; i < n; ++i) {
        // Repeated argmax over unselected entries; ties go to the lowest
        // index, matching the global tie convention.
        for (int pick = 0; pick < k; ++pick) {
            int am = -1;
            for (int j = 0; j < kk; ++j) {
                if (kap.at(i, j) != 0.0) continue;
                if (am < 0 || omega.at(i, j) > omega.at(i, am)) am = j;
            }
            kap.at(i, am) = 1.0;
        }
    }
    return kap;
}

struct CombineOut {
    Tensor kappa;   // n x K binary
    Tensor lambda;  // n x K mixture weights
};

// Eager semantics of each strategy given the weighing outputs. kappa_norm_fn
// produces the selection probabilities lazily so strategies that never sample
// skip that work; rng drives the Gumbel or Bernoulli draws.
inline CombineOut strategy_combine(const Strategy& s, const Tensor& omega, const Tensor& zeta,
                                   const std::function<Tensor()>& kappa_norm_fn, Rng& rng) {
    check_same_shape(omega, zeta, "strategy_combine");
    check_rank2(omega, "strategy_combine");
    const int n = omega.shape[0], k = omega.shape[1];
    CombineOut out;
    switch (s.kind) {
        case StrategyKind::AverageWeight:
            out.kappa = Tensor::full({n, k}, 1.0);
            out.lambda = Tensor::full({n, k}, 1.0 / k);
            return out;
        case StrategyKind::SelectAll:
            out.kappa = Tensor::full({n, k}, 1.0);
            out.lambda = omega;
            return out;
        case StrategyKind::RandomSelect: {
            out.kappa = Tensor::zeros({n, k});
            for (int i = 0; i < n; ++i) {
                double sum = 0.0;
                for (int j = 0; j < k; ++j) sum += (out.kappa.at(i, j) = uniform01(rng) < 0.5 ? 1.0 : 0.0);
                // Uniform rates give no preferred teacher, so the all-zero
                // fallback lands on index 0 by the lowest-index rule.
                if (sum == 0.0) out.kappa.at(i, 0) = 1.0;
            }
            out.lambda = reweigh(out.kappa, zeta);
            return out;
        }
        case StrategyKind::ImportanceTopk:
            out.kappa = topk_mask(omega, s.topk);
            out.lambda = reweigh(out.kappa, zeta);
            return out;
        case StrategyKind::Was:
        case StrategyKind::WasNoMlp: {
            Tensor kn = kappa_norm_fn();
            out.kappa = gate_sample(kn, gumbel_noise(n, k, rng), /*fallback=*/true);
            out.lambda = reweigh(out.kappa, zeta);
            return out;
        }
        case StrategyKind::WasNoReweigh: {
            Tensor kn = kappa_norm_fn();
            out.kappa = gate_sample(kn, gumbel_noise(n, k, rng), /*fallback=*/true);
            out.lambda = Tensor::zeros({n, k});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < k; ++j) out.lambda.at(i, j) = out.kappa.at(i, j) * omega.at(i, j);
            return out;
        }
    }
    throw config_error("strategy_combine: bad kind");
}

}  // namespace was
