#pragma once

// Distillation loop: each epoch the student fits the labeled nodes while
// matching a per-node mixture of teacher distributions, and the weighing and
// selecting modules are refreshed from their own loss on the same mixture.
// Two tapes per epoch keep the optimizations separate: the student treats the
// mixture as a constant target, the weighing side treats the student's
// distribution as a constant input.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "was/adam.hpp"
#include "was/autodiff.hpp"
#include "was/gnn.hpp"
#include "was/graph.hpp"
#include "was/rng.hpp"
#include "was/strategies.hpp"
#include "was/tasks.hpp"
#include "was/weigh_select.hpp"

namespace was {

struct StudentModel {
    EncoderParams enc;
    HeadParams head;
};

// Per-epoch snapshot of what the combiner did, one n x K tensor per column of
// the exported CSV.
struct SelectionTrace {
    std::vector<Tensor> omega, kappa_norm, kappa, lambda;

    void append(Tensor om, Tensor kn, Tensor ka, Tensor la) {
        omega.push_back(std::move(om));
        kappa_norm.push_back(std::move(kn));
        kappa.push_back(std::move(ka));
        lambda.push_back(std::move(la));
    }
    int epochs() const { return static_cast<int>(omega.size()); }
};

struct SelectionStats {
    double avg_selected = 0.0;        // mean over (epoch, node) of selected-teacher count
    double top1_selected_ratio = 0.0; // fraction of (epoch, node) where the argmax-omega teacher was selected
};

inline SelectionStats selection_stats(const SelectionTrace& trace) {
    if (trace.epochs() == 0) throw config_error("selection_stats: empty trace");
    double sum = 0.0;
    long long top1 = 0, records = 0;
    for (int e = 0; e < trace.epochs(); ++e) {
        const Tensor& ka = trace.kappa[e];
        const Tensor& om = trace.omega[e];
        const int n = ka.shape[0], k = ka.shape[1];
        for (int i = 0; i < n; ++i) {
            int am = 0;
            for (int j = 0; j < k; ++j) {
                sum += ka.at(i, j);
                if (om.at(i, j) > om.at(i, am)) am = j;
            }
            if (ka.at(i, am) != 0.0) ++top1;
            ++records;
        }
    }
    SelectionStats s;
    s.avg_selected = sum / records;
    s.top1_selected_ratio = static_cast<double>(top1) / records;
    return s;
}

inline void trace_to_csv(const SelectionTrace& trace, std::ostream& os) {
    os << "epoch,node,teacher,omega,kappa_norm,kappa,lambda\n";
    char buf[128];
    for (int e = 0; e < trace.epochs(); ++e) {
        const int n = trace.omega[e].shape[0], k = trace.omega[e].shape[1];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) {
                std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%d,%.17g\n", e, i, j,
                              trace.omega[e].at(i, j), trace.kappa_norm[e].at(i, j),
                              static_cast<int>(trace.kappa[e].at(i, j)), trace.lambda[e].at(i, j));
                os << buf;
            }
    }
}

// Teacher rows re-tempered as softmax(log(p) / tau). At tau 1 this is the
// original row up to rounding; larger tau flattens, smaller sharpens.
inline std::vector<Tensor> temper_distributions(const std::vector<Tensor>& dists, double tau) {
    if (tau <= 0.0) throw config_error("temper_distributions: tau must be positive");
    std::vector<Tensor> out;
    out.reserve(dists.size());
    for (const Tensor& d : dists) {
        check_rank2(d, "temper_distributions");
        Tensor logp = d;
        for (std::size_t i = 0; i < logp.numel(); ++i) logp[i] = std::log(std::max(logp[i], kLogEps)) / tau;
        out.push_back(row_softmax_eager(logp));
    }
    return out;
}

struct StepLosses {
    double down = 0.0;   // supervised cross-entropy on the train mask
    double kl = 0.0;     // divergence from the teacher mixture (0 when alpha is 0)
    double weigh = 0.0;  // mixture-vs-labels loss driving mu, nu and the MLP
    double total = 0.0;
};

// One student update: cross-entropy on the train mask plus, when a target
// mixture is given, alpha times the mean divergence from it at temperature
// tau_kd. Exactly the supervised step when target is null, which is what
// makes the alpha=0 run bit-identical to plain fine-tuning.
inline std::pair<double, double> student_step(const Graph& g, const Tensor& ahat, StudentModel& student,
                                              const RunConfig& cfg, const Tensor* target, Adam& opt) {
    Tape t;
    Var w1 = t.leaf(student.enc.w1, true), w2 = t.leaf(student.enc.w2, true);
    Var hw = t.leaf(student.head.w, true), hb = t.leaf(student.head.b, true);
    Var h = encode_t(t.leaf(ahat), t.leaf(g.features), w1, w2);
    Var logits = logits_t(h, hw, hb);
    Var loss = masked_cross_entropy(logits, g.labels, g.train_mask);
    const double down = loss.value().item();
    double klv = 0.0;
    if (target != nullptr) {
        Var ps_tau = row_softmax(scale(logits, 1.0 / cfg.tau_kd));
        Var kl = kl_divergence(t.leaf(*target, false), ps_tau);
        klv = kl.value().item();
        loss = add(loss, scale(kl, cfg.alpha));
    }
    t.backward(loss);
    opt.step({t.grad(w1), t.grad(w2), t.grad(hw), t.grad(hb)});
    return {down, klv};
}

// One epoch of the full loop. Both updates are computed from the same
// pre-update snapshot: the weighing tape consumes the student's detached
// distribution, the student tape consumes the resulting mixture as a
// constant. weigh_opt is null for strategies with nothing to train there.
inline StepLosses distill_step(const Graph& g, const Tensor& ahat, const std::vector<Tensor>& tempered,
                               StudentModel& student, WeighParams& wp, SelectParams& sp, const RunConfig& cfg,
                               const Strategy& strat, Adam& student_opt, Adam* weigh_opt, Rng& gumbel_rng,
                               Rng& strategy_rng, SelectionTrace& trace, int epoch) {
    const int n = g.n, k = static_cast<int>(tempered.size());
    StepLosses out;

    Tensor ps = predict(encode(ahat, g.features, student.enc), student.head, 1.0);

    Tensor omega_val, kn_val, kappa_val, lambda_val, pt_val;
    if (strat.kind == StrategyKind::AverageWeight) {
        omega_val = Tensor::full({n, k}, 1.0 / k);
        kn_val = Tensor::full({n, k}, 1.0);
        kappa_val = Tensor::full({n, k}, 1.0);
        lambda_val = Tensor::full({n, k}, 1.0 / k);
        pt_val = integrate(kappa_val, lambda_val, tempered);
    } else {
        Tape tw;
        const bool body_grad = strategy_trains_weigh(strat);
        Var mu = tw.leaf(wp.mu, body_grad), nu = tw.leaf(wp.nu, body_grad);
        Var zeta = zeta_t(tw.leaf(ps, false), mu, nu);
        Var omega = row_softmax(zeta);
        omega_val = omega.value();

        std::optional<Var> mw1, mb1, mw2, mb2;  // set only when the MLP trains
        Var lambda = omega;  // overwritten below; SelectAll keeps it
        switch (strat.kind) {
            case StrategyKind::SelectAll:
                kappa_val = Tensor::full({n, k}, 1.0);
                kn_val = Tensor::full({n, k}, 1.0);
                lambda = omega;
                break;
            case StrategyKind::RandomSelect: {
                kappa_val = Tensor::zeros({n, k});
                for (int i = 0; i < n; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < k; ++j)
                        sum += (kappa_val.at(i, j) = uniform01(strategy_rng) < 0.5 ? 1.0 : 0.0);
                    if (sum == 0.0) kappa_val.at(i, 0) = 1.0;
                }
                kn_val = Tensor::full({n, k}, 0.5);
                lambda = reweigh_t(tw.leaf(kappa_val, false), zeta, kappa_val);
                break;
            }
            case StrategyKind::ImportanceTopk:
                kappa_val = topk_mask(omega_val, strat.topk);
                kn_val = kappa_val;
                lambda = reweigh_t(tw.leaf(kappa_val, false), zeta, kappa_val);
                break;
            case StrategyKind::WasNoMlp: {
                kn_val = kappa_norm_scores(ps, sp, /*use_mlp=*/false);
                kappa_val = gate_sample(kn_val, gumbel_noise(n, k, gumbel_rng), /*fallback=*/true);
                lambda = reweigh_t(tw.leaf(kappa_val, false), zeta, kappa_val);
                break;
            }
            case StrategyKind::Was:
            case StrategyKind::WasNoReweigh: {
                Tensor kappa_s = row_softmax_eager(zeta_matrix(ps, sp.mu_s, sp.nu_s));
                mw1 = tw.leaf(sp.w1, true);
                mb1 = tw.leaf(sp.b1, true);
                mw2 = tw.leaf(sp.w2, true);
                mb2 = tw.leaf(sp.b2, true);
                Var kn = kappa_norm_t(tw.leaf(kappa_s, false), *mw1, *mb1, *mw2, *mb2);
                kn_val = kn.value();
                Var gate = gumbel_gate(kn, gumbel_noise(n, k, gumbel_rng), cfg.tau_gumbel, /*fallback=*/true);
                kappa_val = gate.value();
                lambda = strat.kind == StrategyKind::Was ? reweigh_t(gate, zeta, kappa_val) : mul(gate, omega);
                break;
            }
            case StrategyKind::AverageWeight: break;  // handled above
        }
        lambda_val = lambda.value();

        Var pt = mix_rows(lambda, tempered);
        pt_val = pt.value();
        Var lw = nll_from_probs(pt, g.labels, g.train_mask);
        out.weigh = lw.value().item();
        if (weigh_opt != nullptr) {
            tw.backward(lw);
            std::vector<Tensor> grads = {tw.grad(mu), tw.grad(nu)};
            if (strategy_trains_mlp(strat)) {
                grads.push_back(tw.grad(*mw1));
                grads.push_back(tw.grad(*mb1));
                grads.push_back(tw.grad(*mw2));
                grads.push_back(tw.grad(*mb2));
            }
            weigh_opt->step(grads);
        }
    }

    // Student update against the (constant) mixture.
    auto [down, klv] = student_step(g, ahat, student, cfg, cfg.alpha > 0.0 ? &pt_val : nullptr, student_opt);
    out.down = down;
    out.kl = klv;
    out.total = down + cfg.alpha * klv;

    if (!std::isfinite(out.total) || !std::isfinite(out.weigh))
        throw std::runtime_error("distill: non-finite loss at epoch " + std::to_string(epoch));

    if (strategy_uses_select_module(strat)) momentum_update(sp, wp, cfg.m);
    trace.append(std::move(omega_val), std::move(kn_val), std::move(kappa_val), std::move(lambda_val));
    return out;
}

struct RunMetrics {
    double test_acc = 0.0;   // at the best-validation snapshot
    double val_acc = 0.0;    // best validation accuracy seen
    int best_epoch = 0;
    double avg_selected = 0.0;
    double top1_selected_ratio = 0.0;
};

struct RunResult {
    StudentModel student;  // best-validation snapshot
    WeighParams weigh;
    SelectParams select;
    SelectionTrace trace;
    RunMetrics metrics;
    std::vector<StepLosses> losses;
};

struct SupervisedResult {
    StudentModel student;
    double test_acc = 0.0;
    double val_acc = 0.0;
    int best_epoch = 0;
};

inline StudentModel init_student(const Graph& g, const RunConfig& cfg) {
    Rng rng = make_rng(cfg.seed, stream::student_init);
    StudentModel s;
    s.enc = init_encoder(g.features.shape[1], cfg.hidden, rng);
    s.head = init_head(cfg.hidden, g.classes, rng);
    return s;
}

// Plain supervised fine-tuning with the same initialization, optimizer and
// snapshot rule as the distillation loop, used as its alpha=0 twin.
inline SupervisedResult train_supervised(const Graph& g, const Tensor& ahat, const RunConfig& cfg) {
    cfg.validate();
    SupervisedResult res;
    res.student = init_student(g, cfg);
    StudentModel best = res.student;
    Adam opt({&res.student.enc.w1, &res.student.enc.w2, &res.student.head.w, &res.student.head.b}, cfg.lr,
             cfg.weight_decay);
    double best_val = -1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto [down, klv] = student_step(g, ahat, res.student, cfg, nullptr, opt);
        (void)klv;
        if (!std::isfinite(down)) throw std::runtime_error("train_supervised: non-finite loss at epoch " + std::to_string(epoch));
        Tensor probs = predict(encode(ahat, g.features, res.student.enc), res.student.head, 1.0);
        const double val = masked_accuracy(probs, g.labels, g.val_mask);
        if (val > best_val) {
            best_val = val;
            best = res.student;
            res.best_epoch = epoch;
            res.test_acc = masked_accuracy(probs, g.labels, g.test_mask);
        }
    }
    res.val_acc = best_val;
    res.student = best;
    return res;
}

// Full fine-tuning loop against a frozen bank. All randomness is drawn from
// fixed per-purpose streams of cfg.seed, so two calls with the same arguments
// give identical results and strategies never perturb each other's draws.
inline RunResult run_was(const Graph& g, const Tensor& ahat, const TeacherBank& bank, const RunConfig& cfg,
                         const Strategy& strat) {
    cfg.validate();
    if (bank.n() != g.n || bank.classes() != g.classes)
        throw config_error("run_was: bank shape " + std::to_string(bank.n()) + "x" + std::to_string(bank.classes()) +
                           " does not match graph");
    if (strat.kind == StrategyKind::ImportanceTopk && strat.topk > bank.K())
        throw config_error("topk: k=" + std::to_string(strat.topk) + " exceeds teacher count " +
                           std::to_string(bank.K()));

    RunResult res;
    res.student = init_student(g, cfg);
    Rng wrng = make_rng(cfg.seed, stream::weigh_init);
    res.weigh = init_weigh(bank.K(), g.classes, wrng);
    Rng mrng = make_rng(cfg.seed, stream::mlp_init);
    res.select = init_select(res.weigh, mrng);
    Rng gumbel_rng = make_rng(cfg.seed, stream::gumbel);
    Rng strategy_rng = make_rng(cfg.seed, stream::strategy);

    const std::vector<Tensor> tempered = temper_distributions(bank.dists(), cfg.tau_kd);

    Adam student_opt({&res.student.enc.w1, &res.student.enc.w2, &res.student.head.w, &res.student.head.b}, cfg.lr,
                     cfg.weight_decay);
    std::unique_ptr<Adam> weigh_opt;
    if (strategy_trains_weigh(strat)) {
        std::vector<Tensor*> wparams = {&res.weigh.mu, &res.weigh.nu};
        if (strategy_trains_mlp(strat)) {
            wparams.push_back(&res.select.w1);
            wparams.push_back(&res.select.b1);
            wparams.push_back(&res.select.w2);
            wparams.push_back(&res.select.b2);
        }
        weigh_opt = std::make_unique<Adam>(wparams, cfg.lr, cfg.weight_decay);
    }

    StudentModel best = res.student;
    double best_val = -1.0;
    res.losses.reserve(cfg.epochs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        res.losses.push_back(distill_step(g, ahat, tempered, res.student, res.weigh, res.select, cfg, strat,
                                          student_opt, weigh_opt.get(), gumbel_rng, strategy_rng, res.trace, epoch));
        Tensor probs = predict(encode(ahat, g.features, res.student.enc), res.student.head, 1.0);
        const double val = masked_accuracy(probs, g.labels, g.val_mask);
        if (val > best_val) {
            best_val = val;
            best = res.student;
            res.metrics.best_epoch = epoch;
            res.metrics.test_acc = masked_accuracy(probs, g.labels, g.test_mask);
        }
    }
    res.metrics.val_acc = best_val;
    res.student = best;
    const SelectionStats stats = selection_stats(res.trace);
    res.metrics.avg_selected = stats.avg_selected;
    res.metrics.top1_selected_ratio = stats.top1_selected_ratio;
    return res;
}

}  // namespace was
