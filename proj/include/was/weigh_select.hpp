#pragma once

// Per-instance teacher weighing and the decoupled selecting twin. The weighing
// side scores each teacher against the student's current distribution and is
// trained by gradient; the selecting side is a siamese copy of that body,
// refreshed only by momentum, whose MLP-projected scores drive hard Gumbel
// draws of which teachers participate at all.

#include <cmath>
#include <limits>
#include <vector>

#include "was/autodiff.hpp"
#include "was/rng.hpp"
#include "was/tensor.hpp"

namespace was {

// Trainable scoring body: one latent factor per teacher plus a global vector,
// both living in class-distribution space.
struct WeighParams {
    Tensor mu;  // K x C
    Tensor nu;  // C
};

// Siamese copy of the weighing body plus the projection MLP (K -> K -> K,
// relu hidden). The body never sees gradients, only momentum pulls toward the
// weighing body; the MLP trains through the straight-through gate.
struct SelectParams {
    Tensor mu_s;  // K x C
    Tensor nu_s;  // C
    Tensor w1;    // K x K
    Tensor b1;    // K
    Tensor w2;    // K x K
    Tensor b2;    // K
};

inline WeighParams init_weigh(int teachers, int classes, Rng& rng) {
    if (teachers <= 0 || classes <= 0) throw config_error("init_weigh: non-positive dimension");
    WeighParams p;
    p.mu = glorot_matrix(teachers, classes, rng);
    Tensor nu = glorot_matrix(1, classes, rng);
    nu.shape = {classes};
    p.nu = std::move(nu);
    return p;
}

// The selecting body starts as an exact copy of the weighing body so the
// momentum average is anchored; MLP weights are fresh draws, biases zero.
inline SelectParams init_select(const WeighParams& wp, Rng& mlp_rng) {
    const int k = wp.mu.shape[0];
    SelectParams s;
    s.mu_s = wp.mu;
    s.nu_s = wp.nu;
    s.w1 = glorot_matrix(k, k, mlp_rng);
    s.b1 = Tensor::zeros({k});
    s.w2 = glorot_matrix(k, k, mlp_rng);
    s.b2 = Tensor::zeros({k});
    return s;
}

inline void momentum_update(SelectParams& sel, const WeighParams& wp, double m) {
    if (m < 0.0 || m > 1.0) throw config_error("momentum_update: m must be in [0,1]");
    check_same_shape(sel.mu_s, wp.mu, "momentum_update");
    check_same_shape(sel.nu_s, wp.nu, "momentum_update");
    for (std::size_t i = 0; i < sel.mu_s.numel(); ++i) sel.mu_s[i] = m * sel.mu_s[i] + (1.0 - m) * wp.mu[i];
    for (std::size_t i = 0; i < sel.nu_s.numel(); ++i) sel.nu_s[i] = m * sel.nu_s[i] + (1.0 - m) * wp.nu[i];
}

// zeta[i][k] = sum_c nu[c] * mu[k][c] * dist[i][c], the per-node raw score of
// teacher k given the student's distribution.
inline Tensor zeta_matrix(const Tensor& student_dist, const Tensor& mu, const Tensor& nu) {
    check_rank2(student_dist, "zeta_matrix");
    check_rank2(mu, "zeta_matrix");
    const int n = student_dist.shape[0], c = student_dist.shape[1], k = mu.shape[0];
    if (k == 0) throw config_error("zeta_matrix: no teachers");
    if (mu.shape[1] != c || nu.rank() != 1 || nu.shape[0] != c)
        throw config_error("zeta_matrix: dimension mismatch dist " + student_dist.shape_str() + " mu " +
                           mu.shape_str());
    Tensor z = Tensor::zeros({n, k});
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < k; ++t) {
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += nu[j] * mu.at(t, j) * student_dist.at(i, j);
            z.at(i, t) = s;
        }
    return z;
}

inline Tensor row_softmax_eager(const Tensor& z) {
    check_rank2(z, "row_softmax_eager");
    const int n = z.shape[0], k = z.shape[1];
    Tensor y = Tensor::zeros(z.shape);
    for (int i = 0; i < n; ++i) {
        double mx = z.at(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, z.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += (y.at(i, j) = std::exp(z.at(i, j) - mx));
        for (int j = 0; j < k; ++j) y.at(i, j) /= sum;
    }
    return y;
}

struct WeighOut {
    Tensor omega;  // n x K, rows sum to 1
    Tensor zeta;   // n x K raw scores
};

inline WeighOut weigh(const Tensor& student_dist, const WeighParams& p) {
    WeighOut out;
    out.zeta = zeta_matrix(student_dist, p.mu, p.nu);
    out.omega = row_softmax_eager(out.zeta);
    return out;
}

// Projection MLP applied row-wise to the softmaxed siamese scores, squashed
// through sigmoid so the max-normalized output is positive and log-safe.
inline Tensor mlp_scores(const Tensor& kappa_s, const SelectParams& sp) {
    check_rank2(kappa_s, "mlp_scores");
    const int n = kappa_s.shape[0], k = kappa_s.shape[1];
    if (sp.w1.shape[0] != k) throw config_error("mlp_scores: teacher count mismatch");
    Tensor out = Tensor::zeros({n, k});
    std::vector<double> hid(k);
    for (int i = 0; i < n; ++i) {
        for (int h = 0; h < k; ++h) {
            double s = sp.b1[h];
            for (int j = 0; j < k; ++j) s += kappa_s.at(i, j) * sp.w1.at(j, h);
            hid[h] = std::max(0.0, s);
        }
        for (int o = 0; o < k; ++o) {
            double s = sp.b2[o];
            for (int h = 0; h < k; ++h) s += hid[h] * sp.w2.at(h, o);
            out.at(i, o) = 1.0 / (1.0 + std::exp(-s));
        }
    }
    return out;
}

// Divide each row by its max so the strongest teacher sits at probability 1.
inline Tensor max_normalize(const Tensor& raw) {
    check_rank2(raw, "max_normalize");
    Tensor out = raw;
    const int n = raw.shape[0], k = raw.shape[1];
    for (int i = 0; i < n; ++i) {
        int am = 0;
        for (int j = 1; j < k; ++j)
            if (raw.at(i, j) > raw.at(i, am)) am = j;
        const double mx = raw.at(i, am);
        if (mx <= 0.0) throw config_error("max_normalize: non-positive row max");
        for (int j = 0; j < k; ++j) out.at(i, j) = raw.at(i, j) / mx;
        out.at(i, am) = 1.0;
    }
    return out;
}

// Per-node selection probabilities of the siamese path. use_mlp=false drops
// the projection entirely (the softmaxed scores are max-normalized as-is).
inline Tensor kappa_norm_scores(const Tensor& student_dist, const SelectParams& sp, bool use_mlp = true) {
    Tensor kappa_s = row_softmax_eager(zeta_matrix(student_dist, sp.mu_s, sp.nu_s));
    return max_normalize(use_mlp ? mlp_scores(kappa_s, sp) : kappa_s);
}

inline Tensor gumbel_noise(int n, int k, Rng& rng) {
    Tensor g = Tensor::zeros({n, k});
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = gumbel_sample(rng);
    return g;
}

struct SelectOut {
    Tensor kappa;       // n x K binary, every row has at least one 1
    Tensor kappa_norm;  // n x K probabilities, row max exactly 1
};

inline SelectOut select(const Tensor& student_dist, const SelectParams& sp, double tau_gumbel, Rng& rng,
                        bool use_mlp = true) {
    if (tau_gumbel <= 0.0) throw config_error("select: tau_gumbel must be positive");
    SelectOut out;
    out.kappa_norm = kappa_norm_scores(student_dist, sp, use_mlp);
    // At tau 1 the draw reduces to log(p) + G >= 0; for general tau the
    // threshold sigmoid((log p + G)/tau) >= 1/2 is the same inequality.
    out.kappa = gate_sample(out.kappa_norm, gumbel_noise(out.kappa_norm.shape[0], out.kappa_norm.shape[1], rng),
                            /*fallback=*/true);
    return out;
}

// Softmax of zeta restricted to the selected teachers; zeros elsewhere.
inline Tensor reweigh(const Tensor& kappa, const Tensor& zeta) {
    check_same_shape(kappa, zeta, "reweigh");
    check_rank2(zeta, "reweigh");
    const int n = zeta.shape[0], k = zeta.shape[1];
    Tensor lam = Tensor::zeros(zeta.shape);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j)
            if (kappa.at(i, j) != 0.0) mx = std::max(mx, zeta.at(i, j));
        if (!std::isfinite(mx)) throw config_error("reweigh: row " + std::to_string(i) + " has no selected teacher");
        double sum = 0.0;
        for (int j = 0; j < k; ++j)
            if (kappa.at(i, j) != 0.0) sum += (lam.at(i, j) = std::exp(zeta.at(i, j) - mx));
        for (int j = 0; j < k; ++j) lam.at(i, j) /= sum;
    }
    return lam;
}

// P_T[i] = sum_k kappa[i][k] * lambda[i][k] * dists[k][i], the per-node convex
// mixture of selected teacher rows.
inline Tensor integrate(const Tensor& kappa, const Tensor& lambda, const std::vector<Tensor>& dists) {
    check_same_shape(kappa, lambda, "integrate");
    check_rank2(lambda, "integrate");
    const int n = lambda.shape[0], k = lambda.shape[1];
    if (static_cast<int>(dists.size()) != k) throw config_error("integrate: teacher count mismatch");
    for (const Tensor& d : dists) {
        check_rank2(d, "integrate");
        if (d.shape[0] != n) throw config_error("integrate: distribution rows mismatch " + d.shape_str());
    }
    const int c = dists[0].shape[1];
    Tensor out = Tensor::zeros({n, c});
    for (int t = 0; t < k; ++t)
        for (int i = 0; i < n; ++i) {
            const double w = kappa.at(i, t) * lambda.at(i, t);
            if (w == 0.0) continue;
            for (int j = 0; j < c; ++j) out.at(i, j) += w * dists[t].at(i, j);
        }
    return out;
}

// Tape builders mirroring the eager math, used where gradients must flow.

inline Var zeta_t(Var student_dist, Var mu, Var nu) {
    return matmul(student_dist, transpose(scale_cols(mu, nu)));
}

// sigmoid(relu(x W1 + b1) W2 + b2) row-normalized by its max. The input rows
// are the softmaxed siamese scores, passed as a constant leaf; gradients flow
// only into the MLP weights.
inline Var kappa_norm_t(Var kappa_s, Var w1, Var b1, Var w2, Var b2) {
    Var hid = relu(add_bias(matmul(kappa_s, w1), b1));
    return div_rowmax(sigmoid(add_bias(matmul(hid, w2), b2)));
}

// Selected-softmax on the tape: gate * exp(zeta - shift), row-normalized.
// The shift is the per-row max of zeta over selected entries, treated as a
// constant; the normalized result is invariant to it, so gradients match the
// unshifted formula while exp stays in range.
inline Var reweigh_t(Var gate, Var zeta, const Tensor& kappa_value) {
    const Tensor& z = zeta.value();
    check_same_shape(kappa_value, z, "reweigh_t");
    const int n = z.shape[0], k = z.shape[1];
    Tensor shift = Tensor::zeros(z.shape);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j)
            if (kappa_value.at(i, j) != 0.0) mx = std::max(mx, z.at(i, j));
        if (!std::isfinite(mx)) throw config_error("reweigh_t: row " + std::to_string(i) + " has no selected teacher");
        for (int j = 0; j < k; ++j) shift.at(i, j) = mx;
    }
    Var shifted = sub(zeta, zeta.tape->leaf(shift, false));
    return row_normalize(mul(gate, vexp(shifted)));
}

// Parameters the weigh+select pair adds on top of the student: two scoring
// bodies (K*C + C each) and the two MLP layers with biases (K*K + K each).
inline long long extra_trainable_params(int teachers, int classes) {
    const long long k = teachers, c = classes;
    return 2 * k * c + 2 * c + 2 * (k * k + k);
}

// Closed-form overhead 2*K*C*(C+1) + K*K quoted as an aggregate estimate in
// prior accounting; reported alongside the exact count, not reconciled.
inline long long extra_params_aggregate_formula(int teachers, int classes) {
    const long long k = teachers, c = classes;
    return 2 * k * c * (c + 1) + k * k;
}

}  // namespace was
