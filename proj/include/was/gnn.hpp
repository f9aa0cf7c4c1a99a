#pragma once

#include "was/autodiff.hpp"
#include "was/rng.hpp"
#include "was/tensor.hpp"

namespace was {

// Two-layer graph convolution encoder shared by every teacher and the
// student: H = A * relu(A * X * W1) * W2 with A the normalized adjacency.
struct EncoderParams {
    Tensor w1;  // d x F
    Tensor w2;  // F x F
};

// Linear classification head on top of the encoder output.
struct HeadParams {
    Tensor w;  // F x C
    Tensor b;  // C
};

inline EncoderParams init_encoder(int d, int hidden, Rng& rng) {
    if (d <= 0 || hidden <= 0) throw config_error("init_encoder: non-positive dimension");
    return EncoderParams{glorot_matrix(d, hidden, rng), glorot_matrix(hidden, hidden, rng)};
}

inline HeadParams init_head(int hidden, int classes, Rng& rng) {
    if (hidden <= 0 || classes <= 0) throw config_error("init_head: non-positive dimension");
    return HeadParams{glorot_matrix(hidden, classes, rng), Tensor::zeros({classes})};
}

// Tape builders. Training loops call these with parameter leaves; the eager
// wrappers below run them on a throwaway tape so both paths share one
// forward definition.
inline Var encode_t(Var ahat, Var x, Var w1, Var w2) {
    Var h1 = relu(matmul(ahat, matmul(x, w1)));
    return matmul(ahat, matmul(h1, w2));
}

inline Var logits_t(Var h, Var w, Var b) { return add_bias(matmul(h, w), b); }

inline Var predict_t(Var h, Var w, Var b, double temperature) {
    if (temperature <= 0.0) throw config_error("predict: temperature must be positive");
    return row_softmax(affine(logits_t(h, w, b), 1.0 / temperature, 0.0));
}

inline Tensor encode(const Tensor& ahat, const Tensor& x, const EncoderParams& p) {
    Tape t;
    return encode_t(t.leaf(ahat), t.leaf(x), t.leaf(p.w1), t.leaf(p.w2)).value();
}

inline Tensor predict(const Tensor& h, const HeadParams& hp, double temperature) {
    Tape t;
    return predict_t(t.leaf(h), t.leaf(hp.w), t.leaf(hp.b), temperature).value();
}

// Row-argmax accuracy over a mask.
inline double masked_accuracy(const Tensor& probs, const std::vector<int>& labels, const std::vector<char>& mask) {
    check_rank2(probs, "masked_accuracy");
    const int n = probs.shape[0], c = probs.shape[1];
    if (static_cast<int>(labels.size()) != n || static_cast<int>(mask.size()) != n)
        throw config_error("masked_accuracy: labels/mask length does not match " + probs.shape_str());
    int count = 0, hit = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++count;
        int am = 0;
        for (int j = 1; j < c; ++j)
            if (probs.at(i, j) > probs.at(i, am)) am = j;
        hit += am == labels[i] ? 1 : 0;
    }
    if (count == 0) throw config_error("masked_accuracy: empty mask");
    return static_cast<double>(hit) / count;
}

}  // namespace was
