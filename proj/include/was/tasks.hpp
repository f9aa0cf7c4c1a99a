#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "was/adam.hpp"
#include "was/autodiff.hpp"
#include "was/checkpoint.hpp"
#include "was/config.hpp"
#include "was/gnn.hpp"
#include "was/graph.hpp"
#include "was/graph_algos.hpp"
#include "was/rng.hpp"

namespace was {

// ---------------------------------------------------------------------------
// teacher pre-training

struct PretrainResult {
    EncoderParams encoder;
    // Per-epoch task loss. The pair tasks resample their training pairs
    // every epoch, so their history is measured on a fixed reference pair
    // sample instead; otherwise subsampling noise would swamp the trend.
    std::vector<double> loss_history;
};

// Trains one encoder with the given self-supervised task. Auxiliary heads
// (cluster/partition/distance classifiers, discriminator and bilinear forms)
// live only inside this function; the encoder is the sole survivor.
inline PretrainResult pretrain_teacher(const Graph& g, const Tensor& ahat, TaskKind task, const RunConfig& cfg,
                                       std::uint64_t teacher_seed) {
    cfg.validate();
    g.validate();
    const int n = g.n, d = g.feat_dim(), F = cfg.hidden;

    auto init_rng = Rng(mix_seed(teacher_seed, 1));
    auto epoch_rng = Rng(mix_seed(teacher_seed, 2));
    const std::uint64_t label_seed = mix_seed(teacher_seed, 3);

    EncoderParams enc = init_encoder(d, F, init_rng);

    // task-specific constants and auxiliary parameters
    std::vector<int> pseudo;
    Tensor aux_w, aux_b;
    const std::vector<char> all_nodes(n, 1);
    switch (task) {
        case TaskKind::DGI:
            aux_w = glorot_matrix(F, F, init_rng);
            break;
        case TaskKind::CLU: {
            const int k = std::min(cfg.clu_k, n);
            pseudo = kmeans(g.features, k, label_seed).labels;
            aux_w = glorot_matrix(F, k, init_rng);
            aux_b = Tensor::zeros({k});
            break;
        }
        case TaskKind::PAR: {
            const int parts = std::min(cfg.par_parts, n);
            pseudo = partition_graph(g, parts, label_seed);
            aux_w = glorot_matrix(F, parts, init_rng);
            aux_b = Tensor::zeros({parts});
            break;
        }
        case TaskKind::PAIRSIM:
            aux_w = glorot_matrix(F, F, init_rng);
            break;
        case TaskKind::PAIRDIS:
            aux_w = glorot_matrix(2 * F, cfg.pairdis_max_hop, init_rng);
            aux_b = Tensor::zeros({cfg.pairdis_max_hop});
            break;
    }

    std::vector<Tensor*> params{&enc.w1, &enc.w2, &aux_w};
    if (aux_b.numel() > 0) params.push_back(&aux_b);
    Adam opt(params, cfg.lr, cfg.weight_decay);

    // fixed reference pairs for the pair-task loss history
    std::vector<int> eval_us, eval_vs, eval_cls;
    Tensor eval_target;
    if (task == TaskKind::PAIRSIM || task == TaskKind::PAIRDIS) {
        auto eval_rng = Rng(mix_seed(teacher_seed, 4));
        auto pairs = task == TaskKind::PAIRSIM ? sample_pairs(n, cfg.pair_budget_factor * n, eval_rng, &g.features)
                                               : sample_pairs(n, cfg.pair_budget_factor * n, eval_rng);
        const int np = static_cast<int>(pairs.size());
        eval_us.resize(np);
        eval_vs.resize(np);
        for (int i = 0; i < np; ++i) {
            eval_us[i] = pairs[i].first;
            eval_vs[i] = pairs[i].second;
        }
        if (task == TaskKind::PAIRSIM) {
            eval_target = Tensor::zeros({np, 1});
            for (int i = 0; i < np; ++i) eval_target.at(i, 0) = pair_cosine_similarity(g.features, eval_us[i], eval_vs[i]);
        } else {
            eval_cls = shortest_path_classes(g, pairs, cfg.pairdis_max_hop);
        }
    }

    PretrainResult res;
    res.loss_history.reserve(cfg.pretrain_epochs);

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        Tape t;
        Var vw1 = t.leaf(enc.w1, true);
        Var vw2 = t.leaf(enc.w2, true);
        Var vaux = t.leaf(aux_w, true);
        Var vauxb = aux_b.numel() > 0 ? t.leaf(aux_b, true) : Var{};
        Var vahat = t.leaf(ahat, false);
        Var vx = t.leaf(g.features, false);
        Var h = encode_t(vahat, vx, vw1, vw2);

        Var loss;
        switch (task) {
            case TaskKind::DGI: {
                // mean-pooled summary scores real rows up, shuffled rows down
                std::vector<int> perm(n);
                for (int i = 0; i < n; ++i) perm[i] = i;
                for (int i = n - 1; i > 0; --i) {
                    const int j = std::min(static_cast<int>(uniform01(epoch_rng) * (i + 1)), i);
                    std::swap(perm[i], perm[j]);
                }
                Tensor x_shuf = Tensor::zeros({n, d});
                for (int i = 0; i < n; ++i)
                    for (int f = 0; f < d; ++f) x_shuf.at(i, f) = g.features.at(perm[i], f);
                Var h_neg = encode_t(vahat, t.leaf(x_shuf, false), vw1, vw2);
                Var summary = transpose(mean_rows(h));            // F x 1
                Var key = matmul(vaux, summary);                  // F x 1
                Var pos = bce_with_logits(matmul(h, key), Tensor::full({n, 1}, 1.0));
                Var neg = bce_with_logits(matmul(h_neg, key), Tensor::zeros({n, 1}));
                loss = scale(add(pos, neg), 0.5);
                break;
            }
            case TaskKind::CLU:
            case TaskKind::PAR: {
                Var z = add_bias(matmul(h, vaux), vauxb);
                loss = masked_cross_entropy(z, pseudo, all_nodes);
                break;
            }
            case TaskKind::PAIRSIM: {
                auto pairs = sample_pairs(n, cfg.pair_budget_factor * n, epoch_rng, &g.features);
                const int np = static_cast<int>(pairs.size());
                std::vector<int> us(np), vs(np);
                Tensor target = Tensor::zeros({np, 1});
                for (int i = 0; i < np; ++i) {
                    us[i] = pairs[i].first;
                    vs[i] = pairs[i].second;
                    target.at(i, 0) = pair_cosine_similarity(g.features, us[i], vs[i]);
                }
                Var hu = gather_rows(h, us);
                Var hv = gather_rows(h, vs);
                Var score = row_sum(mul(matmul(hu, vaux), hv));   // h_u' W h_v per pair
                Var pred = affine(sigmoid(score), 2.0, -1.0);     // into [-1, 1]
                loss = mse_const(pred, target);
                break;
            }
            case TaskKind::PAIRDIS: {
                auto pairs = sample_pairs(n, cfg.pair_budget_factor * n, epoch_rng);
                const auto cls = shortest_path_classes(g, pairs, cfg.pairdis_max_hop);
                const int np = static_cast<int>(pairs.size());
                std::vector<int> us(np), vs(np);
                for (int i = 0; i < np; ++i) {
                    us[i] = pairs[i].first;
                    vs[i] = pairs[i].second;
                }
                Var pair_emb = concat_cols(gather_rows(h, us), gather_rows(h, vs));
                Var z = add_bias(matmul(pair_emb, vaux), vauxb);
                loss = masked_cross_entropy(z, cls, std::vector<char>(np, 1));
                break;
            }
        }

        const double lv = loss.value().item();
        if (!std::isfinite(lv))
            throw std::runtime_error(std::string("pretrain ") + task_name(task) + ": non-finite loss at epoch " +
                                     std::to_string(epoch));
        double hist = lv;
        if (task == TaskKind::PAIRSIM) {
            // value-only nodes on the same tape; backward never touches them
            Var score = row_sum(mul(matmul(gather_rows(h, eval_us), vaux), gather_rows(h, eval_vs)));
            hist = mse_const(affine(sigmoid(score), 2.0, -1.0), eval_target).value().item();
        } else if (task == TaskKind::PAIRDIS) {
            Var pair_emb = concat_cols(gather_rows(h, eval_us), gather_rows(h, eval_vs));
            Var z = add_bias(matmul(pair_emb, vaux), vauxb);
            hist = masked_cross_entropy(z, eval_cls, std::vector<char>(eval_cls.size(), 1)).value().item();
        }
        res.loss_history.push_back(hist);

        t.backward(loss);
        std::vector<Tensor> grads{t.grad(vw1), t.grad(vw2), t.grad(vaux)};
        if (aux_b.numel() > 0) grads.push_back(t.grad(vauxb));
        opt.step(grads);
    }

    res.encoder = std::move(enc);
    return res;
}

// ---------------------------------------------------------------------------
// linear probing

struct ProbeResult {
    HeadParams head;
    double best_val_acc = 0.0;
    double test_acc = 0.0;
    int best_epoch = 0;
};

// Cross-entropy on the train mask with the encoder frozen; the head with the
// best validation accuracy wins (earliest epoch on ties).
inline ProbeResult linear_probe(const EncoderParams& enc, const Graph& g, const Tensor& ahat, const RunConfig& cfg,
                                std::uint64_t probe_seed) {
    const Tensor h = encode(ahat, g.features, enc);
    auto rng = Rng(mix_seed(probe_seed, 1));
    HeadParams head = init_head(cfg.hidden, g.classes, rng);

    Adam opt({&head.w, &head.b}, cfg.lr, cfg.weight_decay);
    ProbeResult res;
    res.head = head;
    res.best_val_acc = -1.0;

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        Tape t;
        Var vw = t.leaf(head.w, true);
        Var vb = t.leaf(head.b, true);
        Var z = logits_t(t.leaf(h), vw, vb);
        Var loss = masked_cross_entropy(z, g.labels, g.train_mask);
        if (!std::isfinite(loss.value().item()))
            throw std::runtime_error("linear_probe: non-finite loss at epoch " + std::to_string(epoch));
        t.backward(loss);
        opt.step({t.grad(vw), t.grad(vb)});

        const double val = masked_accuracy(predict(h, head, 1.0), g.labels, g.val_mask);
        if (val > res.best_val_acc) {
            res.best_val_acc = val;
            res.head = head;
            res.best_epoch = epoch;
        }
    }
    res.test_acc = masked_accuracy(predict(h, res.head, 1.0), g.labels, g.test_mask);
    return res;
}

// ---------------------------------------------------------------------------
// teacher bank

struct TeacherArtifacts {
    TaskKind task = TaskKind::DGI;
    EncoderParams encoder;
    HeadParams probe;
    double probe_val_acc = 0.0;
    double probe_test_acc = 0.0;
    Tensor dists;  // n x C at temperature 1
};

// Frozen per-node class distributions of the pre-trained teachers. Immutable
// once built; the distillation loop only reads it.
class TeacherBank {
public:
    TeacherBank(std::vector<TaskKind> tasks, std::vector<Tensor> dists)
        : tasks_(std::move(tasks)), dists_(std::move(dists)) {
        if (tasks_.empty() || tasks_.size() != dists_.size())
            throw config_error("teacher bank: task/distribution count mismatch");
        for (const Tensor& d : dists_) {
            check_rank2(d, "teacher bank");
            if (!d.same_shape(dists_[0]))
                throw config_error("teacher bank: inconsistent distribution shapes " + d.shape_str() + " vs " +
                                   dists_[0].shape_str());
            for (int i = 0; i < d.shape[0]; ++i) {
                double s = 0.0;
                for (int j = 0; j < d.shape[1]; ++j) {
                    if (d.at(i, j) < 0.0) throw config_error("teacher bank: negative probability");
                    s += d.at(i, j);
                }
                if (std::abs(s - 1.0) > 1e-9)
                    throw config_error("teacher bank: row " + std::to_string(i) + " sums to " + std::to_string(s));
            }
        }
    }

    int K() const { return static_cast<int>(dists_.size()); }
    int n() const { return dists_[0].shape[0]; }
    int classes() const { return dists_[0].shape[1]; }
    TaskKind task(int k) const { return tasks_.at(k); }
    const Tensor& dist(int k) const { return dists_.at(k); }
    const std::vector<Tensor>& dists() const { return dists_; }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (std::size_t k = 0; k < dists_.size(); ++k) {
            const int tag = static_cast<int>(tasks_[k]);
            h = fnv1a(&tag, sizeof tag, h);
            h = hash_tensor(dists_[k], h);
        }
        return h;
    }

private:
    std::vector<TaskKind> tasks_;
    std::vector<Tensor> dists_;
};

// Pre-trains every requested teacher and probes it. Each teacher owns an RNG
// stream derived from (master seed, teacher index), so a worker pool of any
// size produces identical artifacts; merge order is by teacher index.
inline std::vector<TeacherArtifacts> pretrain_teachers(const Graph& g, const Tensor& ahat,
                                                       const std::vector<TaskKind>& tasks, const RunConfig& cfg,
                                                       int jobs = 1) {
    if (tasks.empty()) throw config_error("pretrain_teachers: empty task list");
    std::vector<TeacherArtifacts> out(tasks.size());
    auto work = [&](int k) {
        const std::uint64_t tseed = mix_seed(cfg.seed, stream::teacher_base + static_cast<std::uint64_t>(k));
        PretrainResult pre = pretrain_teacher(g, ahat, tasks[k], cfg, tseed);
        ProbeResult probe = linear_probe(pre.encoder, g, ahat, cfg, mix_seed(tseed, stream::probe_init));
        Tensor h = encode(ahat, g.features, pre.encoder);
        Tensor dist = predict(h, probe.head, 1.0);
        out[k] = TeacherArtifacts{tasks[k],         std::move(pre.encoder), std::move(probe.head),
                                  probe.best_val_acc, probe.test_acc,        std::move(dist)};
    };
    const int kcount = static_cast<int>(tasks.size());
    if (jobs <= 1) {
        for (int k = 0; k < kcount; ++k) work(k);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        const int nthreads = std::min(jobs, kcount);
        std::vector<std::exception_ptr> errors(nthreads);
        for (int w = 0; w < nthreads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (int k = next.fetch_add(1); k < kcount; k = next.fetch_add(1)) work(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return out;
}

inline TeacherBank make_bank(const std::vector<TeacherArtifacts>& arts) {
    std::vector<TaskKind> tasks;
    std::vector<Tensor> dists;
    for (const auto& a : arts) {
        tasks.push_back(a.task);
        dists.push_back(a.dists);
    }
    return TeacherBank(std::move(tasks), std::move(dists));
}

// ---------------------------------------------------------------------------
// bank files: per-teacher JSON descriptor + checkpoints + a dists TSV

inline void save_bank(const std::string& dir, const std::vector<TeacherArtifacts>& arts,
                      const nlohmann::json& config_echo) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json bank;
    bank["teachers"] = nlohmann::json::array();
    for (std::size_t k = 0; k < arts.size(); ++k) {
        const auto& a = arts[k];
        const std::string stem = "teacher_" + std::to_string(k);
        save_checkpoint((fs::path(dir) / (stem + "_encoder.json")).string(),
                        {{"w1", a.encoder.w1}, {"w2", a.encoder.w2}}, config_echo);
        save_checkpoint((fs::path(dir) / (stem + "_probe.json")).string(), {{"w", a.probe.w}, {"b", a.probe.b}},
                        config_echo);
        {
            std::ofstream f(fs::path(dir) / (stem + "_dists.tsv"));
            char buf[32];
            for (int i = 0; i < a.dists.shape[0]; ++i) {
                for (int j = 0; j < a.dists.shape[1]; ++j) {
                    std::snprintf(buf, sizeof buf, "%.17g", a.dists.at(i, j));
                    f << (j ? "\t" : "") << buf;
                }
                f << "\n";
            }
        }
        nlohmann::json tj{{"task", task_name(a.task)},
                          {"encoder", stem + "_encoder.json"},
                          {"probe", stem + "_probe.json"},
                          {"dists", stem + "_dists.tsv"},
                          {"probe_val_acc", a.probe_val_acc},
                          {"probe_test_acc", a.probe_test_acc}};
        std::ofstream(fs::path(dir) / (stem + ".json")) << tj.dump(1) << "\n";
        bank["teachers"].push_back(stem + ".json");
    }
    bank["config"] = config_echo;
    std::ofstream(fs::path(dir) / "bank.json") << bank.dump(1) << "\n";
}

inline std::vector<TeacherArtifacts> load_bank(const std::string& dir, nlohmann::json* config_echo = nullptr) {
    namespace fs = std::filesystem;
    std::ifstream bf(fs::path(dir) / "bank.json");
    if (!bf) throw config_error("cannot open bank " + dir + "/bank.json");
    nlohmann::json bank;
    try {
        bf >> bank;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("bank.json: " + std::string(e.what()));
    }
    if (!bank.contains("teachers") || bank["teachers"].empty()) throw config_error("bank.json: no teachers listed");
    if (config_echo) *config_echo = bank.value("config", nlohmann::json::object());

    std::vector<TeacherArtifacts> arts;
    for (const auto& entry : bank["teachers"]) {
        std::ifstream tf(fs::path(dir) / entry.get<std::string>());
        if (!tf) throw config_error("cannot open teacher descriptor " + entry.get<std::string>());
        nlohmann::json tj;
        tf >> tj;
        TeacherArtifacts a;
        a.task = task_from_name(tj.at("task").get<std::string>());
        auto enc = load_checkpoint((fs::path(dir) / tj.at("encoder").get<std::string>()).string());
        a.encoder = EncoderParams{enc.params.at("w1"), enc.params.at("w2")};
        auto probe = load_checkpoint((fs::path(dir) / tj.at("probe").get<std::string>()).string());
        a.probe = HeadParams{probe.params.at("w"), probe.params.at("b")};
        a.probe_val_acc = tj.value("probe_val_acc", 0.0);
        a.probe_test_acc = tj.value("probe_test_acc", 0.0);

        std::ifstream df(fs::path(dir) / tj.at("dists").get<std::string>());
        if (!df) throw config_error("cannot open dists file for " + entry.get<std::string>());
        std::vector<double> vals;
        double v;
        int cols = 0;
        {
            std::string first_line;
            std::getline(df, first_line);
            std::istringstream is(first_line);
            while (is >> v) {
                vals.push_back(v);
                ++cols;
            }
        }
        while (df >> v) vals.push_back(v);
        if (cols == 0 || vals.size() % cols != 0)
            throw config_error("dists file for " + entry.get<std::string>() + " is ragged");
        const int rows = static_cast<int>(vals.size()) / cols;
        a.dists = Tensor({rows, cols}, std::move(vals));
        arts.push_back(std::move(a));
    }
    return arts;
}

}  // namespace was
