#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "was/rng.hpp"
#include "was/tensor.hpp"

namespace was {

// Undirected graph with node features, labels and a fixed train/val/test
// split. Edges are stored once as (u, v) with u < v; self-loops only appear
// inside adjacency normalization.
struct Graph {
    int n = 0;
    int classes = 0;
    std::vector<std::pair<int, int>> edges;
    Tensor features;  // n x d
    std::vector<int> labels;
    std::vector<char> train_mask, val_mask, test_mask;

    int feat_dim() const { return features.rank() == 2 ? features.shape[1] : 0; }

    void validate() const {
        if (n <= 0) throw config_error("graph: node count must be positive");
        if (classes <= 0) throw config_error("graph: class count must be positive");
        if (features.rank() != 2 || features.shape[0] != n)
            throw config_error("graph: features shape " + features.shape_str() + " does not match n=" + std::to_string(n));
        if (static_cast<int>(labels.size()) != n) throw config_error("graph: labels length does not match node count");
        for (int i = 0; i < n; ++i)
            if (labels[i] < 0 || labels[i] >= classes)
                throw config_error("graph: label " + std::to_string(labels[i]) + " at node " + std::to_string(i) +
                                   " outside [0," + std::to_string(classes) + ")");
        std::set<std::pair<int, int>> seen;
        for (auto [u, v] : edges) {
            if (u < 0 || v < 0 || u >= n || v >= n)
                throw config_error("graph: edge (" + std::to_string(u) + "," + std::to_string(v) + ") out of range");
            if (u == v) throw config_error("graph: self-loop at node " + std::to_string(u));
            if (u > v) throw config_error("graph: edge (" + std::to_string(u) + "," + std::to_string(v) + ") not stored as u < v");
            if (!seen.insert({u, v}).second)
                throw config_error("graph: duplicate edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
        }
        if (static_cast<int>(train_mask.size()) != n || static_cast<int>(val_mask.size()) != n ||
            static_cast<int>(test_mask.size()) != n)
            throw config_error("graph: mask length does not match node count");
        int train_count = 0;
        for (int i = 0; i < n; ++i) {
            const int hits = (train_mask[i] ? 1 : 0) + (val_mask[i] ? 1 : 0) + (test_mask[i] ? 1 : 0);
            if (hits > 1) throw config_error("graph: node " + std::to_string(i) + " appears in multiple masks");
            train_count += train_mask[i] ? 1 : 0;
        }
        if (train_count == 0) throw config_error("graph: empty train mask");
    }

    std::vector<std::vector<int>> adjacency_list() const {
        std::vector<std::vector<int>> adj(n);
        for (auto [u, v] : edges) {
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        return adj;
    }

    bool operator==(const Graph& o) const {
        return n == o.n && classes == o.classes && edges == o.edges && features == o.features &&
               labels == o.labels && train_mask == o.train_mask && val_mask == o.val_mask && test_mask == o.test_mask;
    }
};

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Dense; the
// engine targets graphs of a few hundred nodes.
inline Tensor normalize_adjacency(const Graph& g) {
    Tensor a = Tensor::zeros({g.n, g.n});
    for (auto [u, v] : g.edges) {
        a.at(u, v) = 1.0;
        a.at(v, u) = 1.0;
    }
    for (int i = 0; i < g.n; ++i) a.at(i, i) = 1.0;
    std::vector<double> inv_sqrt_deg(g.n);
    for (int i = 0; i < g.n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < g.n; ++j) deg += a.at(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) a.at(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    return a;
}

// Hop distances from src; -1 marks unreachable nodes.
inline std::vector<int> bfs_hops(const std::vector<std::vector<int>>& adj, int src) {
    std::vector<int> dist(adj.size(), -1);
    std::vector<int> frontier{src};
    dist[src] = 0;
    int hop = 0;
    while (!frontier.empty()) {
        ++hop;
        std::vector<int> next;
        for (int u : frontier)
            for (int v : adj[u])
                if (dist[v] < 0) {
                    dist[v] = hop;
                    next.push_back(v);
                }
        frontier = std::move(next);
    }
    return dist;
}

// Balanced stochastic block model. Classes occupy contiguous index blocks;
// features are a one-hot class centroid embedded in feat_dim dims plus
// Gaussian noise; masks split roughly 10/10/80 per class.
inline Graph generate_sbm(int n, int classes, double p_in, double p_out, int feat_dim, double noise,
                          std::uint64_t seed) {
    if (classes < 2) throw config_error("generate_sbm: needs at least 2 classes");
    if (n < classes) throw config_error("generate_sbm: n < classes");
    if (feat_dim <= 0) throw config_error("generate_sbm: feat_dim must be positive");
    if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0))
        throw config_error("generate_sbm: need 0 <= p_out < p_in <= 1");
    if (noise < 0.0) throw config_error("generate_sbm: noise must be non-negative");

    Graph g;
    g.n = n;
    g.classes = classes;
    g.labels.resize(n);
    for (int i = 0; i < n; ++i) g.labels[i] = static_cast<int>((static_cast<long long>(i) * classes) / n);

    auto edge_rng = make_rng(seed, stream::sbm_edges);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            const double p = g.labels[u] == g.labels[v] ? p_in : p_out;
            if (uniform01(edge_rng) < p) g.edges.emplace_back(u, v);
        }

    auto feat_rng = make_rng(seed, stream::sbm_feats);
    g.features = Tensor::zeros({n, feat_dim});
    for (int i = 0; i < n; ++i) {
        g.features.at(i, g.labels[i] % feat_dim) = 1.0;
        for (int f = 0; f < feat_dim; ++f) g.features.at(i, f) += noise * normal_sample(feat_rng);
    }

    auto mask_rng = make_rng(seed, stream::sbm_masks);
    g.train_mask.assign(n, 0);
    g.val_mask.assign(n, 0);
    g.test_mask.assign(n, 0);
    for (int c = 0; c < classes; ++c) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (g.labels[i] == c) members.push_back(i);
        // Fisher-Yates with the seeded stream
        for (int i = static_cast<int>(members.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(uniform01(mask_rng) * (i + 1));
            std::swap(members[i], members[std::min(j, i)]);
        }
        const int sz = static_cast<int>(members.size());
        const int n_train = std::max(1, static_cast<int>(sz * 0.1 + 0.5));
        const int n_val = std::min(std::max(1, static_cast<int>(sz * 0.1 + 0.5)), std::max(0, sz - n_train));
        for (int r = 0; r < sz; ++r) {
            if (r < n_train)
                g.train_mask[members[r]] = 1;
            else if (r < n_train + n_val)
                g.val_mask[members[r]] = 1;
            else
                g.test_mask[members[r]] = 1;
        }
    }
    g.validate();
    return g;
}

namespace detail {

inline std::ifstream open_or_die(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw config_error("cannot open " + p.string());
    return f;
}

}  // namespace detail

// Directory layout: meta.json, features.tsv, edges.tsv, labels.tsv,
// masks.tsv. All text; floats printed with 17 significant digits so the
// round-trip is lossless.
inline void save_dataset(const Graph& g, const std::string& dir) {
    g.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json meta{{"n", g.n}, {"d", g.feat_dim()}, {"classes", g.classes}};
    std::ofstream(fs::path(dir) / "meta.json") << meta.dump(2) << "\n";

    std::ofstream feat(fs::path(dir) / "features.tsv");
    char buf[32];
    for (int i = 0; i < g.n; ++i) {
        for (int f = 0; f < g.feat_dim(); ++f) {
            std::snprintf(buf, sizeof buf, "%.17g", g.features.at(i, f));
            feat << (f ? "\t" : "") << buf;
        }
        feat << "\n";
    }

    std::ofstream edges(fs::path(dir) / "edges.tsv");
    for (auto [u, v] : g.edges) edges << u << "\t" << v << "\n";

    std::ofstream labels(fs::path(dir) / "labels.tsv");
    for (int y : g.labels) labels << y << "\n";

    std::ofstream masks(fs::path(dir) / "masks.tsv");
    for (int i = 0; i < g.n; ++i)
        masks << (g.train_mask[i] ? "train" : g.val_mask[i] ? "val" : "test") << "\n";
}

inline Graph load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Graph g;

    nlohmann::json meta;
    try {
        detail::open_or_die(fs::path(dir) / "meta.json") >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("meta.json: " + std::string(e.what()));
    }
    if (!meta.contains("n") || !meta.contains("d") || !meta.contains("classes"))
        throw config_error("meta.json: missing one of n/d/classes");
    g.n = meta["n"].get<int>();
    g.classes = meta["classes"].get<int>();
    const int d = meta["d"].get<int>();
    if (g.n <= 0 || d <= 0 || g.classes <= 0) throw config_error("meta.json: non-positive dimension");

    {
        auto f = detail::open_or_die(fs::path(dir) / "features.tsv");
        g.features = Tensor::zeros({g.n, d});
        std::string line;
        int row = 0;
        while (std::getline(f, line)) {
            if (line.empty() && row == g.n) break;
            if (row >= g.n) throw config_error("features.tsv: more rows than meta declares");
            std::istringstream is(line);
            for (int c = 0; c < d; ++c)
                if (!(is >> g.features.at(row, c)))
                    throw config_error("features.tsv: row " + std::to_string(row) + " has fewer than " +
                                       std::to_string(d) + " columns");
            double extra;
            if (is >> extra) throw config_error("features.tsv: row " + std::to_string(row) + " has extra columns");
            ++row;
        }
        if (row != g.n) throw config_error("features.tsv: expected " + std::to_string(g.n) + " rows, got " + std::to_string(row));
    }

    {
        auto f = detail::open_or_die(fs::path(dir) / "edges.tsv");
        int u, v;
        while (f >> u >> v) g.edges.emplace_back(u, v);
    }

    {
        auto f = detail::open_or_die(fs::path(dir) / "labels.tsv");
        int y;
        while (f >> y) g.labels.push_back(y);
        if (static_cast<int>(g.labels.size()) != g.n)
            throw config_error("labels.tsv: expected " + std::to_string(g.n) + " labels, got " +
                               std::to_string(g.labels.size()));
    }

    {
        auto f = detail::open_or_die(fs::path(dir) / "masks.tsv");
        g.train_mask.assign(g.n, 0);
        g.val_mask.assign(g.n, 0);
        g.test_mask.assign(g.n, 0);
        std::string word;
        int row = 0;
        while (f >> word) {
            if (row >= g.n) throw config_error("masks.tsv: more rows than meta declares");
            if (word == "train")
                g.train_mask[row] = 1;
            else if (word == "val")
                g.val_mask[row] = 1;
            else if (word == "test")
                g.test_mask[row] = 1;
            else
                throw config_error("masks.tsv: unknown mask '" + word + "' at row " + std::to_string(row));
            ++row;
        }
        if (row != g.n) throw config_error("masks.tsv: expected " + std::to_string(g.n) + " rows, got " + std::to_string(row));
    }

    g.validate();
    return g;
}

}  // namespace was
