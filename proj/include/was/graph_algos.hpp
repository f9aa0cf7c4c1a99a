#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "was/graph.hpp"
#include "was/rng.hpp"
#include "was/tensor.hpp"

namespace was {

// ---------------------------------------------------------------------------
// k-means (pseudo-labels for the clustering task)

struct KmeansResult {
    std::vector<int> labels;
    Tensor centroids;  // k x d
    double objective = 0.0;
};

namespace detail {
inline double sq_dist_row(const Tensor& x, int i, const Tensor& c, int j) {
    double s = 0.0;
    for (int f = 0; f < x.shape[1]; ++f) {
        const double d = x.at(i, f) - c.at(j, f);
        s += d * d;
    }
    return s;
}
}  // namespace detail

// Lloyd's algorithm with seeded k-means++ initialization. Runs to
// convergence or max_iters. An emptied cluster is re-seeded at the point
// farthest from its assigned centroid. `objective_per_iter`, when given,
// records the post-assignment objective each iteration.
inline KmeansResult kmeans(const Tensor& x, int k, std::uint64_t seed, int max_iters = 100,
                           std::vector<double>* objective_per_iter = nullptr) {
    check_rank2(x, "kmeans");
    const int n = x.shape[0], d = x.shape[1];
    if (k < 1) throw config_error("kmeans: k must be >= 1");
    if (k > n) throw config_error("kmeans: k exceeds point count");

    auto rng = make_rng(seed, stream::kmeans_init);
    Tensor cent = Tensor::zeros({k, d});

    // k-means++: first centroid uniform, the rest proportional to squared
    // distance from the nearest chosen centroid
    std::vector<double> d2(n);
    {
        const int first = static_cast<int>(uniform01(rng) * n) % n;
        for (int f = 0; f < d; ++f) cent.at(0, f) = x.at(first, f);
        for (int j = 1; j < k; ++j) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = detail::sq_dist_row(x, i, cent, 0);
                for (int c = 1; c < j; ++c) best = std::min(best, detail::sq_dist_row(x, i, cent, c));
                d2[i] = best;
                total += best;
            }
            int pick = 0;
            if (total > 0.0) {
                double r = uniform01(rng) * total;
                for (int i = 0; i < n; ++i) {
                    r -= d2[i];
                    if (r <= 0.0) {
                        pick = i;
                        break;
                    }
                    pick = i;  // numeric slack: fall through to the last point
                }
            } else {
                pick = static_cast<int>(uniform01(rng) * n) % n;
            }
            for (int f = 0; f < d; ++f) cent.at(j, f) = x.at(pick, f);
        }
    }

    KmeansResult res;
    res.labels.assign(n, 0);

    auto assign = [&]() {
        double obj = 0.0;
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = detail::sq_dist_row(x, i, cent, 0);
            for (int c = 1; c < k; ++c) {
                const double dd = detail::sq_dist_row(x, i, cent, c);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (res.labels[i] != best) changed = true;
            res.labels[i] = best;
            obj += bd;
        }
        res.objective = obj;
        return changed;
    };

    assign();
    if (objective_per_iter) objective_per_iter->push_back(res.objective);
    for (int iter = 0; iter < max_iters; ++iter) {
        // recompute centroids
        std::vector<int> count(k, 0);
        Tensor next = Tensor::zeros({k, d});
        for (int i = 0; i < n; ++i) {
            ++count[res.labels[i]];
            for (int f = 0; f < d; ++f) next.at(res.labels[i], f) += x.at(i, f);
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) {
                for (int f = 0; f < d; ++f) next.at(c, f) /= count[c];
            } else {
                // farthest point from its current centroid takes over
                int far = 0;
                double fd = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dd = detail::sq_dist_row(x, i, cent, res.labels[i]);
                    if (dd > fd) {
                        fd = dd;
                        far = i;
                    }
                }
                for (int f = 0; f < d; ++f) next.at(c, f) = x.at(far, f);
            }
        }
        cent = std::move(next);
        const bool changed = assign();
        if (objective_per_iter) objective_per_iter->push_back(res.objective);
        if (!changed) break;
    }
    res.centroids = std::move(cent);
    return res;
}

// ---------------------------------------------------------------------------
// BFS region growing (pseudo-labels for the partition task)

// Multi-seed BFS partition: `parts` distinct seeds chosen at random, regions
// grown one BFS frontier per turn in round-robin, nodes unreachable from any
// seed assigned to the smallest part.
inline std::vector<int> partition_graph(const Graph& g, int parts, std::uint64_t seed) {
    if (parts < 1) throw config_error("partition_graph: parts must be >= 1");
    if (parts > g.n) throw config_error("partition_graph: parts exceeds node count");

    auto rng = make_rng(seed, stream::partition_seeds);
    std::vector<int> order(g.n);
    for (int i = 0; i < g.n; ++i) order[i] = i;
    for (int i = g.n - 1; i > 0; --i) {
        const int j = std::min(static_cast<int>(uniform01(rng) * (i + 1)), i);
        std::swap(order[i], order[j]);
    }

    const auto adj = g.adjacency_list();
    std::vector<int> part(g.n, -1);
    std::vector<std::vector<int>> frontier(parts);
    for (int p = 0; p < parts; ++p) {
        part[order[p]] = p;
        frontier[p].push_back(order[p]);
    }

    bool grew = true;
    while (grew) {
        grew = false;
        for (int p = 0; p < parts; ++p) {
            std::vector<int> next;
            for (int u : frontier[p])
                for (int v : adj[u])
                    if (part[v] < 0) {
                        part[v] = p;
                        next.push_back(v);
                    }
            if (!next.empty()) grew = true;
            frontier[p] = std::move(next);
        }
    }

    std::vector<int> sizes(parts, 0);
    for (int i = 0; i < g.n; ++i)
        if (part[i] >= 0) ++sizes[part[i]];
    for (int i = 0; i < g.n; ++i) {
        if (part[i] >= 0) continue;
        const int smallest = static_cast<int>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
        part[i] = smallest;
        ++sizes[smallest];
    }
    return part;
}

// ---------------------------------------------------------------------------
// pairwise tasks

// Hop-distance class per pair: distance h maps to class h-1, anything at or
// beyond max_hop (unreachable included) lands in the last class. max_hop
// classes total.
inline std::vector<int> shortest_path_classes(const Graph& g, const std::vector<std::pair<int, int>>& pairs,
                                              int max_hop) {
    if (max_hop < 1) throw config_error("shortest_path_classes: max_hop must be >= 1");
    const auto adj = g.adjacency_list();
    std::vector<std::vector<int>> hop_cache(g.n);
    std::vector<int> out;
    out.reserve(pairs.size());
    for (auto [u, v] : pairs) {
        if (u < 0 || v < 0 || u >= g.n || v >= g.n)
            throw config_error("shortest_path_classes: pair out of range");
        if (u == v) throw config_error("shortest_path_classes: identical endpoints " + std::to_string(u));
        if (hop_cache[u].empty()) hop_cache[u] = bfs_hops(adj, u);
        const int dist = hop_cache[u][v];
        const int clipped = dist < 0 ? max_hop : std::min(dist, max_hop);
        out.push_back(clipped - 1);
    }
    return out;
}

// Cosine similarity between two feature rows; zero-norm rows are a caller
// bug (sampling must already have excluded them).
inline double pair_cosine_similarity(const Tensor& x, int u, int v) {
    check_rank2(x, "pair_cosine_similarity");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int f = 0; f < x.shape[1]; ++f) {
        dot += x.at(u, f) * x.at(v, f);
        nu += x.at(u, f) * x.at(u, f);
        nv += x.at(v, f) * x.at(v, f);
    }
    if (nu == 0.0 || nv == 0.0)
        throw config_error("pair_cosine_similarity: zero-norm feature row in pair (" + std::to_string(u) + "," +
                           std::to_string(v) + ")");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Uniform distinct node pairs (u < v, no replacement within one draw). When
// `features` is given, rows with zero norm are excluded so downstream cosine
// similarity is always defined. The budget is clamped to the number of
// distinct pairs available.
inline std::vector<std::pair<int, int>> sample_pairs(int n, int budget, Rng& rng, const Tensor* features = nullptr) {
    if (n < 2) throw config_error("sample_pairs: need at least 2 nodes");
    if (budget < 1) throw config_error("sample_pairs: budget must be >= 1");

    std::vector<int> eligible;
    if (features) {
        check_rank2(*features, "sample_pairs");
        for (int i = 0; i < n; ++i) {
            double norm = 0.0;
            for (int f = 0; f < features->shape[1]; ++f) norm += features->at(i, f) * features->at(i, f);
            if (norm > 0.0) eligible.push_back(i);
        }
        if (eligible.size() < 2) throw config_error("sample_pairs: fewer than 2 nodes with nonzero features");
    } else {
        eligible.resize(n);
        for (int i = 0; i < n; ++i) eligible[i] = i;
    }

    const long long m = static_cast<long long>(eligible.size());
    const long long available = m * (m - 1) / 2;
    const long long want = std::min<long long>(budget, available);

    std::set<long long> seen;
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(want));
    while (static_cast<long long>(out.size()) < want) {
        int a = eligible[std::min(static_cast<std::size_t>(uniform01(rng) * m), eligible.size() - 1)];
        int b = eligible[std::min(static_cast<std::size_t>(uniform01(rng) * m), eligible.size() - 1)];
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        const long long key = static_cast<long long>(a) * n + b;
        if (!seen.insert(key).second) continue;
        out.emplace_back(a, b);
    }
    return out;
}

}  // namespace was
