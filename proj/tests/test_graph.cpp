#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "testutil.hpp"
#include "was/graph.hpp"
#include "was/graph_algos.hpp"

using was::Graph;
using was::Tensor;

namespace {
Graph tiny_path3() {
    // a - b - c
    Graph g;
    g.n = 3;
    g.classes = 2;
    g.edges = {{0, 1}, {1, 2}};
    g.features = Tensor({3, 2}, {1, 0, 0, 1, 1, 1});
    g.labels = {0, 1, 0};
    g.train_mask = {1, 0, 0};
    g.val_mask = {0, 1, 0};
    g.test_mask = {0, 0, 1};
    return g;
}
}  // namespace

TEST_CASE("graph validation rejects malformed inputs") {
    Graph g = tiny_path3();
    g.validate();

    Graph bad = g;
    bad.edges.push_back({2, 2});
    CHECK_THROWS_AS(bad.validate(), was::config_error);

    bad = g;
    bad.edges.push_back({2, 1});  // not u < v
    CHECK_THROWS_AS(bad.validate(), was::config_error);

    bad = g;
    bad.edges.push_back({0, 1});  // duplicate
    CHECK_THROWS_AS(bad.validate(), was::config_error);

    bad = g;
    bad.labels[0] = 5;
    CHECK_THROWS_AS(bad.validate(), was::config_error);

    bad = g;
    bad.val_mask[0] = 1;  // overlaps train
    CHECK_THROWS_AS(bad.validate(), was::config_error);

    bad = g;
    bad.train_mask = {0, 0, 0};
    CHECK_THROWS_AS(bad.validate(), was::config_error);
}

TEST_CASE("normalized adjacency on hand-checked graphs") {
    SECTION("single isolated node") {
        Graph g;
        g.n = 1;
        g.classes = 2;
        g.features = Tensor({1, 1}, {1.0});
        g.labels = {0};
        g.train_mask = {1};
        g.val_mask = {0};
        g.test_mask = {0};
        Tensor a = was::normalize_adjacency(g);
        REQUIRE(a.shape == std::vector<int>{1, 1});
        CHECK(a.at(0, 0) == 1.0);
    }
    SECTION("two nodes, one edge: all entries 0.5") {
        Graph g;
        g.n = 2;
        g.classes = 2;
        g.edges = {{0, 1}};
        g.features = Tensor({2, 1}, {1.0, 1.0});
        g.labels = {0, 1};
        g.train_mask = {1, 0};
        g.val_mask = {0, 1};
        g.test_mask = {0, 0};
        Tensor a = was::normalize_adjacency(g);
        for (double v : a.data) CHECK(v == Catch::Approx(0.5).epsilon(1e-14));
    }
    SECTION("triangle: every entry 1/3") {
        Graph g;
        g.n = 3;
        g.classes = 2;
        g.edges = {{0, 1}, {0, 2}, {1, 2}};
        g.features = Tensor({3, 1}, {1, 1, 1});
        g.labels = {0, 1, 0};
        g.train_mask = {1, 0, 0};
        g.val_mask = {0, 1, 0};
        g.test_mask = {0, 0, 1};
        Tensor a = was::normalize_adjacency(g);
        for (double v : a.data) CHECK(v == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
    }
}

TEST_CASE("normalized adjacency: symmetry, sign, spectrum") {
    auto rng = was::make_rng(2024, 50);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(was::uniform01(rng) * 49);
        Graph g = testutil::random_graph(n, 0.15, rng);
        Tensor a = was::normalize_adjacency(g);
        for (int i = 0; i < n; ++i) {
            CHECK(a.at(i, i) > 0.0);
            for (int j = 0; j < n; ++j) {
                CHECK(a.at(i, j) >= 0.0);
                CHECK(std::abs(a.at(i, j) - a.at(j, i)) < 1e-12);
            }
        }
        auto eig = testutil::jacobi_eigenvalues(a);
        CHECK(eig.front() >= -1.0 - 1e-9);
        CHECK(eig.back() <= 1.0 + 1e-9);
    }
}

TEST_CASE("bfs hop distances") {
    Graph g = tiny_path3();
    auto d = was::bfs_hops(g.adjacency_list(), 0);
    CHECK(d == std::vector<int>{0, 1, 2});
}

TEST_CASE("shortest path classes on hand-checked cases") {
    Graph g = tiny_path3();
    SECTION("distance 2 maps to class 1") {
        auto cls = was::shortest_path_classes(g, {{0, 2}}, 4);
        CHECK(cls == std::vector<int>{1});
    }
    SECTION("disconnected pair lands in the last class") {
        Graph h = g;
        h.n = 4;
        h.features = Tensor({4, 2}, {1, 0, 0, 1, 1, 1, 1, 1});
        h.labels = {0, 1, 0, 1};
        h.train_mask = {1, 0, 0, 0};
        h.val_mask = {0, 1, 0, 0};
        h.test_mask = {0, 0, 1, 1};
        auto cls = was::shortest_path_classes(h, {{0, 3}}, 4);
        CHECK(cls == std::vector<int>{3});
    }
    SECTION("5-cycle opposite pair is two hops away") {
        Graph c;
        c.n = 5;
        c.classes = 2;
        c.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
        c.features = Tensor::full({5, 2}, 1.0);
        c.labels = {0, 1, 0, 1, 0};
        c.train_mask = {1, 0, 0, 0, 0};
        c.val_mask = {0, 1, 0, 0, 0};
        c.test_mask = {0, 0, 1, 1, 1};
        auto cls = was::shortest_path_classes(c, {{0, 2}, {0, 3}}, 4);
        CHECK(cls == std::vector<int>{1, 1});
    }
    SECTION("identical endpoints are rejected") {
        CHECK_THROWS_AS(was::shortest_path_classes(g, {{1, 1}}, 4), was::config_error);
    }
}

TEST_CASE("shortest path classes agree with a Floyd-Warshall oracle") {
    auto rng = was::make_rng(2024, 51);
    const int max_hop = 4;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(was::uniform01(rng) * 29);
        Graph g = testutil::random_graph(n, 0.12, rng);
        auto fw = testutil::floyd_warshall(g);
        std::vector<std::pair<int, int>> pairs;
        for (int u = 0; u < n; ++u)
            for (int v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
        auto cls = was::shortest_path_classes(g, pairs, max_hop);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            auto [u, v] = pairs[i];
            const int dist = fw[u][v];
            const int expect = (dist < 0 ? max_hop : std::min(dist, max_hop)) - 1;
            REQUIRE(cls[i] == expect);
        }
    }
}

TEST_CASE("kmeans basics") {
    SECTION("k=1 labels everything zero") {
        Tensor x({4, 2}, {0, 0, 1, 1, 2, 2, 3, 3});
        auto res = was::kmeans(x, 1, 7);
        CHECK(res.labels == std::vector<int>{0, 0, 0, 0});
    }
    SECTION("far-apart clouds separate perfectly") {
        auto rng = was::make_rng(3, 1);
        Tensor x = Tensor::zeros({20, 2});
        for (int i = 0; i < 10; ++i) {
            x.at(i, 0) = was::uniform01(rng);
            x.at(i, 1) = was::uniform01(rng);
            x.at(10 + i, 0) = 100.0 + was::uniform01(rng);
            x.at(10 + i, 1) = 100.0 + was::uniform01(rng);
        }
        auto res = was::kmeans(x, 2, 11);
        for (int i = 1; i < 10; ++i) {
            CHECK(res.labels[i] == res.labels[0]);
            CHECK(res.labels[10 + i] == res.labels[10]);
        }
        CHECK(res.labels[0] != res.labels[10]);
    }
    SECTION("fixed seed reproduces labels") {
        auto rng = was::make_rng(4, 1);
        Tensor x = Tensor::zeros({30, 3});
        for (double& v : x.data) v = was::uniform01(rng);
        auto a = was::kmeans(x, 5, 99);
        auto b = was::kmeans(x, 5, 99);
        CHECK(a.labels == b.labels);
        CHECK(a.objective == b.objective);
    }
    SECTION("objective is non-increasing across iterations") {
        auto rng = was::make_rng(5, 1);
        for (int trial = 0; trial < 5; ++trial) {
            Tensor x = Tensor::zeros({40, 4});
            for (double& v : x.data) v = was::uniform01(rng) * 10.0;
            std::vector<double> obj;
            was::kmeans(x, 6, 1000 + trial, 100, &obj);
            REQUIRE(obj.size() >= 2);
            for (std::size_t i = 1; i < obj.size(); ++i) CHECK(obj[i] <= obj[i - 1] + 1e-9);
        }
    }
    SECTION("k > n is rejected") {
        Tensor x({2, 1}, {0.0, 1.0});
        CHECK_THROWS_AS(was::kmeans(x, 3, 1), was::config_error);
    }
}

TEST_CASE("partition covers every node with non-empty parts") {
    SECTION("parts=1") {
        Graph g = tiny_path3();
        auto part = was::partition_graph(g, 1, 5);
        CHECK(part == std::vector<int>{0, 0, 0});
    }
    SECTION("two disconnected triangles split cleanly") {
        Graph g;
        g.n = 6;
        g.classes = 2;
        g.edges = {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}};
        g.features = Tensor::full({6, 2}, 1.0);
        g.labels = {0, 0, 0, 1, 1, 1};
        g.train_mask = {1, 0, 0, 1, 0, 0};
        g.val_mask = {0, 1, 0, 0, 1, 0};
        g.test_mask = {0, 0, 1, 0, 0, 1};
        // seed 1 places the two region seeds in different triangles, so BFS
        // growth makes each component exactly one part
        auto part = was::partition_graph(g, 2, 1);
        std::set<int> used(part.begin(), part.end());
        CHECK(used.size() == 2);
        CHECK(part[0] == part[1]);
        CHECK(part[1] == part[2]);
        CHECK(part[3] == part[4]);
        CHECK(part[4] == part[5]);
        CHECK(part[0] != part[3]);
    }
    SECTION("random graphs: full cover, no empty part, determinism") {
        auto rng = was::make_rng(2024, 52);
        for (int trial = 0; trial < 10; ++trial) {
            const int n = 5 + static_cast<int>(was::uniform01(rng) * 40);
            Graph g = testutil::random_graph(n, 0.1, rng);
            const int parts = 1 + trial % 5;
            auto part = was::partition_graph(g, parts, 7 + trial);
            REQUIRE(static_cast<int>(part.size()) == n);
            std::vector<int> sizes(parts, 0);
            for (int p : part) {
                REQUIRE(p >= 0);
                REQUIRE(p < parts);
                ++sizes[p];
            }
            for (int s : sizes) CHECK(s > 0);
            CHECK(part == was::partition_graph(g, parts, 7 + trial));
        }
    }
    SECTION("parts > n is rejected") {
        CHECK_THROWS_AS(was::partition_graph(tiny_path3(), 4, 1), was::config_error);
    }
}

TEST_CASE("pair cosine similarity endpoints") {
    Tensor x({4, 3}, {1, 2, 3, 1, 2, 3, -1, -2, -3, 3, -1, -1.0 / 3});
    CHECK(was::pair_cosine_similarity(x, 0, 1) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(was::pair_cosine_similarity(x, 0, 2) == Catch::Approx(-1.0).epsilon(1e-14));
    CHECK(was::pair_cosine_similarity(x, 0, 3) == Catch::Approx(0.0).margin(1e-14));
    Tensor z({2, 2}, {0, 0, 1, 1});
    CHECK_THROWS_AS(was::pair_cosine_similarity(z, 0, 1), was::config_error);
}

TEST_CASE("pair sampling is distinct, in-range, deterministic") {
    auto rng = was::make_rng(8, 1);
    auto pairs = was::sample_pairs(30, 120, rng);
    CHECK(pairs.size() == 120);
    std::set<std::pair<int, int>> uniq(pairs.begin(), pairs.end());
    CHECK(uniq.size() == pairs.size());
    for (auto [u, v] : pairs) {
        CHECK(u < v);
        CHECK(v < 30);
        CHECK(u >= 0);
    }
    auto rng2 = was::make_rng(8, 1);
    CHECK(was::sample_pairs(30, 120, rng2) == pairs);

    SECTION("budget clamps to available distinct pairs") {
        auto r = was::make_rng(9, 1);
        auto all = was::sample_pairs(5, 100, r);
        CHECK(all.size() == 10);
    }
    SECTION("zero-feature rows are excluded") {
        Tensor feats = Tensor::zeros({6, 2});
        for (int i = 0; i < 4; ++i) feats.at(i, 0) = 1.0;  // rows 4, 5 are zero
        auto r = was::make_rng(10, 1);
        auto ps = was::sample_pairs(6, 100, r, &feats);
        CHECK(ps.size() == 6);  // C(4,2)
        for (auto [u, v] : ps) {
            CHECK(u < 4);
            CHECK(v < 4);
        }
    }
}

TEST_CASE("sbm generation respects block structure and masks") {
    Graph g = was::generate_sbm(60, 3, 0.3, 0.0, 8, 0.0, 42);
    g.validate();
    SECTION("p_out = 0 means no inter-class edges") {
        for (auto [u, v] : g.edges) CHECK(g.labels[u] == g.labels[v]);
    }
    SECTION("noise=0 features are exact class centroids") {
        for (int i = 0; i < g.n; ++i)
            for (int f = 0; f < 8; ++f) CHECK(g.features.at(i, f) == (f == g.labels[i] % 8 ? 1.0 : 0.0));
    }
    SECTION("balanced contiguous classes") {
        int counts[3] = {0, 0, 0};
        for (int y : g.labels) ++counts[y];
        CHECK(counts[0] == 20);
        CHECK(counts[1] == 20);
        CHECK(counts[2] == 20);
    }
    SECTION("each class contributes to every split") {
        int tr[3] = {0, 0, 0}, va[3] = {0, 0, 0}, te[3] = {0, 0, 0};
        for (int i = 0; i < g.n; ++i) {
            tr[g.labels[i]] += g.train_mask[i];
            va[g.labels[i]] += g.val_mask[i];
            te[g.labels[i]] += g.test_mask[i];
        }
        for (int c = 0; c < 3; ++c) {
            CHECK(tr[c] == 2);  // 10% of 20
            CHECK(va[c] == 2);
            CHECK(te[c] == 16);
        }
    }
    SECTION("same seed, same graph; different seed, different graph") {
        CHECK(g == was::generate_sbm(60, 3, 0.3, 0.0, 8, 0.0, 42));
        CHECK_FALSE(g == was::generate_sbm(60, 3, 0.3, 0.0, 8, 0.0, 43));
    }
    SECTION("rejects bad parameters") {
        CHECK_THROWS_AS(was::generate_sbm(2, 3, 0.3, 0.0, 8, 0.0, 1), was::config_error);
        CHECK_THROWS_AS(was::generate_sbm(60, 3, 0.1, 0.2, 8, 0.0, 1), was::config_error);
        CHECK_THROWS_AS(was::generate_sbm(60, 1, 0.3, 0.0, 8, 0.0, 1), was::config_error);
    }
}

TEST_CASE("dataset round-trip is lossless") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "was_test_dataset";
    fs::remove_all(dir);

    Graph g = was::generate_sbm(40, 2, 0.4, 0.05, 5, 0.7, 77);
    was::save_dataset(g, dir.string());
    Graph back = was::load_dataset(dir.string());
    CHECK(back == g);

    SECTION("edge referencing a missing node fails to load") {
        std::ofstream(dir / "edges.tsv", std::ios::app) << "1\t40\n";
        CHECK_THROWS_AS(was::load_dataset(dir.string()), was::config_error);
    }
    SECTION("label beyond the declared class count fails to load") {
        std::ofstream lf(dir / "labels.tsv");
        for (int i = 0; i < 40; ++i) lf << (i == 5 ? 2 : 0) << "\n";
        lf.close();
        CHECK_THROWS_AS(was::load_dataset(dir.string()), was::config_error);
    }
    SECTION("missing file fails to load") {
        fs::remove(dir / "meta.json");
        CHECK_THROWS_AS(was::load_dataset(dir.string()), was::config_error);
    }
    fs::remove_all(dir);
}
