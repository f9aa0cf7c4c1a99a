#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace was {

// Configuration / usage problems (bad shapes, bad files, bad flags). The CLI
// maps these to exit code 2; everything else is a runtime failure (exit 1).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major tensor of doubles. Rank 1 and 2 are the only ranks used;
// scalars are represented as shape {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw config_error("tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw config_error("tensor shape has non-positive dim: " + shape_str(s));
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        std::size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor full(std::vector<int> s, double v) {
        std::size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double item() const {
        if (numel() != 1) throw config_error("item() on non-scalar tensor " + shape_str(shape));
        return data[0];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor& other) const { return shape == other.shape && data == other.data; }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << ']';
        return os.str();
    }
    std::string shape_str() const { return shape_str(shape); }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw config_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline void check_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw config_error(std::string(op) + ": expected rank-2 tensor, got " + a.shape_str());
}

// FNV-1a over raw bytes; used for bank/content hashes in metrics and tests.
inline std::uint64_t fnv1a(const void* ptr, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h = 1469598103934665603ull) {
    h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int), h);
    return fnv1a(t.data.data(), t.data.size() * sizeof(double), h);
}

}  // namespace was
