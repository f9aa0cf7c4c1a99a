#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "was/tensor.hpp"

namespace was {

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    if (!j.contains("shape") || !j.contains("data")) throw config_error("tensor json: missing shape or data");
    return Tensor(j["shape"].get<std::vector<int>>(), j["data"].get<std::vector<double>>());
}

// Checkpoint file: named parameter tensors plus an echo of the config that
// produced them. nlohmann prints doubles with round-trip precision, so
// save/load is bit-exact.
inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params,
                            const nlohmann::json& config_echo) {
    nlohmann::json j;
    for (const auto& [name, t] : params) j["params"][name] = tensor_to_json(t);
    j["config"] = config_echo;
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path);
    if (!f) throw config_error("cannot write checkpoint " + path);
    f << j.dump(1) << "\n";
}

struct Checkpoint {
    std::map<std::string, Tensor> params;
    nlohmann::json config;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("checkpoint " + path + ": " + e.what());
    }
    if (!j.contains("params")) throw config_error("checkpoint " + path + ": missing params");
    Checkpoint c;
    for (auto it = j["params"].begin(); it != j["params"].end(); ++it)
        c.params.emplace(it.key(), tensor_from_json(it.value()));
    c.config = j.value("config", nlohmann::json::object());
    return c;
}

}  // namespace was
