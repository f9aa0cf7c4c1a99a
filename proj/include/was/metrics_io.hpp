#pragma once

// Metrics report assembly for the CLI. One JSON document per distillation
// invocation: the per-seed runs, mean/std aggregates, the bank content hash
// and the parameter-overhead bookkeeping. The document is checked against
// the schema below before it is written, and the same schema ships as
// schemas/metrics.schema.json for external consumers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "was/distill.hpp"
#include "was/schema.hpp"

namespace was {

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// 16 hex digits back to the FNV value; rejects anything else.
inline std::uint64_t hash_from_hex(const std::string& s) {
    if (s.size() != 16) throw config_error("bank hash: expected 16 hex digits, got '" + s + "'");
    std::uint64_t h = 0;
    for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else throw config_error("bank hash: bad hex digit in '" + s + "'");
        h = (h << 4) | static_cast<std::uint64_t>(d);
    }
    return h;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over the seed runs
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    if (xs.empty()) throw config_error("mean_std: empty sample");
    MeanStd r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return r;
}

inline nlohmann::json mean_std_json(const MeanStd& m) {
    return nlohmann::json{{"mean", m.mean}, {"std", m.std}};
}

inline const nlohmann::json& metrics_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(R"({
  "type": "object",
  "required": ["strategy", "seeds", "runs", "aggregate", "bank_hash",
               "extra_trainable_params", "extra_trainable_params_formula"],
  "additionalProperties": false,
  "properties": {
    "strategy": {"type": "string"},
    "seeds": {"type": "array", "items": {"type": "integer"}},
    "runs": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["seed", "test_acc", "val_acc", "best_epoch",
                     "avg_selected", "top1_selected_ratio"],
        "additionalProperties": false,
        "properties": {
          "seed": {"type": "integer"},
          "test_acc": {"type": "number"},
          "val_acc": {"type": "number"},
          "best_epoch": {"type": "integer"},
          "avg_selected": {"type": "number"},
          "top1_selected_ratio": {"type": "number"}
        }
      }
    },
    "aggregate": {
      "type": "object",
      "required": ["test_acc", "val_acc", "avg_selected", "top1_selected_ratio"],
      "additionalProperties": false,
      "properties": {
        "test_acc": {
          "type": "object", "required": ["mean", "std"], "additionalProperties": false,
          "properties": {"mean": {"type": "number"}, "std": {"type": "number"}}
        },
        "val_acc": {
          "type": "object", "required": ["mean", "std"], "additionalProperties": false,
          "properties": {"mean": {"type": "number"}, "std": {"type": "number"}}
        },
        "avg_selected": {
          "type": "object", "required": ["mean", "std"], "additionalProperties": false,
          "properties": {"mean": {"type": "number"}, "std": {"type": "number"}}
        },
        "top1_selected_ratio": {
          "type": "object", "required": ["mean", "std"], "additionalProperties": false,
          "properties": {"mean": {"type": "number"}, "std": {"type": "number"}}
        }
      }
    },
    "bank_hash": {"type": "string"},
    "extra_trainable_params": {"type": "integer"},
    "extra_trainable_params_formula": {"type": "integer"}
  }
})");
    return schema;
}

// Assembles and validates the report. seeds[i] must be the seed that
// produced runs[i]; teachers/classes size the overhead formulas.
inline nlohmann::json metrics_report(const std::string& strategy, const std::vector<std::uint64_t>& seeds,
                                     const std::vector<RunMetrics>& runs, std::uint64_t bank_hash, int teachers,
                                     int classes) {
    if (runs.empty() || runs.size() != seeds.size())
        throw config_error("metrics_report: need one run per seed, got " + std::to_string(runs.size()) + " runs / " +
                           std::to_string(seeds.size()) + " seeds");
    nlohmann::json j;
    j["strategy"] = strategy;
    j["seeds"] = seeds;
    j["runs"] = nlohmann::json::array();
    std::vector<double> test, val, avg, top1;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunMetrics& m = runs[i];
        j["runs"].push_back({{"seed", seeds[i]},
                             {"test_acc", m.test_acc},
                             {"val_acc", m.val_acc},
                             {"best_epoch", m.best_epoch},
                             {"avg_selected", m.avg_selected},
                             {"top1_selected_ratio", m.top1_selected_ratio}});
        test.push_back(m.test_acc);
        val.push_back(m.val_acc);
        avg.push_back(m.avg_selected);
        top1.push_back(m.top1_selected_ratio);
    }
    j["aggregate"] = {{"test_acc", mean_std_json(mean_std(test))},
                      {"val_acc", mean_std_json(mean_std(val))},
                      {"avg_selected", mean_std_json(mean_std(avg))},
                      {"top1_selected_ratio", mean_std_json(mean_std(top1))}};
    j["bank_hash"] = hash_hex(bank_hash);
    j["extra_trainable_params"] = extra_trainable_params(teachers, classes);
    j["extra_trainable_params_formula"] = extra_params_aggregate_formula(teachers, classes);

    const auto problems = validate_schema(j, metrics_schema());
    if (!problems.empty()) {
        std::string msg = "metrics report violates its schema:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw std::runtime_error(msg);
    }
    return j;
}

}  // namespace was
