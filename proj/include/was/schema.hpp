#pragma once

// Small JSON-schema checker covering the subset this project's output
// contracts use: type, required, properties, additionalProperties (boolean)
// and items. Returns human-readable problems instead of throwing so callers
// can report all of them at once.

#include <string>
#include <vector>

#include <json.hpp>

#include "was/tensor.hpp"

namespace was {

inline bool schema_type_matches(const nlohmann::json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "integer") return value.is_number_integer();
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    throw config_error("schema: unsupported type '" + type + "'");
}

inline void validate_schema_at(const nlohmann::json& value, const nlohmann::json& schema, const std::string& path,
                               std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        const std::string type = schema["type"].get<std::string>();
        if (!schema_type_matches(value, type)) {
            errors.push_back(path + ": expected " + type + ", got " + std::string(value.type_name()));
            return;  // further shape checks would only cascade
        }
    }
    if (schema.contains("required")) {
        for (const auto& name : schema["required"]) {
            if (!value.contains(name.get<std::string>()))
                errors.push_back(path + ": missing required key '" + name.get<std::string>() + "'");
        }
    }
    if (schema.contains("properties")) {
        const nlohmann::json& props = schema["properties"];
        for (auto it = props.begin(); it != props.end(); ++it) {
            if (value.contains(it.key())) validate_schema_at(value[it.key()], it.value(), path + "/" + it.key(), errors);
        }
        if (schema.value("additionalProperties", true) == false) {
            for (auto it = value.begin(); it != value.end(); ++it) {
                if (!props.contains(it.key())) errors.push_back(path + ": unexpected key '" + it.key() + "'");
            }
        }
    }
    if (schema.contains("items") && value.is_array()) {
        int idx = 0;
        for (const auto& elem : value) {
            validate_schema_at(elem, schema["items"], path + "/" + std::to_string(idx), errors);
            ++idx;
        }
    }
}

inline std::vector<std::string> validate_schema(const nlohmann::json& value, const nlohmann::json& schema) {
    std::vector<std::string> errors;
    validate_schema_at(value, schema, "$", errors);
    return errors;
}

}  // namespace was
