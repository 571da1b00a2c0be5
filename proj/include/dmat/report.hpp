#pragma once

#include "dmat/error.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <string>

namespace dmat {

using Json = nlohmann::ordered_json;

// Per-task result record. Keys keep insertion order, so equal inputs give
// byte-identical files.
struct MetricsReport {
    std::string task;
    std::string dataset;
    std::string config_hash;
    std::uint64_t seed = 0;
    Json metrics = Json::object();
    std::optional<double> runtime_s;

    Json to_json() const {
        Json j;
        j["task"] = task;
        j["dataset"] = dataset;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["metrics"] = metrics;
        j["runtime_s"] = runtime_s ? Json(*runtime_s) : Json(nullptr);
        return j;
    }
};

inline void write_json(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline Json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

}  // namespace dmat
