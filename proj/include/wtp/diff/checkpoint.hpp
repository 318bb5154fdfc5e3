#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wtp/diff/optim.hpp"

namespace wtp::diff {

// Checkpoint = <path> (raw f32 LE buffers, concatenated in manifest order)
// plus <path>.json (names, shapes, optimizer step counter).

template <class T>
void save_checkpoint(const std::vector<Parameter<T>>& params, long step,
                     const std::string& path) {
    nlohmann::json manifest;
    manifest["format"] = "wtp-checkpoint-v1";
    manifest["step"] = step;
    manifest["tensors"] = nlohmann::json::array();

    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write checkpoint: " + path);
    for (const auto& p : params) {
        manifest["tensors"].push_back({{"name", p.name}, {"shape", p.node->val.shape}});
        for (const T v : p.node->val.data) {
            const float f = static_cast<float>(v);
            bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
    }
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot write checkpoint manifest: " + path + ".json");
    side << manifest.dump(2) << "\n";
}

template <class T>
long load_checkpoint(std::vector<Parameter<T>>& params, const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot open checkpoint manifest: " + path + ".json");
    nlohmann::json manifest;
    side >> manifest;
    if (manifest.value("format", "") != "wtp-checkpoint-v1")
        throw std::runtime_error("unrecognized checkpoint format in " + path + ".json");

    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        throw std::runtime_error("checkpoint has " + std::to_string(tensors.size()) +
                                 " tensors, model expects " + std::to_string(params.size()));

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open checkpoint: " + path);
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& entry = tensors[i];
        if (entry.at("name").get<std::string>() != params[i].name)
            throw std::runtime_error("checkpoint tensor '" +
                                     entry.at("name").get<std::string>() +
                                     "' does not match model parameter '" + params[i].name + "'");
        if (entry.at("shape").get<std::vector<int>>() != params[i].node->val.shape)
            throw std::runtime_error("checkpoint shape mismatch for '" + params[i].name + "'");
        for (T& v : params[i].node->val.data) {
            float f = 0;
            bin.read(reinterpret_cast<char*>(&f), sizeof(float));
            if (!bin) throw std::runtime_error("truncated checkpoint " + path);
            v = static_cast<T>(f);
        }
    }
    return manifest.value("step", 0L);
}

}  // namespace wtp::diff
