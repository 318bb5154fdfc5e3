#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wtp/datagen.hpp"
#include "wtp/metrics.hpp"
#include "wtp/model.hpp"
#include "wtp/train.hpp"

namespace wtp {

// One document configuring every stage of a run. All fields are optional in
// the file; absent keys keep the struct defaults.
struct RunConfig {
    uint64_t seed = 0;
    GridSpec grid;
    ModelConfig model;
    TrainConfig train;
    DatagenParams datagen;
    ExampleParams example;
    MetricsSettings metrics;

    void validate() const {
        grid.validate();
        if (model.grid_h != grid.height_cells || model.grid_w != grid.width_cells)
            throw std::invalid_argument(
                "config: model.grid dimensions must equal grid.height_cells/width_cells (got " +
                std::to_string(model.grid_h) + "x" + std::to_string(model.grid_w) + " vs " +
                std::to_string(grid.height_cells) + "x" + std::to_string(grid.width_cells) + ")");
        model.validate();
        train.validate();
        datagen.validate();
        if (model.num_waypoints != datagen.num_waypoints)
            throw std::invalid_argument(
                "config: model.num_waypoints (" + std::to_string(model.num_waypoints) +
                ") must equal datagen.num_waypoints (" + std::to_string(datagen.num_waypoints) +
                ")");
        if (!(example.route_width > 0.0) || !(example.road_width > 0.0))
            throw std::invalid_argument("config: example widths must be > 0");
    }
};

namespace detail {

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: bad value for " + scope + "." + key + ": " +
                                    e.what());
    }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::get_if;
    RunConfig c;
    get_if(j, "seed", c.seed, "");
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        get_if(g, "height_cells", c.grid.height_cells, "grid");
        get_if(g, "width_cells", c.grid.width_cells, "grid");
        get_if(g, "resolution", c.grid.resolution, "grid");
        get_if(g, "ego_row", c.grid.ego_row, "grid");
        get_if(g, "ego_col", c.grid.ego_col, "grid");
    }
    c.model.grid_h = c.grid.height_cells;
    c.model.grid_w = c.grid.width_cells;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        get_if(m, "num_waypoints", c.model.num_waypoints, "model");
        get_if(m, "heads", c.model.heads, "model");
        get_if(m, "encoder_layers", c.model.encoder_layers, "model");
        get_if(m, "decoder_layers", c.model.decoder_layers, "model");
        get_if(m, "ffn_hidden", c.model.ffn_hidden, "model");
        get_if(m, "pre_norm", c.model.pre_norm, "model");
        if (m.contains("variant")) c.model.variant = parse_variant(m.at("variant").get<std::string>());
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        get_if(t, "lr", c.train.lr, "train");
        get_if(t, "batch_size", c.train.batch_size, "train");
        get_if(t, "epochs", c.train.epochs, "train");
        get_if(t, "train_perturbation_m", c.train.train_perturbation_m, "train");
        get_if(t, "seed", c.train.seed, "train");
        get_if(t, "w_road", c.train.w_road, "train");
        get_if(t, "w_heatmap", c.train.w_heatmap, "train");
        get_if(t, "w_waypoint", c.train.w_waypoint, "train");
        get_if(t, "grad_clip", c.train.grad_clip, "train");
        get_if(t, "checkpoint_every", c.train.checkpoint_every, "train");
        get_if(t, "warmup_steps", c.train.warmup_steps, "train");
    }
    if (j.contains("datagen")) {
        const auto& d = j.at("datagen");
        get_if(d, "road_width", c.datagen.road_width, "datagen");
        get_if(d, "curvature_max", c.datagen.curvature_max, "datagen");
        get_if(d, "click_spacing", c.datagen.click_spacing, "datagen");
        get_if(d, "map_noise", c.datagen.map_noise, "datagen");
        get_if(d, "densify_spacing", c.datagen.densify_spacing, "datagen");
        get_if(d, "offroad_z_sigma", c.datagen.offroad_z_sigma, "datagen");
        get_if(d, "road_points", c.datagen.road_points, "datagen");
        get_if(d, "offroad_points", c.datagen.offroad_points, "datagen");
        get_if(d, "waypoint_spacing", c.datagen.waypoint_spacing, "datagen");
        get_if(d, "num_waypoints", c.datagen.num_waypoints, "datagen");
        get_if(d, "min_length", c.datagen.min_length, "datagen");
        get_if(d, "ego_lateral_jitter", c.datagen.ego_lateral_jitter, "datagen");
        get_if(d, "ego_heading_jitter_deg", c.datagen.ego_heading_jitter_deg, "datagen");
    }
    if (j.contains("example")) {
        const auto& e = j.at("example");
        get_if(e, "route_width", c.example.route_width, "example");
        get_if(e, "road_width", c.example.road_width, "example");
        get_if(e, "heatmap_sigma", c.example.heatmap_sigma, "example");
        get_if(e, "forward_window", c.example.forward_window, "example");
        get_if(e, "backward_window", c.example.backward_window, "example");
        get_if(e, "off_route_threshold", c.example.off_route_threshold, "example");
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        get_if(m, "ks", c.metrics.ks, "metrics");
        get_if(m, "ds", c.metrics.ds, "metrics");
        get_if(m, "aligned_ade", c.metrics.aligned_ade, "metrics");
    }
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["grid"] = {{"height_cells", c.grid.height_cells},
                 {"width_cells", c.grid.width_cells},
                 {"resolution", c.grid.resolution},
                 {"ego_row", c.grid.ego_row},
                 {"ego_col", c.grid.ego_col}};
    j["model"] = {{"variant", variant_name(c.model.variant)},
                  {"num_waypoints", c.model.num_waypoints},
                  {"heads", c.model.heads},
                  {"encoder_layers", c.model.encoder_layers},
                  {"decoder_layers", c.model.decoder_layers},
                  {"ffn_hidden", c.model.ffn_hidden},
                  {"pre_norm", c.model.pre_norm}};
    j["train"] = {{"lr", c.train.lr},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"train_perturbation_m", c.train.train_perturbation_m},
                  {"seed", c.train.seed},
                  {"w_road", c.train.w_road},
                  {"w_heatmap", c.train.w_heatmap},
                  {"w_waypoint", c.train.w_waypoint},
                  {"grad_clip", c.train.grad_clip},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"warmup_steps", c.train.warmup_steps}};
    j["datagen"] = {{"road_width", c.datagen.road_width},
                    {"curvature_max", c.datagen.curvature_max},
                    {"click_spacing", c.datagen.click_spacing},
                    {"map_noise", c.datagen.map_noise},
                    {"densify_spacing", c.datagen.densify_spacing},
                    {"offroad_z_sigma", c.datagen.offroad_z_sigma},
                    {"road_points", c.datagen.road_points},
                    {"offroad_points", c.datagen.offroad_points},
                    {"waypoint_spacing", c.datagen.waypoint_spacing},
                    {"num_waypoints", c.datagen.num_waypoints},
                    {"min_length", c.datagen.min_length},
                    {"ego_lateral_jitter", c.datagen.ego_lateral_jitter},
                    {"ego_heading_jitter_deg", c.datagen.ego_heading_jitter_deg}};
    j["example"] = {{"route_width", c.example.route_width},
                    {"road_width", c.example.road_width},
                    {"heatmap_sigma", c.example.heatmap_sigma},
                    {"forward_window", c.example.forward_window},
                    {"backward_window", c.example.backward_window},
                    {"off_route_threshold", c.example.off_route_threshold}};
    j["metrics"] = {{"ks", c.metrics.ks}, {"ds", c.metrics.ds},
                    {"aligned_ade", c.metrics.aligned_ade}};
    return j;
}

// Applies "dotted.key=value" overrides onto a config document. Values parse
// as JSON where possible (numbers, booleans, arrays) and fall back to strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* cursor = &j;
    std::istringstream keys(path);
    std::string key, next;
    std::getline(keys, key, '.');
    while (std::getline(keys, next, '.')) {
        cursor = &(*cursor)[key];
        key = next;
    }
    (*cursor)[key] = value;
}

inline RunConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw std::invalid_argument("config: cannot open " + path);
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config: " + path + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

}  // namespace wtp
