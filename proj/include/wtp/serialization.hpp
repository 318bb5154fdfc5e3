#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wtp/raster.hpp"
#include "wtp/topomap.hpp"

namespace wtp {

// --- Topometric map JSON -------------------------------------------------
// {"vertices": [[x,y],...], "edges": [[i,j],...]} in planar meters.
// Optional {"crs": {"lat_lon": true, "central_meridian": deg}} means the
// vertices are [lat, lon] pairs projected at load time.

inline nlohmann::json map_to_json(const TopometricMap& map) {
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : map.vertices) j["vertices"].push_back({v.x, v.y});
    j["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : map.edges) j["edges"].push_back({a, b});
    return j;
}

inline TopometricMap map_from_json(const nlohmann::json& j) {
    TopometricMap map;
    if (!j.contains("vertices") || !j.contains("edges"))
        throw std::invalid_argument("map json: missing 'vertices' or 'edges'");
    bool lat_lon = false;
    double meridian = 0.0;
    if (j.contains("crs")) {
        lat_lon = j["crs"].value("lat_lon", false);
        if (lat_lon && !j["crs"].contains("central_meridian"))
            throw std::invalid_argument("map json: crs.lat_lon requires crs.central_meridian");
        meridian = j["crs"].value("central_meridian", 0.0);
    }
    for (const auto& v : j["vertices"]) {
        if (!v.is_array() || v.size() != 2)
            throw std::invalid_argument("map json: vertex must be a [x, y] pair");
        if (lat_lon)
            map.vertices.push_back(project_lat_lon(v[0].get<double>(), v[1].get<double>(), meridian));
        else
            map.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    for (const auto& e : j["edges"]) {
        if (!e.is_array() || e.size() != 2)
            throw std::invalid_argument("map json: edge must be an [i, j] pair");
        map.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    map.validate();
    return map;
}

inline TopometricMap load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open map file: " + path);
    nlohmann::json j;
    in >> j;
    return map_from_json(j);
}

inline void save_map(const TopometricMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write map file: " + path);
    out << map_to_json(map).dump(2) << "\n";
}

// --- Point cloud binary ("TPC1") -----------------------------------------
// Magic "TPC1", u32 LE point count, then count records of 4 x f32 LE
// (x, y, z, intensity).

inline void save_cloud(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cloud file: " + path);
    out.write("TPC1", 4);
    const uint32_t n = static_cast<uint32_t>(cloud.points.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& p : cloud.points) {
        const float rec[4] = {p.x, p.y, p.z, p.intensity};
        out.write(reinterpret_cast<const char*>(rec), 16);
    }
}

inline PointCloud load_cloud(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open cloud file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TPC1", 4) != 0)
        throw std::runtime_error("bad point cloud magic in " + path);
    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    PointCloud cloud;
    cloud.points.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        float rec[4];
        in.read(reinterpret_cast<char*>(rec), 16);
        if (!in) throw std::runtime_error("truncated point cloud file " + path);
        cloud.add(rec[0], rec[1], rec[2], rec[3]);
    }
    return cloud;
}

// --- Grid serialization ---------------------------------------------------
// Row-major f32 LE buffer plus a JSON sidecar carrying the GridSpec.

inline void save_grid(const Grid& grid, const GridSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write grid file: " + path);
    out.write(reinterpret_cast<const char*>(grid.data.data()),
              static_cast<std::streamsize>(grid.data.size() * sizeof(float)));

    nlohmann::json j;
    j["height_cells"] = spec.height_cells;
    j["width_cells"] = spec.width_cells;
    j["resolution"] = spec.resolution;
    j["ego_row"] = spec.ego_row;
    j["ego_col"] = spec.ego_col;
    j["rows"] = grid.rows;
    j["cols"] = grid.cols;
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot write grid sidecar: " + path + ".json");
    side << j.dump(2) << "\n";
}

inline Grid load_grid(const std::string& path, GridSpec* spec_out = nullptr) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot open grid sidecar: " + path + ".json");
    nlohmann::json j;
    side >> j;
    GridSpec spec;
    spec.height_cells = j.at("height_cells").get<int>();
    spec.width_cells = j.at("width_cells").get<int>();
    spec.resolution = j.at("resolution").get<double>();
    spec.ego_row = j.at("ego_row").get<int>();
    spec.ego_col = j.at("ego_col").get<int>();
    if (spec_out) *spec_out = spec;

    Grid grid(j.at("rows").get<int>(), j.at("cols").get<int>());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    in.read(reinterpret_cast<char*>(grid.data.data()),
            static_cast<std::streamsize>(grid.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated grid file " + path);
    return grid;
}

}  // namespace wtp
