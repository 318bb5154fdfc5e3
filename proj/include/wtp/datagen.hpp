#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wtp/raster.hpp"
#include "wtp/serialization.hpp"
#include "wtp/topomap.hpp"

namespace wtp {

struct DatagenParams {
    double road_width = 6.0;
    double curvature_max = 0.05;       // 1/m
    double click_spacing = 25.0;       // sparse map vertex spacing
    double map_noise = 1.0;            // radial bound on click placement error
    double densify_spacing = 1.0;
    double offroad_z_sigma = 0.3;
    int road_points = 12000;
    int offroad_points = 12000;
    double waypoint_spacing = 2.0;
    int num_waypoints = 12;
    double min_length = 120.0;
    double ego_lateral_jitter = 0.5;
    double ego_heading_jitter_deg = 5.0;

    void validate() const {
        if (!(road_width > 0.0)) throw std::invalid_argument("datagen: road width must be > 0");
        if (curvature_max < 0.0) throw std::invalid_argument("datagen: negative curvature bound");
        if (!(click_spacing > 0.0) || !(densify_spacing > 0.0) || !(waypoint_spacing > 0.0))
            throw std::invalid_argument("datagen: spacings must be > 0");
        if (map_noise < 0.0) throw std::invalid_argument("datagen: negative map noise");
        if (road_points < 0 || offroad_points < 0)
            throw std::invalid_argument("datagen: negative point counts");
        if (num_waypoints < 2) throw std::invalid_argument("datagen: need at least 2 waypoints");
        if (!(min_length > 0.0)) throw std::invalid_argument("datagen: min length must be > 0");
    }
};

// One synthetic driving scene. The cloud is in the ego frame; map vertices
// and the ground-truth trajectory are in the planar world frame.
struct SceneSample {
    PointCloud cloud;
    EgoPose pose;
    TopometricMap map;
    Trajectory gt_trajectory;
    std::string scene_id;
    uint64_t seed = 0;

    // The true road centerline, densely sampled. Kept for ground-truth
    // rasterization and dataset invariant checks; not part of the model input.
    std::vector<Waypoint2D> centerline;
};

namespace detail {

// Arc-length lookup on a dense polyline with uniform step.
inline Waypoint2D polyline_at(const std::vector<Waypoint2D>& pts, double step, double s) {
    const double t = std::clamp(s / step, 0.0, double(pts.size() - 1));
    const size_t i = std::min(size_t(t), pts.size() - 2);
    const double f = t - double(i);
    return pts[i] + (pts[i + 1] - pts[i]) * f;
}

inline double polyline_heading_at(const std::vector<Waypoint2D>& pts, double step, double s) {
    const double t = std::clamp(s / step, 0.0, double(pts.size() - 1));
    const size_t i = std::min(size_t(t), pts.size() - 2);
    const Waypoint2D d = pts[i + 1] - pts[i];
    return std::atan2(d.y, d.x);
}

inline double dist_to_polyline(const Waypoint2D& p, const std::vector<Waypoint2D>& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        best = std::min(best, point_segment_distance(p, pts[i], pts[i + 1]));
    return best;
}

}  // namespace detail

inline SceneSample generate_scene(uint64_t seed, const DatagenParams& params) {
    params.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    SceneSample sample;
    sample.seed = seed;
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%016llx", static_cast<unsigned long long>(seed));
    sample.scene_id = id;

    // Piecewise-constant-curvature centerline, integrated at a fixed step.
    const double step = 0.5;
    const double horizon = params.waypoint_spacing * params.num_waypoints;
    const double total_len = std::max(params.min_length, horizon + 80.0) + 40.0;
    double x = 0.0, y = 0.0, heading = uniform(-M_PI, M_PI);
    double kappa = uniform(-params.curvature_max, params.curvature_max);
    double next_switch = uniform(20.0, 40.0);
    sample.centerline.push_back({x, y});
    for (double s = step; s <= total_len + step; s += step) {
        if (s >= next_switch) {
            kappa = uniform(-params.curvature_max, params.curvature_max);
            next_switch += uniform(20.0, 40.0);
        }
        heading += kappa * step;
        x += std::cos(heading) * step;
        y += std::sin(heading) * step;
        sample.centerline.push_back({x, y});
    }
    const auto& line = sample.centerline;

    // Ego pose on the centerline with registration jitter, leaving room for
    // the prediction horizon ahead.
    const double s0 = uniform(25.0, total_len - horizon - 10.0);
    const double center_heading = detail::polyline_heading_at(line, step, s0);
    const Waypoint2D normal{-std::sin(center_heading), std::cos(center_heading)};
    const double lat = uniform(-params.ego_lateral_jitter, params.ego_lateral_jitter);
    const double dh = uniform(-1.0, 1.0) * params.ego_heading_jitter_deg * M_PI / 180.0;
    sample.pose = EgoPose(detail::polyline_at(line, step, s0) + normal * lat,
                          center_heading + dh);

    // Ground truth: the true centerline ahead of the ego, at waypoint spacing.
    for (int t = 1; t <= params.num_waypoints; ++t)
        sample.gt_trajectory.waypoints.push_back(
            detail::polyline_at(line, step, s0 + t * params.waypoint_spacing));

    // Sparse map: centerline clicks at click_spacing with bounded radial
    // noise, then densified. Clicked vertices stay within map_noise of the
    // true centerline by construction.
    TopometricMap clicks;
    for (double s = 0.0; s < total_len; s += params.click_spacing) {
        const double r = u01(rng) * params.map_noise;
        const double phi = uniform(0.0, 2.0 * M_PI);
        clicks.vertices.push_back(detail::polyline_at(line, step, s) +
                                  Waypoint2D{r * std::cos(phi), r * std::sin(phi)});
        if (clicks.vertices.size() > 1)
            clicks.edges.emplace_back(int(clicks.vertices.size()) - 2,
                                      int(clicks.vertices.size()) - 1);
    }
    sample.map = densify_map(clicks, params.densify_spacing);

    // LiDAR returns in the ego frame. Road points hug z = 0 with high
    // intensity; off-road points are noisier and darker, rejected from the
    // road corridor so the intensity cue stays clean.
    const double s_lo = std::max(0.0, s0 - 30.0), s_hi = std::min(total_len, s0 + 70.0);
    for (int i = 0; i < params.road_points; ++i) {
        const double s = uniform(s_lo, s_hi);
        const double h = detail::polyline_heading_at(line, step, s);
        const Waypoint2D n{-std::sin(h), std::cos(h)};
        const Waypoint2D p =
            detail::polyline_at(line, step, s) + n * uniform(-0.5, 0.5) * params.road_width;
        const Waypoint2D e = sample.pose.to_ego(p);
        sample.cloud.add(float(e.x), float(e.y), float(uniform(-0.03, 0.03)),
                         float(uniform(0.55, 0.95)));
    }
    int placed = 0, attempts = 0;
    std::normal_distribution<double> zoff(0.0, params.offroad_z_sigma);
    while (placed < params.offroad_points && attempts < params.offroad_points * 20) {
        ++attempts;
        const Waypoint2D e{uniform(-25.0, 65.0), uniform(-45.0, 45.0)};
        const Waypoint2D g = sample.pose.to_global(e);
        if (detail::dist_to_polyline(g, line) < params.road_width * 0.5 + 0.5) continue;
        sample.cloud.add(float(e.x), float(e.y), float(0.15 + zoff(rng)),
                         float(uniform(0.05, 0.45)));
        ++placed;
    }
    return sample;
}

// --- On-disk dataset layout: out_dir/sample_%05d/{cloud.tpc, scene.json} ---

inline nlohmann::json scene_to_json(const SceneSample& sample) {
    nlohmann::json j;
    j["pose"] = {{"x", sample.pose.position.x},
                 {"y", sample.pose.position.y},
                 {"heading", sample.pose.heading}};
    j["map"] = map_to_json(sample.map);
    auto& traj = j["gt_trajectory"] = nlohmann::json::array();
    for (const auto& p : sample.gt_trajectory.waypoints) traj.push_back({p.x, p.y});
    j["scene_id"] = sample.scene_id;
    j["seed"] = sample.seed;
    return j;
}

inline SceneSample scene_from_json(const nlohmann::json& j) {
    SceneSample sample;
    const auto& p = j.at("pose");
    sample.pose = EgoPose({p.at("x").get<double>(), p.at("y").get<double>()},
                          p.at("heading").get<double>());
    sample.map = map_from_json(j.at("map"));
    for (const auto& w : j.at("gt_trajectory"))
        sample.gt_trajectory.waypoints.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
    sample.scene_id = j.value("scene_id", "");
    sample.seed = j.value("seed", uint64_t(0));
    return sample;
}

inline void save_sample(const SceneSample& sample, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_cloud(sample.cloud, dir + "/cloud.tpc");
    std::ofstream f(dir + "/scene.json");
    if (!f) throw std::runtime_error("cannot write " + dir + "/scene.json");
    f << scene_to_json(sample).dump(2) << "\n";
}

inline SceneSample load_sample(const std::string& dir) {
    std::ifstream f(dir + "/scene.json");
    if (!f) throw std::runtime_error("cannot read " + dir + "/scene.json");
    nlohmann::json j;
    f >> j;
    SceneSample sample = scene_from_json(j);
    sample.cloud = load_cloud(dir + "/cloud.tpc");
    return sample;
}

inline nlohmann::json generate_dataset(int n, uint64_t seed, const DatagenParams& params,
                                       const std::string& out_dir) {
    if (n <= 0) throw std::invalid_argument("generate_dataset: need n > 0");
    params.validate();
    std::filesystem::create_directories(out_dir);

    nlohmann::json manifest;
    manifest["count"] = n;
    manifest["base_seed"] = seed;
    manifest["params"] = {{"road_width", params.road_width},
                          {"curvature_max", params.curvature_max},
                          {"click_spacing", params.click_spacing},
                          {"map_noise", params.map_noise},
                          {"waypoint_spacing", params.waypoint_spacing},
                          {"num_waypoints", params.num_waypoints}};
    auto& entries = manifest["samples"] = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d", i);
        const uint64_t s = seed + uint64_t(i);
        SceneSample sample = generate_scene(s, params);
        save_sample(sample, out_dir + "/" + name);
        entries.push_back({{"dir", name}, {"seed", s}, {"scene_id", sample.scene_id}});
    }
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot write " + out_dir + "/manifest.json");
    f << manifest.dump(2) << "\n";
    return manifest;
}

inline std::vector<SceneSample> load_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot read " + dir + "/manifest.json");
    nlohmann::json manifest;
    f >> manifest;
    std::vector<SceneSample> samples;
    for (const auto& e : manifest.at("samples"))
        samples.push_back(load_sample(dir + "/" + e.at("dir").get<std::string>()));
    return samples;
}

}  // namespace wtp
