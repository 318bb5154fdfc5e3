#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wtp/geometry.hpp"

namespace wtp {

struct LidarPoint {
    float x = 0, y = 0, z = 0;
    float intensity = 0;  // clamped to [0,1] at ingestion
};

struct PointCloud {
    std::vector<LidarPoint> points;

    void add(float x, float y, float z, float intensity) {
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
            !std::isfinite(intensity))
            throw std::invalid_argument("point cloud: non-finite point");
        points.push_back({x, y, z, std::clamp(intensity, 0.0f, 1.0f)});
    }
};

// Fixed BEV grid geometry. Cell (r, c) covers
//   x in [x0 + r*res, x0 + (r+1)*res), y analogously, with
//   x0 = -ego_row*res, y0 = -ego_col*res. +x forward maps to increasing rows.
struct GridSpec {
    int height_cells = 160;  // H0, along ego x
    int width_cells = 160;   // W0, along ego y
    double resolution = 0.5; // meters per cell
    int ego_row = 40;        // 20 m of scene behind the vehicle
    int ego_col = 80;

    void validate() const {
        if (height_cells <= 0 || width_cells <= 0 || !(resolution > 0.0))
            throw std::invalid_argument("grid spec: non-positive dimensions");
        if (height_cells % 8 != 0 || width_cells % 8 != 0)
            throw std::invalid_argument("grid spec: H0 and W0 must be divisible by 8");
        if (ego_row < 0 || ego_row >= height_cells || ego_col < 0 || ego_col >= width_cells)
            throw std::invalid_argument("grid spec: ego cell out of range");
    }

    double x_min() const { return -ego_row * resolution; }
    double y_min() const { return -ego_col * resolution; }
    double x_extent() const { return height_cells * resolution; }
    double y_extent() const { return width_cells * resolution; }

    // Center of cell (r, c) at a downsampled level (factor 1, 4, ...).
    Waypoint2D cell_center(int r, int c, int factor = 1) const {
        const double res = resolution * factor;
        return {x_min() + (r + 0.5) * res, y_min() + (c + 0.5) * res};
    }
    // Continuous cell coordinates of an ego-frame point at a downsample level.
    // Integer part is the cell index; cell center sits at fractional .5.
    std::pair<double, double> cell_coords(const Waypoint2D& p, int factor = 1) const {
        const double res = resolution * factor;
        return {(p.x - x_min()) / res, (p.y - y_min()) / res};
    }
};

// Row-major single-channel float grid.
struct Grid {
    int rows = 0, cols = 0;
    std::vector<float> data;

    Grid() = default;
    Grid(int r, int c, float fill = 0.0f) : rows(r), cols(c), data(size_t(r) * c, fill) {}
    float& at(int r, int c) { return data[size_t(r) * cols + c]; }
    float at(int r, int c) const { return data[size_t(r) * cols + c]; }
};

// The 4-channel network input: LiDAR height / intensity / density plus the
// binary virtual-road channel.
struct BevStack {
    GridSpec spec;
    Grid height, intensity, density, route;
};

struct HeatmapStack {
    int rows = 0, cols = 0;
    std::vector<Grid> maps;  // one normalized map per waypoint
};

// Ordered ego-frame future waypoints; also used for observed pasts.
struct Trajectory {
    std::vector<Waypoint2D> waypoints;
};

// LiDAR BEV rasterization: per-cell max height (normalized into [z_min,
// z_max]), max intensity, and log-saturating point density. Points outside
// the grid or z window are dropped.
struct BevChannels {
    Grid height, intensity, density;
};

inline BevChannels rasterize_cloud(const PointCloud& cloud, const GridSpec& spec,
                                   double z_min = -2.5, double z_max = 1.5) {
    spec.validate();
    if (!(z_max > z_min)) throw std::invalid_argument("rasterize_cloud: z_max must exceed z_min");

    BevChannels out{Grid(spec.height_cells, spec.width_cells),
                    Grid(spec.height_cells, spec.width_cells),
                    Grid(spec.height_cells, spec.width_cells)};
    std::vector<int> counts(size_t(spec.height_cells) * spec.width_cells, 0);

    const double inv_res = 1.0 / spec.resolution;
    for (const auto& p : cloud.points) {
        if (p.z < z_min || p.z > z_max) continue;
        const int r = static_cast<int>(std::floor((p.x - spec.x_min()) * inv_res));
        const int c = static_cast<int>(std::floor((p.y - spec.y_min()) * inv_res));
        if (r < 0 || r >= spec.height_cells || c < 0 || c >= spec.width_cells) continue;
        const float h = static_cast<float>(std::clamp((p.z - z_min) / (z_max - z_min), 0.0, 1.0));
        out.height.at(r, c) = std::max(out.height.at(r, c), h);
        out.intensity.at(r, c) = std::max(out.intensity.at(r, c), p.intensity);
        counts[size_t(r) * spec.width_cells + c]++;
    }
    const double log64 = std::log(64.0);
    for (size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0)
            out.density.data[i] =
                static_cast<float>(std::min(1.0, std::log(counts[i] + 1.0) / log64));
    }
    return out;
}

// Paint a fixed-width corridor around a polyline: cell = 1 iff its center
// lies within width/2 of the polyline. Used both for the local-route input
// channel and the recorded-trajectory ground-truth mask.
inline Grid rasterize_route(const std::vector<Waypoint2D>& polyline, const GridSpec& spec,
                            double width = 2.0, int downsample = 1) {
    spec.validate();
    if (!(width > 0.0)) throw std::invalid_argument("rasterize_route: width must be > 0");
    if (polyline.size() < 2)
        throw std::invalid_argument("rasterize_route: polyline needs at least 2 points");

    const int rows = spec.height_cells / downsample, cols = spec.width_cells / downsample;
    const double res = spec.resolution * downsample;
    Grid mask(rows, cols);
    const double half = width / 2.0;

    for (size_t i = 0; i + 1 < polyline.size(); ++i) {
        const Waypoint2D a = polyline[i], b = polyline[i + 1];
        const double pad = half + res;
        const int r0 = std::max(0, int(std::floor((std::min(a.x, b.x) - pad - spec.x_min()) / res)));
        const int r1 = std::min(rows - 1, int(std::ceil((std::max(a.x, b.x) + pad - spec.x_min()) / res)));
        const int c0 = std::max(0, int(std::floor((std::min(a.y, b.y) - pad - spec.y_min()) / res)));
        const int c1 = std::min(cols - 1, int(std::ceil((std::max(a.y, b.y) + pad - spec.y_min()) / res)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                if (mask.at(r, c) > 0.0f) continue;
                const Waypoint2D center = spec.cell_center(r, c, downsample);
                if (point_segment_distance(center, a, b) <= half) mask.at(r, c) = 1.0f;
            }
        }
    }
    return mask;
}

// Ground-truth Gaussian heatmaps at quarter resolution, one per waypoint,
// each normalized to sum 1. Off-grid waypoints fall back to a uniform map
// so the spatial-softmax target stays a probability distribution.
inline HeatmapStack make_gt_heatmaps(const Trajectory& traj, const GridSpec& spec,
                                     double sigma_cells = 2.0) {
    spec.validate();
    if (!(sigma_cells > 0.0)) throw std::invalid_argument("make_gt_heatmaps: sigma must be > 0");

    const int rows = spec.height_cells / 4, cols = spec.width_cells / 4;
    HeatmapStack stack;
    stack.rows = rows;
    stack.cols = cols;
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma_cells * sigma_cells);

    for (const auto& wp : traj.waypoints) {
        Grid map(rows, cols);
        auto [rc, cc] = spec.cell_coords(wp, 4);
        rc -= 0.5;  // distances measured between cell centers
        cc -= 0.5;
        const bool on_grid = rc >= -0.5 && rc <= rows - 0.5 && cc >= -0.5 && cc <= cols - 0.5;
        if (!on_grid) {
            const float u = 1.0f / static_cast<float>(rows * cols);
            std::fill(map.data.begin(), map.data.end(), u);
        } else {
            double sum = 0.0;
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    const double d2 = (r - rc) * (r - rc) + (c - cc) * (c - cc);
                    const double v = std::exp(-d2 * inv_two_sigma2);
                    map.at(r, c) = static_cast<float>(v);
                    sum += v;
                }
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (auto& v : map.data) v *= inv;
        }
        stack.maps.push_back(std::move(map));
    }
    return stack;
}

// Probability-weighted mean of cell centers: decodes a heatmap stack back
// to ego-frame waypoints (the "heatmap only" trajectory decoder).
inline Trajectory soft_argmax(const HeatmapStack& heatmaps, const GridSpec& spec) {
    spec.validate();
    Trajectory traj;
    for (const auto& map : heatmaps.maps) {
        double sum = 0.0;
        for (float v : map.data) sum += v;
        if (std::fabs(sum - 1.0) > 1e-3)
            throw std::invalid_argument("soft_argmax: heatmap not normalized (sum " +
                                        std::to_string(sum) + ")");
        Waypoint2D wp{0.0, 0.0};
        for (int r = 0; r < map.rows; ++r) {
            for (int c = 0; c < map.cols; ++c) {
                const Waypoint2D center = spec.cell_center(r, c, spec.height_cells / map.rows);
                wp = wp + center * map.at(r, c);
            }
        }
        traj.waypoints.push_back(wp * (1.0 / sum));
    }
    return traj;
}

}  // namespace wtp
