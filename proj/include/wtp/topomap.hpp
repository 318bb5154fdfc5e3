#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wtp/geometry.hpp"

namespace wtp {

// Sparse waypoint graph: vertices are 2-D waypoints, edges are road segments.
struct TopometricMap {
    std::vector<Waypoint2D> vertices;
    std::vector<std::pair<int, int>> edges;

    void validate() const {
        if (edges.empty()) throw std::invalid_argument("topometric map has no edges");
        const int n = static_cast<int>(vertices.size());
        for (const auto& v : vertices) {
            if (!v.finite()) throw std::invalid_argument("topometric map vertex is not finite");
        }
        for (const auto& [a, b] : edges) {
            if (a < 0 || b < 0 || a >= n || b >= n)
                throw std::invalid_argument("topometric map edge index out of range");
            if (distance(vertices[a], vertices[b]) <= 1e-9)
                throw std::invalid_argument("topometric map contains a zero-length edge");
        }
    }
};

// Ego-relative route slice, ordered back-to-front, ego frame.
struct LocalRoute {
    std::vector<Waypoint2D> waypoints;
};

struct OffRouteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Linear interpolation on each edge so consecutive points are at most
// `spacing` apart. Original vertices are preserved; interpolated points
// lie exactly on the original segments.
inline TopometricMap densify_map(const TopometricMap& map, double spacing) {
    if (!(spacing > 0.0)) throw std::invalid_argument("densify_map: spacing must be > 0");
    map.validate();

    TopometricMap out;
    out.vertices = map.vertices;
    for (const auto& [a, b] : map.edges) {
        const Waypoint2D pa = map.vertices[a], pb = map.vertices[b];
        const double len = distance(pa, pb);
        const int n = std::max(1, static_cast<int>(std::ceil(len / spacing - 1e-12)));
        int prev = a;
        for (int k = 1; k < n; ++k) {
            const double t = static_cast<double>(k) / n;
            out.vertices.push_back(pa + (pb - pa) * t);
            const int idx = static_cast<int>(out.vertices.size()) - 1;
            out.edges.emplace_back(prev, idx);
            prev = idx;
        }
        out.edges.emplace_back(prev, b);
    }
    return out;
}

// Transverse Mercator projection (WGS84, scale 0.9996, 500 km false easting).
// Snyder's series formulation; adequate well inside a UTM zone.
inline Waypoint2D project_lat_lon(double lat_deg, double lon_deg,
                                  double central_meridian_deg) {
    if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg) || std::fabs(lat_deg) >= 84.0)
        throw std::invalid_argument("project_lat_lon: latitude out of domain");

    constexpr double a = 6378137.0;            // WGS84 semi-major axis
    constexpr double f = 1.0 / 298.257223563;  // flattening
    constexpr double k0 = 0.9996;
    constexpr double false_easting = 500000.0;
    const double e2 = f * (2.0 - f);
    const double ep2 = e2 / (1.0 - e2);

    const double lat = lat_deg * M_PI / 180.0;
    const double dlon = (lon_deg - central_meridian_deg) * M_PI / 180.0;

    const double sin_lat = std::sin(lat), cos_lat = std::cos(lat), tan_lat = std::tan(lat);
    const double N = a / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
    const double T = tan_lat * tan_lat;
    const double C = ep2 * cos_lat * cos_lat;
    const double A = cos_lat * dlon;

    // Meridional arc length.
    const double e4 = e2 * e2, e6 = e4 * e2;
    const double M =
        a * ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * lat -
             (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * std::sin(2.0 * lat) +
             (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * std::sin(4.0 * lat) -
             (35.0 * e6 / 3072.0) * std::sin(6.0 * lat));

    const double A2 = A * A, A3 = A2 * A, A4 = A3 * A, A5 = A4 * A, A6 = A5 * A;
    const double easting =
        false_easting +
        k0 * N *
            (A + (1.0 - T + C) * A3 / 6.0 +
             (5.0 - 18.0 * T + T * T + 72.0 * C - 58.0 * ep2) * A5 / 120.0);
    const double northing =
        k0 * (M + N * tan_lat *
                      (A2 / 2.0 + (5.0 - T + 9.0 * C + 4.0 * C * C) * A4 / 24.0 +
                       (61.0 - 58.0 * T + T * T + 600.0 * C - 330.0 * ep2) * A6 / 720.0));
    return {easting, northing};
}

namespace detail {

inline std::vector<std::vector<int>> adjacency(const TopometricMap& map) {
    std::vector<std::vector<int>> adj(map.vertices.size());
    for (const auto& [a, b] : map.edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    return adj;
}

// Walk from `start` in the direction most aligned with `dir0`, accumulating
// arc length up to `window` meters. Returns vertex indices excluding `start`.
inline std::vector<int> walk_route(const TopometricMap& map,
                                   const std::vector<std::vector<int>>& adj, int start,
                                   Waypoint2D dir0, double window) {
    std::vector<int> path;
    int prev = -1, cur = start;
    Waypoint2D dir = dir0;
    double walked = 0.0;
    while (walked < window) {
        int best = -1;
        double best_cos = -2.0;
        for (int nb : adj[cur]) {
            if (nb == prev) continue;
            Waypoint2D d = map.vertices[nb] - map.vertices[cur];
            const double len = d.norm();
            if (len <= 1e-12) continue;
            const double c = d.dot(dir) / (len * std::max(dir.norm(), 1e-12));
            if (c > best_cos) {
                best_cos = c;
                best = nb;
            }
        }
        if (best < 0 || best_cos < -0.5) break;  // dead end or hard reversal
        walked += distance(map.vertices[cur], map.vertices[best]);
        dir = map.vertices[best] - map.vertices[cur];
        prev = cur;
        cur = best;
        path.push_back(cur);
        if (walked >= window) break;
    }
    return path;
}

}  // namespace detail

// Extract the ego-relative local route: nearest vertex, arc-length walk
// backward_window back and forward_window ahead, then transform into the
// ego frame. Output is ordered back-to-front.
inline LocalRoute extract_local_route(const TopometricMap& map, const EgoPose& pose,
                                      double forward_window, double backward_window,
                                      double off_route_threshold = 25.0) {
    if (!(forward_window > 0.0) || !(backward_window > 0.0))
        throw std::invalid_argument("extract_local_route: windows must be > 0");
    map.validate();

    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < map.vertices.size(); ++i) {
        const double d = distance(map.vertices[i], pose.position);
        if (d < best) {
            best = d;
            nearest = static_cast<int>(i);
        }
    }
    if (best > off_route_threshold)
        throw OffRouteError("extract_local_route: nearest map vertex is " +
                            std::to_string(best) + " m away (threshold " +
                            std::to_string(off_route_threshold) + " m)");

    const auto adj = detail::adjacency(map);
    const Waypoint2D fwd{std::cos(pose.heading), std::sin(pose.heading)};
    const auto ahead = detail::walk_route(map, adj, nearest, fwd, forward_window);
    const auto behind = detail::walk_route(map, adj, nearest, fwd * -1.0, backward_window);

    LocalRoute route;
    route.waypoints.reserve(ahead.size() + behind.size() + 1);
    for (auto it = behind.rbegin(); it != behind.rend(); ++it)
        route.waypoints.push_back(pose.to_ego(map.vertices[*it]));
    route.waypoints.push_back(pose.to_ego(map.vertices[nearest]));
    for (int idx : ahead) route.waypoints.push_back(pose.to_ego(map.vertices[idx]));

    if (route.waypoints.size() < 2)
        throw OffRouteError("extract_local_route: route degenerate at this pose");
    return route;
}

// Smooth lateral perturbation: per-vertex uniform noise along the local
// polyline normal, 5-vertex moving average, rescaled so the peak offset
// equals `magnitude`. Deterministic per seed; topology unchanged.
// constant_offset = true applies one shared offset drawn from
// uniform[-magnitude, magnitude] instead (simplest misregistration model).
inline TopometricMap perturb_lateral(const TopometricMap& map, double magnitude,
                                     uint64_t seed, bool constant_offset = false) {
    if (magnitude < 0.0) throw std::invalid_argument("perturb_lateral: magnitude must be >= 0");
    map.validate();
    TopometricMap out = map;
    if (magnitude == 0.0) return out;

    const size_t n = map.vertices.size();
    const auto adj = detail::adjacency(map);

    // Local tangent from adjacent vertices, normal = tangent rotated +90deg.
    // Tangent signs start locally arbitrary and are made consistent along
    // the graph by BFS, so neighboring normals point to the same side.
    std::vector<Waypoint2D> tangents(n, Waypoint2D{0.0, 0.0});
    for (size_t i = 0; i < n; ++i) {
        Waypoint2D tangent{0.0, 0.0};
        for (int nb : adj[i]) {
            Waypoint2D d = map.vertices[nb] - map.vertices[i];
            const double len = d.norm();
            if (len <= 1e-12) continue;
            d = d * (1.0 / len);
            if (tangent.dot(d) < 0.0) d = d * -1.0;
            tangent = tangent + d;
        }
        const double len = tangent.norm();
        if (len > 1e-12) tangents[i] = tangent * (1.0 / len);
        else tangents[i] = {1.0, 0.0};  // isolated or symmetric junction
    }
    std::vector<char> visited(n, 0);
    std::vector<size_t> stack;
    for (size_t root = 0; root < n; ++root) {
        if (visited[root]) continue;
        visited[root] = 1;
        stack.push_back(root);
        while (!stack.empty()) {
            const size_t u = stack.back();
            stack.pop_back();
            for (int nb : adj[u]) {
                const size_t v = static_cast<size_t>(nb);
                if (visited[v]) continue;
                visited[v] = 1;
                const Waypoint2D d = map.vertices[v] - map.vertices[u];
                if (tangents[u].dot(d) * tangents[v].dot(d) < 0.0)
                    tangents[v] = tangents[v] * -1.0;
                stack.push_back(v);
            }
        }
    }
    std::vector<Waypoint2D> normals(n);
    for (size_t i = 0; i < n; ++i) normals[i] = rotate(tangents[i], M_PI / 2.0);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-magnitude, magnitude);

    std::vector<double> offsets(n);
    if (constant_offset) {
        const double c = uni(rng);
        std::fill(offsets.begin(), offsets.end(), c);
    } else {
        std::vector<double> raw(n);
        double raw_peak = 0.0;
        for (size_t i = 0; i < n; ++i) {
            raw[i] = uni(rng);
            raw_peak = std::max(raw_peak, std::fabs(raw[i]));
        }
        // 5-vertex moving average over the vertex ordering.
        double peak = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            int cnt = 0;
            for (int k = -2; k <= 2; ++k) {
                const long j = static_cast<long>(i) + k;
                if (j < 0 || j >= static_cast<long>(n)) continue;
                sum += raw[static_cast<size_t>(j)];
                ++cnt;
            }
            offsets[i] = sum / cnt;
            peak = std::max(peak, std::fabs(offsets[i]));
        }
        if (raw_peak > 0.0 && peak > 0.0) {
            const double scale = magnitude / peak;
            for (double& o : offsets) o *= scale;
        }
    }

    for (size_t i = 0; i < n; ++i)
        out.vertices[i] = map.vertices[i] + normals[i] * offsets[i];
    return out;
}

}  // namespace wtp
