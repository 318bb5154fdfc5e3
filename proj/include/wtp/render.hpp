#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "wtp/raster.hpp"

namespace wtp {

namespace detail {

// Ego frame to SVG: +x forward points up, +y left points left.
inline std::pair<double, double> svg_point(const GridSpec& spec, const Waypoint2D& p) {
    auto [r, c] = spec.cell_coords(p);
    return {double(spec.width_cells) - c, double(spec.height_cells) - r};
}

inline void append_polyline(std::ostringstream& out, const GridSpec& spec,
                            const std::vector<Waypoint2D>& pts, const char* color,
                            double width) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
        << "\" points=\"";
    for (const auto& p : pts) {
        auto [x, y] = svg_point(spec, p);
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x, y);
        out << buf;
    }
    out << "\"/>\n";
}

}  // namespace detail

// Scene overview as a standalone SVG: point density in grayscale, the local
// route in blue, ground truth in red, the prediction in green. Exactly one
// polyline per overlay, in that order.
inline std::string render_svg(const Grid& density, const GridSpec& spec,
                              const std::vector<Waypoint2D>& route, const Trajectory& gt,
                              const Trajectory& prediction) {
    spec.validate();
    if (density.rows != spec.height_cells || density.cols != spec.width_cells)
        throw std::invalid_argument("render_svg: density grid does not match the spec");

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << spec.width_cells << " "
        << spec.height_cells << "\" width=\"" << spec.width_cells * 4 << "\" height=\""
        << spec.height_cells * 4 << "\">\n";
    out << "<rect width=\"" << spec.width_cells << "\" height=\"" << spec.height_cells
        << "\" fill=\"black\"/>\n";

    // Occupied cells only; empty space stays the black background.
    for (int r = 0; r < density.rows; ++r) {
        for (int c = 0; c < density.cols; ++c) {
            const float v = density.at(r, c);
            if (v <= 0.0f) continue;
            const int level = int(40.0f + 215.0f * std::min(v, 1.0f));
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"1\" height=\"1\" "
                          "fill=\"rgb(%d,%d,%d)\"/>\n",
                          spec.width_cells - 1 - c, spec.height_cells - 1 - r, level, level,
                          level);
            out << buf;
        }
    }

    if (route.size() >= 2) detail::append_polyline(out, spec, route, "blue", 1.0);
    if (gt.waypoints.size() >= 2) detail::append_polyline(out, spec, gt.waypoints, "red", 0.8);
    if (prediction.waypoints.size() >= 2)
        detail::append_polyline(out, spec, prediction.waypoints, "green", 0.8);

    // Ego marker at the grid origin.
    auto [ex, ey] = detail::svg_point(spec, {0.0, 0.0});
    out << "<circle cx=\"" << ex << "\" cy=\"" << ey << "\" r=\"1.5\" fill=\"white\"/>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace wtp
