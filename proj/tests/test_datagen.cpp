#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "wtp/datagen.hpp"

using namespace wtp;
namespace fs = std::filesystem;

namespace {

double dist_to_line(const Waypoint2D& p, const std::vector<Waypoint2D>& line) {
    double best = 1e300;
    for (size_t i = 0; i + 1 < line.size(); ++i)
        best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
    return best;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("wtp_datagen_" + tag);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("scene generation is deterministic in the seed") {
    DatagenParams params;
    params.road_points = 500;
    params.offroad_points = 500;
    SceneSample a = generate_scene(99, params);
    SceneSample b = generate_scene(99, params);
    CHECK(a.pose.position.x == b.pose.position.x);
    CHECK(a.pose.heading == b.pose.heading);
    CHECK(a.map.vertices.size() == b.map.vertices.size());
    REQUIRE(a.cloud.points.size() == b.cloud.points.size());
    for (size_t i = 0; i < a.cloud.points.size(); ++i) {
        CHECK(a.cloud.points[i].x == b.cloud.points[i].x);
        CHECK(a.cloud.points[i].intensity == b.cloud.points[i].intensity);
    }
    SceneSample c = generate_scene(100, params);
    CHECK(a.pose.position.x != c.pose.position.x);
}

TEST_CASE("zero curvature yields a straight road and collinear ground truth") {
    DatagenParams params;
    params.curvature_max = 0.0;
    params.road_points = 200;
    params.offroad_points = 0;
    SceneSample s = generate_scene(7, params);
    const auto& wp = s.gt_trajectory.waypoints;
    REQUIRE(wp.size() == 12);
    const Waypoint2D d0 = wp[1] - wp[0];
    for (size_t i = 2; i < wp.size(); ++i) {
        const Waypoint2D d = wp[i] - wp[0];
        CHECK(std::fabs(d.x * d0.y - d.y * d0.x) < 1e-6 * d.norm() * d0.norm() + 1e-9);
    }
}

TEST_CASE("ground truth stays inside the road corridor") {
    DatagenParams params;
    params.road_points = 0;
    params.offroad_points = 0;
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        SceneSample s = generate_scene(seed, params);
        for (const auto& p : s.gt_trajectory.waypoints)
            CHECK(dist_to_line(p, s.centerline) < params.road_width * 0.5);
    }
}

TEST_CASE("ground truth spans the configured horizon") {
    DatagenParams params;
    params.road_points = 0;
    params.offroad_points = 0;
    SceneSample s = generate_scene(21, params);
    CHECK(polyline_length(s.gt_trajectory.waypoints) >=
          (params.num_waypoints - 1) * params.waypoint_spacing * 0.95);
}

TEST_CASE("clicked map vertices deviate at most the noise bound from the centerline") {
    DatagenParams params;
    params.road_points = 0;
    params.offroad_points = 0;
    for (uint64_t seed : {11u, 12u, 13u}) {
        SceneSample s = generate_scene(seed, params);
        // densify_map keeps the original clicked vertices first, in order.
        double total = polyline_length(s.centerline);
        int clicks = 0;
        for (double x = 0.0; x < total; x += params.click_spacing) ++clicks;
        REQUIRE(int(s.map.vertices.size()) >= clicks);
        for (int i = 0; i < clicks; ++i)
            CHECK(dist_to_line(s.map.vertices[size_t(i)], s.centerline) <=
                  params.map_noise + 1e-6);
    }
}

TEST_CASE("road and off-road returns are separable by intensity") {
    DatagenParams params;
    params.road_points = 2000;
    params.offroad_points = 2000;
    SceneSample s = generate_scene(33, params);
    int correct = 0, total = 0;
    for (const auto& p : s.cloud.points) {
        const Waypoint2D g = s.pose.to_global({p.x, p.y});
        const bool on_road = dist_to_line(g, s.centerline) <= params.road_width * 0.5 + 0.5;
        const bool bright = p.intensity > 0.5f;
        correct += (on_road == bright) ? 1 : 0;
        ++total;
    }
    CHECK(total == params.road_points + params.offroad_points);
    CHECK(double(correct) / total >= 0.95);
}

TEST_CASE("infeasible generation parameters are rejected") {
    DatagenParams params;
    params.road_width = 0.0;
    CHECK_THROWS_AS(generate_scene(1, params), std::invalid_argument);
    params = DatagenParams{};
    params.click_spacing = -1.0;
    CHECK_THROWS_AS(generate_scene(1, params), std::invalid_argument);
    params = DatagenParams{};
    params.num_waypoints = 1;
    CHECK_THROWS_AS(generate_scene(1, params), std::invalid_argument);
}

TEST_CASE("scene json round trips pose, map and trajectory") {
    DatagenParams params;
    params.road_points = 10;
    params.offroad_points = 10;
    SceneSample s = generate_scene(5, params);
    SceneSample r = scene_from_json(scene_to_json(s));
    CHECK(r.pose.position.x == doctest::Approx(s.pose.position.x).epsilon(1e-12));
    CHECK(r.pose.heading == doctest::Approx(s.pose.heading).epsilon(1e-12));
    REQUIRE(r.map.vertices.size() == s.map.vertices.size());
    CHECK(r.map.edges == s.map.edges);
    REQUIRE(r.gt_trajectory.waypoints.size() == s.gt_trajectory.waypoints.size());
    for (size_t i = 0; i < s.gt_trajectory.waypoints.size(); ++i)
        CHECK(distance(r.gt_trajectory.waypoints[i], s.gt_trajectory.waypoints[i]) < 1e-9);
    CHECK(r.scene_id == s.scene_id);
    CHECK(r.seed == s.seed);
}

TEST_CASE("dataset generation writes the documented layout and reloads") {
    DatagenParams params;
    params.road_points = 50;
    params.offroad_points = 50;
    const fs::path dir = temp_dir("layout");
    auto manifest = generate_dataset(4, 1000, params, dir.string());
    CHECK(manifest.at("count") == 4);
    CHECK(manifest.at("samples").size() == 4);
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d", i);
        CHECK(fs::exists(dir / name / "cloud.tpc"));
        CHECK(fs::exists(dir / name / "scene.json"));
    }
    auto samples = load_dataset(dir.string());
    REQUIRE(samples.size() == 4);
    CHECK(samples[0].seed == 1000);
    CHECK(samples[3].seed == 1003);
    CHECK(samples[0].cloud.points.size() == size_t(params.road_points + params.offroad_points));
    fs::remove_all(dir);
}

TEST_CASE("dataset regeneration is byte-identical") {
    DatagenParams params;
    params.road_points = 40;
    params.offroad_points = 40;
    const fs::path a = temp_dir("rep_a"), b = temp_dir("rep_b");
    generate_dataset(2, 77, params, a.string());
    generate_dataset(2, 77, params, b.string());
    for (const char* rel : {"manifest.json", "sample_00000/cloud.tpc", "sample_00000/scene.json",
                            "sample_00001/cloud.tpc", "sample_00001/scene.json"})
        CHECK(slurp(a / rel) == slurp(b / rel));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("disjoint seed ranges give disjoint scene ids") {
    DatagenParams params;
    params.road_points = 5;
    params.offroad_points = 5;
    std::vector<std::string> train_ids, test_ids;
    for (int i = 0; i < 4; ++i) train_ids.push_back(generate_scene(uint64_t(i), params).scene_id);
    for (int i = 0; i < 4; ++i)
        test_ids.push_back(generate_scene(100000 + uint64_t(i), params).scene_id);
    for (const auto& t : train_ids)
        for (const auto& u : test_ids) CHECK(t != u);
}
