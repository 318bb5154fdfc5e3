#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "wtp/config.hpp"
#include "wtp/render.hpp"

using namespace wtp;

TEST_CASE("an empty document yields the default configuration") {
    RunConfig c = config_from_json(nlohmann::json::object());
    CHECK(c.grid.height_cells == 160);
    CHECK(c.model.embed_dim() == 400);
    CHECK(c.model.num_waypoints == 12);
    CHECK(c.train.lr == 0.003);
    CHECK(c.train.batch_size == 8);
    CHECK(c.train.train_perturbation_m == 0.25);
    CHECK(c.datagen.road_width == 6.0);
    CHECK(c.metrics.ds == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("config round trips through serialization") {
    nlohmann::json j = {
        {"seed", 9},
        {"grid", {{"height_cells", 64}, {"width_cells", 64}, {"ego_row", 16}, {"ego_col", 32}}},
        {"model", {{"variant", "transformer2"}, {"num_waypoints", 6}, {"ffn_hidden", 64}}},
        {"train", {{"lr", 0.01}, {"epochs", 5}}},
        {"datagen", {{"num_waypoints", 6}, {"map_noise", 0.5}}},
    };
    RunConfig a = config_from_json(j);
    RunConfig b = config_from_json(config_to_json(a));
    CHECK(config_to_json(a) == config_to_json(b));
    CHECK(b.model.variant == Variant::transformer2);
    CHECK(b.model.grid_h == 64);
    CHECK(b.train.lr == 0.01);
    CHECK(b.datagen.map_noise == 0.5);
}

TEST_CASE("dotted-key overrides reach nested fields with typed values") {
    nlohmann::json j = nlohmann::json::object();
    apply_override(j, "train.lr=0.02");
    apply_override(j, "model.pre_norm=false");
    apply_override(j, "model.variant=heatmap_only");
    apply_override(j, "metrics.ds=[1,5]");
    RunConfig c = config_from_json(j);
    CHECK(c.train.lr == 0.02);
    CHECK(c.model.pre_norm == false);
    CHECK(c.model.variant == Variant::heatmap_only);
    CHECK(c.metrics.ds == std::vector<double>{1.0, 5.0});

    CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), std::invalid_argument);
}

TEST_CASE("cross-field validation names the offending keys") {
    nlohmann::json j = {{"model", {{"num_waypoints", 6}}}};
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("num_waypoints"),
                         std::invalid_argument);

    nlohmann::json bad_type = {{"train", {{"lr", "fast"}}}};
    CHECK_THROWS_WITH_AS(config_from_json(bad_type), doctest::Contains("train.lr"),
                         std::invalid_argument);

    nlohmann::json bad_grid = {{"grid", {{"height_cells", 30}, {"ego_row", 8}}}};
    CHECK_THROWS_AS(config_from_json(bad_grid), std::invalid_argument);
}

TEST_CASE("config files load with overrides applied on top") {
    const auto path = std::filesystem::temp_directory_path() / "wtp_cfg_test.json";
    {
        std::ofstream f(path);
        f << R"({"train": {"epochs": 7}})";
    }
    RunConfig c = load_config(path.string(), {"train.epochs=9", "seed=42"});
    CHECK(c.train.epochs == 9);
    CHECK(c.seed == 42);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), std::invalid_argument);
}

TEST_CASE("svg render emits one polyline per overlay") {
    GridSpec spec;
    spec.height_cells = 32;
    spec.width_cells = 32;
    spec.ego_row = 8;
    spec.ego_col = 16;
    Grid density(32, 32);
    density.at(10, 16) = 0.5f;
    density.at(11, 16) = 1.0f;

    std::vector<Waypoint2D> route = {{-4.0, 0.0}, {4.0, 0.0}, {10.0, 0.0}};
    Trajectory gt, pred;
    for (int i = 1; i <= 5; ++i) {
        gt.waypoints.push_back({double(i), 0.0});
        pred.waypoints.push_back({double(i), 0.3});
    }
    const std::string svg = render_svg(density, spec, route, gt, pred);

    auto count = [&](const std::string& needle) {
        size_t n = 0, pos = 0;
        while ((pos = svg.find(needle, pos)) != std::string::npos) {
            ++n;
            pos += needle.size();
        }
        return n;
    };
    CHECK(count("<polyline") == 3);
    CHECK(count("stroke=\"blue\"") == 1);
    CHECK(count("stroke=\"red\"") == 1);
    CHECK(count("stroke=\"green\"") == 1);
    CHECK(count("<rect") == 3);  // background plus two occupied cells
    CHECK(svg.find("<svg") == 0);

    Grid wrong(16, 16);
    CHECK_THROWS_AS(render_svg(wrong, spec, route, gt, pred), std::invalid_argument);
}
