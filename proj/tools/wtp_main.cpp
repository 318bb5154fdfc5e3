// Command-line entry point: dataset generation, training, evaluation,
// perturbation robustness tables, and SVG scene renders, all driven by one
// JSON config document with dotted-key overrides.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wtp/config.hpp"
#include "wtp/metrics.hpp"
#include "wtp/render.hpp"
#include "wtp/train.hpp"

namespace {

wtp::Predictor model_predictor(wtp::WaypointModel<float>& model, const wtp::RunConfig& cfg) {
    return [&model, cfg](const wtp::SceneSample& sample, double magnitude,
                         uint64_t seed) -> std::vector<wtp::Trajectory> {
        auto ex = wtp::make_example<float>(sample, cfg.grid, cfg.example, magnitude, seed);
        wtp::diff::Tape<float> tape;
        auto input = wtp::diff::make_leaf(wtp::stack_batch<float>({&ex.input}), false);
        auto out = model.forward(tape, input);
        return {out.trajectories_m(cfg.grid)[0]};
    };
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

int run(int argc, char** argv) {
    CLI::App app{"Trajectory prediction from LiDAR bird's-eye view and a sparse route map"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int threads = 1;
    app.add_option("--config", config_path, "JSON config file")->envname("WTP_CONFIG");
    app.add_option("--set", overrides, "dotted.key=value config overrides");
    app.add_option("--threads", threads, "worker threads (1 = fully reproducible)")
        ->check(CLI::PositiveNumber);

    auto* cmd_datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
    std::string dg_out, dg_split = "train";
    int dg_count = 32;
    cmd_datagen->add_option("--out", dg_out, "output directory")->required();
    cmd_datagen->add_option("--count", dg_count, "number of scenes");
    cmd_datagen->add_option("--split", dg_split, "train|test (disjoint seed ranges)")
        ->check(CLI::IsMember({"train", "test"}));

    auto* cmd_train = app.add_subcommand("train", "train a model on a dataset");
    std::string tr_data, tr_out;
    cmd_train->add_option("--data", tr_data, "dataset directory")->required();
    cmd_train->add_option("--out", tr_out, "checkpoint output path")->required();

    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_data, ev_ckpt, ev_report;
    cmd_eval->add_option("--data", ev_data, "dataset directory")->required();
    cmd_eval->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    cmd_eval->add_option("--report", ev_report, "metrics report JSON output");

    auto* cmd_perturb = app.add_subcommand("perturb", "robustness table over map perturbations");
    std::string pb_data, pb_ckpt, pb_report;
    std::vector<double> pb_magnitudes = {0.0, 1.0, 2.0, 3.0};
    int pb_trials = 3;
    cmd_perturb->add_option("--data", pb_data, "dataset directory")->required();
    cmd_perturb->add_option("--checkpoint", pb_ckpt, "checkpoint path")->required();
    cmd_perturb->add_option("--magnitudes", pb_magnitudes, "perturbation magnitudes in meters")
        ->delimiter(',');
    cmd_perturb->add_option("--trials", pb_trials, "seeded trials per magnitude")
        ->check(CLI::PositiveNumber);
    cmd_perturb->add_option("--report", pb_report, "table JSON output");

    auto* cmd_render = app.add_subcommand("render", "render one sample as an SVG");
    std::string rd_sample, rd_ckpt, rd_out;
    cmd_render->add_option("--sample", rd_sample, "sample directory")->required();
    cmd_render->add_option("--checkpoint", rd_ckpt, "checkpoint (default: untrained model)");
    cmd_render->add_option("--out", rd_out, "SVG output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const wtp::RunConfig cfg = wtp::load_config(config_path, overrides);

    if (cmd_datagen->parsed()) {
        // Test splits draw from a far-away seed range so scene ids never collide.
        const uint64_t base = cfg.seed + (dg_split == "test" ? 1000000u : 0u);
        auto manifest = wtp::generate_dataset(dg_count, base, cfg.datagen, dg_out);
        std::cout << "wrote " << manifest.at("count") << " scenes to " << dg_out << "\n";
        return 0;
    }

    if (cmd_train->parsed()) {
        auto data = wtp::load_dataset(tr_data);
        wtp::WaypointModel<float> model(cfg.model, cfg.seed);
        std::ofstream log(tr_out + ".log.jsonl");
        if (!log) throw std::runtime_error("cannot write " + tr_out + ".log.jsonl");
        auto logs = wtp::train_loop(data, model, cfg.train, cfg.grid, cfg.example, tr_out, &log);
        std::cout << "trained " << logs.size() << " epochs, final loss "
                  << logs.back().l_total << ", checkpoint " << tr_out << "\n";
        return 0;
    }

    if (cmd_eval->parsed()) {
        auto data = wtp::load_dataset(ev_data);
        wtp::WaypointModel<float> model(cfg.model, cfg.seed);
        wtp::diff::load_checkpoint(model.parameters(), ev_ckpt);
        auto predictor = model_predictor(model, cfg);
        auto report = wtp::evaluate_dataset(data, predictor, 0.0, cfg.seed, cfg.metrics);
        const std::string text = report.to_json().dump(2) + "\n";
        if (!ev_report.empty()) write_text(ev_report, text);
        std::cout << text;
        return 0;
    }

    if (cmd_perturb->parsed()) {
        auto data = wtp::load_dataset(pb_data);
        wtp::WaypointModel<float> model(cfg.model, cfg.seed);
        wtp::diff::load_checkpoint(model.parameters(), pb_ckpt);
        auto predictor = model_predictor(model, cfg);
        auto table = wtp::perturbation_eval(data, predictor, pb_magnitudes, pb_trials,
                                            cfg.seed, cfg.metrics);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& cell : table) j.push_back(cell.to_json());
        const std::string text = j.dump(2) + "\n";
        if (!pb_report.empty()) write_text(pb_report, text);
        std::cout << text;
        return 0;
    }

    if (cmd_render->parsed()) {
        const wtp::SceneSample sample = wtp::load_sample(rd_sample);
        wtp::WaypointModel<float> model(cfg.model, cfg.seed);
        if (!rd_ckpt.empty()) wtp::diff::load_checkpoint(model.parameters(), rd_ckpt);

        const auto bev = wtp::rasterize_cloud(sample.cloud, cfg.grid);
        const auto route = wtp::extract_local_route(sample.map, sample.pose,
                                                    cfg.example.forward_window,
                                                    cfg.example.backward_window,
                                                    cfg.example.off_route_threshold);
        wtp::Trajectory gt;
        for (const auto& p : sample.gt_trajectory.waypoints)
            gt.waypoints.push_back(sample.pose.to_ego(p));
        const auto pred = model_predictor(model, cfg)(sample, 0.0, cfg.seed)[0];

        write_text(rd_out, wtp::render_svg(bev.density, cfg.grid, route.waypoints, gt, pred));
        std::cout << "wrote " << rd_out << "\n";
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;  // usage / configuration error
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // data / model error
    }
}
