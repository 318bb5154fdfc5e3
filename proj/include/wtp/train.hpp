#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wtp/datagen.hpp"
#include "wtp/model.hpp"

namespace wtp {

struct TrainConfig {
    double lr = 0.003;
    int batch_size = 8;
    int epochs = 20;
    double train_perturbation_m = 0.25;
    uint64_t seed = 0;
    double w_road = 1.0;
    double w_heatmap = 1.0;
    double w_waypoint = 1.0;
    double grad_clip = 10.0;
    int checkpoint_every = 10;  // epochs
    // Linear learning-rate ramp over the first optimizer steps. Adam's
    // update magnitude is ~lr per weight regardless of gradient scale, so
    // the early coherent transient can push the sigmoid output heads into
    // exact-zero-gradient saturation in f32; the ramp keeps the first steps
    // small enough to avoid that.
    int warmup_steps = 200;

    void validate() const {
        if (lr < 0.0) throw std::invalid_argument("train config: lr must be >= 0");
        if (warmup_steps < 0)
            throw std::invalid_argument("train config: warmup steps must be >= 0");
        if (batch_size < 1 || epochs < 1)
            throw std::invalid_argument("train config: batch size and epochs must be positive");
        if (w_road < 0.0 || w_heatmap < 0.0 || w_waypoint < 0.0)
            throw std::invalid_argument("train config: loss weights must be >= 0");
        if (train_perturbation_m < 0.0)
            throw std::invalid_argument("train config: perturbation must be >= 0");
    }
};

// Scene-to-tensor assembly settings shared by training and evaluation.
struct ExampleParams {
    double route_width = 2.0;      // rasterized virtual-road input channel
    double road_width = 6.0;       // road-segmentation target corridor
    double heatmap_sigma = 2.0;    // cells at quarter resolution
    double forward_window = 50.0;
    double backward_window = 20.0;
    double off_route_threshold = 25.0;
};

// One scene turned into network input and targets. Input channels are
// height, intensity, density, route, in that order.
template <class T>
struct Example {
    diff::Tensor<T> input;       // [4,H0,W0]
    diff::Tensor<T> road_gt;     // [1,H0/4,W0/4] binary corridor
    diff::Tensor<T> heatmap_gt;  // [N,H0/4,W0/4] normalized Gaussians
    diff::Tensor<T> traj_gt;     // [N,2] normalized coordinates
    Trajectory gt_ego;           // meters, ego frame
};

template <class T>
Example<T> make_example(const SceneSample& sample, const GridSpec& spec,
                        const ExampleParams& ep, double perturb_m, uint64_t perturb_seed) {
    const TopometricMap* map = &sample.map;
    TopometricMap perturbed;
    if (perturb_m > 0.0) {
        perturbed = perturb_lateral(sample.map, perturb_m, perturb_seed);
        map = &perturbed;
    }
    const LocalRoute route = extract_local_route(*map, sample.pose, ep.forward_window,
                                                 ep.backward_window, ep.off_route_threshold);
    const BevChannels bev = rasterize_cloud(sample.cloud, spec);
    const Grid route_grid = rasterize_route(route.waypoints, spec, ep.route_width);

    Example<T> ex;
    ex.input = diff::Tensor<T>({4, spec.height_cells, spec.width_cells});
    const size_t plane = size_t(spec.height_cells) * spec.width_cells;
    const Grid* channels[4] = {&bev.height, &bev.intensity, &bev.density, &route_grid};
    for (int ch = 0; ch < 4; ++ch)
        for (size_t i = 0; i < plane; ++i)
            ex.input.data[ch * plane + i] = static_cast<T>(channels[ch]->data[i]);

    for (const auto& p : sample.gt_trajectory.waypoints)
        ex.gt_ego.waypoints.push_back(sample.pose.to_ego(p));

    const int N = static_cast<int>(ex.gt_ego.waypoints.size());
    const int hq = spec.height_cells / 4, wq = spec.width_cells / 4;

    // Road target: the corridor around the unperturbed route at quarter
    // resolution. The perturbed route feeds only the input channel.
    const LocalRoute clean = extract_local_route(sample.map, sample.pose, ep.forward_window,
                                                 ep.backward_window, ep.off_route_threshold);
    const Grid road = rasterize_route(clean.waypoints, spec, ep.road_width, 4);
    ex.road_gt = diff::Tensor<T>({1, hq, wq});
    for (size_t i = 0; i < road.data.size(); ++i) ex.road_gt.data[i] = static_cast<T>(road.data[i]);

    const HeatmapStack heat = make_gt_heatmaps(ex.gt_ego, spec, ep.heatmap_sigma);
    ex.heatmap_gt = diff::Tensor<T>({N, hq, wq});
    for (int n = 0; n < N; ++n)
        for (size_t i = 0; i < size_t(hq) * wq; ++i)
            ex.heatmap_gt.data[size_t(n) * hq * wq + i] = static_cast<T>(heat.maps[n].data[i]);

    ex.traj_gt = diff::Tensor<T>({N, 2});
    for (int n = 0; n < N; ++n) {
        auto [u, v] = meters_to_norm(spec, ex.gt_ego.waypoints[n]);
        ex.traj_gt.data[size_t(n) * 2] = static_cast<T>(u);
        ex.traj_gt.data[size_t(n) * 2 + 1] = static_cast<T>(v);
    }
    return ex;
}

// Stacks per-sample tensors into one batch tensor with a leading B axis.
template <class T>
diff::Tensor<T> stack_batch(const std::vector<const diff::Tensor<T>*>& parts) {
    std::vector<int> shape = parts.at(0)->shape;
    shape.insert(shape.begin(), static_cast<int>(parts.size()));
    diff::Tensor<T> out(shape);
    const size_t per = parts[0]->numel();
    for (size_t b = 0; b < parts.size(); ++b) {
        if (parts[b]->shape != parts[0]->shape)
            throw std::invalid_argument("stack_batch: ragged sample shapes");
        std::copy(parts[b]->data.begin(), parts[b]->data.end(), out.data.begin() + b * per);
    }
    return out;
}

// Pixelwise binary cross-entropy against the road corridor.
template <class T>
diff::NodePtr<T> road_loss(diff::Tape<T>& tape, diff::NodePtr<T> pred,
                           const diff::Tensor<T>& gt, bool mean = true) {
    return diff::bce_loss(tape, pred, gt, mean);
}

// Squared error over all heatmap cells.
template <class T>
diff::NodePtr<T> heatmap_loss(diff::Tape<T>& tape, diff::NodePtr<T> pred,
                              const diff::Tensor<T>& gt, bool mean = true) {
    return diff::mse_loss(tape, pred, gt, mean);
}

// Squared error over normalized waypoint coordinates; the sum reduction is
// the per-trajectory sum of squared waypoint displacements.
template <class T>
diff::NodePtr<T> waypoint_loss(diff::Tape<T>& tape, diff::NodePtr<T> pred,
                               const diff::Tensor<T>& gt, bool mean = true) {
    return diff::mse_loss(tape, pred, gt, mean);
}

// Per-term values for one batch: the mean reductions that are optimized
// and the summed reductions kept for logging.
struct LossBreakdown {
    double road_mean = 0.0, road_sum = 0.0;
    double heatmap_mean = 0.0, heatmap_sum = 0.0;
    double waypoint_mean = 0.0, waypoint_sum = 0.0;
    double total = 0.0;

    bool finite() const {
        return std::isfinite(road_mean) && std::isfinite(heatmap_mean) &&
               std::isfinite(waypoint_mean) && std::isfinite(total);
    }
};

// Weighted sum of the mean-reduced terms; heads absent from the variant
// contribute nothing. The waypoint term supervises the regression head
// only: the heatmap-only baseline's trajectory is a readout of its heatmaps
// (already supervised by the heatmap term), not a trained output. Its
// waypoint error is still reported in the breakdown for logging.
template <class T>
diff::NodePtr<T> total_loss(diff::Tape<T>& tape, const ModelOutput<T>& out,
                            const diff::Tensor<T>& road_gt, const diff::Tensor<T>& heatmap_gt,
                            const diff::Tensor<T>& traj_gt, const TrainConfig& tc,
                            LossBreakdown* breakdown = nullptr) {
    LossBreakdown bd;
    diff::NodePtr<T> loss;
    {
        auto l = waypoint_loss(tape, out.traj_norm, traj_gt);
        bd.waypoint_mean = l->val.data[0];
        bd.waypoint_sum = bd.waypoint_mean * out.traj_norm->val.numel();
        if (out.regressed) loss = diff::scale(tape, l, static_cast<T>(tc.w_waypoint));
    }
    if (out.road_mask) {
        auto l = diff::scale(tape, road_loss(tape, out.road_mask, road_gt),
                             static_cast<T>(tc.w_road));
        bd.road_mean = l->val.data[0] / std::max(tc.w_road, 1e-300);
        bd.road_sum = bd.road_mean * out.road_mask->val.numel();
        loss = loss ? diff::add(tape, loss, l) : l;
    }
    if (out.heatmaps) {
        auto l = diff::scale(tape, heatmap_loss(tape, out.heatmaps, heatmap_gt),
                             static_cast<T>(tc.w_heatmap));
        bd.heatmap_mean = l->val.data[0] / std::max(tc.w_heatmap, 1e-300);
        bd.heatmap_sum = bd.heatmap_mean * out.heatmaps->val.numel();
        loss = loss ? diff::add(tape, loss, l) : l;
    }
    bd.total = loss->val.data[0];
    if (breakdown) *breakdown = bd;
    return loss;
}

// Effective learning rate for optimizer step `step` (0-based): linear ramp
// from lr/warmup_steps up to the configured lr.
inline double warmup_lr(const TrainConfig& tc, long long step) {
    if (tc.warmup_steps <= 0) return tc.lr;
    return tc.lr * std::min(1.0, double(step + 1) / double(tc.warmup_steps));
}

struct EpochLog {
    int epoch = 0;
    double l_road = 0.0, l_heatmap = 0.0, l_waypoint = 0.0, l_total = 0.0;
    long wall_ms = 0;

    nlohmann::json to_json() const {
        return {{"epoch", epoch},      {"l_road", l_road},   {"l_heatmap", l_heatmap},
                {"l_waypoint", l_waypoint}, {"l_total", l_total}, {"wall_ms", wall_ms}};
    }
};

// Full training loop: seeded shuffling, per-sample on-the-fly route
// perturbation, Adam with global-norm clipping, per-epoch machine-readable
// logging, periodic checkpoints. Throws on non-finite loss.
template <class T>
std::vector<EpochLog> train_loop(const std::vector<SceneSample>& data, WaypointModel<T>& model,
                                 const TrainConfig& tc, const GridSpec& spec,
                                 const ExampleParams& ep = {},
                                 const std::string& checkpoint_path = "",
                                 std::ostream* log_stream = nullptr) {
    tc.validate();
    spec.validate();
    if (data.empty()) throw std::invalid_argument("train_loop: empty dataset");
    if (spec.height_cells != model.config().grid_h || spec.width_cells != model.config().grid_w)
        throw std::invalid_argument("train_loop: grid spec does not match model config");

    std::mt19937_64 rng(tc.seed);
    diff::AdamOptimizer<T> opt;

    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<EpochLog> logs;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);

        EpochLog log;
        log.epoch = epoch;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(tc.batch_size)) {
            const size_t end = std::min(order.size(), start + size_t(tc.batch_size));
            std::vector<Example<T>> examples;
            for (size_t i = start; i < end; ++i) {
                const uint64_t pseed = rng();
                examples.push_back(make_example<T>(data[order[i]], spec, ep,
                                                   tc.train_perturbation_m, pseed));
            }
            std::vector<const diff::Tensor<T>*> in, road, heat, traj;
            for (const auto& e : examples) {
                in.push_back(&e.input);
                road.push_back(&e.road_gt);
                heat.push_back(&e.heatmap_gt);
                traj.push_back(&e.traj_gt);
            }

            diff::Tape<T> tape;
            auto input = diff::make_leaf(stack_batch<T>(in), false);
            auto out = model.forward(tape, input);
            LossBreakdown bd;
            auto loss = total_loss(tape, out, stack_batch<T>(road), stack_batch<T>(heat),
                                   stack_batch<T>(traj), tc, &bd);
            if (!bd.finite())
                throw std::runtime_error(
                    "train_loop: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                    std::to_string(batches) + " (road " + std::to_string(bd.road_mean) +
                    ", heatmap " + std::to_string(bd.heatmap_mean) + ", waypoint " +
                    std::to_string(bd.waypoint_mean) + ")");

            diff::AdamOptimizer<T>::zero_grad(model.parameters());
            tape.backward(loss);
            diff::AdamOptimizer<T>::clip_grad_norm(model.parameters(),
                                                   static_cast<T>(tc.grad_clip));
            opt.lr = static_cast<T>(warmup_lr(tc, opt.step_count()));
            opt.step(model.parameters());

            log.l_road += bd.road_mean;
            log.l_heatmap += bd.heatmap_mean;
            log.l_waypoint += bd.waypoint_mean;
            log.l_total += bd.total;
            ++batches;
        }
        log.l_road /= batches;
        log.l_heatmap /= batches;
        log.l_waypoint /= batches;
        log.l_total /= batches;
        log.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        if (log_stream) *log_stream << log.to_json().dump() << "\n";
        logs.push_back(log);

        if (!checkpoint_path.empty() &&
            ((epoch + 1) % tc.checkpoint_every == 0 || epoch + 1 == tc.epochs))
            diff::save_checkpoint(model.parameters(), opt.step_count(), checkpoint_path);
    }
    return logs;
}

}  // namespace wtp
