#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wtp/datagen.hpp"
#include "wtp/geometry.hpp"
#include "wtp/raster.hpp"

namespace wtp {

struct DegenerateTrajectoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<double> cumulative_lengths(const Trajectory& t) {
    std::vector<double> cum(t.waypoints.size(), 0.0);
    for (size_t i = 1; i < t.waypoints.size(); ++i)
        cum[i] = cum[i - 1] + distance(t.waypoints[i - 1], t.waypoints[i]);
    return cum;
}

// Point at arc length s along the polyline, linear within segments.
inline Waypoint2D point_at_length(const Trajectory& t, const std::vector<double>& cum, double s) {
    s = std::clamp(s, 0.0, cum.back());
    const auto it = std::lower_bound(cum.begin(), cum.end(), s);
    size_t i = size_t(it - cum.begin());
    if (i == 0) return t.waypoints.front();
    const double seg = cum[i] - cum[i - 1];
    const double f = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
    return t.waypoints[i - 1] + (t.waypoints[i] - t.waypoints[i - 1]) * f;
}

}  // namespace detail

// Resamples the source polyline at the target's cumulative arc-length
// fractions, removing speed differences between two traversals of similar
// geometry. The output has the target's waypoint count.
inline Trajectory align(const Trajectory& source, const Trajectory& target) {
    if (source.waypoints.size() < 2 || target.waypoints.size() < 2)
        throw std::invalid_argument("align: trajectories need at least 2 waypoints");
    const auto src_cum = detail::cumulative_lengths(source);
    const auto tgt_cum = detail::cumulative_lengths(target);
    if (!(src_cum.back() > 0.0))
        throw DegenerateTrajectoryError("align: source polyline has zero length");

    Trajectory out;
    for (size_t t = 0; t < target.waypoints.size(); ++t) {
        const double frac = tgt_cum.back() > 0.0 ? tgt_cum[t] / tgt_cum.back()
                                                 : double(t) / double(target.waypoints.size() - 1);
        out.waypoints.push_back(detail::point_at_length(source, src_cum, frac * src_cum.back()));
    }
    return out;
}

// Distance between the final waypoints. `squared` reports the squared norm.
inline double fde(const Trajectory& pred, const Trajectory& gt, bool squared = false) {
    if (pred.waypoints.empty() || gt.waypoints.empty())
        throw std::invalid_argument("fde: empty trajectory");
    const double d = distance(pred.waypoints.back(), gt.waypoints.back());
    return squared ? d * d : d;
}

// Mean per-index displacement. With `aligned`, the prediction is first
// resampled to the ground truth's arc-length parameterization.
inline double ade(const Trajectory& pred, const Trajectory& gt, bool aligned = false,
                  bool squared = false) {
    if (gt.waypoints.empty()) throw std::invalid_argument("ade: empty ground truth");
    const Trajectory& p = aligned ? align(pred, gt) : pred;
    if (!aligned && p.waypoints.size() != gt.waypoints.size())
        throw std::invalid_argument("ade: length mismatch without alignment");
    double sum = 0.0;
    for (size_t t = 0; t < gt.waypoints.size(); ++t) {
        const double d = distance(p.waypoints[t], gt.waypoints[t]);
        sum += squared ? d * d : d;
    }
    return sum / double(gt.waypoints.size());
}

// Minimum ADE over k candidate trajectories.
inline double min_ade_k(const std::vector<Trajectory>& candidates, const Trajectory& gt,
                        bool aligned = false) {
    if (candidates.empty()) throw std::invalid_argument("min_ade_k: no candidates");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) best = std::min(best, ade(c, gt, aligned));
    return best;
}

// Fraction of samples where some of the first k candidates keeps its
// maximum per-index displacement below d.
inline double hit_rate(const std::vector<std::vector<Trajectory>>& preds_per_sample,
                       const std::vector<Trajectory>& gts, int k, double d,
                       bool aligned = false) {
    if (preds_per_sample.size() != gts.size())
        throw std::invalid_argument("hit_rate: sample count mismatch");
    if (preds_per_sample.empty()) throw std::invalid_argument("hit_rate: no samples");
    if (k < 1 || !(d > 0.0)) throw std::invalid_argument("hit_rate: need k >= 1 and d > 0");

    int hits = 0;
    for (size_t i = 0; i < gts.size(); ++i) {
        const int kk = std::min<int>(k, int(preds_per_sample[i].size()));
        bool hit = false;
        for (int c = 0; c < kk && !hit; ++c) {
            const Trajectory p = aligned ? align(preds_per_sample[i][c], gts[i])
                                         : preds_per_sample[i][c];
            if (p.waypoints.size() != gts[i].waypoints.size())
                throw std::invalid_argument("hit_rate: length mismatch without alignment");
            double worst = 0.0;
            for (size_t t = 0; t < p.waypoints.size(); ++t)
                worst = std::max(worst, distance(p.waypoints[t], gts[i].waypoints[t]));
            hit = worst < d;
        }
        hits += hit ? 1 : 0;
    }
    return double(hits) / double(gts.size());
}

// Physics baseline: least-squares velocity fit over the observed past,
// extrapolated at constant speed and heading.
inline Trajectory const_vel_yaw(const Trajectory& past, int T) {
    const size_t n = past.waypoints.size();
    if (n < 2) throw std::invalid_argument("const_vel_yaw: need at least 2 past positions");
    if (T < 1) throw std::invalid_argument("const_vel_yaw: need T >= 1");

    // Slope of position vs. step index: v = sum((i - i_mean) p_i) / sum((i - i_mean)^2).
    const double imean = double(n - 1) / 2.0;
    Waypoint2D num{0.0, 0.0};
    double den = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double w = double(i) - imean;
        num = num + past.waypoints[i] * w;
        den += w * w;
    }
    const Waypoint2D v = num * (1.0 / den);

    Trajectory out;
    const Waypoint2D last = past.waypoints.back();
    for (int t = 1; t <= T; ++t) out.waypoints.push_back(last + v * double(t));
    return out;
}

struct MetricsReport {
    double fde_m = 0.0;
    double ade_m = 0.0;
    std::map<int, double> min_ade;                      // k -> meters
    std::map<std::pair<int, double>, double> hit_rates; // (k, d) -> fraction
    int sample_count = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["fde_m"] = fde_m;
        j["ade_m"] = ade_m;
        j["sample_count"] = sample_count;
        auto& ma = j["min_ade"] = nlohmann::json::object();
        for (const auto& [k, v] : min_ade) ma["k=" + std::to_string(k)] = v;
        auto& hr = j["hit_rate"] = nlohmann::json::object();
        for (const auto& [kd, v] : hit_rates) {
            char key[48];
            std::snprintf(key, sizeof(key), "k=%d,d=%g", kd.first, kd.second);
            hr[key] = v;
        }
        return j;
    }
};

struct MetricsSettings {
    std::vector<int> ks = {1};
    std::vector<double> ds = {1.0, 2.0, 3.0};
    bool aligned_ade = true;  // FDE stays on raw final waypoints
};

// Aggregates a candidate set per sample against ground truth. FDE and ADE
// use the first candidate (the single-mode prediction).
inline MetricsReport evaluate(const std::vector<std::vector<Trajectory>>& preds_per_sample,
                              const std::vector<Trajectory>& gts,
                              const MetricsSettings& settings = {}) {
    if (preds_per_sample.size() != gts.size() || gts.empty())
        throw std::invalid_argument("evaluate: bad sample counts");
    MetricsReport report;
    report.sample_count = int(gts.size());
    for (size_t i = 0; i < gts.size(); ++i) {
        report.fde_m += fde(preds_per_sample[i].at(0), gts[i]);
        report.ade_m += ade(preds_per_sample[i].at(0), gts[i], settings.aligned_ade);
        for (int k : settings.ks) {
            const int kk = std::min<int>(k, int(preds_per_sample[i].size()));
            std::vector<Trajectory> head(preds_per_sample[i].begin(),
                                         preds_per_sample[i].begin() + kk);
            report.min_ade[k] += min_ade_k(head, gts[i], settings.aligned_ade);
        }
    }
    report.fde_m /= double(gts.size());
    report.ade_m /= double(gts.size());
    for (auto& [k, v] : report.min_ade) v /= double(gts.size());
    for (int k : settings.ks)
        for (double d : settings.ds)
            report.hit_rates[{k, d}] = hit_rate(preds_per_sample, gts, k, d, settings.aligned_ade);
    return report;
}

// A model under evaluation: given a scene, a map-perturbation magnitude and
// a perturbation seed, produce candidate trajectories in the ego frame.
using Predictor =
    std::function<std::vector<Trajectory>(const SceneSample&, double magnitude, uint64_t seed)>;

inline MetricsReport evaluate_dataset(const std::vector<SceneSample>& data,
                                      const Predictor& predictor, double magnitude,
                                      uint64_t seed, const MetricsSettings& settings = {}) {
    if (data.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
    std::vector<std::vector<Trajectory>> preds;
    std::vector<Trajectory> gts;
    std::mt19937_64 rng(seed);
    for (const auto& sample : data) {
        preds.push_back(predictor(sample, magnitude, rng()));
        Trajectory gt;
        for (const auto& p : sample.gt_trajectory.waypoints)
            gt.waypoints.push_back(sample.pose.to_ego(p));
        gts.push_back(std::move(gt));
    }
    return evaluate(preds, gts, settings);
}

// One row of the robustness table: mean and standard deviation of each
// metric over seeded trials at a fixed perturbation magnitude.
struct PerturbationCell {
    double magnitude = 0.0;
    int trials = 0;
    MetricsReport mean;
    MetricsReport stddev;

    nlohmann::json to_json() const {
        return {{"magnitude_m", magnitude},
                {"trials", trials},
                {"mean", mean.to_json()},
                {"stddev", stddev.to_json()}};
    }
};

inline std::vector<PerturbationCell> perturbation_eval(const std::vector<SceneSample>& data,
                                                       const Predictor& predictor,
                                                       const std::vector<double>& magnitudes,
                                                       int trials, uint64_t base_seed,
                                                       const MetricsSettings& settings = {}) {
    if (trials < 1) throw std::invalid_argument("perturbation_eval: need trials >= 1");
    std::vector<PerturbationCell> table;
    uint64_t trial_seed = base_seed;
    for (double mag : magnitudes) {
        const int runs = mag == 0.0 ? 1 : trials;  // zero perturbation is deterministic
        std::vector<MetricsReport> reports;
        for (int r = 0; r < runs; ++r) reports.push_back(
            evaluate_dataset(data, predictor, mag, trial_seed++, settings));

        PerturbationCell cell;
        cell.magnitude = mag;
        cell.trials = runs;
        auto fold = [&](auto get, auto set) {
            double m = 0.0;
            for (const auto& rep : reports) m += get(rep);
            m /= runs;
            double sq = 0.0;
            for (const auto& rep : reports) sq += (get(rep) - m) * (get(rep) - m);
            set(cell.mean, m);
            set(cell.stddev, runs > 1 ? std::sqrt(sq / runs) : 0.0);
        };
        fold([](const MetricsReport& r) { return r.fde_m; },
             [](MetricsReport& r, double v) { r.fde_m = v; });
        fold([](const MetricsReport& r) { return r.ade_m; },
             [](MetricsReport& r, double v) { r.ade_m = v; });
        for (const auto& [k, unused] : reports[0].min_ade) {
            (void)unused;
            fold([k = k](const MetricsReport& r) { return r.min_ade.at(k); },
                 [k = k](MetricsReport& r, double v) { r.min_ade[k] = v; });
        }
        for (const auto& [kd, unused] : reports[0].hit_rates) {
            (void)unused;
            fold([kd = kd](const MetricsReport& r) { return r.hit_rates.at(kd); },
                 [kd = kd](MetricsReport& r, double v) { r.hit_rates[kd] = v; });
        }
        cell.mean.sample_count = reports[0].sample_count;
        cell.stddev.sample_count = reports[0].sample_count;
        table.push_back(std::move(cell));
    }
    return table;
}

}  // namespace wtp
