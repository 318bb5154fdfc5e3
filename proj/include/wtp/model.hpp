#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "wtp/diffcore.hpp"
#include "wtp/raster.hpp"

namespace wtp {

enum class Variant { full, transformer0, transformer1, transformer2, transformer3, heatmap_only };

inline Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "transformer0") return Variant::transformer0;
    if (s == "transformer1") return Variant::transformer1;
    if (s == "transformer2") return Variant::transformer2;
    if (s == "transformer3") return Variant::transformer3;
    if (s == "heatmap_only") return Variant::heatmap_only;
    throw std::invalid_argument("unknown model variant: " + s);
}

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::transformer0: return "transformer0";
        case Variant::transformer1: return "transformer1";
        case Variant::transformer2: return "transformer2";
        case Variant::transformer3: return "transformer3";
        case Variant::heatmap_only: return "heatmap_only";
    }
    throw std::invalid_argument("unknown model variant");
}

struct ModelConfig {
    int grid_h = 160;      // H0
    int grid_w = 160;      // W0
    int num_waypoints = 12;  // N == T
    int heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ffn_hidden = 512;
    Variant variant = Variant::full;
    bool pre_norm = true;

    // Embedding width is forced by the /8 flatten, never set independently.
    int embed_dim() const { return (grid_h / 8) * (grid_w / 8); }

    void validate() const {
        if (grid_h <= 0 || grid_w <= 0 || grid_h % 8 != 0 || grid_w % 8 != 0)
            throw std::invalid_argument("model config: H0/W0 must be positive multiples of 8");
        if (num_waypoints < 2) throw std::invalid_argument("model config: need N >= 2 waypoints");
        if (heads <= 0 || embed_dim() % heads != 0)
            throw std::invalid_argument("model config: d=" + std::to_string(embed_dim()) +
                                        " not divisible by heads=" + std::to_string(heads));
        if (encoder_layers < 1 || decoder_layers < 1 || ffn_hidden < 1)
            throw std::invalid_argument("model config: layer sizes must be positive");
    }
};

// Normalized [0,1]^2 head outputs <-> ego-frame meters over the grid extent.
inline Waypoint2D norm_to_meters(const GridSpec& spec, double u, double v) {
    return {spec.x_min() + u * spec.x_extent(), spec.y_min() + v * spec.y_extent()};
}
inline std::pair<double, double> meters_to_norm(const GridSpec& spec, const Waypoint2D& p) {
    return {(p.x - spec.x_min()) / spec.x_extent(), (p.y - spec.y_min()) / spec.y_extent()};
}

template <class T>
struct ModelOutput {
    diff::NodePtr<T> traj_norm;  // [B,N,2] in [0,1]^2
    diff::NodePtr<T> heatmaps;   // [B,N,H0/4,W0/4] or null
    diff::NodePtr<T> road_mask;  // [B,1,H0/4,W0/4] or null
    // True when traj_norm comes from the regression head and is trained by
    // the waypoint loss. The heatmap-only baseline instead decodes its
    // heatmaps by expectation; its trajectory is a readout, supervised only
    // through the heatmap targets.
    bool regressed = true;

    // Plain meters decode of traj_norm for metrics/reporting.
    std::vector<Trajectory> trajectories_m(const GridSpec& spec) const {
        const auto& s = traj_norm->val.shape;
        std::vector<Trajectory> out(static_cast<size_t>(s[0]));
        for (int b = 0; b < s[0]; ++b) {
            for (int n = 0; n < s[1]; ++n) {
                const size_t i = (static_cast<size_t>(b) * s[1] + n) * 2;
                out[static_cast<size_t>(b)].waypoints.push_back(norm_to_meters(
                    spec, traj_norm->val.data[i], traj_norm->val.data[i + 1]));
            }
        }
        return out;
    }
};

// The waypoint-transformer network plus its ablation variants, assembled
// from diffcore ops. One instance owns its parameters; forward() builds a
// fresh graph on the caller's tape.
template <class T>
class WaypointModel {
 public:
    using Node = diff::NodePtr<T>;

    WaypointModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg), rng_(seed) {
        cfg_.validate();
        build_parameters();
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<diff::Parameter<T>>& parameters() { return params_; }
    const std::vector<diff::Parameter<T>>& parameters() const { return params_; }

    ModelOutput<T> forward(diff::Tape<T>& tape, Node input) {
        namespace d = wtp::diff;
        const auto& s = input->val.shape;
        if (s.size() != 4 || s[1] != 4 || s[2] != cfg_.grid_h || s[3] != cfg_.grid_w)
            throw std::invalid_argument("model forward: expected [B,4," +
                                        std::to_string(cfg_.grid_h) + "," +
                                        std::to_string(cfg_.grid_w) + "], got " +
                                        d::shape_str(s));
        const int B = s[0];
        const int N = cfg_.num_waypoints;
        const int dmodel = cfg_.embed_dim();
        const int hq = cfg_.grid_h / 4, wq = cfg_.grid_w / 4;
        const Variant v = cfg_.variant;

        Node feat = backbone(tape, input);  // [B,96,H0/4,W0/4]

        ModelOutput<T> out;

        // Waypoint positional encoder: heatmaps + positional embeddings.
        Node x3;
        if (v == Variant::full || v == Variant::transformer1 || v == Variant::transformer3 ||
            v == Variant::heatmap_only) {
            Node logits = d::conv2d(tape, feat, p_("wpe.conv1.w"), p_("wpe.conv1.b"), 1, 1);
            out.heatmaps = d::spatial_softmax(tape, logits);  // [B,N,hq,wq]
            if (v != Variant::heatmap_only) {
                Node pos = d::conv2d(tape, out.heatmaps, p_("wpe.conv2.w"), p_("wpe.conv2.b"), 2, 1);
                x3 = d::reshape(tape, pos, {B, N, dmodel});
            }
        }

        if (v == Variant::heatmap_only) {
            // Trajectory is the probability-weighted cell coordinate,
            // expressed in normalized grid units.
            std::vector<T> cu(static_cast<size_t>(hq) * wq), cv(cu.size());
            for (int r = 0; r < hq; ++r)
                for (int c = 0; c < wq; ++c) {
                    cu[static_cast<size_t>(r) * wq + c] = (T(r) + T(0.5)) / T(hq);
                    cv[static_cast<size_t>(r) * wq + c] = (T(c) + T(0.5)) / T(wq);
                }
            out.traj_norm = d::expected_coords(tape, out.heatmaps, std::move(cu), std::move(cv));
            out.regressed = false;
            return out;
        }

        // Waypoint feature encoder: content branch + road-segmentation branch.
        Node x1 = d::reshape(
            tape, d::conv2d(tape, feat, p_("wfe.conv1.w"), p_("wfe.conv1.b"), 2, 1),
            {B, N, dmodel});
        Node embeddings = x1;
        if (v == Variant::full || v == Variant::transformer2 || v == Variant::transformer3) {
            out.road_mask =
                d::sigmoid(tape, d::conv2d(tape, feat, p_("wfe.road.w"), p_("wfe.road.b"), 1, 1));
            Node x2 = d::reshape(
                tape,
                d::conv2d(tape, out.road_mask, p_("wfe.conv2.w"), p_("wfe.conv2.b"), 2, 1),
                {B, N, dmodel});
            embeddings = d::add(tape, embeddings, x2);
        }
        if (x3) embeddings = d::add(tape, embeddings, x3);

        // Transformer encoder.
        Node enc = embeddings;
        for (int l = 0; l < cfg_.encoder_layers; ++l)
            enc = encoder_layer(tape, enc, "enc" + std::to_string(l));
        if (cfg_.pre_norm)
            enc = d::layer_norm(tape, enc, p_("enc_out.ln.g"), p_("enc_out.ln.b"));

        Node head_in;
        if (v == Variant::transformer3) {
            head_in = enc;  // per-position head, no decoder
        } else {
            Node q = d::repeat_batch(tape, p_("queries"), B);
            for (int l = 0; l < cfg_.decoder_layers; ++l)
                q = decoder_layer(tape, q, enc, "dec" + std::to_string(l));
            if (cfg_.pre_norm) q = d::layer_norm(tape, q, p_("dec_out.ln.g"), p_("dec_out.ln.b"));
            head_in = q;
        }

        Node h = d::relu(tape, d::linear(tape, head_in, p_("head.l1.w"), p_("head.l1.b")));
        out.traj_norm = d::sigmoid(tape, d::linear(tape, h, p_("head.l2.w"), p_("head.l2.b")));
        return out;
    }

 private:
    ModelConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<diff::Parameter<T>> params_;
    std::unordered_map<std::string, size_t> index_;

    Node p_(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
        return params_[it->second].node;
    }

    Node add_param(const std::string& name, diff::Tensor<T> t) {
        index_[name] = params_.size();
        params_.emplace_back(name, diff::make_leaf(std::move(t), true));
        return params_.back().node;
    }

    diff::Tensor<T> randn(std::vector<int> shape, T std_dev) {
        diff::Tensor<T> t(std::move(shape));
        std::normal_distribution<double> g(0.0, static_cast<double>(std_dev));
        for (auto& v : t.data) v = static_cast<T>(g(rng_));
        return t;
    }

    void add_conv(const std::string& name, int co, int ci, int k) {
        const T std_dev = std::sqrt(T(2) / static_cast<T>(ci * k * k));  // He init
        add_param(name + ".w", randn({co, ci, k, k}, std_dev));
        add_param(name + ".b", diff::Tensor<T>({co}));
    }
    void add_linear(const std::string& name, int out, int in) {
        const T std_dev = std::sqrt(T(2) / static_cast<T>(in + out));  // Xavier
        add_param(name + ".w", randn({out, in}, std_dev));
        add_param(name + ".b", diff::Tensor<T>({out}));
    }
    void add_layer_norm(const std::string& name, int dim) {
        add_param(name + ".g", diff::Tensor<T>({dim}, T(1)));
        add_param(name + ".b", diff::Tensor<T>({dim}));
    }
    void add_attention(const std::string& name, int dim) {
        add_linear(name + ".q", dim, dim);
        add_linear(name + ".k", dim, dim);
        add_linear(name + ".v", dim, dim);
        add_linear(name + ".o", dim, dim);
    }

    diff::AttentionParams<T> attn_(const std::string& name) const {
        diff::AttentionParams<T> p;
        p.wq = p_(name + ".q.w");
        p.bq = p_(name + ".q.b");
        p.wk = p_(name + ".k.w");
        p.bk = p_(name + ".k.b");
        p.wv = p_(name + ".v.w");
        p.bv = p_(name + ".v.b");
        p.wo = p_(name + ".o.w");
        p.bo = p_(name + ".o.b");
        return p;
    }

    void build_parameters() {
        const int N = cfg_.num_waypoints;
        const int dmodel = cfg_.embed_dim();
        const Variant v = cfg_.variant;

        // Backbone: two plain convs, then residual blocks at /2../16,
        // then 1x1 pyramid projections fused at /4 with 96 channels.
        add_conv("bb.b1c1", 32, 4, 3);
        add_conv("bb.b1c2", 32, 32, 3);
        const int chans[4] = {32, 64, 128, 192};
        int in_ch = 32;
        for (int i = 0; i < 4; ++i) {
            const std::string base = "bb.res" + std::to_string(i + 2);
            add_conv(base + ".c1", chans[i], in_ch, 3);
            add_conv(base + ".c2", chans[i], chans[i], 3);
            add_conv(base + ".skip", chans[i], in_ch, 1);
            in_ch = chans[i];
        }
        add_conv("bb.proj2", 96, 32, 1);
        add_conv("bb.proj3", 96, 64, 1);
        add_conv("bb.proj4", 96, 128, 1);
        add_conv("bb.proj5", 96, 192, 1);

        if (v == Variant::full || v == Variant::transformer1 || v == Variant::transformer3 ||
            v == Variant::heatmap_only) {
            add_conv("wpe.conv1", N, 96, 3);
            if (v != Variant::heatmap_only) add_conv("wpe.conv2", N, N, 3);
        }
        if (v == Variant::heatmap_only) return;

        add_conv("wfe.conv1", N, 96, 3);
        if (v == Variant::full || v == Variant::transformer2 || v == Variant::transformer3) {
            add_conv("wfe.road", 1, 96, 3);
            add_conv("wfe.conv2", N, 1, 3);
        }

        for (int l = 0; l < cfg_.encoder_layers; ++l) {
            const std::string base = "enc" + std::to_string(l);
            add_layer_norm(base + ".ln1", dmodel);
            add_attention(base + ".attn", dmodel);
            add_layer_norm(base + ".ln2", dmodel);
            add_linear(base + ".ffn1", cfg_.ffn_hidden, dmodel);
            add_linear(base + ".ffn2", dmodel, cfg_.ffn_hidden);
        }
        if (cfg_.pre_norm) add_layer_norm("enc_out.ln", dmodel);

        if (v != Variant::transformer3) {
            add_param("queries", randn({N, dmodel}, T(0.5)));
            for (int l = 0; l < cfg_.decoder_layers; ++l) {
                const std::string base = "dec" + std::to_string(l);
                add_layer_norm(base + ".ln1", dmodel);
                add_attention(base + ".self", dmodel);
                add_layer_norm(base + ".ln2", dmodel);
                add_attention(base + ".cross", dmodel);
                add_layer_norm(base + ".ln3", dmodel);
                add_linear(base + ".ffn1", cfg_.ffn_hidden, dmodel);
                add_linear(base + ".ffn2", dmodel, cfg_.ffn_hidden);
            }
            if (cfg_.pre_norm) add_layer_norm("dec_out.ln", dmodel);
        }

        add_linear("head.l1", cfg_.ffn_hidden, dmodel);
        add_linear("head.l2", 2, cfg_.ffn_hidden);
    }

    Node backbone(diff::Tape<T>& tape, Node input) {
        namespace d = wtp::diff;
        Node x = d::relu(tape, d::conv2d(tape, input, p_("bb.b1c1.w"), p_("bb.b1c1.b"), 1, 1));
        x = d::relu(tape, d::conv2d(tape, x, p_("bb.b1c2.w"), p_("bb.b1c2.b"), 1, 1));
        Node b2 = residual(tape, x, "bb.res2", 2);
        Node b3 = residual(tape, b2, "bb.res3", 2);
        Node b4 = residual(tape, b3, "bb.res4", 2);
        Node b5 = residual(tape, b4, "bb.res5", 2);

        Node f2 = d::conv2d(tape, b2, p_("bb.proj2.w"), p_("bb.proj2.b"), 2, 0);
        Node f3 = d::conv2d(tape, b3, p_("bb.proj3.w"), p_("bb.proj3.b"), 1, 0);
        Node f4 = d::upsample2x(tape, d::conv2d(tape, b4, p_("bb.proj4.w"), p_("bb.proj4.b"), 1, 0));
        Node f5 = d::upsample2x(tape, d::upsample2x(
                                          tape, d::conv2d(tape, b5, p_("bb.proj5.w"),
                                                          p_("bb.proj5.b"), 1, 0)));
        return d::add(tape, d::add(tape, f2, f3), d::add(tape, f4, f5));
    }

    // Two 3x3 convs plus a 1x1 projected skip; the first conv carries the stride.
    Node residual(diff::Tape<T>& tape, Node x, const std::string& base, int stride) {
        namespace d = wtp::diff;
        Node h = d::relu(tape, d::conv2d(tape, x, p_(base + ".c1.w"), p_(base + ".c1.b"), stride, 1));
        h = d::conv2d(tape, h, p_(base + ".c2.w"), p_(base + ".c2.b"), 1, 1);
        Node skip = d::conv2d(tape, x, p_(base + ".skip.w"), p_(base + ".skip.b"), stride, 0);
        return d::relu(tape, d::add(tape, h, skip));
    }

    Node ffn(diff::Tape<T>& tape, Node x, const std::string& base) {
        namespace d = wtp::diff;
        Node h = d::relu(tape, d::linear(tape, x, p_(base + ".ffn1.w"), p_(base + ".ffn1.b")));
        return d::linear(tape, h, p_(base + ".ffn2.w"), p_(base + ".ffn2.b"));
    }

    Node encoder_layer(diff::Tape<T>& tape, Node x, const std::string& base) {
        namespace d = wtp::diff;
        if (cfg_.pre_norm) {
            Node a = d::layer_norm(tape, x, p_(base + ".ln1.g"), p_(base + ".ln1.b"));
            x = d::add(tape, x, d::multi_head_attention(tape, a, a, attn_(base + ".attn"), cfg_.heads));
            Node f = d::layer_norm(tape, x, p_(base + ".ln2.g"), p_(base + ".ln2.b"));
            return d::add(tape, x, ffn(tape, f, base));
        }
        Node a = d::multi_head_attention(tape, x, x, attn_(base + ".attn"), cfg_.heads);
        x = d::layer_norm(tape, d::add(tape, x, a), p_(base + ".ln1.g"), p_(base + ".ln1.b"));
        return d::layer_norm(tape, d::add(tape, x, ffn(tape, x, base)), p_(base + ".ln2.g"),
                             p_(base + ".ln2.b"));
    }

    Node decoder_layer(diff::Tape<T>& tape, Node q, Node enc, const std::string& base) {
        namespace d = wtp::diff;
        if (cfg_.pre_norm) {
            Node a = d::layer_norm(tape, q, p_(base + ".ln1.g"), p_(base + ".ln1.b"));
            q = d::add(tape, q, d::multi_head_attention(tape, a, a, attn_(base + ".self"), cfg_.heads));
            Node c = d::layer_norm(tape, q, p_(base + ".ln2.g"), p_(base + ".ln2.b"));
            q = d::add(tape, q,
                       d::multi_head_attention(tape, c, enc, attn_(base + ".cross"), cfg_.heads));
            Node f = d::layer_norm(tape, q, p_(base + ".ln3.g"), p_(base + ".ln3.b"));
            return d::add(tape, q, ffn(tape, f, base));
        }
        Node a = d::multi_head_attention(tape, q, q, attn_(base + ".self"), cfg_.heads);
        q = d::layer_norm(tape, d::add(tape, q, a), p_(base + ".ln1.g"), p_(base + ".ln1.b"));
        Node c = d::multi_head_attention(tape, q, enc, attn_(base + ".cross"), cfg_.heads);
        q = d::layer_norm(tape, d::add(tape, q, c), p_(base + ".ln2.g"), p_(base + ".ln2.b"));
        return d::layer_norm(tape, d::add(tape, q, ffn(tape, q, base)), p_(base + ".ln3.g"),
                             p_(base + ".ln3.b"));
    }
};

}  // namespace wtp
