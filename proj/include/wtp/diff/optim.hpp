#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wtp/diff/tape.hpp"

namespace wtp::diff {

// Trainable value plus its Adam moment buffers.
template <class T>
struct Parameter {
    std::string name;
    NodePtr<T> node;
    std::vector<T> m, v;  // first/second moments, same numel as the value

    Parameter() = default;
    Parameter(std::string n, NodePtr<T> nd)
        : name(std::move(n)), node(std::move(nd)), m(node->val.numel(), T(0)),
          v(node->val.numel(), T(0)) {
        node->requires_grad = true;
    }
};

// Standard Adam with bias correction. Defaults follow the usual
// (0.9, 0.999, 1e-8) with the training recipe's initial rate.
template <class T>
class AdamOptimizer {
 public:
    T lr = T(0.003);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    long step_count() const { return step_; }
    void set_step_count(long s) { step_ = s; }

    void step(std::vector<Parameter<T>>& params) {
        ++step_;
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_));
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_));
        for (auto& p : params) {
            if (!p.node->has_grad())
                throw std::runtime_error("adam: parameter '" + p.name + "' has no gradient");
            const auto& g = p.node->grad;
            auto& val = p.node->val.data;
            for (size_t i = 0; i < val.size(); ++i) {
                p.m[i] = beta1 * p.m[i] + (T(1) - beta1) * g[i];
                p.v[i] = beta2 * p.v[i] + (T(1) - beta2) * g[i] * g[i];
                const T mhat = p.m[i] / bc1;
                const T vhat = p.v[i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    static void zero_grad(std::vector<Parameter<T>>& params) {
        for (auto& p : params) p.node->zero_grad();
    }

    // Global-norm gradient clipping; returns the pre-clip norm.
    static T clip_grad_norm(std::vector<Parameter<T>>& params, T max_norm) {
        T sq = T(0);
        for (const auto& p : params) {
            if (!p.node->has_grad()) continue;
            for (const T g : p.node->grad) sq += g * g;
        }
        const T norm = std::sqrt(sq);
        if (norm > max_norm && norm > T(0)) {
            const T s = max_norm / norm;
            for (auto& p : params)
                if (p.node->has_grad())
                    for (T& g : p.node->grad) g *= s;
        }
        return norm;
    }

 private:
    long step_ = 0;
};

}  // namespace wtp::diff
