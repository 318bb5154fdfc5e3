#pragma once

// Central finite-difference gradient checking for tape ops. The oracle here
// is plain numeric differentiation of the forward pass; it never touches the
// analytic backward path it is checking.

#include <cmath>
#include <functional>
#include <vector>

#include "wtp/diffcore.hpp"

namespace gradcheck {

template <class T>
using Builder = std::function<wtp::diff::NodePtr<T>(wtp::diff::Tape<T>&)>;

// Max over inputs of ||g_analytic - g_fd||_inf / (||g_fd||_inf + 1e-8).
template <class T>
T relative_error(std::vector<wtp::diff::NodePtr<T>> inputs, const Builder<T>& build, T h) {
    using namespace wtp::diff;

    for (auto& in : inputs) {
        in->requires_grad = true;
        in->zero_grad();
    }
    {
        Tape<T> tape;
        auto loss = build(tape);
        tape.backward(loss);
    }
    std::vector<std::vector<T>> analytic;
    for (auto& in : inputs) analytic.push_back(in->grad);

    auto eval = [&]() {
        Tape<T> tape;
        return build(tape)->val.data[0];
    };

    T worst = T(0);
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto& data = inputs[k]->val.data;
        std::vector<T> fd(data.size());
        for (size_t i = 0; i < data.size(); ++i) {
            const T orig = data[i];
            data[i] = orig + h;
            const T fp = eval();
            data[i] = orig - h;
            const T fm = eval();
            data[i] = orig;
            fd[i] = (fp - fm) / (T(2) * h);
        }
        T max_fd = T(0), max_diff = T(0);
        for (size_t i = 0; i < fd.size(); ++i) {
            max_fd = std::max(max_fd, std::fabs(fd[i]));
            max_diff = std::max(max_diff, std::fabs(fd[i] - analytic[k][i]));
        }
        worst = std::max(worst, max_diff / (max_fd + T(1e-8)));
    }
    return worst;
}

// Random tensor leaf with entries kept away from zero (avoids relu kinks
// and keeps finite differences well conditioned).
template <class T, class Rng>
wtp::diff::NodePtr<T> random_leaf(std::vector<int> shape, Rng& rng, T lo = T(-1), T hi = T(1),
                                  T dead_zone = T(0)) {
    wtp::diff::Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> u(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) {
        double x = u(rng);
        if (dead_zone > T(0)) {
            while (std::fabs(x) < static_cast<double>(dead_zone)) x = u(rng);
        }
        v = static_cast<T>(x);
    }
    return wtp::diff::make_leaf(std::move(t), true);
}

}  // namespace gradcheck
