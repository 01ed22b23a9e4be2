#pragma once

#include <functional>
#include <string>

#include "mixseg/tensor.hpp"

namespace mixseg {

// Central-difference gradient of a deterministic scalar function of x.
template <class T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                                 T h = static_cast<T>(1e-5)) {
    Tensor<T> g = Tensor<T>::zeros(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T saved = x.data[i];
        x.data[i] = saved + h;
        const T fp = f(x);
        x.data[i] = saved - h;
        const T fm = f(x);
        x.data[i] = saved;
        g.data[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

// Scale-aware elementwise relative error, floored at 1 so near-zero gradients
// compare absolutely.
template <class T>
double max_relative_error(const std::vector<T>& analytic, const std::vector<T>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = static_cast<double>(analytic[i]);
        const double n = static_cast<double>(numeric[i]);
        const double denom = std::max({1.0, std::abs(a), std::abs(n)});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

struct GradCheckResult {
    std::string item;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Compares tape gradients against central differences for every tensor in
// `wrt`, perturbing the shared tensors in place. `forward` must rebuild the
// whole graph from the current tensor values and return a scalar.
template <class T>
struct GradProbe {
    std::function<TensorPtr<T>(Tape<T>&)> forward;
    std::vector<TensorPtr<T>> wrt;

    double max_error(T h = static_cast<T>(1e-5)) {
        for (auto& t : wrt) {
            t->requires_grad = true;
            t->grad.clear();
        }
        Tape<T> tape;
        auto loss = forward(tape);
        tape.backward(loss);

        double worst = 0.0;
        for (auto& t : wrt) {
            t->ensure_grad();
            for (std::size_t i = 0; i < t->data.size(); ++i) {
                const T saved = t->data[i];
                t->data[i] = saved + h;
                Tape<T> plus(false);
                const T fp = forward(plus)->data[0];
                t->data[i] = saved - h;
                Tape<T> minus(false);
                const T fm = forward(minus)->data[0];
                t->data[i] = saved;
                const double fd = static_cast<double>(fp - fm) / (2.0 * static_cast<double>(h));
                const double an = static_cast<double>(t->grad[i]);
                const double denom = std::max({1.0, std::abs(an), std::abs(fd)});
                worst = std::max(worst, std::abs(an - fd) / denom);
            }
        }
        return worst;
    }
};

// Full verification suite at 64-bit: every differentiable op, the five
// blocks, and a backward smoke pass through all six architectures.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 7, int rounds = 1,
                                                 double tolerance = 1e-4);

}  // namespace mixseg
