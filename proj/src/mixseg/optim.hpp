#pragma once

#include <limits>

#include "mixseg/tensor.hpp"

namespace mixseg {

// Adam with bias correction over a fixed set of named parameter tensors.
// step() consumes the gradients stored on the tensors and clears them.
template <class T>
class AdamOptimizer {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void bind(std::vector<std::pair<std::string, TensorPtr<T>>> params) {
        params_ = std::move(params);
        m_.assign(params_.size(), {});
        v_.assign(params_.size(), {});
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].second->data.size(), T(0));
            v_[i].assign(params_[i].second->data.size(), T(0));
        }
        step_count_ = 0;
    }

    std::int64_t step_count() const { return step_count_; }
    std::size_t parameter_tensors() const { return params_.size(); }

    void step() {
        for (const auto& [name, p] : params_) {
            if (!p->has_grad()) {
                throw NumericError("adam_step: parameter " + name + " has no gradient");
            }
            for (T g : p->grad) {
                if (!std::isfinite(static_cast<double>(g))) {
                    throw NumericError("adam_step: non-finite gradient in " + name);
                }
            }
        }
        step_count_ += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i].second;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.data.size(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                m[j] = static_cast<T>(beta1 * m[j] + (1.0 - beta1) * g);
                v[j] = static_cast<T>(beta2 * v[j] + (1.0 - beta2) * g * g);
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                p.data[j] = static_cast<T>(p.data[j] - lr * mhat / (std::sqrt(vhat) + eps));
            }
            p.zero_grad();
        }
    }

    // Moment access for checkpointing (index-aligned with the bound params).
    const std::vector<std::pair<std::string, TensorPtr<T>>>& params() const { return params_; }
    std::vector<T>& first_moment(std::size_t i) { return m_[i]; }
    std::vector<T>& second_moment(std::size_t i) { return v_[i]; }
    void set_step_count(std::int64_t n) { step_count_ = n; }

private:
    std::vector<std::pair<std::string, TensorPtr<T>>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::int64_t step_count_ = 0;
};

// Reduce-on-plateau over the epoch training loss: no improvement beyond
// 1e-6 for `patience` consecutive epochs divides the rate by 10.
struct PlateauSchedule {
    double lr = 1e-3;
    double best_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improvement = 0;
    int patience = 10;
    double factor = 0.1;
    double improvement_eps = 1e-6;

    // Returns true when this update dropped the rate.
    bool update(double epoch_train_loss) {
        if (!std::isfinite(epoch_train_loss)) {
            throw NumericError("plateau_update: non-finite epoch loss");
        }
        if (epoch_train_loss < best_loss - improvement_eps) {
            best_loss = epoch_train_loss;
            epochs_since_improvement = 0;
            return false;
        }
        epochs_since_improvement += 1;
        if (epochs_since_improvement >= patience) {
            lr *= factor;
            epochs_since_improvement = 0;
            return true;
        }
        return false;
    }
};

}  // namespace mixseg
