#pragma once

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "mixseg/common.hpp"

namespace mixseg {

// Dense rank-N array. Image layout is channel-last (h,w,c); batched tensors
// prepend the batch axis as (b,h,w,c). grad is either empty or data-sized.
template <class T>
class Tensor {
public:
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;

    Tensor() = default;

    Tensor(Shape s, std::vector<T> values, bool req_grad = false)
        : shape(std::move(s)), data(std::move(values)), requires_grad(req_grad) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("tensor shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
        }
    }

    static Tensor zeros(Shape s, bool req_grad = false) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)), req_grad);
    }

    static Tensor full(Shape s, T value, bool req_grad = false) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), value), req_grad);
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t dim(std::int64_t i) const { return shape[static_cast<std::size_t>(i)]; }
    std::int64_t channels() const { return shape.empty() ? 1 : shape.back(); }

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), T(0));
        }
    }

    void zero_grad() {
        if (!grad.empty()) {
            std::fill(grad.begin(), grad.end(), T(0));
        }
    }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

template <class T>
TensorPtr<T> make_zeros(Shape shape, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(Tensor<T>::zeros(std::move(shape), requires_grad));
}

template <class T>
TensorPtr<T> make_full(Shape shape, T value, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(Tensor<T>::full(std::move(shape), value, requires_grad));
}

template <class T>
void check_finite(const Tensor<T>& t, const std::string& name) {
    if (!t.all_finite()) {
        throw NumericError("non-finite values detected in " + name);
    }
}

// Reverse-mode autodiff record list. Records are appended in execution order,
// so the list is already topologically sorted; backward() walks it once in
// reverse and lets each record accumulate (+=) into its inputs' grads.
template <class T>
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    bool wants_grad(const std::initializer_list<TensorPtr<T>>& inputs) const {
        if (!recording_) return false;
        for (const auto& in : inputs) {
            if (in && in->requires_grad) return true;
        }
        return false;
    }

    void record(const char* op, std::vector<TensorPtr<T>> inputs, TensorPtr<T> output,
                std::function<void()> backward_fn) {
        output->requires_grad = true;
        outputs_.insert(output.get());
        records_.push_back(Record{op, std::move(inputs), std::move(output), std::move(backward_fn)});
    }

    std::size_t size() const { return records_.size(); }

    bool contains(const TensorPtr<T>& t) const { return outputs_.count(t.get()) != 0; }

    // Populates grad on every requires_grad tensor reachable from loss.
    void backward(const TensorPtr<T>& loss) {
        if (!loss || loss->numel() != 1) {
            throw NumericError("backward: loss must be a scalar tensor");
        }
        if (!contains(loss)) {
            throw NumericError("backward: loss tensor is not on this tape");
        }
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (it->output->has_grad()) {
                it->backward_fn();
            }
        }
    }

    void clear() {
        records_.clear();
        outputs_.clear();
    }

private:
    struct Record {
        const char* op;
        std::vector<TensorPtr<T>> inputs;
        TensorPtr<T> output;
        std::function<void()> backward_fn;
    };

    std::vector<Record> records_;
    std::unordered_set<const Tensor<T>*> outputs_;
    bool recording_ = true;
};

}  // namespace mixseg
