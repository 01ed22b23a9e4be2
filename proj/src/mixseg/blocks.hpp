#pragma once

#include "mixseg/ops.hpp"

namespace mixseg {

enum class BlockKind { conv, recurrent, mix_conv, mix_recurrent };

inline const char* block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::conv: return "conv";
        case BlockKind::recurrent: return "recurrent";
        case BlockKind::mix_conv: return "mix_conv";
        case BlockKind::mix_recurrent: return "mix_recurrent";
    }
    return "?";
}

// Equal split of M filters over the kernel set; the remainder goes one each
// to the smallest kernels so the total stays exactly M.
inline std::vector<int> split_filters(int M, const std::vector<int>& kernel_sizes) {
    const int n = static_cast<int>(kernel_sizes.size());
    if (n < 1) {
        throw ConfigError("split_filters: empty kernel set");
    }
    if (M < n) {
        throw ConfigError("split_filters: cannot split " + std::to_string(M) + " filters over " +
                          std::to_string(n) + " kernels");
    }
    std::vector<int> m(static_cast<std::size_t>(n), M / n);
    const int remainder = M % n;
    for (int i = 0; i < remainder; ++i) {
        m[static_cast<std::size_t>(i)] += 1;
    }
    return m;
}

struct BlockSpec {
    BlockKind kind = BlockKind::conv;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<int> kernel_sizes{3};
    int steps = 2;                 // recurrence steps t (recurrent kinds)
    std::vector<int> filters;      // per-kernel m_i, sums to out_channels

    static BlockSpec make(BlockKind kind, int in_channels, int out_channels,
                          std::vector<int> kernel_sizes = {3}, int steps = 2) {
        BlockSpec s;
        s.kind = kind;
        s.in_channels = in_channels;
        s.out_channels = out_channels;
        s.kernel_sizes = std::move(kernel_sizes);
        s.steps = steps;
        s.filters = split_filters(out_channels, s.kernel_sizes);
        s.validate();
        return s;
    }

    bool recurrent() const { return kind == BlockKind::recurrent || kind == BlockKind::mix_recurrent; }

    void validate() const {
        if (in_channels < 1 || out_channels < 1) {
            throw ConfigError("block spec: channel counts must be positive");
        }
        for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
            if (kernel_sizes[i] % 2 == 0 || kernel_sizes[i] < 1) {
                throw ConfigError("block spec: kernel sizes must be odd, got " +
                                  std::to_string(kernel_sizes[i]));
            }
            if (i > 0 && kernel_sizes[i] <= kernel_sizes[i - 1]) {
                throw ConfigError("block spec: kernel sizes must be strictly increasing");
            }
        }
        if (recurrent() && steps < 1) {
            throw ConfigError("block spec: recurrence steps must be >= 1, got " + std::to_string(steps));
        }
        int sum = 0;
        for (int m : filters) sum += m;
        if (sum != out_channels || filters.size() != kernel_sizes.size()) {
            throw ConfigError("block spec: per-kernel filters must sum to out_channels");
        }
    }
};

template <class T>
struct ConvParam {
    TensorPtr<T> w;
    TensorPtr<T> bias;

    static ConvParam init(Rng& rng, int k, int c_in, int m) {
        const double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * c_in));
        auto w = make_zeros<T>({k, k, c_in, m}, true);
        for (auto& v : w->data) v = static_cast<T>(rng.normal() * stddev);
        auto b = make_zeros<T>({m}, true);
        return ConvParam{w, b};
    }

    std::int64_t count() const { return w->numel() + bias->numel(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", bias);
    }
};

template <class T>
struct BatchNormParam {
    TensorPtr<T> gamma;
    TensorPtr<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;

    static BatchNormParam init(int c) {
        BatchNormParam p;
        p.gamma = make_full<T>({c}, T(1), true);
        p.beta = make_zeros<T>({c}, true);
        p.running_mean.assign(static_cast<std::size_t>(c), T(0));
        p.running_var.assign(static_cast<std::size_t>(c), T(1));
        return p;
    }

    std::int64_t count() const { return gamma->numel() + beta->numel(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".gamma", gamma);
        fn(prefix + ".beta", beta);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        fn(prefix + ".running_mean", running_mean);
        fn(prefix + ".running_var", running_var);
    }
};

// One convolution stage: n parallel convolutions of distinct kernel sizes,
// channel concatenation in ascending kernel-size order, then BN and ReLU.
// A single 3x3 branch makes this the ordinary conv stage.
template <class T>
struct MixStage {
    std::vector<int> kernel_sizes;
    std::vector<ConvParam<T>> branches;
    BatchNormParam<T> bn;

    static MixStage init(Rng& rng, int c_in, const std::vector<int>& sizes,
                         const std::vector<int>& filters) {
        MixStage s;
        s.kernel_sizes = sizes;
        int total = 0;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            s.branches.push_back(ConvParam<T>::init(rng, sizes[i], c_in, filters[i]));
            total += filters[i];
        }
        s.bn = BatchNormParam<T>::init(total);
        return s;
    }

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) {
        TensorPtr<T> merged;
        if (branches.size() == 1) {
            merged = conv2d_same(tape, x, branches[0].w, branches[0].bias);
        } else {
            std::vector<TensorPtr<T>> outs;
            outs.reserve(branches.size());
            for (auto& br : branches) {
                outs.push_back(conv2d_same(tape, x, br.w, br.bias));
            }
            merged = concat_channels(tape, outs);
        }
        auto normed = batch_norm(tape, merged, bn.gamma, bn.beta, bn.running_mean, bn.running_var,
                                 training);
        return relu(tape, normed);
    }

    std::int64_t count() const {
        std::int64_t n = bn.count();
        for (const auto& br : branches) n += br.count();
        return n;
    }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < branches.size(); ++i) {
            branches[i].visit(prefix + ".k" + std::to_string(kernel_sizes[i]), fn);
        }
        bn.visit(prefix + ".bn", fn);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        bn.visit_buffers(prefix + ".bn", fn);
    }
};

// Recurrent convolution layer: h_0 = stage(x); h_t = stage(x + h_{t-1}).
// The stage (weights and BN) is shared across all steps.
template <class T>
struct RecurrentLayer {
    MixStage<T> stage;
    int steps = 2;

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) {
        TensorPtr<T> h = stage.forward(tape, x, training);
        for (int step = 1; step <= steps; ++step) {
            h = stage.forward(tape, add(tape, x, h), training);
        }
        return h;
    }
};

// Two-stage block with two plain (or mix) conv stages.
template <class T>
struct ConvBlockParams {
    MixStage<T> stage1;
    MixStage<T> stage2;

    static ConvBlockParams init(Rng& rng, const BlockSpec& spec) {
        ConvBlockParams b;
        b.stage1 = MixStage<T>::init(rng, spec.in_channels, spec.kernel_sizes, spec.filters);
        b.stage2 = MixStage<T>::init(rng, spec.out_channels, spec.kernel_sizes, spec.filters);
        return b;
    }

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) {
        return stage2.forward(tape, stage1.forward(tape, x, training), training);
    }

    std::int64_t count() const { return stage1.count() + stage2.count(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        stage1.visit(prefix + ".s1", fn);
        stage2.visit(prefix + ".s2", fn);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        stage1.visit_buffers(prefix + ".s1", fn);
        stage2.visit_buffers(prefix + ".s2", fn);
    }
};

// Two stacked recurrent layers over a 1x1-projected input, with the
// projection added back as a residual shortcut.
template <class T>
struct RecurrentBlockParams {
    ConvParam<T> proj;  // 1x1, in_channels -> M
    RecurrentLayer<T> layer1;
    RecurrentLayer<T> layer2;

    static RecurrentBlockParams init(Rng& rng, const BlockSpec& spec) {
        RecurrentBlockParams b;
        b.proj = ConvParam<T>::init(rng, 1, spec.in_channels, spec.out_channels);
        b.layer1.stage = MixStage<T>::init(rng, spec.out_channels, spec.kernel_sizes, spec.filters);
        b.layer1.steps = spec.steps;
        b.layer2.stage = MixStage<T>::init(rng, spec.out_channels, spec.kernel_sizes, spec.filters);
        b.layer2.steps = spec.steps;
        return b;
    }

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) {
        auto projected = conv2d_same(tape, x, proj.w, proj.bias);
        auto h = layer2.forward(tape, layer1.forward(tape, projected, training), training);
        return add(tape, projected, h);
    }

    std::int64_t count() const { return proj.count() + layer1.stage.count() + layer2.stage.count(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        proj.visit(prefix + ".proj", fn);
        layer1.stage.visit(prefix + ".r1", fn);
        layer2.stage.visit(prefix + ".r2", fn);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        layer1.stage.visit_buffers(prefix + ".r1", fn);
        layer2.stage.visit_buffers(prefix + ".r2", fn);
    }
};

// Additive attention gate over a skip connection:
// alpha = sigmoid(psi(relu(Wg g + Wx x))), output = alpha (*) x.
template <class T>
struct AttentionGateParams {
    ConvParam<T> wg;
    ConvParam<T> wx;
    ConvParam<T> psi;

    static AttentionGateParams init(Rng& rng, int c_g, int c_x) {
        const int c_int = std::max(1, c_x / 2);
        AttentionGateParams g;
        g.wg = ConvParam<T>::init(rng, 1, c_g, c_int);
        g.wx = ConvParam<T>::init(rng, 1, c_x, c_int);
        g.psi = ConvParam<T>::init(rng, 1, c_int, 1);
        return g;
    }

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& gating, const TensorPtr<T>& skip) {
        const Bhwc dg = as_bhwc(gating->shape);
        const Bhwc dx = as_bhwc(skip->shape);
        if (dg.b != dx.b || dg.h != dx.h || dg.w != dx.w) {
            throw ShapeError("attention_gate: gating " + shape_str(gating->shape) +
                             " is not spatially aligned with skip " + shape_str(skip->shape));
        }
        auto mixed = relu(tape, add(tape, conv2d_same(tape, gating, wg.w, wg.bias),
                                    conv2d_same(tape, skip, wx.w, wx.bias)));
        auto alpha = sigmoid(tape, conv2d_same(tape, mixed, psi.w, psi.bias));
        return scale_channels(tape, skip, alpha);
    }

    std::int64_t count() const { return wg.count() + wx.count() + psi.count(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        wg.visit(prefix + ".wg", fn);
        wx.visit(prefix + ".wx", fn);
        psi.visit(prefix + ".psi", fn);
    }
};

// A network-level block slot: either the two-stage conv form or the
// recurrent form, plain or mix depending on the spec's kernel set.
template <class T>
struct Block {
    BlockSpec spec;
    ConvBlockParams<T> conv;
    RecurrentBlockParams<T> rec;

    static Block init(Rng& rng, const BlockSpec& spec) {
        spec.validate();
        Block b;
        b.spec = spec;
        if (spec.recurrent()) {
            b.rec = RecurrentBlockParams<T>::init(rng, spec);
        } else {
            b.conv = ConvBlockParams<T>::init(rng, spec);
        }
        return b;
    }

    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) {
        if (x->channels() != spec.in_channels) {
            throw ShapeError("block expects " + std::to_string(spec.in_channels) + " channels, got " +
                             shape_str(x->shape));
        }
        return spec.recurrent() ? rec.forward(tape, x, training) : conv.forward(tape, x, training);
    }

    std::int64_t count() const { return spec.recurrent() ? rec.count() : conv.count(); }

    template <class F>
    void visit(const std::string& prefix, F&& fn) {
        if (spec.recurrent()) {
            rec.visit(prefix, fn);
        } else {
            conv.visit(prefix, fn);
        }
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        if (spec.recurrent()) {
            rec.visit_buffers(prefix, fn);
        } else {
            conv.visit_buffers(prefix, fn);
        }
    }
};

}  // namespace mixseg
