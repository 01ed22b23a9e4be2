#pragma once

#include <map>
#include <optional>

#include "mixseg/blocks.hpp"

namespace mixseg {

enum class Variant { unet, r2unet, attunet };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::unet: return "unet";
        case Variant::r2unet: return "r2unet";
        case Variant::attunet: return "attunet";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "unet") return Variant::unet;
    if (s == "r2unet") return Variant::r2unet;
    if (s == "attunet") return Variant::attunet;
    throw ConfigError("unknown variant '" + s + "' (expected unet|r2unet|attunet)");
}

struct ArchitectureSpec {
    Variant variant = Variant::unet;
    bool mix = false;
    int depth = 5;
    int base_width = 64;
    int in_channels = 1;
    int out_channels = 1;
    std::vector<int> kernel_sizes{1, 3, 5, 7};  // used when mix
    int steps = 2;                              // used when recurrent

    // Paper-style display name: U-Net, MixU-Net, R2U-Net, ...
    std::string display_name() const {
        std::string base;
        switch (variant) {
            case Variant::unet: base = "U-Net"; break;
            case Variant::r2unet: base = "R2U-Net"; break;
            case Variant::attunet: base = "AttU-Net"; break;
        }
        return mix ? "Mix" + base : base;
    }

    std::vector<int> stage_kernel_sizes() const {
        return mix ? kernel_sizes : std::vector<int>{3};
    }

    void validate() const {
        if (depth < 2) {
            throw ConfigError("architecture: depth must be >= 2, got " + std::to_string(depth));
        }
        if (base_width < 1) {
            throw ConfigError("architecture: base_width must be positive");
        }
        if (in_channels < 1 || out_channels < 1) {
            throw ConfigError("architecture: channel counts must be positive");
        }
        if (mix) {
            if (kernel_sizes.empty()) {
                throw ConfigError("architecture: kernel_sizes must be non-empty when mix=true");
            }
            if (base_width < static_cast<int>(kernel_sizes.size())) {
                throw ConfigError("architecture: base_width must be >= kernel count when mix=true");
            }
        }
        if (steps < 1) {
            throw ConfigError("architecture: t must be >= 1, got " + std::to_string(steps));
        }
        // Kernel-size constraints are enforced by BlockSpec validation.
    }
};

// Encoder/decoder network per the U-Net family layout: `depth` encoder levels
// (the last is the bottleneck), channel width doubling per level, skip
// concatenation into a mirrored decoder, and a 1x1 conv + sigmoid head.
// Decoder upsampling is nearest-neighbour followed by a 3x3 conv halving the
// channel count. Attention variants gate each skip on the upsampled decoder
// feature.
template <class T>
class Network {
public:
    Network(ArchitectureSpec spec, std::uint64_t seed) : spec_(spec) {
        spec_.validate();
        Rng rng(seed);
        const BlockKind kind = block_kind();
        const auto sizes = spec_.stage_kernel_sizes();
        int in_c = spec_.in_channels;
        for (int level = 0; level < spec_.depth; ++level) {
            const int width = level_width(level);
            encoder_.push_back(
                Block<T>::init(rng, BlockSpec::make(kind, in_c, width, sizes, spec_.steps)));
            in_c = width;
        }
        for (int level = spec_.depth - 2; level >= 0; --level) {
            const int width = level_width(level);
            upconvs_.push_back(ConvParam<T>::init(rng, 3, level_width(level + 1), width));
            if (spec_.variant == Variant::attunet) {
                gates_.push_back(AttentionGateParams<T>::init(rng, width, width));
            }
            decoder_.push_back(
                Block<T>::init(rng, BlockSpec::make(kind, 2 * width, width, sizes, spec_.steps)));
        }
        head_ = ConvParam<T>::init(rng, 1, spec_.base_width, spec_.out_channels);
    }

    const ArchitectureSpec& spec() const { return spec_; }

    int level_width(int level) const { return spec_.base_width << level; }

    std::size_t attention_gate_count() const { return gates_.size(); }

    const std::vector<Block<T>>& encoder_blocks() const { return encoder_; }
    const std::vector<Block<T>>& decoder_blocks() const { return decoder_; }

    // batch: (b,h,w,c) or (h,w,c); output keeps rank with out_channels in (0,1).
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& batch, bool training) {
        const Bhwc d = as_bhwc(batch->shape);
        if (d.c != spec_.in_channels) {
            throw ShapeError("network expects " + std::to_string(spec_.in_channels) +
                             " input channels, got " + shape_str(batch->shape));
        }
        const std::int64_t factor = std::int64_t(1) << (spec_.depth - 1);
        if (d.h % factor != 0 || d.w % factor != 0) {
            const std::int64_t ph = (d.h + factor - 1) / factor * factor;
            const std::int64_t pw = (d.w + factor - 1) / factor * factor;
            throw ShapeError("network input " + shape_str(batch->shape) +
                             " spatial dims must be divisible by " + std::to_string(factor) +
                             "; pad to at least " + std::to_string(ph) + "x" + std::to_string(pw));
        }

        std::vector<TensorPtr<T>> skips;
        TensorPtr<T> cur = batch;
        for (int level = 0; level < spec_.depth; ++level) {
            if (level > 0) cur = max_pool2(tape, cur);
            cur = encoder_[static_cast<std::size_t>(level)].forward(tape, cur, training);
            if (level + 1 < spec_.depth) skips.push_back(cur);
        }
        for (std::size_t i = 0; i < decoder_.size(); ++i) {
            auto up = conv2d_same(tape, upsample2_nearest(tape, cur), upconvs_[i].w, upconvs_[i].bias);
            auto skip = skips[skips.size() - 1 - i];
            if (spec_.variant == Variant::attunet) {
                skip = gates_[i].forward(tape, up, skip);
            }
            cur = decoder_[i].forward(tape, concat_channels(tape, {skip, up}), training);
        }
        auto probs = sigmoid(tape, conv2d_same(tape, cur, head_.w, head_.bias));
        // Keep probabilities strictly inside (0,1): saturated logits would
        // otherwise round to exactly 0/1 at 32-bit. Same band the BCE uses.
        return clamp(tape, probs, static_cast<T>(1e-7), T(1) - static_cast<T>(1e-7));
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        const_cast<Network*>(this)->visit_params([&](const std::string&, TensorPtr<T>& p) {
            n += p->numel();
        });
        return n;
    }

    template <class F>
    void visit_params(F&& fn) {
        for (std::size_t i = 0; i < encoder_.size(); ++i) {
            encoder_[i].visit("enc" + std::to_string(i), fn);
        }
        for (std::size_t i = 0; i < decoder_.size(); ++i) {
            upconvs_[i].visit("up" + std::to_string(i), fn);
            if (spec_.variant == Variant::attunet) {
                gates_[i].visit("gate" + std::to_string(i), fn);
            }
            decoder_[i].visit("dec" + std::to_string(i), fn);
        }
        head_.visit("head", fn);
    }

    template <class F>
    void visit_buffers(F&& fn) {
        for (std::size_t i = 0; i < encoder_.size(); ++i) {
            encoder_[i].visit_buffers("enc" + std::to_string(i), fn);
        }
        for (std::size_t i = 0; i < decoder_.size(); ++i) {
            decoder_[i].visit_buffers("dec" + std::to_string(i), fn);
        }
    }

    std::vector<std::pair<std::string, TensorPtr<T>>> named_params() {
        std::vector<std::pair<std::string, TensorPtr<T>>> out;
        visit_params([&](const std::string& name, TensorPtr<T>& p) { out.emplace_back(name, p); });
        return out;
    }

private:
    BlockKind block_kind() const {
        if (spec_.variant == Variant::r2unet) {
            return spec_.mix ? BlockKind::mix_recurrent : BlockKind::recurrent;
        }
        return spec_.mix ? BlockKind::mix_conv : BlockKind::conv;
    }

    ArchitectureSpec spec_;
    std::vector<Block<T>> encoder_;
    std::vector<ConvParam<T>> upconvs_;
    std::vector<Block<T>> decoder_;
    std::vector<AttentionGateParams<T>> gates_;
    ConvParam<T> head_;
};

}  // namespace mixseg
