#pragma once

#include <string>

#include "mixseg/tensor.hpp"

namespace mixseg {

// Image/mask pair with provenance. Masks are strictly binary past ingestion;
// origin records the patch top-left when the sample was cut from a source.
struct Sample {
    Tensor<float> image;  // (h,w,c), c in {1,3}
    Tensor<float> mask;   // (h,w,1), values {0,1}
    std::string source_id;
    std::int64_t origin_row = -1;
    std::int64_t origin_col = -1;

    std::int64_t height() const { return image.dim(0); }
    std::int64_t width() const { return image.dim(1); }
    std::int64_t channels() const { return image.dim(2); }
};

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;

    void save(const std::string& path) const;  // plain text, "split,source_id" lines
    static SplitManifest load(const std::string& path);
};

// Reads image/mask pairs from a directory: `<stem>.<ext>` paired with
// `<stem>_mask.<ext>` (PGM/PPM). Pixels scale to [0,1]; masks binarize at
// the 8-bit midpoint 128. Pairing problems name the offending file.
std::vector<Sample> ingest(const std::string& dir);

// Bilinear resize for the image (half-pixel convention), nearest neighbour
// for the mask, re-binarized.
Sample resize_bilinear(const Sample& s, std::int64_t out_h, std::int64_t out_w);

// Center-crop dimensions above `side` (extra row/column removed at the
// bottom/right) and zero-pad dimensions below it (extra pixel added at the
// bottom/right).
Sample crop_pad_square(const Sample& s, std::int64_t side);

// Patch provenance: index into the source sample list plus top-left origin.
struct PatchRef {
    std::int32_t sample_index = 0;
    std::int32_t row = 0;
    std::int32_t col = 0;
};

// Uniform random patch origins, fully inside their image: the source image is
// drawn uniformly (with replacement), then the origin uniformly.
std::vector<PatchRef> extract_patch_refs(const std::vector<Sample>& samples, std::int64_t size,
                                         std::int64_t count, Rng& rng);

Sample materialize_patch(const std::vector<Sample>& samples, const PatchRef& ref, std::int64_t size);

// Deterministic geometric/photometric transforms; augment() composes them.
Sample rotate90(const Sample& s, int quarter_turns);
Sample flip_horizontal(const Sample& s);
Sample flip_vertical(const Sample& s);
Sample shift(const Sample& s, std::int64_t dy, std::int64_t dx);  // zero fill
Sample crop_resize(const Sample& s, std::int64_t top, std::int64_t left, std::int64_t crop_h,
                   std::int64_t crop_w);
Sample adjust_brightness(const Sample& s, double delta);
Sample adjust_contrast(const Sample& s, double factor);  // around the image mean
Sample adjust_hue(const Sample& s, double delta);        // 3-channel only

struct AugmentOptions {
    bool rotate = true;
    bool hflip = true;
    bool vflip = true;
    double crop_margin = 0.10;
    double shift_frac = 0.10;
    double contrast_delta = 0.2;
    double brightness_delta = 0.1;
    double hue_delta = 0.05;

    static AugmentOptions none() {
        return AugmentOptions{false, false, false, 0.0, 0.0, 0.0, 0.0, 0.0};
    }
};

// Randomized augmentation: rotation by multiples of 90, flips, random
// crop-and-resize, shift, contrast, brightness, hue (3-channel only).
// Geometric ops hit image and mask identically; photometric ops touch the
// image only. Output image re-clamped to [0,1], mask re-binarized.
Sample augment(const Sample& s, Rng& rng, const AugmentOptions& opts = {});

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};

// Per-channel mean/std over the given samples (population statistics).
ChannelStats compute_channel_stats(const std::vector<Sample>& samples);

// (x - mean) / std per channel; the mask is untouched.
Sample normalize(const Sample& s, const ChannelStats& stats);

// Deterministic shuffled partition by source id. Counts are floor(n*ratio)
// for train and val; the remainder goes to test (matching the published
// 1815/259/520 split of 2594).
SplitManifest split_dataset(std::vector<std::string> ids, double train_ratio, double val_ratio,
                            double test_ratio, std::uint64_t seed);

// Per-pixel mean of covering patch predictions; uncovered pixels are 0.
Tensor<float> reconstruct_from_patches(const std::vector<Tensor<float>>& predictions,
                                       const std::vector<std::pair<std::int64_t, std::int64_t>>& origins,
                                       std::int64_t canvas_h, std::int64_t canvas_w);

}  // namespace mixseg
