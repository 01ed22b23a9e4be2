#include "mixseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "mixseg/image.hpp"

namespace fs = std::filesystem;

namespace mixseg {

namespace {

constexpr float kMaskByteThreshold = 128.0f / 255.0f;

Tensor<float> binarize_mask_bytes(const Tensor<float>& raw) {
    Tensor<float> m = Tensor<float>::zeros(raw.shape);
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
        m.data[i] = raw.data[i] >= kMaskByteThreshold ? 1.0f : 0.0f;
    }
    return m;
}

Tensor<float> rebinarize(const Tensor<float>& m) {
    Tensor<float> out = Tensor<float>::zeros(m.shape);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        out.data[i] = m.data[i] >= 0.5f ? 1.0f : 0.0f;
    }
    return out;
}

bool is_pnm(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

constexpr const char* kMaskSuffix = "_mask";

}  // namespace

void SplitManifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write manifest " + path);
    }
    for (const auto& id : train) out << "train," << id << "\n";
    for (const auto& id : val) out << "val," << id << "\n";
    for (const auto& id : test) out << "test," << id << "\n";
}

SplitManifest SplitManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read manifest " + path);
    }
    SplitManifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError("malformed manifest line: " + line);
        }
        const std::string split = line.substr(0, comma);
        const std::string id = line.substr(comma + 1);
        if (split == "train") {
            m.train.push_back(id);
        } else if (split == "val") {
            m.val.push_back(id);
        } else if (split == "test") {
            m.test.push_back(id);
        } else {
            throw DataError("unknown split '" + split + "' in manifest");
        }
    }
    return m;
}

std::vector<Sample> ingest(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw DataError("data directory does not exist: " + dir);
    }
    std::map<std::string, fs::path> images;
    std::map<std::string, fs::path> masks;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_pnm(entry.path())) continue;
        const std::string stem = entry.path().stem().string();
        if (stem.size() > 5 && stem.ends_with(kMaskSuffix)) {
            masks[stem.substr(0, stem.size() - 5)] = entry.path();
        } else {
            images[stem] = entry.path();
        }
    }
    for (const auto& [stem, path] : masks) {
        if (!images.count(stem)) {
            throw DataError("mask without image: " + path.string());
        }
    }
    std::vector<Sample> out;
    for (const auto& [stem, path] : images) {
        const auto mit = masks.find(stem);
        if (mit == masks.end()) {
            throw DataError("image without mask: " + path.string());
        }
        Sample s;
        s.image = load_pnm(path.string());
        Tensor<float> raw_mask = load_pnm(mit->second.string());
        if (raw_mask.channels() != 1) {
            throw DataError("mask must be grayscale: " + mit->second.string());
        }
        if (raw_mask.dim(0) != s.image.dim(0) || raw_mask.dim(1) != s.image.dim(1)) {
            throw DataError("image/mask size mismatch for " + stem + ": " +
                            shape_str(s.image.shape) + " vs " + shape_str(raw_mask.shape));
        }
        s.mask = binarize_mask_bytes(raw_mask);
        s.source_id = stem;
        out.push_back(std::move(s));
    }
    if (out.empty()) {
        std::cerr << "warning: no image/mask pairs found in " << dir << "\n";
    }
    return out;
}

namespace {

Tensor<float> resize_image_bilinear(const Tensor<float>& img, std::int64_t oh, std::int64_t ow) {
    const std::int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor<float> out = Tensor<float>::zeros({oh, ow, c});
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (std::int64_t y = 0; y < oh; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double dy = fy - static_cast<double>(y0);
        const std::int64_t y0c = std::clamp<std::int64_t>(y0, 0, h - 1);
        const std::int64_t y1c = std::clamp<std::int64_t>(y0 + 1, 0, h - 1);
        for (std::int64_t x = 0; x < ow; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
            const double dx = fx - static_cast<double>(x0);
            const std::int64_t x0c = std::clamp<std::int64_t>(x0, 0, w - 1);
            const std::int64_t x1c = std::clamp<std::int64_t>(x0 + 1, 0, w - 1);
            for (std::int64_t z = 0; z < c; ++z) {
                const double v00 = img.data[static_cast<std::size_t>((y0c * w + x0c) * c + z)];
                const double v01 = img.data[static_cast<std::size_t>((y0c * w + x1c) * c + z)];
                const double v10 = img.data[static_cast<std::size_t>((y1c * w + x0c) * c + z)];
                const double v11 = img.data[static_cast<std::size_t>((y1c * w + x1c) * c + z)];
                const double top = v00 + (v01 - v00) * dx;
                const double bot = v10 + (v11 - v10) * dx;
                out.data[static_cast<std::size_t>((y * ow + x) * c + z)] =
                    static_cast<float>(top + (bot - top) * dy);
            }
        }
    }
    return out;
}

Tensor<float> resize_mask_nearest(const Tensor<float>& mask, std::int64_t oh, std::int64_t ow) {
    const std::int64_t h = mask.dim(0), w = mask.dim(1);
    Tensor<float> out = Tensor<float>::zeros({oh, ow, 1});
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (std::int64_t y = 0; y < oh; ++y) {
        const std::int64_t ys =
            std::clamp<std::int64_t>(static_cast<std::int64_t>((static_cast<double>(y) + 0.5) * sy), 0,
                                     h - 1);
        for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t xs = std::clamp<std::int64_t>(
                static_cast<std::int64_t>((static_cast<double>(x) + 0.5) * sx), 0, w - 1);
            out.data[static_cast<std::size_t>(y * ow + x)] =
                mask.data[static_cast<std::size_t>(ys * w + xs)];
        }
    }
    return out;
}

}  // namespace

Sample resize_bilinear(const Sample& s, std::int64_t out_h, std::int64_t out_w) {
    if (out_h < 1 || out_w < 1) {
        throw ConfigError("resize_bilinear: target dims must be >= 1");
    }
    Sample out;
    out.image = resize_image_bilinear(s.image, out_h, out_w);
    out.mask = rebinarize(resize_mask_nearest(s.mask, out_h, out_w));
    out.source_id = s.source_id;
    return out;
}

namespace {

// Crop/pad one axis to `side`: cropping removes the extra row at the far end,
// padding adds it there.
std::pair<std::int64_t, std::int64_t> axis_window(std::int64_t extent, std::int64_t side) {
    if (extent >= side) {
        const std::int64_t cut = extent - side;
        return {cut / 2, 0};  // source offset, destination offset
    }
    const std::int64_t pad = side - extent;
    return {0, pad / 2};
}

}  // namespace

Sample crop_pad_square(const Sample& s, std::int64_t side) {
    if (side < 1) {
        throw ConfigError("crop_pad_square: side must be >= 1");
    }
    const std::int64_t h = s.height(), w = s.width(), c = s.channels();
    const auto [src_y, dst_y] = axis_window(h, side);
    const auto [src_x, dst_x] = axis_window(w, side);
    const std::int64_t copy_h = std::min(h, side);
    const std::int64_t copy_w = std::min(w, side);

    Sample out;
    out.image = Tensor<float>::zeros({side, side, c});
    out.mask = Tensor<float>::zeros({side, side, 1});
    out.source_id = s.source_id;
    for (std::int64_t y = 0; y < copy_h; ++y) {
        for (std::int64_t x = 0; x < copy_w; ++x) {
            for (std::int64_t z = 0; z < c; ++z) {
                out.image.data[static_cast<std::size_t>(((dst_y + y) * side + dst_x + x) * c + z)] =
                    s.image.data[static_cast<std::size_t>(((src_y + y) * w + src_x + x) * c + z)];
            }
            out.mask.data[static_cast<std::size_t>((dst_y + y) * side + dst_x + x)] =
                s.mask.data[static_cast<std::size_t>((src_y + y) * w + src_x + x)];
        }
    }
    return out;
}

std::vector<PatchRef> extract_patch_refs(const std::vector<Sample>& samples, std::int64_t size,
                                         std::int64_t count, Rng& rng) {
    if (samples.empty()) {
        throw DataError("extract_patch_refs: no source samples");
    }
    if (count < 1) {
        throw ConfigError("extract_patch_refs: count must be >= 1");
    }
    for (const auto& s : samples) {
        if (size > s.height() || size > s.width()) {
            throw DataError("patch size " + std::to_string(size) + " exceeds image " + s.source_id +
                            " of " + shape_str(s.image.shape));
        }
    }
    std::vector<PatchRef> refs;
    refs.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        PatchRef r;
        r.sample_index = static_cast<std::int32_t>(rng.below(samples.size()));
        const auto& s = samples[static_cast<std::size_t>(r.sample_index)];
        r.row = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(s.height() - size + 1)));
        r.col = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(s.width() - size + 1)));
        refs.push_back(r);
    }
    return refs;
}

Sample materialize_patch(const std::vector<Sample>& samples, const PatchRef& ref, std::int64_t size) {
    const auto& src = samples.at(static_cast<std::size_t>(ref.sample_index));
    const std::int64_t w = src.width(), c = src.channels();
    Sample out;
    out.image = Tensor<float>::zeros({size, size, c});
    out.mask = Tensor<float>::zeros({size, size, 1});
    out.source_id = src.source_id;
    out.origin_row = ref.row;
    out.origin_col = ref.col;
    for (std::int64_t y = 0; y < size; ++y) {
        const std::int64_t sy = ref.row + y;
        std::memcpy(out.image.data.data() + y * size * c, src.image.data.data() + (sy * w + ref.col) * c,
                    sizeof(float) * static_cast<std::size_t>(size * c));
        std::memcpy(out.mask.data.data() + y * size, src.mask.data.data() + sy * w + ref.col,
                    sizeof(float) * static_cast<std::size_t>(size));
    }
    return out;
}

namespace {

Tensor<float> rotate90_plane(const Tensor<float>& t, int quarter_turns) {
    const std::int64_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
    const int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return t;
    const std::int64_t oh = (q % 2 == 0) ? h : w;
    const std::int64_t ow = (q % 2 == 0) ? w : h;
    Tensor<float> out = Tensor<float>::zeros({oh, ow, c});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            std::int64_t ny = 0, nx = 0;
            switch (q) {
                case 1: ny = x; nx = h - 1 - y; break;          // 90 clockwise
                case 2: ny = h - 1 - y; nx = w - 1 - x; break;  // 180
                case 3: ny = w - 1 - x; nx = y; break;          // 270 clockwise
            }
            for (std::int64_t z = 0; z < c; ++z) {
                out.data[static_cast<std::size_t>((ny * ow + nx) * c + z)] =
                    t.data[static_cast<std::size_t>((y * w + x) * c + z)];
            }
        }
    }
    return out;
}

Tensor<float> flip_plane(const Tensor<float>& t, bool horizontal) {
    const std::int64_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
    Tensor<float> out = Tensor<float>::zeros(t.shape);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::int64_t sy = horizontal ? y : h - 1 - y;
            const std::int64_t sx = horizontal ? w - 1 - x : x;
            for (std::int64_t z = 0; z < c; ++z) {
                out.data[static_cast<std::size_t>((y * w + x) * c + z)] =
                    t.data[static_cast<std::size_t>((sy * w + sx) * c + z)];
            }
        }
    }
    return out;
}

Tensor<float> shift_plane(const Tensor<float>& t, std::int64_t dy, std::int64_t dx) {
    const std::int64_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
    Tensor<float> out = Tensor<float>::zeros(t.shape);
    for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t x = 0; x < w; ++x) {
            const std::int64_t sx = x - dx;
            if (sx < 0 || sx >= w) continue;
            for (std::int64_t z = 0; z < c; ++z) {
                out.data[static_cast<std::size_t>((y * w + x) * c + z)] =
                    t.data[static_cast<std::size_t>((sy * w + sx) * c + z)];
            }
        }
    }
    return out;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.0f) / 6.0f;
    } else if (mx == g) {
        h = ((b - r) / d + 2.0f) / 6.0f;
    } else {
        h = ((r - g) / d + 4.0f) / 6.0f;
    }
    if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const float hh = h * 6.0f;
    const int sector = static_cast<int>(hh) % 6;
    const float f = hh - std::floor(hh);
    const float p = v * (1.0f - s);
    const float q = v * (1.0f - s * f);
    const float t = v * (1.0f - s * (1.0f - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

void clamp01(Tensor<float>& t) {
    for (auto& v : t.data) v = std::min(1.0f, std::max(0.0f, v));
}

}  // namespace

Sample rotate90(const Sample& s, int quarter_turns) {
    Sample out;
    out.image = rotate90_plane(s.image, quarter_turns);
    out.mask = rotate90_plane(s.mask, quarter_turns);
    out.source_id = s.source_id;
    return out;
}

Sample flip_horizontal(const Sample& s) {
    Sample out{flip_plane(s.image, true), flip_plane(s.mask, true), s.source_id};
    return out;
}

Sample flip_vertical(const Sample& s) {
    Sample out{flip_plane(s.image, false), flip_plane(s.mask, false), s.source_id};
    return out;
}

Sample shift(const Sample& s, std::int64_t dy, std::int64_t dx) {
    Sample out{shift_plane(s.image, dy, dx), shift_plane(s.mask, dy, dx), s.source_id};
    return out;
}

Sample crop_resize(const Sample& s, std::int64_t top, std::int64_t left, std::int64_t crop_h,
                   std::int64_t crop_w) {
    const std::int64_t h = s.height(), w = s.width(), c = s.channels();
    if (top < 0 || left < 0 || crop_h < 1 || crop_w < 1 || top + crop_h > h || left + crop_w > w) {
        throw DataError("crop_resize: window out of bounds");
    }
    Sample cropped;
    cropped.image = Tensor<float>::zeros({crop_h, crop_w, c});
    cropped.mask = Tensor<float>::zeros({crop_h, crop_w, 1});
    cropped.source_id = s.source_id;
    for (std::int64_t y = 0; y < crop_h; ++y) {
        for (std::int64_t x = 0; x < crop_w; ++x) {
            for (std::int64_t z = 0; z < c; ++z) {
                cropped.image.data[static_cast<std::size_t>((y * crop_w + x) * c + z)] =
                    s.image.data[static_cast<std::size_t>(((top + y) * w + left + x) * c + z)];
            }
            cropped.mask.data[static_cast<std::size_t>(y * crop_w + x)] =
                s.mask.data[static_cast<std::size_t>((top + y) * w + left + x)];
        }
    }
    return resize_bilinear(cropped, h, w);
}

Sample adjust_brightness(const Sample& s, double delta) {
    Sample out = s;
    for (auto& v : out.image.data) v = static_cast<float>(v + delta);
    clamp01(out.image);
    return out;
}

Sample adjust_contrast(const Sample& s, double factor) {
    double mean = 0.0;
    for (float v : s.image.data) mean += v;
    mean /= static_cast<double>(s.image.data.size());
    Sample out = s;
    for (auto& v : out.image.data) v = static_cast<float>(mean + (v - mean) * factor);
    clamp01(out.image);
    return out;
}

Sample adjust_hue(const Sample& s, double delta) {
    if (s.channels() != 3) return s;
    Sample out = s;
    for (std::size_t i = 0; i < out.image.data.size(); i += 3) {
        float h, sv, v;
        rgb_to_hsv(out.image.data[i], out.image.data[i + 1], out.image.data[i + 2], h, sv, v);
        h = static_cast<float>(h + delta);
        h -= std::floor(h);
        hsv_to_rgb(h, sv, v, out.image.data[i], out.image.data[i + 1], out.image.data[i + 2]);
    }
    clamp01(out.image);
    return out;
}

Sample augment(const Sample& s, Rng& rng, const AugmentOptions& opts) {
    Sample cur = s;
    if (opts.rotate) {
        const int quarter = static_cast<int>(rng.below(4));
        if (quarter) cur = rotate90(cur, quarter);
    }
    if (opts.hflip && rng.coin()) cur = flip_horizontal(cur);
    if (opts.vflip && rng.coin()) cur = flip_vertical(cur);
    if (opts.crop_margin > 0.0) {
        const double margin = rng.uniform(0.0, opts.crop_margin);
        const auto ch = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                      std::llround(cur.height() * (1.0 - margin))));
        const auto cw = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(cur.width() * (1.0 - margin))));
        if (ch < cur.height() || cw < cur.width()) {
            const std::int64_t top = static_cast<std::int64_t>(
                rng.below(static_cast<std::uint64_t>(cur.height() - ch + 1)));
            const std::int64_t left = static_cast<std::int64_t>(
                rng.below(static_cast<std::uint64_t>(cur.width() - cw + 1)));
            cur = crop_resize(cur, top, left, ch, cw);
        }
    }
    if (opts.shift_frac > 0.0) {
        const auto max_dy = static_cast<std::int64_t>(cur.height() * opts.shift_frac);
        const auto max_dx = static_cast<std::int64_t>(cur.width() * opts.shift_frac);
        const std::int64_t dy =
            max_dy > 0 ? static_cast<std::int64_t>(rng.below(2 * max_dy + 1)) - max_dy : 0;
        const std::int64_t dx =
            max_dx > 0 ? static_cast<std::int64_t>(rng.below(2 * max_dx + 1)) - max_dx : 0;
        if (dy != 0 || dx != 0) cur = shift(cur, dy, dx);
    }
    if (opts.contrast_delta > 0.0) {
        cur = adjust_contrast(cur, rng.uniform(1.0 - opts.contrast_delta, 1.0 + opts.contrast_delta));
    }
    if (opts.brightness_delta > 0.0) {
        cur = adjust_brightness(cur, rng.uniform(-opts.brightness_delta, opts.brightness_delta));
    }
    if (opts.hue_delta > 0.0 && cur.channels() == 3) {
        cur = adjust_hue(cur, rng.uniform(-opts.hue_delta, opts.hue_delta));
    }
    cur.mask = rebinarize(cur.mask);
    cur.origin_row = s.origin_row;
    cur.origin_col = s.origin_col;
    return cur;
}

ChannelStats compute_channel_stats(const std::vector<Sample>& samples) {
    if (samples.empty()) {
        throw DataError("compute_channel_stats: no samples");
    }
    const std::int64_t c = samples.front().channels();
    std::vector<double> sum(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(c), 0.0);
    std::int64_t count = 0;
    for (const auto& s : samples) {
        if (s.channels() != c) {
            throw DataError("compute_channel_stats: inconsistent channel counts");
        }
        for (std::size_t i = 0; i < s.image.data.size(); ++i) {
            const auto ch = i % static_cast<std::size_t>(c);
            sum[ch] += s.image.data[i];
            sumsq[ch] += static_cast<double>(s.image.data[i]) * s.image.data[i];
        }
        count += s.image.numel() / c;
    }
    ChannelStats stats;
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double mean = sum[static_cast<std::size_t>(ch)] / static_cast<double>(count);
        const double var =
            std::max(0.0, sumsq[static_cast<std::size_t>(ch)] / static_cast<double>(count) - mean * mean);
        stats.mean.push_back(static_cast<float>(mean));
        stats.stddev.push_back(static_cast<float>(std::sqrt(var)));
    }
    return stats;
}

Sample normalize(const Sample& s, const ChannelStats& stats) {
    const auto c = static_cast<std::size_t>(s.channels());
    if (stats.mean.size() != c || stats.stddev.size() != c) {
        throw DataError("normalize: stats have " + std::to_string(stats.mean.size()) +
                        " channels, sample has " + std::to_string(c));
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (stats.stddev[ch] == 0.0f) {
            throw DataError("normalize: zero standard deviation in channel " + std::to_string(ch));
        }
    }
    Sample out = s;
    for (std::size_t i = 0; i < out.image.data.size(); ++i) {
        const std::size_t ch = i % c;
        out.image.data[i] = (out.image.data[i] - stats.mean[ch]) / stats.stddev[ch];
    }
    return out;
}

SplitManifest split_dataset(std::vector<std::string> ids, double train_ratio, double val_ratio,
                            double test_ratio, std::uint64_t seed) {
    const double total = train_ratio + val_ratio + test_ratio;
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split_dataset: ratios sum to " + std::to_string(total) + ", expected 1");
    }
    Rng rng(seed);
    // Fisher-Yates with the project RNG keeps manifests platform-stable.
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.below(i))]);
    }
    const auto n = static_cast<std::int64_t>(ids.size());
    const auto n_train = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * train_ratio));
    const auto n_val = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * val_ratio));
    SplitManifest m;
    m.seed = seed;
    m.train.assign(ids.begin(), ids.begin() + n_train);
    m.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    m.test.assign(ids.begin() + n_train + n_val, ids.end());
    return m;
}

Tensor<float> reconstruct_from_patches(const std::vector<Tensor<float>>& predictions,
                                       const std::vector<std::pair<std::int64_t, std::int64_t>>& origins,
                                       std::int64_t canvas_h, std::int64_t canvas_w) {
    if (predictions.size() != origins.size()) {
        throw DataError("reconstruct_from_patches: prediction/origin count mismatch");
    }
    Tensor<float> sum = Tensor<float>::zeros({canvas_h, canvas_w, 1});
    std::vector<std::int32_t> cover(static_cast<std::size_t>(canvas_h * canvas_w), 0);
    for (std::size_t p = 0; p < predictions.size(); ++p) {
        const auto& pred = predictions[p];
        const std::int64_t ph = pred.dim(0), pw = pred.dim(1);
        const auto [row, col] = origins[p];
        if (row < 0 || col < 0 || row + ph > canvas_h || col + pw > canvas_w) {
            throw DataError("reconstruct_from_patches: patch at (" + std::to_string(row) + "," +
                            std::to_string(col) + ") falls outside the canvas");
        }
        for (std::int64_t y = 0; y < ph; ++y) {
            for (std::int64_t x = 0; x < pw; ++x) {
                sum.data[static_cast<std::size_t>((row + y) * canvas_w + col + x)] +=
                    pred.data[static_cast<std::size_t>(y * pw + x)];
                cover[static_cast<std::size_t>((row + y) * canvas_w + col + x)] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < sum.data.size(); ++i) {
        if (cover[i] > 0) sum.data[i] /= static_cast<float>(cover[i]);
    }
    return sum;
}

}  // namespace mixseg
