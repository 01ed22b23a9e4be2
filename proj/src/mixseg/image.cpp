#include "mixseg/image.hpp"

#include <cstdio>
#include <fstream>

namespace mixseg {

namespace {

int next_header_int(std::istream& in, const std::string& path) {
    // PNM headers allow '#' comments anywhere between tokens.
    while (in) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    if (!in || value < 0) {
        throw DataError("malformed PNM header in " + path);
    }
    return value;
}

}  // namespace

Tensor<float> load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open image file " + path);
    }
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6')) {
        throw DataError("unsupported image format in " + path + " (expected PGM/PPM)");
    }
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const std::int64_t w = next_header_int(in, path);
    const std::int64_t h = next_header_int(in, path);
    const std::int64_t maxval = next_header_int(in, path);
    if (w < 1 || h < 1) {
        throw DataError("degenerate image dimensions in " + path);
    }
    if (maxval < 1 || maxval > 255) {
        throw DataError("only 8-bit images are supported, " + path + " has maxval " +
                        std::to_string(maxval));
    }
    const std::int64_t c = color ? 3 : 1;
    const std::int64_t n = h * w * c;
    Tensor<float> img = Tensor<float>::zeros({h, w, c});
    if (binary) {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> raw(static_cast<std::size_t>(n));
        in.read(reinterpret_cast<char*>(raw.data()), n);
        if (in.gcount() != n) {
            throw DataError("truncated image data in " + path);
        }
        for (std::int64_t i = 0; i < n; ++i) {
            img.data[static_cast<std::size_t>(i)] =
                static_cast<float>(raw[static_cast<std::size_t>(i)]) / static_cast<float>(maxval);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            int v = -1;
            in >> v;
            if (!in || v < 0 || v > maxval) {
                throw DataError("truncated or invalid image data in " + path);
            }
            img.data[static_cast<std::size_t>(i)] =
                static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return img;
}

void save_pnm(const std::string& path, const Tensor<float>& image) {
    if (image.rank() != 3 || (image.channels() != 1 && image.channels() != 3)) {
        throw DataError("save_pnm: expected (h,w,1) or (h,w,3), got " + shape_str(image.shape));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write image file " + path);
    }
    const std::int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, image.data[i]));
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) {
        throw DataError("failed writing image file " + path);
    }
}

void save_mask_pnm(const std::string& path, const Tensor<float>& mask) {
    if (mask.rank() != 3 || mask.channels() != 1) {
        throw DataError("save_mask_pnm: expected (h,w,1), got " + shape_str(mask.shape));
    }
    for (float v : mask.data) {
        if (v != 0.0f && v != 1.0f) {
            throw DataError("save_mask_pnm: mask must be binary");
        }
    }
    save_pnm(path, mask);
}

}  // namespace mixseg
