#pragma once

// MNIST IDX reader. Files may be plain or gzip-compressed (detected by the
// 0x1f8b header), so the canonical *.gz downloads load without unpacking.
//
//   images: u32be 0x00000803, u32be count, u32be rows, u32be cols, count*rows*cols u8
//   labels: u32be 0x00000801, u32be count, count u8

#include "fedrewind/dataset.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

struct IdxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t idx_image_magic = 0x00000803;
inline constexpr std::uint32_t idx_label_magic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_maybe_gz(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError("cannot open " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;

    std::unique_ptr<std::remove_pointer_t<gzFile>, decltype(&gzclose)> gz(gzopen(path.c_str(), "rb"), &gzclose);
    if (!gz) throw IdxError("cannot open gzip stream " + path.string());
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    for (;;) {
        const int n = gzread(gz.get(), buf, sizeof buf);
        if (n < 0) throw IdxError("corrupt gzip stream in " + path.string());
        if (n == 0) break;
        out.insert(out.end(), buf, buf + n);
    }
    return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
    if (b.size() < off + 4) throw IdxError(what + ": truncated header");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

inline std::string hex32(std::uint32_t v) {
    char s[11];
    std::snprintf(s, sizeof s, "0x%08x", v);
    return s;
}

}  // namespace detail

/// Decodes an IDX image/label pair into a Dataset with pixels scaled by 1/255
/// and images flattened row-major. Labels must lie in [0,10).
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = detail::read_maybe_gz(images_path);
    const auto lab = detail::read_maybe_gz(labels_path);
    const std::string iname = images_path.string(), lname = labels_path.string();

    if (const auto m = detail::read_be32(img, 0, iname); m != idx_image_magic)
        throw IdxError(iname + ": bad image magic " + detail::hex32(m) + " (expected " + detail::hex32(idx_image_magic) + ")");
    if (const auto m = detail::read_be32(lab, 0, lname); m != idx_label_magic)
        throw IdxError(lname + ": bad label magic " + detail::hex32(m) + " (expected " + detail::hex32(idx_label_magic) + ")");

    const std::size_t count = detail::read_be32(img, 4, iname);
    const std::size_t rows = detail::read_be32(img, 8, iname);
    const std::size_t cols = detail::read_be32(img, 12, iname);
    const std::size_t label_count = detail::read_be32(lab, 4, lname);
    if (count != label_count)
        throw IdxError("image/label count mismatch: " + std::to_string(count) + " images vs " +
                       std::to_string(label_count) + " labels");
    const std::size_t dim = rows * cols;
    if (img.size() < 16 + count * dim) throw IdxError(iname + ": truncated pixel data");
    if (lab.size() < 8 + count) throw IdxError(lname + ": truncated label data");

    Dataset ds;
    ds.name = "mnist";
    ds.num_classes = 10;
    ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    ds.labels.resize(count);
    const unsigned char* px = img.data() + 16;
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < dim; ++k)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = px[i * dim + k] / 255.0;
        const int y = lab[8 + i];
        if (y > 9) throw IdxError(lname + ": label " + std::to_string(y) + " out of range");
        ds.labels[i] = y;
    }
    return ds;
}

}  // namespace fedrewind
