#pragma once

#include "fedrewind/dataset.hpp"
#include "fedrewind/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fedrewind {

/// Center coordinate `dim` of class `c`. With one dimension, centers are
/// evenly spaced on [0.1, 0.9]. Otherwise the first two coordinates sit on a
/// circle of radius 0.35 around (0.5, 0.5), which keeps every center distinct,
/// and the remaining coordinates follow harmonics of the same angle.
inline double blob_center(int c, int num_classes, Index dims, Index dim) {
    if (dims == 1) return 0.1 + 0.8 * c / (num_classes - 1);
    const double angle = 2.0 * std::numbers::pi * c / num_classes;
    if (dim == 0) return 0.5 + 0.35 * std::cos(angle);
    if (dim == 1) return 0.5 + 0.35 * std::sin(angle);
    return 0.5 + 0.35 * std::cos(static_cast<double>(dim) * angle + static_cast<double>(dim));
}

/// Isotropic Gaussian blobs, clamped to [0,1], samples grouped by class.
inline Dataset make_blobs(int num_classes, Index dims, Index samples_per_class, double spread, Seed seed) {
    if (num_classes < 2) throw std::invalid_argument("make_blobs: num_classes must be >= 2");
    if (dims == 0 || samples_per_class == 0) throw std::invalid_argument("make_blobs: dims and samples must be positive");
    if (!(spread >= 0.0)) throw std::invalid_argument("make_blobs: spread must be non-negative");

    Dataset ds;
    ds.name = "blobs";
    ds.num_classes = num_classes;
    const Index n = samples_per_class * static_cast<Index>(num_classes);
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
    ds.labels.resize(n);
    auto rng = make_rng(seed, {stream::blobs});
    std::normal_distribution<double> noise(0.0, 1.0);
    Index row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (Index s = 0; s < samples_per_class; ++s, ++row) {
            for (Index d = 0; d < dims; ++d) {
                const double center = blob_center(c, num_classes, dims, d);
                const double v = spread > 0.0 ? center + spread * noise(rng) : center;
                ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) = std::clamp(v, 0.0, 1.0);
            }
            ds.labels[row] = c;
        }
    }
    return ds;
}

/// Writes `f0,...,f{d-1},label` CSV with shortest round-trip number formatting.
inline void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (Index d = 0; d < data.dims(); ++d) out << 'f' << d << ',';
    out << "label\n";
    char buf[32];
    for (Index i = 0; i < data.size(); ++i) {
        for (Index d = 0; d < data.dims(); ++d) {
            auto r = std::to_chars(buf, buf + sizeof buf,
                                   data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)));
            out.write(buf, r.ptr - buf);
            out << ',';
        }
        out << data.labels[i] << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fedrewind
