#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

using Index = std::size_t;
using IndexList = std::vector<Index>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A labelled sample set. Rows of `features` are samples with values in [0,1].
struct Dataset {
    std::string name;
    FeatureMatrix features;
    std::vector<int> labels;
    int num_classes = 0;

    Index size() const noexcept { return labels.size(); }
    Index dims() const noexcept { return static_cast<Index>(features.cols()); }

    /// Throws std::invalid_argument if the row/label counts disagree, a label
    /// is out of range, or some class has no samples.
    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("dataset '" + name + "': num_classes must be >= 2");
        if (static_cast<Index>(features.rows()) != labels.size())
            throw std::invalid_argument("dataset '" + name + "': feature rows and labels differ in count");
        std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
        for (int y : labels) {
            if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset '" + name + "': label out of range");
            seen[static_cast<std::size_t>(y)] = true;
        }
        for (int c = 0; c < num_classes; ++c)
            if (!seen[static_cast<std::size_t>(c)])
                throw std::invalid_argument("dataset '" + name + "': class " + std::to_string(c) + " has no samples");
    }
};

/// One node's private data: disjoint index lists into a shared Dataset.
struct Shard {
    Index node_id = 0;
    IndexList train;
    IndexList test;

    friend bool operator==(const Shard&, const Shard&) = default;
};

/// Returns the first `count` samples of `data` (all of them if count >= size).
/// Classes that drop out entirely make the result fail validation.
inline Dataset head(const Dataset& data, Index count) {
    if (count >= data.size()) return data;
    Dataset out;
    out.name = data.name;
    out.num_classes = data.num_classes;
    out.features = data.features.topRows(static_cast<Eigen::Index>(count));
    out.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(count));
    out.validate();
    return out;
}

}  // namespace fedrewind
