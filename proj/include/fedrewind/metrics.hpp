#pragma once

#include "fedrewind/dataset.hpp"
#include "fedrewind/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedrewind {

/// acc(i, j) = accuracy of model i on node j's private test set.
/// Square for federations; a single row for the Joint baseline.
struct CrossAccuracyMatrix {
    int round = 0;
    Eigen::MatrixXd acc;

    Eigen::Index models() const noexcept { return acc.rows(); }
    Eigen::Index test_sets() const noexcept { return acc.cols(); }
};

struct MetricsRecord {
    int round = 0;
    double fa = 0.0;
    double ff = 0.0;  // NaN when not applicable (Joint)
    double pfa = 0.0;
    std::vector<double> per_node_acc;
    std::optional<double> global_acc;  // centralized runs: server model, mean over test sets
    CrossAccuracyMatrix matrix;
};

inline CrossAccuracyMatrix cross_accuracy(std::span<const ModelParams> models, const Dataset& data,
                                          std::span<const Shard> shards, int round = 0) {
    if (models.size() != shards.size())
        throw std::invalid_argument("cross_accuracy: " + std::to_string(models.size()) + " models vs " +
                                    std::to_string(shards.size()) + " shards");
    CrossAccuracyMatrix m{round, Eigen::MatrixXd(static_cast<Eigen::Index>(models.size()),
                                                 static_cast<Eigen::Index>(shards.size()))};
    for (std::size_t i = 0; i < models.size(); ++i)
        for (std::size_t j = 0; j < shards.size(); ++j)
            m.acc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                accuracy(models[i], data, shards[j].test);
    return m;
}

/// One model against every node's test set (1 x N).
inline CrossAccuracyMatrix single_model_accuracy(const ModelParams& model, const Dataset& data,
                                                 std::span<const Shard> shards, int round = 0) {
    CrossAccuracyMatrix m{round, Eigen::MatrixXd(1, static_cast<Eigen::Index>(shards.size()))};
    for (std::size_t j = 0; j < shards.size(); ++j)
        m.acc(0, static_cast<Eigen::Index>(j)) = accuracy(model, data, shards[j].test);
    return m;
}

namespace detail {
// row-major accumulation order keeps sums bit-stable
inline double entry_sum(const Eigen::MatrixXd& a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) s += a(i, j);
    return s;
}
}  // namespace detail

/// Mean of all entries.
inline double federation_accuracy(const CrossAccuracyMatrix& m) {
    if (m.acc.size() == 0) throw std::invalid_argument("federation_accuracy: empty matrix");
    return detail::entry_sum(m.acc) / static_cast<double>(m.acc.size());
}

/// Bessel-corrected standard deviation over all entries; lower is fairer.
inline double federation_fairness(const CrossAccuracyMatrix& m) {
    if (m.acc.size() < 2) throw std::invalid_argument("federation_fairness: need at least two entries (N = 1)");
    const double fa = federation_accuracy(m);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < m.acc.rows(); ++i)
        for (Eigen::Index j = 0; j < m.acc.cols(); ++j) ss += (m.acc(i, j) - fa) * (m.acc(i, j) - fa);
    return std::sqrt(ss / static_cast<double>(m.acc.size() - 1));
}

/// Mean of the diagonal; for a single-row matrix, the row mean.
inline double personalized_fa(const CrossAccuracyMatrix& m) {
    if (m.acc.size() == 0) throw std::invalid_argument("personalized_fa: empty matrix");
    if (m.models() == 1) return federation_accuracy(m);
    if (m.models() != m.test_sets()) throw std::invalid_argument("personalized_fa: matrix is not square");
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.models(); ++i) s += m.acc(i, i);
    return s / static_cast<double>(m.models());
}

inline MetricsRecord summarize(const CrossAccuracyMatrix& m) {
    MetricsRecord r;
    r.round = m.round;
    r.matrix = m;
    r.fa = federation_accuracy(m);
    r.pfa = personalized_fa(m);
    const bool single_model = m.models() == 1 && m.test_sets() > 1;
    r.ff = (single_model || m.acc.size() < 2) ? std::numeric_limits<double>::quiet_NaN() : federation_fairness(m);
    if (m.models() == m.test_sets()) {
        for (Eigen::Index i = 0; i < m.models(); ++i) r.per_node_acc.push_back(m.acc(i, i));
    } else {
        for (Eigen::Index j = 0; j < m.test_sets(); ++j) r.per_node_acc.push_back(m.acc(0, j));
    }
    return r;
}

}  // namespace fedrewind
