#pragma once

// Non-IID partitioning: for every class, node proportions are drawn from
// Dirichlet(alpha * 1_N) and the class's samples are dealt out by
// largest-remainder quotas. Each node then splits its samples into train and
// test, stratified by class.

#include "fedrewind/dataset.hpp"
#include "fedrewind/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

struct PartitionSpec {
    Index num_nodes = 10;
    double alpha_dir = 0.25;
    double test_fraction = 0.2;
    Seed seed = 0;

    void validate() const {
        if (num_nodes < 1) throw std::invalid_argument("PartitionSpec: num_nodes must be >= 1");
        if (!(alpha_dir > 0.0) || !std::isfinite(alpha_dir))
            throw std::invalid_argument("PartitionSpec: alpha_dir must be positive");
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            throw std::invalid_argument("PartitionSpec: test_fraction must lie in (0,1)");
    }
};

struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int max_partition_redraws = 100;

inline std::vector<double> sample_dirichlet(double alpha, std::size_t n, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(n);
    for (auto& v : p) v = gamma(rng);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (!(total > 0.0)) return {};  // every draw underflowed
    for (auto& v : p) v /= total;
    return p;
}

/// Integer quotas summing to `total`, proportional to `p`. Leftover units go
/// to the largest fractional parts, lower index first on ties.
inline std::vector<Index> largest_remainder(std::span<const double> p, Index total) {
    std::vector<Index> quota(p.size());
    std::vector<double> frac(p.size());
    Index assigned = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double exact = p[k] * static_cast<double>(total);
        quota[k] = static_cast<Index>(std::floor(exact));
        frac[k] = exact - std::floor(exact);
        assigned += quota[k];
    }
    // floating error can push the floor sum past total; trim from the largest
    while (assigned > total) {
        auto it = std::max_element(quota.begin(), quota.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size(), ++assigned) ++quota[order[k]];
    return quota;
}

namespace detail {

// One partition attempt; returns an empty vector if some node ends up
// without train or test samples.
inline std::vector<Shard> try_partition(const Dataset& data, const PartitionSpec& spec, int attempt) {
    const Index n_nodes = spec.num_nodes;
    const auto n_classes = static_cast<std::size_t>(data.num_classes);
    auto rng = make_rng(spec.seed, {stream::partition, static_cast<std::uint64_t>(attempt)});

    std::vector<IndexList> by_class(n_classes);
    for (Index i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

    // node_class[k][c]: samples of class c held by node k
    std::vector<std::vector<IndexList>> node_class(n_nodes, std::vector<IndexList>(n_classes));
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto& members = by_class[c];
        std::shuffle(members.begin(), members.end(), rng);
        const auto p = sample_dirichlet(spec.alpha_dir, n_nodes, rng);
        if (p.empty()) return {};
        const auto quota = largest_remainder(p, members.size());
        std::size_t pos = 0;
        for (Index k = 0; k < n_nodes; ++k) {
            node_class[k][c].assign(members.begin() + static_cast<std::ptrdiff_t>(pos),
                                    members.begin() + static_cast<std::ptrdiff_t>(pos + quota[k]));
            pos += quota[k];
        }
    }

    std::vector<Shard> shards(n_nodes);
    for (Index k = 0; k < n_nodes; ++k) {
        Shard& s = shards[k];
        s.node_id = k;
        std::vector<std::size_t> n_test(n_classes, 0);
        std::size_t total = 0, total_test = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            const std::size_t m = node_class[k][c].size();
            total += m;
            if (m >= 2) {
                const auto t = static_cast<std::size_t>(std::llround(static_cast<double>(m) * spec.test_fraction));
                n_test[c] = std::min(t, m - 1);
            }
            total_test += n_test[c];
        }
        if (total_test == 0 && total >= 2) {
            // borrow one sample from the class with most samples
            std::size_t best = 0;
            for (std::size_t c = 1; c < n_classes; ++c)
                if (node_class[k][c].size() > node_class[k][best].size()) best = c;
            n_test[best] = 1;
            total_test = 1;
        }
        for (std::size_t c = 0; c < n_classes; ++c) {
            const auto& v = node_class[k][c];
            const std::size_t cut = v.size() - n_test[c];
            s.train.insert(s.train.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cut));
            s.test.insert(s.test.end(), v.begin() + static_cast<std::ptrdiff_t>(cut), v.end());
        }
        if (s.train.empty() || s.test.empty()) return {};
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
    }
    return shards;
}

}  // namespace detail

/// Throws PartitionError when no valid draw is found within
/// max_partition_redraws attempts (each attempt reseeds the stream).
inline std::vector<Shard> dirichlet_partition(const Dataset& data, const PartitionSpec& spec) {
    spec.validate();
    data.validate();
    for (int attempt = 0; attempt <= max_partition_redraws; ++attempt) {
        auto shards = detail::try_partition(data, spec, attempt);
        if (!shards.empty()) return shards;
    }
    throw PartitionError("dirichlet_partition: could not give every one of " + std::to_string(spec.num_nodes) +
                         " nodes a non-empty train and test split after " + std::to_string(max_partition_redraws) +
                         " redraws (dataset too small for this alpha)");
}

/// Concatenation of all shards' train and test lists, in node order.
inline Shard joint_view(std::span<const Shard> shards) {
    Shard joint;
    joint.node_id = 0;
    for (const auto& s : shards) {
        joint.train.insert(joint.train.end(), s.train.begin(), s.train.end());
        joint.test.insert(joint.test.end(), s.test.begin(), s.test.end());
    }
    return joint;
}

/// Shannon entropy (nats) of the label distribution of data[indices].
inline double label_entropy(const Dataset& data, std::span<const Index> indices) {
    if (indices.empty()) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(data.num_classes), 0.0);
    for (Index i : indices) counts[static_cast<std::size_t>(data.labels[i])] += 1.0;
    double h = 0.0;
    const double n = static_cast<double>(indices.size());
    for (double c : counts)
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    return h;
}

/// Mean over shards of the entropy of each node's full (train + test) labels.
inline double mean_node_entropy(const Dataset& data, std::span<const Shard> shards) {
    double sum = 0.0;
    for (const auto& s : shards) {
        IndexList all = s.train;
        all.insert(all.end(), s.test.begin(), s.test.end());
        sum += label_entropy(data, all);
    }
    return sum / static_cast<double>(shards.size());
}

}  // namespace fedrewind
