#pragma once

// Class-incremental task streams with per-node asynchronous offsets.

#include "fedrewind/dataset.hpp"
#include "fedrewind/random.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

struct TaskSchedule {
    Index node_id = 0;
    std::vector<std::vector<int>> tasks;  // disjoint class groups, in visiting order
    int rounds_per_task = 1;
    int offset_rounds = 0;

    /// Task trained during zero-based round `round`: task 0 until the offset
    /// has elapsed, then one task per rounds_per_task, holding the last.
    std::size_t task_at(int round) const {
        if (round < offset_rounds) return 0;
        const auto k = static_cast<std::size_t>((round - offset_rounds) / rounds_per_task);
        return std::min(k, tasks.size() - 1);
    }

    friend bool operator==(const TaskSchedule&, const TaskSchedule&) = default;
};

struct ActiveView {
    Index node_id = 0;
    int round = 0;
    std::size_t task = 0;
    IndexList train;  // shard train indices whose labels belong to the active task
};

/// Splits classes into num_tasks contiguous groups; each node visits the
/// groups in its own seeded order starting after an offset drawn uniformly
/// from [0, max_offset].
inline std::vector<TaskSchedule> make_schedules(int num_classes, int num_tasks, Index num_nodes, int rounds_per_task,
                                                int max_offset, Seed seed) {
    if (num_tasks < 1 || num_classes < 1) throw std::invalid_argument("make_schedules: need at least one task and class");
    if (num_classes % num_tasks != 0)
        throw std::invalid_argument("make_schedules: num_classes (" + std::to_string(num_classes) +
                                    ") must be divisible by num_tasks (" + std::to_string(num_tasks) + ")");
    if (rounds_per_task < 1) throw std::invalid_argument("make_schedules: rounds_per_task must be positive");
    if (max_offset < 0) throw std::invalid_argument("make_schedules: max_offset must be non-negative");

    const int group = num_classes / num_tasks;
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(num_tasks));
    for (int t = 0; t < num_tasks; ++t)
        for (int c = 0; c < group; ++c) groups[static_cast<std::size_t>(t)].push_back(t * group + c);

    std::vector<TaskSchedule> out(num_nodes);
    for (Index k = 0; k < num_nodes; ++k) {
        auto rng = make_rng(seed, {stream::schedule, k});
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::uniform_int_distribution<int> offset(0, max_offset);
        auto& s = out[k];
        s.node_id = k;
        s.rounds_per_task = rounds_per_task;
        s.offset_rounds = offset(rng);
        for (auto g : order) s.tasks.push_back(groups[g]);
    }
    return out;
}

inline ActiveView active_view(const TaskSchedule& schedule, const Dataset& data, const Shard& shard, int round) {
    if (round < 0) throw std::invalid_argument("active_view: round must be non-negative");
    ActiveView v{shard.node_id, round, schedule.task_at(round), {}};
    const auto& classes = schedule.tasks[v.task];
    std::vector<bool> visible(static_cast<std::size_t>(data.num_classes), false);
    for (int c : classes) visible[static_cast<std::size_t>(c)] = true;
    for (Index i : shard.train)
        if (visible[static_cast<std::size_t>(data.labels[i])]) v.train.push_back(i);
    return v;
}

}  // namespace fedrewind
