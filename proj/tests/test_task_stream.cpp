#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace fedrewind;

TEST(MakeSchedules, EqualContiguousGroups) {
    const auto s = make_schedules(10, 5, 3, 2, 4, 1);
    ASSERT_EQ(s.size(), 3u);
    for (const auto& sch : s) {
        ASSERT_EQ(sch.tasks.size(), 5u);
        std::set<int> seen;
        for (const auto& t : sch.tasks) {
            ASSERT_EQ(t.size(), 2u);
            EXPECT_EQ(t[1], t[0] + 1);
            EXPECT_EQ(t[0] % 2, 0);
            for (int c : t) EXPECT_TRUE(seen.insert(c).second) << "class repeated";
        }
        EXPECT_EQ(seen.size(), 10u);
        EXPECT_GE(sch.offset_rounds, 0);
        EXPECT_LE(sch.offset_rounds, 4);
    }
}

TEST(MakeSchedules, DeterministicWithPerNodeOrders) {
    EXPECT_EQ(make_schedules(10, 5, 6, 2, 3, 7), make_schedules(10, 5, 6, 2, 3, 7));
    const auto s = make_schedules(10, 5, 6, 2, 3, 7);
    std::set<std::vector<std::vector<int>>> orders;
    for (const auto& sch : s) orders.insert(sch.tasks);
    EXPECT_GT(orders.size(), 1u);
}

TEST(MakeSchedules, Errors) {
    EXPECT_THROW(make_schedules(10, 3, 2, 1, 0, 0), std::invalid_argument);
    EXPECT_THROW(make_schedules(10, 0, 2, 1, 0, 0), std::invalid_argument);
    EXPECT_THROW(make_schedules(10, 2, 2, 0, 0, 0), std::invalid_argument);
}

TEST(ActiveView, SingleTaskIsTheWholeShard) {
    const auto data = make_blobs(4, 3, 20, 0.1, 1);
    const auto shards = dirichlet_partition(data, {3, 1.0, 0.2, 1});
    const auto s = make_schedules(4, 1, 3, 2, 5, 1);
    for (Index k = 0; k < 3; ++k)
        for (int r : {0, 1, 3, 10, 100}) EXPECT_EQ(active_view(s[k], data, shards[k], r).train, shards[k].train);
}

TEST(ActiveView, ClampsToLastTask) {
    TaskSchedule s{0, {{0}, {1}, {2}}, 2, 0};
    EXPECT_EQ(s.task_at(0), 0u);
    EXPECT_EQ(s.task_at(5), 2u);
    EXPECT_EQ(s.task_at(500), 2u);
}

TEST(ActiveView, BoundariesOnTwoNodeTwoTaskToy) {
    // labels: 0 0 1 1 2 2 3 3
    Dataset d;
    d.name = "toy";
    d.num_classes = 4;
    d.features = FeatureMatrix::Zero(8, 1);
    d.labels = {0, 0, 1, 1, 2, 2, 3, 3};
    const Shard a{0, {0, 2, 4, 6}, {1}}, b{1, {1, 3, 5, 7}, {0}};
    const TaskSchedule sa{0, {{0, 1}, {2, 3}}, 2, 0}, sb{1, {{2, 3}, {0, 1}}, 2, 1};

    // enumerate which classes are visible per round, compare to a hand-written table
    auto classes = [&](const TaskSchedule& s, const Shard& sh, int r) {
        std::set<int> c;
        for (Index i : active_view(s, d, sh, r).train) c.insert(d.labels[i]);
        return c;
    };
    const std::set<int> low{0, 1}, high{2, 3};
    EXPECT_EQ(classes(sa, a, 0), low);
    EXPECT_EQ(classes(sa, a, 1), low);
    EXPECT_EQ(classes(sa, a, 2), high);  // boundary at round 2
    EXPECT_EQ(classes(sa, a, 3), high);
    EXPECT_EQ(classes(sb, b, 0), high);  // before its offset: task 0
    EXPECT_EQ(classes(sb, b, 2), high);
    EXPECT_EQ(classes(sb, b, 3), low);  // offset 1 shifts the boundary to round 3
    for (int r = 0; r < 6; ++r)
        for (Index i : active_view(sb, d, b, r).train)
            EXPECT_NE(std::find(b.train.begin(), b.train.end(), i), b.train.end());
}

TEST(ActiveView, NegativeRoundThrows) {
    Dataset d = make_blobs(2, 1, 2, 0.0, 0);
    const TaskSchedule s{0, {{0, 1}}, 1, 0};
    EXPECT_THROW(active_view(s, d, Shard{0, {0}, {1}}, -1), std::invalid_argument);
}
