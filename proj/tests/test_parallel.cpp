#include <cginv/parallel.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

using namespace cginv;

TEST(ForEachIndex, VisitsEveryIndexOnce) {
    for (Execution exec : {Execution::serial, Execution::parallel}) {
        std::vector<int> hits(257, 0);
        for_each_index(hits.size(), [&](std::size_t i) { hits[i] += 1; }, exec);
        for (int h : hits) EXPECT_EQ(h, 1);
    }
}

TEST(ForEachIndex, RethrowsLowestFailingIndex) {
    std::atomic<int> visited{0};
    try {
        for_each_index(50, [&](std::size_t i) {
            ++visited;
            if (i == 7 || i == 31) throw std::runtime_error("fail " + std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "fail 7");
    }
    EXPECT_EQ(visited.load(), 50);
}

TEST(WorkerCount, HonoursEnvironment) {
    setenv("CG_INVERSE_THREADS", "3", 1);
    EXPECT_EQ(worker_count(), 3);
    setenv("CG_INVERSE_THREADS", "junk", 1);
    EXPECT_GE(worker_count(), 1);
    unsetenv("CG_INVERSE_THREADS");
    EXPECT_GE(worker_count(), 1);
}
