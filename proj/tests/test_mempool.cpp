#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "cbft/mempool.hpp"

using namespace cbft;

namespace {

Transaction tx(uint32_t client, uint64_t id) {
    Transaction t;
    t.client = client;
    t.id = id;
    return t;
}

}  // namespace

TEST_CASE("push_back accepts, detects duplicates, signals full") {
    Mempool pool(2);
    CHECK(pool.push_back(tx(0, 1)) == PushResult::Accepted);
    CHECK(pool.size() == 1);
    CHECK(pool.push_back(tx(0, 1)) == PushResult::Duplicate);
    CHECK(pool.push_back(tx(0, 2)) == PushResult::Accepted);
    CHECK(pool.push_back(tx(0, 3)) == PushResult::Full);
    CHECK(pool.size() == 2);
}

TEST_CASE("pool at capacity 1000 rejects the next transaction") {
    Mempool pool(1000);
    for (uint64_t i = 0; i < 1000; ++i) REQUIRE(pool.push_back(tx(0, i)) == PushResult::Accepted);
    CHECK(pool.push_back(tx(0, 1000)) == PushResult::Full);
}

TEST_CASE("recycle_front preserves order ahead of queued transactions") {
    Mempool pool(10);
    pool.push_back(tx(0, 3));
    std::vector<Transaction> forked{tx(0, 1), tx(0, 2)};
    CHECK(pool.recycle_front(forked) == 2);
    auto batch = pool.next_payload(10);
    REQUIRE(batch.size() == 3);
    CHECK(batch[0].id == 1);
    CHECK(batch[1].id == 2);
    CHECK(batch[2].id == 3);
}

TEST_CASE("recycle skips committed transactions") {
    Mempool pool(10);
    pool.mark_committed({tx(0, 5)});
    std::vector<Transaction> forked{tx(0, 5), tx(0, 6)};
    CHECK(pool.recycle_front(forked) == 1);
    auto batch = pool.next_payload(10);
    REQUIRE(batch.size() == 1);
    CHECK(batch[0].id == 6);
}

TEST_CASE("next_payload takes up to bsize from the front") {
    Mempool pool(1000);
    for (uint64_t i = 0; i < 500; ++i) pool.push_back(tx(0, i));
    auto batch = pool.next_payload(400);
    CHECK(batch.size() == 400);
    CHECK(batch.front().id == 0);
    CHECK(pool.size() == 100);

    Mempool small(1000);
    for (uint64_t i = 0; i < 10; ++i) small.push_back(tx(0, i));
    CHECK(small.next_payload(400).size() == 10);  // batch whatever is there
    CHECK(small.next_payload(400).empty());       // empty blocks are fine
}

TEST_CASE("committed transactions cannot re-enter") {
    Mempool pool(10);
    pool.push_back(tx(1, 7));
    pool.mark_committed({tx(1, 7)});
    CHECK(pool.size() == 0);  // dropped from the queue
    CHECK(pool.push_back(tx(1, 7)) == PushResult::Duplicate);
    CHECK(pool.is_committed(tx(1, 7).key()));
}

TEST_CASE("concurrent push_back and next_payload keep counts sane") {
    Mempool pool(100000);
    constexpr int kTx = 20000;
    std::atomic<uint64_t> drained{0};
    std::thread producer([&] {
        for (uint64_t i = 0; i < kTx; ++i) pool.push_back(tx(2, i));
    });
    std::thread consumer([&] {
        uint64_t total = 0;
        while (total < kTx) {
            total += pool.next_payload(64).size();
        }
        drained = total;
    });
    producer.join();
    consumer.join();
    CHECK(drained == kTx);
    CHECK(pool.size() == 0);
}
