#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <random>
#include <thread>

#include <httplib.h>

#include "cbft/http_api.hpp"
#include "cbft/node_service.hpp"

using namespace cbft;

namespace {

int base_port() {
    static int p = 18000 + static_cast<int>(::getpid() % 2000);
    return p;
}

std::map<ReplicaId, std::string> local_peers(int base, uint32_t n) {
    std::map<ReplicaId, std::string> peers;
    for (uint32_t i = 0; i < n; ++i)
        peers[i] = "127.0.0.1:" + std::to_string(base + static_cast<int>(i));
    return peers;
}

}  // namespace

TEST_CASE("socket cluster commits and serves the REST api") {
    const uint32_t n = 4;
    auto peers = local_peers(base_port(), n);
    std::vector<std::unique_ptr<NodeService>> services;
    for (uint32_t i = 0; i < n; ++i) {
        NodeOptions opt;
        opt.id = i;
        opt.n = n;
        opt.protocol = Protocol::HotStuff;
        opt.timeout_ms = 200;
        opt.bsize = 100;
        opt.memsize = 1000;
        opt.crypto = Secp256k1Crypto::from_seed(n, 2024);
        services.push_back(std::make_unique<NodeService>(opt, peers));
    }
    for (auto& s : services) REQUIRE(s->start());

    // The chain should advance on its own (empty blocks).
    bool progressed = false;
    for (int i = 0; i < 100 && !progressed; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        progressed = services[0]->node().counters().committed_blocks >= 3;
    }
    CHECK(progressed);

    // Client-facing REST interface on replica 0.
    int http_port = http_port_for(peers[0]);
    HttpApi api(*services[0], http_port);
    REQUIRE(api.start());
    std::this_thread::sleep_for(std::chrono::milliseconds(100));

    httplib::Client client("127.0.0.1", http_port);
    client.set_read_timeout(20, 0);

    auto metrics = client.Get("/metrics");
    REQUIRE(metrics);
    CHECK(metrics->status == 200);
    auto jm = nlohmann::json::parse(metrics->body);
    CHECK(jm["view"].get<uint64_t>() >= 1);

    auto resp = client.Post("/transaction", "hello-payload", "application/octet-stream");
    REQUIRE(resp);
    REQUIRE(resp->status == 200);
    auto j = nlohmann::json::parse(resp->body);
    CHECK(j.contains("block"));
    CHECK(j["view"].get<uint64_t>() >= 1);
    CHECK(j["latency_ms"].get<double>() > 0);

    auto slow = client.Post("/slow", "{\"ms\": 5}", "application/json");
    REQUIRE(slow);
    CHECK(slow->status == 200);

    // Crash one replica: 3 of 4 keep the chain alive.
    services[3]->crash();
    uint64_t before = services[0]->node().counters().committed_blocks;
    bool alive = false;
    for (int i = 0; i < 100 && !alive; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        alive = services[0]->node().counters().committed_blocks > before + 2;
    }
    CHECK(alive);

    api.stop();
    for (auto& s : services) s->stop();
}

TEST_CASE("mutated frames never crash the decoder") {
    NullCrypto crypto;
    auto block = std::make_shared<Block>();
    block->view = 3;
    block->proposer = 3;
    block->parent = genesis_block()->id;
    block->justify = genesis_qc();
    block->seal(crypto);

    std::vector<Message> corpus;
    corpus.push_back(Message{3, BlockPtr(block)});
    Vote v;
    v.view = 3;
    v.block = block->id;
    v.voter = 1;
    v.sig = crypto.sign(1, vote_preimage(3, block->id));
    corpus.push_back(Message{1, v});
    TimeoutMsg tm;
    tm.view = 4;
    tm.signer = 2;
    tm.sig = crypto.sign(2, timeout_preimage(4));
    tm.high_qc = genesis_qc();
    corpus.push_back(Message{2, tm});

    std::mt19937_64 rng(77);
    int decoded = 0;
    for (int iter = 0; iter < 20000; ++iter) {
        Bytes frame = corpus[iter % corpus.size()].encode();
        int mutations = 1 + static_cast<int>(rng() % 8);
        for (int m = 0; m < mutations; ++m) {
            switch (rng() % 3) {
                case 0:
                    if (!frame.empty()) frame[rng() % frame.size()] ^= static_cast<uint8_t>(rng());
                    break;
                case 1:
                    frame.resize(rng() % (frame.size() + 4));
                    break;
                case 2:
                    frame.push_back(static_cast<uint8_t>(rng()));
                    break;
            }
        }
        auto msg = Message::decode(frame);
        if (msg) ++decoded;  // structurally valid mutants are fine, no crash is the point
    }
    CHECK(decoded >= 0);
}
