#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "cbft/sim.hpp"

using namespace cbft;

namespace {

BenchConfig base_config(const std::string& protocol, uint32_t n, uint64_t views,
                        uint64_t seed = 1) {
    BenchConfig cfg;
    cfg.protocol = protocol;
    cfg.n = n;
    cfg.views = views;
    cfg.seed = seed;
    cfg.net_mean = 0.5;
    cfg.net_std = 0.05;
    cfg.timeout = 100;
    return cfg;
}

}  // namespace

TEST_CASE("happy path: one certified block per view, chained") {
    for (const char* proto : {"hotstuff", "2chs", "streamlet"}) {
        DYNAMIC_SECTION("protocol " << proto) {
            BenchConfig cfg = base_config(proto, 4, 100);
            SimCluster sim(cfg);
            sim.run_views(100, 60000);

            const auto& trace = sim.trace();
            MetricWindow w = default_window(100, protocol_commit_depth(cfg.protocol_enum()));
            // Every window view proposed, certified and committed exactly once.
            std::set<View> committed_views;
            for (const auto& [h, b] : trace.blocks) {
                if (!w.contains(b.view)) continue;
                CHECK(b.certified_view.has_value());
                CHECK(b.committed_view.has_value());
                CHECK(committed_views.insert(b.view).second);
            }
            for (View v = w.lo; v <= w.hi; ++v) {
                CHECK(trace.views.count(v) == 1);
                CHECK(trace.views.at(v).proposal_made);
                CHECK_FALSE(trace.views.at(v).timeout);
            }
            CHECK(compute_cgr(trace, w) == 1.0);
            double bi = compute_bi(trace, w);
            if (cfg.protocol_enum() == Protocol::HotStuff)
                CHECK(bi == 3.0);
            else
                CHECK(bi == 2.0);

            // Committed chain is a chain.
            const auto& chain = sim.node(0).forest().committed_chain();
            for (size_t i = 1; i < chain.size(); ++i)
                CHECK(chain[i]->parent == chain[i - 1]->id);
            CHECK(sim.honest_chains_prefix_consistent());
        }
    }
}

TEST_CASE("simulation is deterministic: identical reports byte for byte") {
    BenchConfig cfg = base_config("hotstuff", 4, 60);
    cfg.lambda = 2000;
    cfg.runtime = 0.2;
    cfg.concurrency = 10;
    auto run = [&] {
        SimCluster sim(cfg);
        sim.load_workload();
        sim.run_views(60, 60000);
        return std::pair{sim.report().to_json().dump(),
                         sim.node(0).forest().committed_tip().hex()};
    };
    auto [r1, tip1] = run();
    auto [r2, tip2] = run();
    CHECK(r1 == r2);
    CHECK(tip1 == tip2);
}

TEST_CASE("duplicate delivery is idempotent") {
    auto crypto = std::make_shared<NullCrypto>();
    NodeOptions opt;
    opt.id = 1;
    opt.n = 4;
    opt.crypto = crypto;
    Node node(opt);
    node.start(0);

    auto b1 = std::make_shared<Block>();
    b1->view = 1;
    b1->proposer = 1;  // leader of view 1 under round-robin
    b1->parent = genesis_block()->id;
    b1->justify = genesis_qc();
    b1->seal(*crypto);

    // First delivery: accepted, voted on (the node is its own next hop here).
    node.on_message(0.0, Message{1, BlockPtr(b1)});
    auto view_after = node.pacemaker().current_view();
    auto size_after = node.forest().live_size();
    // Redelivery changes nothing.
    auto fx = node.on_message(0.0, Message{1, BlockPtr(b1)});
    CHECK(node.pacemaker().current_view() == view_after);
    CHECK(node.forest().live_size() == size_after);
    CHECK(fx.out.empty());
}

TEST_CASE("unknown parent triggers a sync request, response links it") {
    auto crypto = std::make_shared<NullCrypto>();
    NodeOptions opt;
    opt.id = 0;
    opt.n = 4;
    opt.crypto = crypto;
    Node node(opt);
    node.start(0);

    auto b1 = std::make_shared<Block>();
    b1->view = 1;
    b1->proposer = 1;
    b1->parent = genesis_block()->id;
    b1->justify = genesis_qc();
    b1->seal(*crypto);

    QuorumCertificate qc1;
    qc1.view = 1;
    qc1.block = b1->id;
    for (ReplicaId i = 0; i < 3; ++i) {
        qc1.signers.push_back(i);
        qc1.sigs.push_back(crypto->sign(i, vote_preimage(1, b1->id)));
    }
    auto b2 = std::make_shared<Block>();
    b2->view = 2;
    b2->proposer = 2;
    b2->parent = b1->id;
    b2->justify = qc1;
    b2->seal(*crypto);

    auto fx = node.on_message(1.0, Message{2, BlockPtr(b2)});
    bool asked = false;
    for (const auto& ob : fx.out) {
        if (ob.msg.type() == Message::Type::SyncReq &&
            std::get<SyncRequest>(ob.msg.body).block == b1->id)
            asked = true;
    }
    CHECK(asked);
    CHECK_FALSE(node.forest().contains(b2->id));

    node.on_message(2.0, Message{2, Message{2, SyncResponse{b1}}.body});
    CHECK(node.forest().contains(b1->id));
    CHECK(node.forest().contains(b2->id));
}

TEST_CASE("scripted silence at view 4 reproduces the delayed-commit trace") {
    BenchConfig cfg = base_config("hotstuff", 4, 12);
    cfg.strategy = "silence";
    cfg.byzNo = 1;
    cfg.byz_ids = {0};        // leader of view 4 under round-robin
    cfg.attack_views = {4};   // one-shot attack
    SimCluster sim(cfg);
    sim.run_views(12, 60000);
    const auto& trace = sim.trace();

    // View 4: withheld proposal, so a timeout fired and nothing was proposed.
    REQUIRE(trace.views.count(4));
    CHECK_FALSE(trace.views.at(4).proposal_made);
    CHECK(trace.views.at(4).timeout);

    auto block_at = [&](View v) -> const BlockRecord* {
        for (const auto& [h, b] : trace.blocks)
            if (b.view == v) return &b;
        return nullptr;
    };
    const BlockRecord* b1 = block_at(1);
    const BlockRecord* b2 = block_at(2);
    const BlockRecord* b3 = block_at(3);
    const BlockRecord* b5 = block_at(5);
    REQUIRE(b1);
    REQUIRE(b2);
    REQUIRE(b3);
    REQUIRE(b5);

    // The view-5 leader lost the certificate for the view-3 block and built
    // on the view-2 block; the view-3 block is overwritten.
    CHECK(b5->parent == b2->hash);
    CHECK_FALSE(b3->committed_view.has_value());
    // The view-1 block commits only in view 8.
    REQUIRE(b1->committed_view.has_value());
    CHECK(*b1->committed_view == 8);
    REQUIRE(b2->committed_view.has_value());
    CHECK(*b2->committed_view == 8);
}

TEST_CASE("forked transactions recycle and commit exactly once") {
    BenchConfig cfg = base_config("hotstuff", 4, 60);
    cfg.strategy = "forking";
    cfg.byzNo = 1;  // id 3 leads views 3, 7, 11, ...
    cfg.lambda = 4000;
    cfg.runtime = 0.4;  // ~1600 txs over the first 400ms
    cfg.bsize = 50;
    cfg.memsize = 100000;
    SimCluster sim(cfg);
    sim.load_workload();
    sim.run_views(60, 60000);

    // Commit-multiset oracle: no transaction appears twice on the chain, and
    // everything submitted well before the end was committed despite forks.
    const auto& chain = sim.node(0).forest().committed_chain();
    std::set<uint64_t> seen;
    for (const auto& b : chain) {
        for (const auto& tx : b->payload) {
            CHECK(seen.insert(tx.key()).second);
        }
    }
    uint64_t acked = 0;
    for (const auto& [k, t] : sim.trace().txs) {
        if (t.ack_ms) ++acked;
        CHECK_FALSE(t.rejected);
    }
    CHECK(acked == sim.trace().submitted);
    CHECK(sim.node(3).counters().recycled_txs > 0);  // forks actually recycled
    CHECK(sim.honest_chains_prefix_consistent());
}

TEST_CASE("small adversarial sweep keeps honest chains prefix-consistent") {
    for (const char* proto : {"hotstuff", "2chs", "streamlet"}) {
        for (const char* strat : {"forking", "silence"}) {
            DYNAMIC_SECTION(proto << " under " << strat) {
                BenchConfig cfg = base_config(proto, 4, 40, 7);
                cfg.strategy = strat;
                cfg.byzNo = 1;
                cfg.timeout = 20;
                SimCluster sim(cfg);
                sim.run_views(40, 120000);
                CHECK(sim.honest_chains_prefix_consistent());
                CHECK(sim.node(0).forest().committed_height() > 5);
            }
        }
    }
}

TEST_CASE("degenerate delay distribution delivers exactly at the mean") {
    BenchConfig cfg = base_config("hotstuff", 4, 20);
    cfg.net_mean = 1.0;
    cfg.net_std = 0.0;
    SimCluster sim(cfg);
    sim.run_views(20, 60000);
    // With sigma = 0 every hop is exactly 1 ms: proposal times are integral.
    for (const auto& [h, b] : sim.trace().blocks) {
        double frac = b.proposed_ms - static_cast<uint64_t>(b.proposed_ms);
        CHECK((frac < 1e-9 || frac > 1 - 1e-9));
    }
}

TEST_CASE("mid-run slow command delays a node's sends") {
    BenchConfig cfg = base_config("hotstuff", 4, 40);
    cfg.timeout = 1000;  // keep timeouts out of the picture
    SimCluster sim(cfg);
    sim.schedule_slow(5.0, 1, 30.0);
    sim.run_views(30, 120000);
    // Replica 1 keeps leading its views but everything it sends is late, so
    // views led by 1 after the slow command take visibly longer.
    const auto& trace = sim.trace();
    double slow_gap = 0, fast_gap = 0;
    int slow_n = 0, fast_n = 0;
    for (const auto& [h, b] : trace.blocks) {
        if (b.view < 6 || b.view > 25) continue;
        auto next = trace.views.find(b.view + 1);
        if (next == trace.views.end()) continue;
        auto cur = trace.views.find(b.view);
        if (cur == trace.views.end() || cur->second.entered_ms == 0 ||
            next->second.entered_ms == 0)
            continue;
        double gap = next->second.entered_ms - cur->second.entered_ms;
        if (b.proposer == 1) {
            slow_gap += gap;
            ++slow_n;
        } else {
            fast_gap += gap;
            ++fast_n;
        }
    }
    REQUIRE(slow_n > 0);
    REQUIRE(fast_n > 0);
    CHECK(slow_gap / slow_n > fast_gap / fast_n + 20.0);
}
