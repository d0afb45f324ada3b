#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cbft/config.hpp"
#include "cbft/types.hpp"

namespace cbft {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything below is recorded from one designated (honest) observer replica,
// except proposals and forks, which are recorded where they originate.
struct BlockRecord {
    BlockHash hash;
    View view = 0;
    ReplicaId proposer = 0;
    BlockHash parent;
    View justify_view = 0;
    uint32_t n_txs = 0;
    bool fork_attack = false;
    std::optional<View> certified_view;   // observer's view on first certification
    std::optional<View> committed_view;   // observer's view when committed
    double proposed_ms = 0;
    double committed_ms = 0;
};

struct ViewRecord {
    View view = 0;
    ReplicaId leader = 0;
    bool proposal_seen = false;   // at the observer
    bool proposal_made = false;   // anywhere
    bool timeout = false;         // observer sent a timeout in this view
    double entered_ms = 0;
    std::string cause;            // leader's trigger for the proposal
};

struct TxRecord {
    uint64_t key = 0;
    ReplicaId origin = 0;
    double submit_ms = 0;
    std::optional<double> ack_ms;
    std::optional<View> commit_view;
    bool rejected = false;
};

struct RunTrace {
    std::map<View, ViewRecord> views;
    std::unordered_map<BlockHash, BlockRecord, BlockHashHasher> blocks;
    std::unordered_map<uint64_t, TxRecord> txs;
    std::vector<BlockHash> commit_order;  // observer's commit sequence
    ReplicaId observer = 0;
    double end_ms = 0;
    uint64_t submitted = 0;
    uint64_t rejected = 0;

    ViewRecord& view_rec(View v) {
        auto& r = views[v];
        r.view = v;
        return r;
    }
};

struct MetricWindow {
    View lo = 0;  // inclusive
    View hi = 0;  // inclusive
    bool contains(View v) const { return v >= lo && v <= hi; }
};

// First max(3, depth) views warm the pipeline up; the last two views of the
// nominal budget see boundary effects. Both are excluded from metrics.
inline MetricWindow default_window(View nominal_views, uint32_t commit_depth) {
    MetricWindow w;
    w.lo = std::max<View>(3, commit_depth) + 1;
    w.hi = nominal_views >= w.lo + 2 ? nominal_views - 2 : w.lo;
    return w;
}

// Chain growth rate: committed blocks per view over the measured window.
// Views in which no proposal was produced (a withheld one, say) do not grow
// the chain for anyone and are not counted as opportunities.
inline double compute_cgr(const RunTrace& trace, const MetricWindow& w) {
    uint64_t productive = 0;
    for (const auto& [v, rec] : trace.views) {
        if (w.contains(v) && rec.proposal_made) ++productive;
    }
    if (productive == 0) throw MetricError("cgr: no productive views in window");
    uint64_t committed = 0;
    for (const auto& [h, b] : trace.blocks) {
        if (w.contains(b.view) && b.committed_view) ++committed;
    }
    return static_cast<double>(committed) / static_cast<double>(productive);
}

// Block interval: mean number of views from a block's proposal view to the
// view in which the observer committed it.
inline double compute_bi(const RunTrace& trace, const MetricWindow& w) {
    uint64_t count = 0;
    uint64_t total = 0;
    for (const auto& [h, b] : trace.blocks) {
        if (!w.contains(b.view) || !b.committed_view) continue;
        total += *b.committed_view - b.view;
        ++count;
    }
    if (count == 0) throw MetricError("bi: no committed blocks in window");
    return static_cast<double>(total) / static_cast<double>(count);
}

struct LatencyStats {
    double mean = 0;
    double p50 = 0;
    double p99 = 0;
    uint64_t samples = 0;
};

inline LatencyStats latency_stats(const RunTrace& trace) {
    std::vector<double> lat;
    lat.reserve(trace.txs.size());
    for (const auto& [k, t] : trace.txs) {
        if (t.ack_ms) lat.push_back(*t.ack_ms - t.submit_ms);
    }
    LatencyStats s;
    s.samples = lat.size();
    if (lat.empty()) return s;
    std::sort(lat.begin(), lat.end());
    double sum = 0;
    for (double x : lat) sum += x;
    s.mean = sum / lat.size();
    s.p50 = lat[lat.size() / 2];
    s.p99 = lat[std::min(lat.size() - 1, static_cast<size_t>(lat.size() * 0.99))];
    return s;
}

struct Report {
    json config_echo;
    std::string protocol;
    uint64_t seed = 0;
    MetricWindow window;
    uint64_t views_entered = 0;
    uint64_t productive_views = 0;
    uint64_t committed_blocks_window = 0;
    uint64_t committed_blocks_total = 0;
    uint64_t overwritten_blocks = 0;
    std::optional<double> cgr;
    std::optional<double> bi;
    uint64_t submitted_txs = 0;
    uint64_t committed_txs = 0;
    uint64_t rejected_txs = 0;
    double duration_ms = 0;
    double offered_tps = 0;
    double throughput_tps = 0;
    LatencyStats latency;

    json to_json() const {
        json j;
        j["config"] = config_echo;
        j["protocol"] = protocol;
        j["seed"] = seed;
        j["window"] = {{"lo", window.lo}, {"hi", window.hi}};
        j["views_entered"] = views_entered;
        j["productive_views"] = productive_views;
        j["committed_blocks_window"] = committed_blocks_window;
        j["committed_blocks_total"] = committed_blocks_total;
        j["overwritten_blocks"] = overwritten_blocks;
        if (cgr) j["cgr"] = *cgr;
        if (bi) j["bi"] = *bi;
        j["submitted_txs"] = submitted_txs;
        j["committed_txs"] = committed_txs;
        j["rejected_txs"] = rejected_txs;
        j["duration_ms"] = duration_ms;
        j["offered_tps"] = offered_tps;
        j["throughput_tps"] = throughput_tps;
        j["latency_ms"] = {{"mean", latency.mean},
                           {"p50", latency.p50},
                           {"p99", latency.p99},
                           {"samples", latency.samples}};
        return j;
    }
};

// Pure function of the trace: rerunning the same seed yields the same bytes.
inline Report summarize(const RunTrace& trace, const BenchConfig& cfg, const MetricWindow& w) {
    Report r;
    r.config_echo = cfg.to_json();
    r.protocol = cfg.protocol;
    r.seed = cfg.seed;
    r.window = w;
    r.views_entered = trace.views.size();
    for (const auto& [v, rec] : trace.views) {
        if (w.contains(v) && rec.proposal_made) ++r.productive_views;
    }
    View last_view = trace.views.empty() ? 0 : trace.views.rbegin()->first;
    for (const auto& [h, b] : trace.blocks) {
        if (b.committed_view) {
            ++r.committed_blocks_total;
            if (w.contains(b.view)) ++r.committed_blocks_window;
        } else if (b.view + 16 < last_view) {
            // Old enough that it can only have been forked away.
            ++r.overwritten_blocks;
        }
    }
    try {
        r.cgr = compute_cgr(trace, w);
    } catch (const MetricError&) {
    }
    try {
        r.bi = compute_bi(trace, w);
    } catch (const MetricError&) {
    }
    r.submitted_txs = trace.submitted;
    r.rejected_txs = trace.rejected;
    uint64_t committed_txs = 0;
    for (const auto& [k, t] : trace.txs) {
        if (t.ack_ms) ++committed_txs;
    }
    r.committed_txs = committed_txs;
    r.duration_ms = trace.end_ms;
    double workload_s = cfg.runtime > 0 ? cfg.runtime : trace.end_ms / 1000.0;
    if (workload_s > 0) {
        r.offered_tps = static_cast<double>(trace.submitted) / workload_s;
        r.throughput_tps = static_cast<double>(committed_txs) / workload_s;
    }
    r.latency = latency_stats(trace);
    return r;
}

inline std::string blocks_csv(const RunTrace& trace) {
    std::ostringstream os;
    os << "view,hash,proposer,parent,justify_view,n_txs,fork,certified_view,committed_view\n";
    std::vector<const BlockRecord*> rows;
    for (const auto& [h, b] : trace.blocks) rows.push_back(&b);
    std::sort(rows.begin(), rows.end(),
              [](const BlockRecord* a, const BlockRecord* b) { return a->view < b->view; });
    for (const auto* b : rows) {
        os << b->view << ',' << b->hash.hex().substr(0, 16) << ',' << b->proposer << ','
           << b->parent.hex().substr(0, 16) << ',' << b->justify_view << ',' << b->n_txs << ','
           << (b->fork_attack ? 1 : 0) << ',';
        if (b->certified_view) os << *b->certified_view;
        os << ',';
        if (b->committed_view) os << *b->committed_view;
        os << '\n';
    }
    return os.str();
}

inline std::string txs_csv(const RunTrace& trace) {
    std::ostringstream os;
    os << "key,origin,submit_ms,ack_ms,commit_view,rejected\n";
    std::vector<const TxRecord*> rows;
    for (const auto& [k, t] : trace.txs) rows.push_back(&t);
    std::sort(rows.begin(), rows.end(),
              [](const TxRecord* a, const TxRecord* b) { return a->submit_ms < b->submit_ms; });
    for (const auto* t : rows) {
        os << t->key << ',' << t->origin << ',' << t->submit_ms << ',';
        if (t->ack_ms) os << *t->ack_ms;
        os << ',';
        if (t->commit_view) os << *t->commit_view;
        os << ',' << (t->rejected ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace cbft
