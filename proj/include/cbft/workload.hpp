#pragma once

#include <random>
#include <vector>

#include "cbft/types.hpp"

namespace cbft {

struct ScheduledTx {
    double at_ms = 0;       // client-side submission instant
    ReplicaId target = 0;   // uniformly random replica
    Transaction tx;
};

// Open-loop workload: arrivals form a Poisson process with rate lambda,
// each transaction goes to a uniformly random replica and carries a payload
// of `psize` random bytes. Client ids cycle through `concurrency` logical
// clients; the whole schedule is a pure function of the seed.
inline std::vector<ScheduledTx> generate_workload(double lambda_tps, uint32_t psize,
                                                  uint32_t concurrency, double runtime_s,
                                                  uint32_t n_replicas, uint64_t seed) {
    std::vector<ScheduledTx> out;
    if (lambda_tps <= 0 || runtime_s <= 0) return out;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::exponential_distribution<double> gap(lambda_tps / 1000.0);  // per ms
    std::uniform_int_distribution<uint32_t> pick(0, n_replicas - 1);
    std::uniform_int_distribution<int> byte(0, 255);

    double horizon_ms = runtime_s * 1000.0;
    double t = gap(rng);
    uint64_t nseq = 0;
    if (concurrency == 0) concurrency = 1;
    std::vector<uint64_t> per_client_seq(concurrency, 0);
    while (t < horizon_ms) {
        ScheduledTx s;
        s.at_ms = t;
        s.target = pick(rng);
        s.tx.client = static_cast<uint32_t>(nseq % concurrency);
        s.tx.id = per_client_seq[s.tx.client]++;
        s.tx.submit_us = static_cast<uint64_t>(t * 1000.0);
        s.tx.payload.resize(psize);
        for (uint32_t i = 0; i < psize; ++i) s.tx.payload[i] = static_cast<uint8_t>(byte(rng));
        out.push_back(std::move(s));
        ++nseq;
        t += gap(rng);
    }
    return out;
}

}  // namespace cbft
