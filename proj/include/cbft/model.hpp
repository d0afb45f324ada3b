#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbft/config.hpp"
#include "cbft/safety.hpp"

namespace cbft {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SaturatedError : ModelError {
    explicit SaturatedError(double rho)
        : ModelError("offered load saturates the service capacity (rho = " + std::to_string(rho) +
                     ")"),
          rho(rho) {}
    double rho;
};

// Inputs of the analytic latency model. Times in ms, rates per second,
// sizes in bytes.
struct ModelParams {
    uint32_t N = 4;          // replicas
    uint32_t n = 400;        // txs per block
    double lambda = 0;       // tx arrival rate, tx/s
    double mu = 1.0;         // round-trip time mean, ms
    double sigma = 0.1;      // round-trip time std-dev, ms
    double bandwidth = 0;    // bytes/s (0 = unlimited)
    double block_bytes = 0;  // block size on the wire
    double t_cpu = 0;        // per-crypto-op delay, ms
    Protocol protocol = Protocol::HotStuff;
    uint64_t mc_samples = 200000;
    uint64_t mc_seed = 12345;

    json to_json() const {
        return json{{"N", N},
                    {"n", n},
                    {"lambda", lambda},
                    {"mu", mu},
                    {"sigma", sigma},
                    {"bandwidth", bandwidth},
                    {"block_bytes", block_bytes},
                    {"t_cpu", t_cpu},
                    {"protocol", protocol_name(protocol)},
                    {"mc_samples", mc_samples},
                    {"mc_seed", mc_seed}};
    }

    static ModelParams from_json(const json& j) {
        ModelParams p;
        if (j.contains("N")) p.N = j.at("N").get<uint32_t>();
        if (j.contains("n")) p.n = j.at("n").get<uint32_t>();
        if (j.contains("lambda")) p.lambda = j.at("lambda").get<double>();
        if (j.contains("mu")) p.mu = j.at("mu").get<double>();
        if (j.contains("sigma")) p.sigma = j.at("sigma").get<double>();
        if (j.contains("bandwidth")) p.bandwidth = j.at("bandwidth").get<double>();
        if (j.contains("block_bytes")) p.block_bytes = j.at("block_bytes").get<double>();
        if (j.contains("t_cpu")) p.t_cpu = j.at("t_cpu").get<double>();
        if (j.contains("protocol")) {
            auto pr = protocol_from_name(j.at("protocol").get<std::string>());
            if (!pr) throw ModelError("unknown protocol in params");
            p.protocol = *pr;
        }
        if (j.contains("mc_samples")) p.mc_samples = j.at("mc_samples").get<uint64_t>();
        if (j.contains("mc_seed")) p.mc_seed = j.at("mc_seed").get<uint64_t>();
        return p;
    }
};

struct PredictedLatency {
    double t_l = 0;
    double t_nic = 0;
    double t_q = 0;
    double t_q_stderr = 0;
    double t_s = 0;
    double t_commit = 0;
    double w_q = 0;
    double rho = 0;
    double u = 0;      // effective service rate, blocks/ms
    double gamma = 0;  // block arrival rate per replica, blocks/ms
    double total = 0;

    json to_json() const {
        return json{{"t_L", t_l},       {"t_NIC", t_nic},     {"t_Q", t_q},
                    {"t_Q_stderr", t_q_stderr}, {"t_s", t_s}, {"t_commit", t_commit},
                    {"w_Q", w_q},       {"rho", rho},         {"u", u},
                    {"gamma", gamma},   {"total", total}};
    }
};

// NIC residency of a block: once through the sender's card, once through the
// receiver's. Returns ms.
inline double t_nic(double block_bytes, double bandwidth_bps) {
    if (bandwidth_bps <= 0) {
        if (block_bytes == 0) return 0.0;
        throw ModelError("t_nic: bandwidth must be positive");
    }
    return 2.0 * block_bytes / bandwidth_bps * 1000.0;
}

struct TQEstimate {
    double value = 0;
    double stderr_ = 0;
};

// Expected time for the next leader to hold a voting quorum: the k-th order
// statistic of N-1 i.i.d. normal round trips, k = 2f (its own vote is free).
// Estimated by Monte Carlo; sigma = 0 collapses to mu exactly.
inline TQEstimate t_q(uint32_t N, double mu, double sigma, uint64_t samples = 200000,
                      uint64_t seed = 12345) {
    if (N < 4) throw ModelError("t_q: need N >= 4");
    if (sigma < 0) throw ModelError("t_q: sigma must be non-negative");
    if (sigma == 0) return {mu, 0.0};
    uint32_t k = 2 * fault_bound(N);
    uint32_t draws = N - 1;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(mu, sigma);
    std::vector<double> buf(draws);
    double sum = 0, sum2 = 0;
    for (uint64_t s = 0; s < samples; ++s) {
        for (uint32_t i = 0; i < draws; ++i) buf[i] = nd(rng);
        std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
        double x = buf[k - 1];
        sum += x;
        sum2 += x * x;
    }
    double mean = sum / samples;
    double var = std::max(0.0, sum2 / samples - mean * mean);
    return {mean, std::sqrt(var / samples)};
}

// Service time of one block: three crypto hops, two NIC traversals, one
// quorum wait.
inline double t_s(const ModelParams& p) {
    return 3.0 * p.t_cpu + 2.0 * t_nic(p.block_bytes, p.bandwidth) +
           t_q(p.N, p.mu, p.sigma, p.mc_samples, p.mc_seed).value;
}

// Views a certified block waits before the commit rule fires, in time.
inline double t_commit(Protocol protocol, double ts) {
    switch (protocol) {
        case Protocol::HotStuff: return 2.0 * ts;
        case Protocol::TwoChainHotStuff: return ts;
        case Protocol::Streamlet: return ts;  // upper bound: echoes only help
    }
    throw ModelError("t_commit: unknown protocol");
}

struct WqResult {
    double w_q = 0;
    double rho = 0;
    double u = 0;
    double gamma = 0;
};

// Per-replica proposing approximated as M/D/1: blocks arrive at gamma =
// lambda/(nN), effective service time N*t_s (a replica leads every N views).
inline WqResult w_q(double lambda_tps, uint32_t n, uint32_t N, double ts_ms) {
    if (n == 0 || N == 0 || ts_ms <= 0) throw ModelError("w_q: bad parameters");
    WqResult r;
    r.gamma = lambda_tps / (static_cast<double>(n) * N) / 1000.0;  // blocks per ms
    r.u = 1.0 / (N * ts_ms);                                       // blocks per ms
    r.rho = r.gamma / r.u;
    if (r.rho >= 1.0) throw SaturatedError(r.rho);
    r.w_q = r.rho / (2.0 * r.u * (1.0 - r.rho));
    return r;
}

// Arrival rate at which rho reaches 1.
inline double saturation_lambda(const ModelParams& p, double ts_ms) {
    return static_cast<double>(p.n) / ts_ms * 1000.0;
}

inline PredictedLatency predict_latency(const ModelParams& p) {
    PredictedLatency out;
    out.t_l = p.mu;
    out.t_nic = t_nic(p.block_bytes, p.bandwidth);
    TQEstimate q = t_q(p.N, p.mu, p.sigma, p.mc_samples, p.mc_seed);
    out.t_q = q.value;
    out.t_q_stderr = q.stderr_;
    out.t_s = 3.0 * p.t_cpu + 2.0 * out.t_nic + out.t_q;
    out.t_commit = t_commit(p.protocol, out.t_s);
    if (p.lambda > 0) {
        WqResult w = w_q(p.lambda, p.n, p.N, out.t_s);
        out.w_q = w.w_q;
        out.rho = w.rho;
        out.u = w.u;
        out.gamma = w.gamma;
    } else {
        out.u = 1.0 / (p.N * out.t_s);
    }
    out.total = out.t_l + out.t_s + out.t_commit + out.w_q;
    return out;
}

struct CurvePoint {
    double lambda = 0;
    double rho = 0;
    double total_ms = 0;
    double w_q = 0;
};

// Latency as a function of offered load, swept until the M/D/1 pole.
inline std::vector<CurvePoint> predict_curve(ModelParams p, double lambda_max, uint32_t points) {
    if (points < 2) throw ModelError("predict_curve: need at least 2 points");
    double ts = t_s(p);
    double sat = saturation_lambda(p, ts);
    if (lambda_max <= 0 || lambda_max > sat) lambda_max = sat;
    std::vector<CurvePoint> out;
    for (uint32_t i = 0; i < points; ++i) {
        double frac = static_cast<double>(i + 1) / points;
        double lam = lambda_max * frac;
        p.lambda = lam;
        CurvePoint cp;
        cp.lambda = lam;
        try {
            PredictedLatency pl = predict_latency(p);
            cp.rho = pl.rho;
            cp.total_ms = pl.total;
            cp.w_q = pl.w_q;
        } catch (const SaturatedError& e) {
            cp.rho = e.rho;
            cp.total_ms = std::numeric_limits<double>::infinity();
            cp.w_q = std::numeric_limits<double>::infinity();
        }
        out.push_back(cp);
    }
    return out;
}

// Derives model parameters from a simulation config: the model speaks in
// round trips, the simulator in one-way link delays.
inline ModelParams calibrate_from_config(const BenchConfig& cfg) {
    ModelParams p;
    p.N = cfg.replica_count();
    p.n = cfg.bsize;
    p.lambda = cfg.lambda;
    p.mu = 2.0 * (cfg.net_mean + cfg.delay);
    p.sigma = std::sqrt(2.0) * cfg.net_std;
    p.bandwidth = cfg.bandwidth;
    // Wire size of a block: header/certificate overhead plus payload.
    double tx_bytes = 24.0 + cfg.psize;
    p.block_bytes = 120.0 + cfg.bsize * tx_bytes;
    p.t_cpu = cfg.cpu;
    p.protocol = cfg.protocol_enum();
    p.mc_seed = cfg.seed;
    return p;
}

}  // namespace cbft
