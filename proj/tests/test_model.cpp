#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cbft/model.hpp"

using namespace cbft;

namespace {

// Independent oracle: expected k-th order statistic of n i.i.d. standard
// normals by numerical quadrature (Simpson over a wide bracket), then shifted
// and scaled. Uses log-space weights for stability.
double order_stat_quadrature(uint32_t k, uint32_t n, double mu, double sigma) {
    auto log_comb = [](double a) { return std::lgamma(a + 1.0); };
    double log_coeff = log_comb(n) - log_comb(k - 1) - log_comb(n - k);
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    auto Phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    auto integrand = [&](double x) {
        double F = Phi(x);
        if (F <= 0 || F >= 1) return 0.0;
        double logf = log_coeff + (k - 1) * std::log(F) + (n - k) * std::log1p(-F);
        return x * std::exp(logf) * phi(x);
    };
    // Simpson's rule on [-12, 12].
    const int steps = 48000;
    const double a = -12.0, b = 12.0, h = (b - a) / steps;
    double sum = integrand(a) + integrand(b);
    for (int i = 1; i < steps; ++i) sum += integrand(a + i * h) * (i % 2 ? 4.0 : 2.0);
    double ez = sum * h / 3.0;
    return mu + sigma * ez;
}

// Independent M/D/1 oracle: discrete-event single-server queue with Poisson
// arrivals and deterministic service, mean waiting time over many jobs.
double md1_wait_sim(double arrival_per_ms, double service_ms, uint64_t jobs, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(arrival_per_ms);
    double t = 0, free_at = 0, waited = 0;
    for (uint64_t i = 0; i < jobs; ++i) {
        t += gap(rng);
        double start = std::max(t, free_at);
        waited += start - t;
        free_at = start + service_ms;
    }
    return waited / static_cast<double>(jobs);
}

}  // namespace

TEST_CASE("t_nic: zero block, direct formula, linearity") {
    CHECK(t_nic(0, 0) == 0.0);
    CHECK(t_nic(1e6, 1e6) == 2000.0);  // 1 MB through 1 MB/s, twice
    CHECK(t_nic(2e6, 1e6) == Catch::Approx(2.0 * t_nic(1e6, 1e6)));
    CHECK_THROWS_AS(t_nic(10, 0), ModelError);
}

TEST_CASE("t_q: sigma zero collapses to mu with zero variance") {
    auto e = t_q(4, 3.5, 0.0);
    CHECK(e.value == 3.5);
    CHECK(e.stderr_ == 0.0);
}

TEST_CASE("t_q: N=4 is the median of three, expectation mu") {
    auto e = t_q(4, 1.0, 0.2, 200000, 5);
    CHECK(std::abs(e.value - 1.0) <= 3 * e.stderr_);
    CHECK_THROWS_AS(t_q(4, 1.0, -0.1), ModelError);
    CHECK_THROWS_AS(t_q(2, 1.0, 0.1), ModelError);
}

TEST_CASE("t_q: N=16 matches the quadrature oracle within 3 standard errors") {
    uint32_t N = 16;
    uint32_t k = 2 * fault_bound(N);  // 10th of 15
    double oracle = order_stat_quadrature(k, N - 1, 1.0, 0.2);
    auto mc = t_q(N, 1.0, 0.2, 400000, 6);
    CHECK(std::abs(mc.value - oracle) <= 3 * mc.stderr_);
    // Sanity: the 10th of 15 sits above the mean.
    CHECK(oracle > 1.0);
}

TEST_CASE("t_q: standard error shrinks like inverse square root of samples") {
    auto small = t_q(8, 1.0, 0.3, 20000, 7);
    auto large = t_q(8, 1.0, 0.3, 320000, 7);
    CHECK(large.stderr_ < small.stderr_);
    CHECK(large.stderr_ == Catch::Approx(small.stderr_ / 4.0).margin(small.stderr_ * 0.2));
}

TEST_CASE("t_s: formula collapse and monotonicity") {
    ModelParams p;
    p.N = 4;
    p.mu = 2.0;
    p.sigma = 0.0;
    p.t_cpu = 0;
    p.block_bytes = 0;
    p.bandwidth = 0;
    CHECK(t_s(p) == 2.0);  // only the quorum wait remains

    ModelParams q = p;
    q.t_cpu = 0.5;
    CHECK(t_s(q) == Catch::Approx(2.0 + 1.5));
    q.block_bytes = 1e6;
    q.bandwidth = 1e9;
    CHECK(t_s(q) > t_s(p) + 1.4);
    ModelParams r = q;
    r.mu = 3.0;
    CHECK(t_s(r) > t_s(q));
}

TEST_CASE("t_commit per protocol") {
    CHECK(t_commit(Protocol::HotStuff, 10.0) == 20.0);
    CHECK(t_commit(Protocol::TwoChainHotStuff, 10.0) == 10.0);
    CHECK(t_commit(Protocol::Streamlet, 10.0) == 10.0);
}

TEST_CASE("w_q: vanishing load, saturation error, near-pole blowup") {
    // rho -> 0 gives w -> 0.
    auto low = w_q(1.0, 400, 4, 2.0);
    CHECK(low.w_q < 1e-4);
    CHECK(low.rho < 1e-4);

    // rho >= 1 is an explicit saturation error.
    double sat = 400.0 / 2.0 * 1000.0;  // n / t_s
    CHECK_THROWS_AS(w_q(sat, 400, 4, 2.0), SaturatedError);

    // Just below the pole: finite but enormous.
    auto near = w_q(sat * (1 - 1e-9), 400, 4, 2.0);
    CHECK(near.rho < 1.0);
    CHECK(near.w_q > 1e6);
}

TEST_CASE("w_q matches an independent M/D/1 simulation at rho 0.3/0.6/0.9") {
    double service = 8.0;  // N * t_s
    double u = 1.0 / service;
    for (double rho : {0.3, 0.6, 0.9}) {
        double gamma = rho * u;
        // Translate back into the interface units: gamma = lambda/(nN)/1000.
        double lambda = gamma * 400.0 * 4.0 * 1000.0;
        auto w = w_q(lambda, 400, 4, 2.0);
        REQUIRE(w.rho == Catch::Approx(rho));
        double oracle = md1_wait_sim(gamma, service, 2000000, 11);
        CHECK(std::abs(w.w_q - oracle) / oracle < 0.05);
    }
}

TEST_CASE("predict_latency: collapse to 4*mu and exact term sum") {
    ModelParams p;
    p.N = 4;
    p.mu = 5.0;
    p.sigma = 0.0;
    p.t_cpu = 0;
    p.block_bytes = 0;
    p.lambda = 0;
    p.protocol = Protocol::HotStuff;
    auto out = predict_latency(p);
    CHECK(out.total == 20.0);  // mu + t_s + 2 t_s with t_s = mu
    CHECK(out.total == out.t_l + out.t_s + out.t_commit + out.w_q);
}

TEST_CASE("protocol ordering: HS minus 2CHS equals t_s; 2CHS equals streamlet") {
    ModelParams p;
    p.N = 8;
    p.mu = 2.0;
    p.sigma = 0.3;
    p.t_cpu = 0.1;
    p.lambda = 30000;
    p.n = 400;
    p.protocol = Protocol::HotStuff;
    auto hs = predict_latency(p);
    p.protocol = Protocol::TwoChainHotStuff;
    auto tc = predict_latency(p);
    p.protocol = Protocol::Streamlet;
    auto sl = predict_latency(p);
    CHECK(hs.total - tc.total == Catch::Approx(hs.t_s).epsilon(1e-12));
    CHECK(tc.total == sl.total);
}

TEST_CASE("curve is monotone and convex toward saturation") {
    ModelParams p;
    p.N = 4;
    p.mu = 1.0;
    p.sigma = 0.1;
    p.n = 400;
    auto curve = predict_curve(p, 0, 40);
    REQUIRE(curve.size() == 40);
    double prev = 0;
    for (const auto& cp : curve) {
        if (std::isinf(cp.total_ms)) break;
        CHECK(cp.total_ms >= prev);
        prev = cp.total_ms;
    }
    // Convexity near the pole: increments grow.
    size_t m = curve.size();
    while (m > 0 && std::isinf(curve[m - 1].total_ms)) --m;
    REQUIRE(m >= 4);
    double d1 = curve[m - 2].total_ms - curve[m - 3].total_ms;
    double d2 = curve[m - 1].total_ms - curve[m - 2].total_ms;
    CHECK(d2 > d1);
    // The last finite point sits close to the pole.
    CHECK(curve.back().rho >= 0.99);
}

TEST_CASE("calibration translates one-way link delays into round trips") {
    BenchConfig cfg;
    cfg.n = 4;
    cfg.net_mean = 0.5;
    cfg.net_std = 0.05;
    cfg.delay = 1.0;
    cfg.cpu = 0.02;
    cfg.bsize = 100;
    cfg.psize = 32;
    auto p = calibrate_from_config(cfg);
    CHECK(p.mu == Catch::Approx(3.0));  // 2*(0.5 + 1.0)
    CHECK(p.sigma == Catch::Approx(std::sqrt(2.0) * 0.05));
    CHECK(p.t_cpu == 0.02);
    CHECK(p.N == 4);
    CHECK(p.n == 100);
    CHECK(p.block_bytes > 100 * 32);
}

TEST_CASE("model params json round-trip") {
    ModelParams p;
    p.N = 8;
    p.lambda = 123;
    p.protocol = Protocol::Streamlet;
    auto j = p.to_json();
    auto back = ModelParams::from_json(j);
    CHECK(back.N == 8);
    CHECK(back.lambda == 123);
    CHECK(back.protocol == Protocol::Streamlet);
}
