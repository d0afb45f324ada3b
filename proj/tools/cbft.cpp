#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "cbft/http_api.hpp"
#include "cbft/model.hpp"
#include "cbft/node_service.hpp"
#include "cbft/sim.hpp"

using namespace cbft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStall = 3;

std::atomic<bool> g_stop{false};

BenchConfig load_config(const std::string& path) {
    if (path.empty()) return BenchConfig{};
    std::ifstream f(path);
    if (!f.good()) throw ConfigError("config file not found: " + path);
    json j;
    f >> j;
    return BenchConfig::from_json(j);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
}

void apply_preset(BenchConfig& cfg, const std::string& preset) {
    if (preset.empty()) return;
    if (preset == "happy-path") {
        cfg.byzNo = 0;
        cfg.views = cfg.views ? cfg.views : 10000;
    } else if (preset == "forking") {
        cfg.strategy = "forking";
        cfg.n = cfg.n ? cfg.n : 32;
        cfg.byzNo = cfg.byzNo ? cfg.byzNo : 4;
        cfg.views = cfg.views ? cfg.views : 1000;
    } else if (preset == "silence") {
        cfg.strategy = "silence";
        cfg.n = cfg.n ? cfg.n : 32;
        cfg.byzNo = cfg.byzNo ? cfg.byzNo : 4;
        cfg.timeout = 50;
        cfg.views = cfg.views ? cfg.views : 1000;
    } else if (preset == "responsiveness") {
        cfg.n = cfg.n ? cfg.n : 4;
        cfg.timeout = 10;
        cfg.views = 0;
    } else {
        throw ConfigError("unknown preset: " + preset);
    }
}

int run_simulate(BenchConfig cfg, const std::string& preset, const std::string& out,
                 const std::string& csv_dir) {
    apply_preset(cfg, preset);
    if (cfg.replica_count() == 0) cfg.n = 4;
    if (cfg.views == 0 && cfg.lambda == 0) cfg.views = 1000;
    cfg.transport = "simulation";
    cfg.validate();

    SimCluster sim(cfg);
    if (cfg.lambda > 0) sim.load_workload();
    if (preset == "responsiveness") {
        sim.add_fluctuation({2000, 12000, 10, 100});
        sim.schedule_crash(12000, cfg.replica_count() - 1);
        sim.set_record_commit_log(true);
        sim.run_until_ms(16000);
    } else if (cfg.views > 0) {
        sim.run_views(cfg.views, 1000.0 * 3600);
    } else {
        sim.run_until_ms(cfg.runtime * 1000.0 + 2000.0);
    }

    Report rep = sim.report();
    std::string dump = rep.to_json().dump(2);
    if (out.empty())
        std::cout << dump << "\n";
    else
        write_file(out, dump);
    if (!csv_dir.empty()) {
        std::filesystem::create_directories(csv_dir);
        write_file(csv_dir + "/blocks.csv", blocks_csv(sim.trace()));
        write_file(csv_dir + "/txs.csv", txs_csv(sim.trace()));
    }
    // Liveness stall: nothing committed inside the whole measured window.
    if (rep.committed_blocks_total == 0) {
        std::cerr << "liveness stall: no block committed\n";
        return kExitStall;
    }
    return kExitOk;
}

int run_bench_sweep(BenchConfig cfg, double max_frac, int points, const std::string& out_csv,
                    bool with_model) {
    if (cfg.replica_count() == 0) cfg.n = 4;
    cfg.transport = "simulation";
    cfg.views = 0;
    if (cfg.runtime <= 0 || cfg.runtime > 5) cfg.runtime = 2;  // virtual seconds per point
    cfg.validate();

    ModelParams mp = calibrate_from_config(cfg);
    double ts = t_s(mp);
    double sat = saturation_lambda(mp, ts);
    std::ostringstream csv;
    csv << "lambda,rho,throughput_tps,latency_mean_ms,latency_p50_ms,latency_p99_ms";
    if (with_model) csv << ",model_total_ms";
    csv << "\n";

    for (int i = 1; i <= points; ++i) {
        double frac = max_frac * i / points;
        BenchConfig point = cfg;
        point.lambda = sat * frac;
        SimCluster sim(point);
        sim.load_workload();
        sim.run_until_ms(point.runtime * 1000.0 + 3000.0);
        Report rep = sim.report();
        csv << point.lambda << ',' << frac << ',' << rep.throughput_tps << ','
            << rep.latency.mean << ',' << rep.latency.p50 << ',' << rep.latency.p99;
        if (with_model) {
            mp.lambda = point.lambda;
            try {
                csv << ',' << predict_latency(mp).total;
            } catch (const SaturatedError&) {
                csv << ",inf";
            }
        }
        csv << "\n";
        std::cerr << "lambda=" << point.lambda << " done: " << rep.throughput_tps << " tx/s, "
                  << rep.latency.mean << " ms\n";
        if (rep.rejected_txs > 0 && frac >= 1.0) break;  // past the wall
    }
    if (out_csv.empty())
        std::cout << csv.str();
    else
        write_file(out_csv, csv.str());
    return kExitOk;
}

int run_node(const BenchConfig& cfg, ReplicaId id) {
    cfg.validate();
    if (!cfg.address.count(id)) throw ConfigError("address: missing entry for this id");
    NodeOptions opt;
    opt.id = id;
    opt.n = cfg.replica_count();
    opt.protocol = cfg.protocol_enum();
    opt.timeout_ms = cfg.timeout;
    opt.bsize = cfg.bsize;
    opt.memsize = cfg.memsize;
    opt.master = cfg.master;
    opt.leader_policy = cfg.leader_policy_enum();
    opt.seed = cfg.seed;
    opt.responsive = cfg.responsive;
    if (cfg.is_byzantine(id)) {
        opt.attack.kind = cfg.strategy_enum();
        for (uint64_t v : cfg.attack_views) opt.attack.only_views.insert(v);
    }
    opt.crypto = cfg.effective_crypto() == "secp256k1"
                     ? std::static_pointer_cast<CryptoProvider>(
                           Secp256k1Crypto::from_seed(opt.n, cfg.seed))
                     : std::static_pointer_cast<CryptoProvider>(std::make_shared<NullCrypto>());

    NodeService service(opt, cfg.address);
    if (!service.start()) {
        std::cerr << "failed to bind " << cfg.address.at(id) << "\n";
        return 1;
    }
    HttpApi api(service, http_port_for(cfg.address.at(id)));
    if (!api.start()) {
        std::cerr << "failed to bind http port\n";
        return 1;
    }
    std::cout << "replica " << id << " on " << cfg.address.at(id) << ", http port "
              << http_port_for(cfg.address.at(id)) << "\n";
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    api.stop();
    service.stop();
    return kExitOk;
}

int run_client(const BenchConfig& cfg, double rate, double runtime_s, uint32_t concurrency) {
    cfg.validate();
    if (cfg.address.empty()) throw ConfigError("address: required for the client");
    std::vector<std::pair<std::string, int>> endpoints;
    for (const auto& [id, ep] : cfg.address) {
        auto pos = ep.rfind(':');
        endpoints.emplace_back(ep.substr(0, pos), http_port_for(ep));
    }

    std::atomic<uint64_t> ok{0}, failed{0};
    std::mutex lat_mu;
    std::vector<double> latencies;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<int64_t>(runtime_s * 1000));

    auto worker = [&](uint32_t wid) {
        std::mt19937_64 rng(cfg.seed + wid);
        std::exponential_distribution<double> gap(rate / concurrency / 1000.0);
        std::uniform_int_distribution<size_t> pick(0, endpoints.size() - 1);
        std::string payload(cfg.psize, 'x');
        while (std::chrono::steady_clock::now() < deadline && !g_stop) {
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(gap(rng)));
            auto& [host, port] = endpoints[pick(rng)];
            httplib::Client client(host, port);
            client.set_read_timeout(30, 0);
            auto t0 = std::chrono::steady_clock::now();
            auto resp = client.Post("/transaction?client=" + std::to_string(wid), payload,
                                    "application/octet-stream");
            if (resp && resp->status == 200) {
                double ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
                ++ok;
                std::lock_guard lk(lat_mu);
                latencies.push_back(ms);
            } else {
                ++failed;
            }
        }
    };
    std::vector<std::thread> threads;
    for (uint32_t i = 0; i < concurrency; ++i) threads.emplace_back(worker, i);
    for (auto& t : threads) t.join();

    std::sort(latencies.begin(), latencies.end());
    double mean = 0;
    for (double x : latencies) mean += x;
    if (!latencies.empty()) mean /= latencies.size();
    json j{{"committed", ok.load()},
           {"failed", failed.load()},
           {"throughput_tps", ok.load() / runtime_s},
           {"latency_ms",
            {{"mean", mean},
             {"p50", latencies.empty() ? 0 : latencies[latencies.size() / 2]},
             {"p99", latencies.empty()
                         ? 0
                         : latencies[std::min(latencies.size() - 1,
                                              static_cast<size_t>(latencies.size() * 0.99))]}}},
           {"config", cfg.to_json()}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

ModelParams params_from_files(const std::string& params_path, const std::string& config_path) {
    if (!params_path.empty()) {
        std::ifstream f(params_path);
        if (!f.good()) throw ConfigError("params file not found: " + params_path);
        json j;
        f >> j;
        return ModelParams::from_json(j);
    }
    BenchConfig cfg = load_config(config_path);
    return calibrate_from_config(cfg);
}

int run_calibrate(const std::string& config_path, const std::string& out) {
    BenchConfig cfg = load_config(config_path);
    ModelParams p = calibrate_from_config(cfg);
    if (cfg.transport == "sockets" || cfg.effective_crypto() == "secp256k1") {
        // Measure the signing stack instead of trusting the configured value.
        auto crypto = Secp256k1Crypto::from_seed(1, cfg.seed);
        Bytes msg(64, 0x5a);
        auto t0 = std::chrono::steady_clock::now();
        const int reps = 200;
        for (int i = 0; i < reps; ++i) {
            auto sig = crypto->sign(0, msg);
            (void)crypto->verify(0, msg, sig);
        }
        double per_op = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        (2.0 * reps);
        p.t_cpu = per_op;
    }
    std::string dump = p.to_json().dump(2);
    if (out.empty())
        std::cout << dump << "\n";
    else
        write_file(out, dump);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chained-BFT prototyping and evaluation framework"};
    app.require_subcommand(1);

    std::string config_path, preset, out, csv_dir, params_path, out_csv;
    uint32_t id = 0;
    double rate = 1000, runtime_s = 0, lambda_max = 0, max_frac = 1.1;
    int points = 12;
    uint32_t concurrency = 0;
    bool with_model = false;

    // Shared flag overrides; only applied when the user passes them.
    BenchConfig flags;
    auto add_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--protocol", flags.protocol, "hotstuff | 2chs | streamlet");
        cmd->add_option("--n", flags.n, "replica count (simulation)");
        cmd->add_option("--views", flags.views, "view budget (simulation)");
        cmd->add_option("--seed", flags.seed, "RNG seed");
        cmd->add_option("--lambda", flags.lambda, "offered load, tx/s");
        cmd->add_option("--byzno", flags.byzNo, "number of Byzantine replicas");
        cmd->add_option("--strategy", flags.strategy, "silence | forking");
        cmd->add_option("--timeout", flags.timeout, "view timeout, ms");
        cmd->add_option("--bsize", flags.bsize, "txs per block");
        cmd->add_option("--psize", flags.psize, "payload bytes per tx");
        cmd->add_option("--memsize", flags.memsize, "mempool capacity");
        cmd->add_option("--master", flags.master, "static leader id (0 = rotating)");
        cmd->add_option("--delay", flags.delay, "extra per-message delay, ms");
        cmd->add_option("--net-mean", flags.net_mean, "one-way link delay mean, ms");
        cmd->add_option("--net-std", flags.net_std, "one-way link delay std-dev, ms");
        cmd->add_option("--bandwidth", flags.bandwidth, "NIC bandwidth, bytes/s");
        cmd->add_option("--cpu", flags.cpu, "per-crypto-op delay, ms");
        cmd->add_option("--runtime", flags.runtime, "workload duration, s");
        cmd->add_option("--concurrency", flags.concurrency, "client concurrency");
        cmd->add_option("--leader-policy", flags.leader_policy, "roundrobin | random");
        cmd->add_flag("--responsive,!--no-responsive", flags.responsive,
                      "propose right after a view change");
    };
    auto merge_flags = [&](CLI::App* cmd, BenchConfig cfg) {
        auto take = [&](const char* name, auto member) {
            if (cmd->count(name)) cfg.*member = flags.*member;
        };
        take("--protocol", &BenchConfig::protocol);
        take("--n", &BenchConfig::n);
        take("--views", &BenchConfig::views);
        take("--seed", &BenchConfig::seed);
        take("--lambda", &BenchConfig::lambda);
        take("--byzno", &BenchConfig::byzNo);
        take("--strategy", &BenchConfig::strategy);
        take("--timeout", &BenchConfig::timeout);
        take("--bsize", &BenchConfig::bsize);
        take("--psize", &BenchConfig::psize);
        take("--memsize", &BenchConfig::memsize);
        take("--master", &BenchConfig::master);
        take("--delay", &BenchConfig::delay);
        take("--net-mean", &BenchConfig::net_mean);
        take("--net-std", &BenchConfig::net_std);
        take("--bandwidth", &BenchConfig::bandwidth);
        take("--cpu", &BenchConfig::cpu);
        take("--runtime", &BenchConfig::runtime);
        take("--concurrency", &BenchConfig::concurrency);
        take("--leader-policy", &BenchConfig::leader_policy);
        take("--responsive", &BenchConfig::responsive);
        return cfg;
    };

    auto* sim_cmd = app.add_subcommand("simulate", "deterministic in-process experiment");
    add_overrides(sim_cmd);
    sim_cmd->add_option("--preset", preset, "happy-path | forking | silence | responsiveness");
    sim_cmd->add_option("--out", out, "write the report JSON here");
    sim_cmd->add_option("--csv-dir", csv_dir, "write blocks.csv/txs.csv here");

    auto* sweep_cmd = app.add_subcommand("bench-sweep", "load sweep to the saturation wall");
    add_overrides(sweep_cmd);
    sweep_cmd->add_option("--max-frac", max_frac, "sweep up to this fraction of saturation");
    sweep_cmd->add_option("--points", points, "number of load points");
    sweep_cmd->add_option("--out", out_csv, "CSV output path");
    sweep_cmd->add_flag("--model", with_model, "overlay the analytic prediction");

    auto* node_cmd = app.add_subcommand("node", "run one replica on sockets");
    node_cmd->add_option("--config", config_path, "JSON config file")->required();
    node_cmd->add_option("--id", id, "replica id")->required();

    auto* client_cmd = app.add_subcommand("client", "drive workload against a cluster");
    client_cmd->add_option("--config", config_path, "JSON config file")->required();
    client_cmd->add_option("--rate", rate, "offered load, tx/s");
    client_cmd->add_option("--runtime", runtime_s, "duration, s");
    client_cmd->add_option("--concurrency", concurrency, "worker threads");

    auto* model_cmd = app.add_subcommand("model", "analytic latency model");
    auto* predict_cmd = model_cmd->add_subcommand("predict", "one latency prediction");
    predict_cmd->add_option("--params", params_path, "model params JSON");
    predict_cmd->add_option("--config", config_path, "derive params from a config");
    predict_cmd->add_option("--lambda", lambda_max, "offered load, tx/s");
    predict_cmd->add_option("--out", out, "output path");
    auto* curve_cmd = model_cmd->add_subcommand("curve", "latency/throughput curve");
    curve_cmd->add_option("--params", params_path, "model params JSON");
    curve_cmd->add_option("--config", config_path, "derive params from a config");
    curve_cmd->add_option("--lambda-max", lambda_max, "sweep limit, tx/s (0 = saturation)");
    curve_cmd->add_option("--points", points, "number of points");
    curve_cmd->add_option("--out", out_csv, "CSV output path");
    auto* mcal_cmd = model_cmd->add_subcommand("calibrate", "derive params from a config");
    mcal_cmd->add_option("--config", config_path, "JSON config file")->required();
    mcal_cmd->add_option("--out", out, "output path");

    auto* cal_cmd = app.add_subcommand("calibrate", "derive model params from a config");
    cal_cmd->add_option("--config", config_path, "JSON config file")->required();
    cal_cmd->add_option("--out", out, "output path");

    CLI11_PARSE(app, argc, argv);
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });

    try {
        if (sim_cmd->parsed()) {
            return run_simulate(merge_flags(sim_cmd, load_config(config_path)), preset, out,
                                csv_dir);
        }
        if (sweep_cmd->parsed()) {
            return run_bench_sweep(merge_flags(sweep_cmd, load_config(config_path)), max_frac,
                                   points, out_csv, with_model);
        }
        if (node_cmd->parsed()) return run_node(load_config(config_path), id);
        if (client_cmd->parsed()) {
            BenchConfig cfg = load_config(config_path);
            if (runtime_s <= 0) runtime_s = cfg.runtime;
            if (concurrency == 0) concurrency = cfg.concurrency;
            return run_client(cfg, rate, runtime_s, concurrency);
        }
        if (model_cmd->parsed()) {
            if (predict_cmd->parsed()) {
                ModelParams p = params_from_files(params_path, config_path);
                if (predict_cmd->count("--lambda")) p.lambda = lambda_max;
                std::string dump = predict_latency(p).to_json().dump(2);
                if (out.empty())
                    std::cout << dump << "\n";
                else
                    write_file(out, dump);
                return kExitOk;
            }
            if (curve_cmd->parsed()) {
                ModelParams p = params_from_files(params_path, config_path);
                auto curve = predict_curve(p, lambda_max, static_cast<uint32_t>(points));
                std::ostringstream csv;
                csv << "lambda,rho,total_ms,w_q_ms\n";
                for (const auto& cp : curve)
                    csv << cp.lambda << ',' << cp.rho << ',' << cp.total_ms << ',' << cp.w_q
                        << "\n";
                if (out_csv.empty())
                    std::cout << csv.str();
                else
                    write_file(out_csv, csv.str());
                return kExitOk;
            }
            if (mcal_cmd->parsed()) return run_calibrate(config_path, out);
            std::cerr << "model: choose predict | curve | calibrate\n";
            return kExitConfig;
        }
        if (cal_cmd->parsed()) return run_calibrate(config_path, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
