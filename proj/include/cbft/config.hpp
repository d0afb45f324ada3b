#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbft/byzantine.hpp"
#include "cbft/pacemaker.hpp"
#include "cbft/safety.hpp"

namespace cbft {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One JSON file distributed to every node. The core parameter set keeps its
// classic names (address, master, strategy, byzNo, bsize, memsize, psize,
// delay, timeout, runtime, concurrency); the rest are knobs of this
// implementation: protocol, transport, seed, lambda, and the simulated
// network/CPU model.
struct BenchConfig {
    // Core parameters.
    std::map<uint32_t, std::string> address;  // replica id -> host:port
    uint32_t master = 0;        // static leader id; 0 = rotating
    std::string strategy = "silence";
    uint32_t byzNo = 0;
    uint32_t bsize = 400;       // txs per block
    uint32_t memsize = 1000;    // mempool capacity
    uint32_t psize = 0;         // tx payload bytes
    double delay = 0;           // extra per-message delay, ms
    double timeout = 100;       // view timeout, ms
    double runtime = 30;        // client run time, seconds
    uint32_t concurrency = 10;  // number of concurrent clients

    // Implementation knobs.
    std::string protocol = "hotstuff";
    std::string transport = "simulation";  // or "sockets"
    uint64_t seed = 1;
    double lambda = 0;          // offered load, tx/s (0 = no workload)
    uint32_t n = 0;             // replica count when no address map is given
    uint64_t views = 0;         // view budget for simulations (0 = derive from runtime)
    double net_mean = 0.5;      // one-way link delay mean, ms
    double net_std = 0.05;      // one-way link delay std-dev, ms
    double bandwidth = 0;       // bytes/s through a NIC (0 = unlimited)
    double cpu = 0;             // per-crypto-op delay, ms (simulation)
    std::string leader_policy = "roundrobin";  // or "random"
    bool responsive = true;
    std::string crypto = "";    // "null" | "secp256k1"; default depends on transport
    std::vector<uint64_t> attack_views;  // restrict the attack to these views
    std::vector<uint32_t> byz_ids;       // explicit placement for scripted runs

    uint32_t replica_count() const {
        if (!address.empty()) return static_cast<uint32_t>(address.size());
        return n;
    }

    Protocol protocol_enum() const {
        auto p = protocol_from_name(protocol);
        if (!p) throw ConfigError("protocol: unknown value '" + protocol + "'");
        return *p;
    }

    AttackKind strategy_enum() const {
        auto a = attack_from_name(strategy);
        if (!a) throw ConfigError("strategy: unknown value '" + strategy + "'");
        return *a;
    }

    LeaderPolicy leader_policy_enum() const {
        if (leader_policy == "roundrobin" || leader_policy == "round-robin")
            return LeaderPolicy::RoundRobin;
        if (leader_policy == "random") return LeaderPolicy::SeededRandom;
        throw ConfigError("leader_policy: unknown value '" + leader_policy + "'");
    }

    std::string effective_crypto() const {
        if (!crypto.empty()) return crypto;
        return transport == "sockets" ? "secp256k1" : "null";
    }

    void validate() const {
        uint32_t nn = replica_count();
        if (nn < 4) throw ConfigError("n/address: at least 4 replicas required");
        if (master != 0 && master >= nn) throw ConfigError("master: id out of range");
        if (byzNo > fault_bound(nn))
            throw ConfigError("byzNo: exceeds the fault bound (N-1)/3");
        if (bsize == 0) throw ConfigError("bsize: must be positive");
        if (memsize == 0) throw ConfigError("memsize: must be positive");
        if (timeout <= 0) throw ConfigError("timeout: must be positive");
        if (runtime < 0) throw ConfigError("runtime: must be non-negative");
        if (delay < 0) throw ConfigError("delay: must be non-negative");
        if (lambda < 0) throw ConfigError("lambda: must be non-negative");
        if (net_mean < 0 || net_std < 0) throw ConfigError("net_mean/net_std: must be non-negative");
        if (bandwidth < 0) throw ConfigError("bandwidth: must be non-negative");
        if (transport != "simulation" && transport != "sockets")
            throw ConfigError("transport: must be 'simulation' or 'sockets'");
        if (transport == "sockets" && address.empty())
            throw ConfigError("address: required in sockets mode");
        protocol_enum();
        strategy_enum();
        leader_policy_enum();
        std::string c = effective_crypto();
        if (c != "null" && c != "secp256k1") throw ConfigError("crypto: unknown value '" + c + "'");
        if (transport == "simulation" && c != "null")
            throw ConfigError("crypto: simulation mode requires null crypto for determinism");
    }

    // Byzantine replicas occupy the top ids so placement is reproducible;
    // scripted experiments may pin them explicitly instead.
    bool is_byzantine(ReplicaId id) const {
        if (!byz_ids.empty())
            return std::find(byz_ids.begin(), byz_ids.end(), id) != byz_ids.end();
        uint32_t nn = replica_count();
        return byzNo > 0 && id >= nn - byzNo;
    }

    json to_json() const {
        json j;
        json addr = json::object();
        for (const auto& [id, ep] : address) addr[std::to_string(id)] = ep;
        j["address"] = addr;
        j["master"] = master;
        j["strategy"] = strategy;
        j["byzNo"] = byzNo;
        j["bsize"] = bsize;
        j["memsize"] = memsize;
        j["psize"] = psize;
        j["delay"] = delay;
        j["timeout"] = timeout;
        j["runtime"] = runtime;
        j["concurrency"] = concurrency;
        j["protocol"] = protocol;
        j["transport"] = transport;
        j["seed"] = seed;
        j["lambda"] = lambda;
        j["n"] = n;
        j["views"] = views;
        j["net_mean"] = net_mean;
        j["net_std"] = net_std;
        j["bandwidth"] = bandwidth;
        j["cpu"] = cpu;
        j["leader_policy"] = leader_policy;
        j["responsive"] = responsive;
        j["crypto"] = effective_crypto();
        j["attack_views"] = attack_views;
        j["byz_ids"] = byz_ids;
        return j;
    }

    static BenchConfig from_json(const json& j) {
        BenchConfig c;
        auto get = [&](const char* key, auto& out) {
            if (!j.contains(key)) return;
            try {
                out = j.at(key).get<std::decay_t<decltype(out)>>();
            } catch (const json::exception&) {
                throw ConfigError(std::string(key) + ": wrong type");
            }
        };
        if (j.contains("address")) {
            if (!j["address"].is_object() && !j["address"].is_null())
                throw ConfigError("address: must be an object of id -> host:port");
            if (j["address"].is_object()) {
                for (auto& [k, v] : j["address"].items()) {
                    uint32_t id;
                    try {
                        id = static_cast<uint32_t>(std::stoul(k));
                    } catch (...) {
                        throw ConfigError("address: non-numeric replica id '" + k + "'");
                    }
                    if (!v.is_string()) throw ConfigError("address: endpoint must be a string");
                    c.address[id] = v.get<std::string>();
                }
            }
        }
        get("master", c.master);
        get("strategy", c.strategy);
        get("byzNo", c.byzNo);
        get("bsize", c.bsize);
        get("memsize", c.memsize);
        get("psize", c.psize);
        get("delay", c.delay);
        get("timeout", c.timeout);
        get("runtime", c.runtime);
        get("concurrency", c.concurrency);
        get("protocol", c.protocol);
        get("transport", c.transport);
        get("seed", c.seed);
        get("lambda", c.lambda);
        get("n", c.n);
        get("views", c.views);
        get("net_mean", c.net_mean);
        get("net_std", c.net_std);
        get("bandwidth", c.bandwidth);
        get("cpu", c.cpu);
        get("leader_policy", c.leader_policy);
        get("responsive", c.responsive);
        get("crypto", c.crypto);
        get("attack_views", c.attack_views);
        get("byz_ids", c.byz_ids);
        return c;
    }
};

}  // namespace cbft
