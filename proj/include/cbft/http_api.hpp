#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cbft/node_service.hpp"

namespace cbft {

// Client-facing REST interface of a replica.
//   POST /transaction  body = payload bytes; blocks until the transaction
//                      commits, returns {block, view, latency_ms}
//   GET  /metrics      current counters
//   POST /slow         {"ms": <extra outbound delay>}
//   POST /crash        stop participating
class HttpApi {
public:
    HttpApi(NodeService& service, int port, double client_timeout_ms = 30000)
        : service_(service), port_(port), client_timeout_ms_(client_timeout_ms) {}

    ~HttpApi() { stop(); }

    bool start() {
        server_ = std::make_unique<httplib::Server>();

        server_->Post("/transaction", [this](const httplib::Request& req, httplib::Response& res) {
            Transaction tx;
            tx.client = static_cast<uint32_t>(std::stoul(req.get_param_value("client").empty()
                                                             ? "0"
                                                             : req.get_param_value("client")));
            tx.id = next_id_++;
            tx.submit_us = static_cast<uint64_t>(service_.now_ms() * 1000);
            tx.payload.assign(req.body.begin(), req.body.end());
            auto ack = service_.submit_transaction(tx, client_timeout_ms_);
            if (!ack) {
                res.status = 503;  // back-pressure or timeout: retriable
                res.set_content("{\"error\":\"not committed\"}", "application/json");
                return;
            }
            nlohmann::json j{{"block", ack->block.hex()},
                             {"view", ack->view},
                             {"latency_ms", ack->latency_ms}};
            res.set_content(j.dump(), "application/json");
        });

        server_->Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
            const auto& c = service_.node().counters();
            nlohmann::json j{{"view", service_.node().pacemaker().current_view()},
                             {"committed_blocks", c.committed_blocks},
                             {"committed_txs", c.committed_txs},
                             {"rejected_msgs", c.rejected_msgs},
                             {"recycled_txs", c.recycled_txs},
                             {"mempool", service_.node().mempool().size()},
                             {"committed_height", service_.node().forest().committed_height()}};
            res.set_content(j.dump(), "application/json");
        });

        server_->Post("/slow", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                auto j = nlohmann::json::parse(req.body);
                service_.slow(j.at("ms").get<double>());
                res.set_content("{\"ok\":true}", "application/json");
            } catch (...) {
                res.status = 400;
            }
        });

        server_->Post("/crash", [this](const httplib::Request&, httplib::Response& res) {
            service_.crash();
            res.set_content("{\"ok\":true}", "application/json");
        });

        if (!server_->bind_to_port("0.0.0.0", port_)) return false;
        thread_ = std::thread([this] { server_->listen_after_bind(); });
        return true;
    }

    void stop() {
        if (server_) server_->stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    NodeService& service_;
    int port_;
    double client_timeout_ms_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<uint64_t> next_id_{1};
};

// REST port convention: consensus port + 1000.
inline int http_port_for(const std::string& endpoint) {
    auto pos = endpoint.rfind(':');
    return std::stoi(endpoint.substr(pos + 1)) + 1000;
}

}  // namespace cbft
