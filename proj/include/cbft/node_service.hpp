#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "cbft/node.hpp"
#include "cbft/tcp_transport.hpp"

namespace cbft {

struct CommitAck {
    BlockHash block;
    View view = 0;
    double latency_ms = 0;
};

// Wall-clock runtime around a Node for socket deployments. All state
// mutation happens on one loop thread; the transport, timer wheel and HTTP
// handlers only enqueue events.
class NodeService {
public:
    NodeService(const NodeOptions& opt, std::map<ReplicaId, std::string> peers,
                NodeObserver* observer = nullptr)
        : node_(opt, observer), transport_(opt.id, std::move(peers)) {}

    ~NodeService() { stop(); }

    bool start() {
        if (!transport_.start([this](Message m) { enqueue(Ev{EvKind::Msg, std::move(m)}); }))
            return false;
        running_ = true;
        epoch_ = std::chrono::steady_clock::now();
        loop_thread_ = std::thread([this] { loop(); });
        timer_thread_ = std::thread([this] { timer_loop(); });
        enqueue(Ev{EvKind::Start});
        return true;
    }

    void stop() {
        bool expected = true;
        if (!running_.compare_exchange_strong(expected, false)) return;
        queue_cv_.notify_all();
        timer_cv_.notify_all();
        if (loop_thread_.joinable()) loop_thread_.join();
        if (timer_thread_.joinable()) timer_thread_.join();
        transport_.stop();
        // Unblock any waiting clients.
        std::lock_guard lk(ack_mu_);
        for (auto& [k, p] : pending_acks_)
            p.set_exception(std::make_exception_ptr(std::runtime_error("node stopped")));
        pending_acks_.clear();
    }

    // Blocks until the transaction is committed locally or the deadline hits.
    std::optional<CommitAck> submit_transaction(const Transaction& tx, double timeout_ms) {
        std::future<CommitAck> fut;
        {
            std::lock_guard lk(ack_mu_);
            auto [it, fresh] = pending_acks_.try_emplace(tx.key());
            if (!fresh) return std::nullopt;  // duplicate in flight
            fut = it->second.get_future();
        }
        enqueue(Ev{EvKind::Submit, {}, tx});
        if (fut.wait_for(std::chrono::duration<double, std::milli>(timeout_ms)) !=
            std::future_status::ready) {
            std::lock_guard lk(ack_mu_);
            pending_acks_.erase(tx.key());
            return std::nullopt;  // client may retry
        }
        try {
            return fut.get();
        } catch (...) {
            return std::nullopt;
        }
    }

    void crash() { enqueue(Ev{EvKind::Crash}); }
    void slow(double extra_ms) { transport_.set_extra_delay_ms(extra_ms); }

    const Node& node() const { return node_; }
    double now_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_)
            .count();
    }

private:
    enum class EvKind { Start, Msg, Submit, Timer, Crash };
    struct Ev {
        EvKind kind;
        Message msg;
        Transaction tx;
        TimerKind tkind = TimerKind::ViewTimeout;
        View tview = 0;
    };

    void enqueue(Ev ev) {
        {
            std::lock_guard lk(queue_mu_);
            queue_.push_back(std::move(ev));
        }
        queue_cv_.notify_one();
    }

    void loop() {
        while (running_) {
            Ev ev;
            {
                std::unique_lock lk(queue_mu_);
                queue_cv_.wait(lk, [this] { return !queue_.empty() || !running_; });
                if (!running_) return;
                ev = std::move(queue_.front());
                queue_.pop_front();
            }
            double now = now_ms();
            Effects fx;
            switch (ev.kind) {
                case EvKind::Start: fx = node_.start(now); break;
                case EvKind::Msg: fx = node_.on_message(now, ev.msg); break;
                case EvKind::Submit: {
                    fx = node_.on_submit(now, ev.tx);
                    submit_times_[ev.tx.key()] = now;
                    break;
                }
                case EvKind::Timer: fx = node_.on_timer(now, ev.tkind, ev.tview); break;
                case EvKind::Crash: node_.crash(); break;
            }
            apply(fx, now);
        }
    }

    void apply(const Effects& fx, double now) {
        for (const auto& ob : fx.out) {
            if (ob.broadcast)
                transport_.broadcast(ob.msg);
            else
                transport_.send(ob.dst, ob.msg);
        }
        if (!fx.timers.empty()) {
            std::lock_guard lk(timer_mu_);
            for (const auto& tr : fx.timers)
                timers_.push_back({now + tr.delay_ms, tr.kind, tr.view});
            timer_cv_.notify_one();
        }
        for (const auto& cn : fx.commits) {
            for (const auto& tx : cn.block->payload) {
                std::promise<CommitAck> p;
                {
                    std::lock_guard lk(ack_mu_);
                    auto it = pending_acks_.find(tx.key());
                    if (it == pending_acks_.end()) continue;
                    p = std::move(it->second);
                    pending_acks_.erase(it);
                }
                CommitAck ack;
                ack.block = cn.block->id;
                ack.view = cn.at_view;
                auto ts = submit_times_.find(tx.key());
                ack.latency_ms = ts != submit_times_.end() ? now - ts->second : 0;
                if (ts != submit_times_.end()) submit_times_.erase(ts);
                p.set_value(ack);
            }
        }
        for (const auto& tx : fx.rejected_txs) {
            std::lock_guard lk(ack_mu_);
            auto it = pending_acks_.find(tx.key());
            if (it == pending_acks_.end()) continue;
            it->second.set_exception(
                std::make_exception_ptr(std::runtime_error("mempool full")));
            pending_acks_.erase(it);
        }
    }

    void timer_loop() {
        std::unique_lock lk(timer_mu_);
        while (running_) {
            if (timers_.empty()) {
                timer_cv_.wait_for(lk, std::chrono::milliseconds(20));
                continue;
            }
            auto it = std::min_element(timers_.begin(), timers_.end(),
                                       [](const Pend& a, const Pend& b) { return a.due < b.due; });
            double now = now_ms();
            if (it->due > now) {
                timer_cv_.wait_for(lk, std::chrono::duration<double, std::milli>(it->due - now));
                continue;
            }
            Pend p = *it;
            timers_.erase(it);
            lk.unlock();
            enqueue(Ev{EvKind::Timer, {}, {}, p.kind, p.view});
            lk.lock();
        }
    }

    struct Pend {
        double due;
        TimerKind kind;
        View view;
    };

    Node node_;
    TcpTransport transport_;
    std::atomic<bool> running_{false};
    std::chrono::steady_clock::time_point epoch_;
    std::thread loop_thread_;
    std::thread timer_thread_;
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<Ev> queue_;
    std::mutex timer_mu_;
    std::condition_variable timer_cv_;
    std::vector<Pend> timers_;
    std::mutex ack_mu_;
    std::unordered_map<uint64_t, std::promise<CommitAck>> pending_acks_;
    std::unordered_map<uint64_t, double> submit_times_;
};

}  // namespace cbft
