#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cbft/message.hpp"

namespace cbft {

// Replica-to-replica mesh over TCP: length-prefixed frames, lazy connects,
// capped exponential reconnect back-off. Delivery is best effort; the
// protocols tolerate loss through timeouts.
class TcpTransport {
public:
    using Handler = std::function<void(Message)>;

    TcpTransport(ReplicaId self, std::map<ReplicaId, std::string> peers)
        : self_(self), peers_(std::move(peers)) {}

    ~TcpTransport() { stop(); }

    bool start(Handler handler) {
        handler_ = std::move(handler);
        auto [host, port] = split(peers_.at(self_));
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) return false;
        int one = 1;
        setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = INADDR_ANY;
        addr.sin_port = htons(static_cast<uint16_t>(port));
        if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
            listen(listen_fd_, 64) != 0) {
            close(listen_fd_);
            listen_fd_ = -1;
            return false;
        }
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
        sender_thread_ = std::thread([this] { sender_loop(); });
        return true;
    }

    void stop() {
        bool expected = true;
        if (!running_.compare_exchange_strong(expected, false)) return;
        if (listen_fd_ >= 0) {
            shutdown(listen_fd_, SHUT_RDWR);
            close(listen_fd_);
        }
        send_cv_.notify_all();
        if (accept_thread_.joinable()) accept_thread_.join();
        if (sender_thread_.joinable()) sender_thread_.join();
        {
            std::lock_guard lk(conn_mu_);
            for (auto& [id, fd] : out_fds_)
                if (fd >= 0) close(fd);
            out_fds_.clear();
        }
        for (auto& t : reader_threads_)
            if (t.joinable()) t.join();
    }

    void send(ReplicaId dst, const Message& m, double delay_ms = 0) {
        if (dst == self_ || !peers_.count(dst)) return;
        std::lock_guard lk(send_mu_);
        send_queue_.push_back({clock_ms() + delay_ms + extra_delay_ms_.load(), dst, m.encode()});
        send_cv_.notify_one();
    }

    void broadcast(const Message& m, double delay_ms = 0) {
        Bytes frame = m.encode();
        double at = clock_ms() + delay_ms + extra_delay_ms_.load();
        std::lock_guard lk(send_mu_);
        for (const auto& [id, ep] : peers_) {
            if (id == self_) continue;
            send_queue_.push_back({at, id, frame});
        }
        send_cv_.notify_one();
    }

    // Admin "slow" command: every future send leaves this node late.
    void set_extra_delay_ms(double ms) { extra_delay_ms_ = ms; }

private:
    struct Pending {
        double due_ms;
        ReplicaId dst;
        Bytes frame;
    };

    static double clock_ms() {
        using namespace std::chrono;
        return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
    }

    static std::pair<std::string, int> split(const std::string& ep) {
        auto pos = ep.rfind(':');
        if (pos == std::string::npos) return {ep, 0};
        return {ep.substr(0, pos), std::stoi(ep.substr(pos + 1))};
    }

    void accept_loop() {
        while (running_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (!running_) break;
                continue;
            }
            std::lock_guard lk(conn_mu_);
            reader_threads_.emplace_back([this, fd] { reader_loop(fd); });
        }
    }

    void reader_loop(int fd) {
        std::vector<uint8_t> len_buf(4);
        while (running_) {
            if (!read_exact(fd, len_buf.data(), 4)) break;
            uint32_t len = (uint32_t(len_buf[0]) << 24) | (uint32_t(len_buf[1]) << 16) |
                           (uint32_t(len_buf[2]) << 8) | uint32_t(len_buf[3]);
            if (len == 0 || len > (64u << 20)) break;
            Bytes frame(len);
            if (!read_exact(fd, frame.data(), len)) break;
            auto msg = Message::decode(frame);
            if (msg && handler_) handler_(std::move(*msg));
            // Undecodable frames are dropped; the connection stays up.
        }
        close(fd);
    }

    static bool read_exact(int fd, uint8_t* buf, size_t n) {
        size_t got = 0;
        while (got < n) {
            ssize_t r = ::recv(fd, buf + got, n - got, 0);
            if (r <= 0) return false;
            got += static_cast<size_t>(r);
        }
        return true;
    }

    void sender_loop() {
        std::unique_lock lk(send_mu_);
        while (running_) {
            if (send_queue_.empty()) {
                send_cv_.wait_for(lk, std::chrono::milliseconds(50));
                continue;
            }
            // Earliest due first.
            auto it = std::min_element(
                send_queue_.begin(), send_queue_.end(),
                [](const Pending& a, const Pending& b) { return a.due_ms < b.due_ms; });
            double now = clock_ms();
            if (it->due_ms > now) {
                send_cv_.wait_for(lk, std::chrono::duration<double, std::milli>(it->due_ms - now));
                continue;
            }
            Pending p = std::move(*it);
            send_queue_.erase(it);
            lk.unlock();
            write_frame(p.dst, p.frame);
            lk.lock();
        }
    }

    void write_frame(ReplicaId dst, const Bytes& frame) {
        int fd = connect_to(dst);
        if (fd < 0) return;  // dropped; protocols recover via timeouts
        uint8_t hdr[4] = {static_cast<uint8_t>(frame.size() >> 24),
                          static_cast<uint8_t>(frame.size() >> 16),
                          static_cast<uint8_t>(frame.size() >> 8),
                          static_cast<uint8_t>(frame.size())};
        if (!write_all(fd, hdr, 4) || !write_all(fd, frame.data(), frame.size())) {
            std::lock_guard lk(conn_mu_);
            close(fd);
            out_fds_[dst] = -1;
        }
    }

    static bool write_all(int fd, const uint8_t* buf, size_t n) {
        size_t sent = 0;
        while (sent < n) {
            ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
            if (r <= 0) return false;
            sent += static_cast<size_t>(r);
        }
        return true;
    }

    int connect_to(ReplicaId dst) {
        {
            std::lock_guard lk(conn_mu_);
            auto it = out_fds_.find(dst);
            if (it != out_fds_.end() && it->second >= 0) return it->second;
        }
        auto now = std::chrono::steady_clock::now();
        {
            std::lock_guard lk(conn_mu_);
            auto& b = backoff_[dst];
            if (now < b.next_attempt) return -1;
        }
        auto [host, port] = split(peers_.at(dst));
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) return -1;
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<uint16_t>(port));
        if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            hostent* he = gethostbyname(host.c_str());
            if (!he) {
                close(fd);
                return -1;
            }
            std::memcpy(&addr.sin_addr, he->h_addr, sizeof(addr.sin_addr));
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            close(fd);
            std::lock_guard lk(conn_mu_);
            auto& b = backoff_[dst];
            b.delay_ms = std::min(b.delay_ms == 0 ? 100.0 : b.delay_ms * 2, 3200.0);
            b.next_attempt = now + std::chrono::milliseconds(static_cast<int>(b.delay_ms));
            return -1;
        }
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::lock_guard lk(conn_mu_);
        backoff_[dst] = {};
        out_fds_[dst] = fd;
        return fd;
    }

    struct Backoff {
        double delay_ms = 0;
        std::chrono::steady_clock::time_point next_attempt{};
    };

    ReplicaId self_;
    std::map<ReplicaId, std::string> peers_;
    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::atomic<double> extra_delay_ms_{0};
    std::thread accept_thread_;
    std::thread sender_thread_;
    std::vector<std::thread> reader_threads_;
    std::mutex conn_mu_;
    std::map<ReplicaId, int> out_fds_;
    std::map<ReplicaId, Backoff> backoff_;
    std::mutex send_mu_;
    std::condition_variable send_cv_;
    std::deque<Pending> send_queue_;
};

}  // namespace cbft
