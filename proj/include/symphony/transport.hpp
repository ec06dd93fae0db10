#pragma once

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "symphony/errors.hpp"
#include "symphony/protocol.hpp"
#include "symphony/util.hpp"

namespace symphony::net {

// Delivery callback: one frame payload (the JSON bytes inside the length
// prefix). Handlers run on the transport's dispatch threads and must not
// block on long work.
using FrameHandler = std::function<void(const std::string& payload)>;

class Transport {
public:
    virtual ~Transport() = default;
    // Starts receiving for `address` ("host:port"). Throws StartupError when
    // the address cannot be claimed.
    virtual void bind(const std::string& address, FrameHandler handler) = 0;
    virtual void unbind(const std::string& address) = 0;
    // Sends one framed payload; false when the peer is unreachable.
    virtual bool send(const std::string& to_address, const std::string& payload) = 0;
};

// ---------------------------------------------------------------------------
// In-process transport. Frames cross the hub as the exact wire bytes
// (4-byte length prefix + payload) and are re-parsed by the same FrameReader
// the TCP path uses, so message fidelity is byte-identical.

class MemoryHub {
public:
    MemoryHub() = default;
    ~MemoryHub() {
        std::vector<std::string> addresses;
        {
            std::lock_guard lock(mutex_);
            for (auto& [addr, inbox] : inboxes_) addresses.push_back(addr);
        }
        for (const auto& addr : addresses) unbind(addr);
    }

    void bind(const std::string& address, FrameHandler handler) {
        std::unique_lock lock(mutex_);
        if (inboxes_.count(address)) {
            throw StartupError("address already bound in memory hub: " + address);
        }
        auto inbox = std::make_shared<Inbox>();
        inbox->handler = std::move(handler);
        inboxes_[address] = inbox;
        lock.unlock();
        inbox->worker = std::thread([inbox] { inbox->run(); });
    }

    void unbind(const std::string& address) {
        std::shared_ptr<Inbox> inbox;
        {
            std::lock_guard lock(mutex_);
            auto it = inboxes_.find(address);
            if (it == inboxes_.end()) return;
            inbox = it->second;
            inboxes_.erase(it);
        }
        inbox->stop();
        if (inbox->worker.joinable()) inbox->worker.join();
    }

    bool send(const std::string& to_address, const std::string& payload) {
        std::shared_ptr<Inbox> inbox;
        {
            std::lock_guard lock(mutex_);
            auto it = inboxes_.find(to_address);
            if (it == inboxes_.end()) return false;
            inbox = it->second;
        }
        return inbox->push(protocol::frame(payload));
    }

private:
    struct Inbox {
        std::mutex m;
        std::condition_variable cv;
        std::deque<std::string> queue;  // raw framed bytes
        bool stopped = false;
        FrameHandler handler;
        std::thread worker;

        bool push(std::string framed) {
            {
                std::lock_guard lock(m);
                if (stopped) return false;
                queue.push_back(std::move(framed));
            }
            cv.notify_one();
            return true;
        }

        void stop() {
            {
                std::lock_guard lock(m);
                stopped = true;
            }
            cv.notify_one();
        }

        void run() {
            protocol::FrameReader reader;
            while (true) {
                std::string framed;
                {
                    std::unique_lock lock(m);
                    cv.wait(lock, [this] { return stopped || !queue.empty(); });
                    if (queue.empty()) return;  // stopped and drained
                    framed = std::move(queue.front());
                    queue.pop_front();
                }
                for (auto& payload : reader.feed(framed)) {
                    handler(payload);
                }
            }
        }
    };

    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Inbox>> inboxes_;
};

// Per-node facade over a shared hub.
class MemoryTransport final : public Transport {
public:
    explicit MemoryTransport(std::shared_ptr<MemoryHub> hub) : hub_(std::move(hub)) {}

    void bind(const std::string& address, FrameHandler handler) override {
        hub_->bind(address, std::move(handler));
        bound_ = address;
    }

    void unbind(const std::string& address) override { hub_->unbind(address); }

    bool send(const std::string& to_address, const std::string& payload) override {
        return hub_->send(to_address, payload);
    }

private:
    std::shared_ptr<MemoryHub> hub_;
    std::string bound_;
};

// ---------------------------------------------------------------------------
// TCP transport: persistent connections, length-prefixed framing, one reader
// thread per accepted connection.

class TcpTransport final : public Transport {
public:
    TcpTransport() = default;
    ~TcpTransport() override { close_all(); }

    void bind(const std::string& address, FrameHandler handler) override {
        const auto [host, port] = parse_address(address);
        handler_ = std::move(handler);

        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw StartupError("socket() failed");
        int on = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &on, sizeof(on));

        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw StartupError("invalid listen host: " + host);
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw StartupError("cannot bind " + address + ": " + std::strerror(errno));
        }
        if (::listen(listen_fd_, 64) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw StartupError("listen() failed on " + address);
        }
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    void unbind(const std::string&) override { close_all(); }

    bool send(const std::string& to_address, const std::string& payload) override {
        const std::string framed = protocol::frame(payload);
        std::shared_ptr<Connection> conn = connection_to(to_address);
        if (!conn) return false;
        if (write_frame(*conn, framed)) return true;
        // stale connection: drop it and retry on a fresh one
        drop_connection(to_address);
        conn = connection_to(to_address);
        return conn && write_frame(*conn, framed);
    }

private:
    struct Connection {
        int fd = -1;
        std::mutex write_mutex;
    };

    static std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
        const auto colon = address.rfind(':');
        if (colon == std::string::npos) throw ValidationError("address needs host:port");
        const std::string host = address.substr(0, colon);
        const int port = std::stoi(address.substr(colon + 1));
        if (port < 1 || port > 65535) throw ValidationError("port out of range");
        return {host, static_cast<std::uint16_t>(port)};
    }

    void accept_loop() {
        while (running_) {
            sockaddr_in peer{};
            socklen_t len = sizeof(peer);
            int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
            if (fd < 0) {
                if (!running_) break;
                continue;
            }
            std::lock_guard lock(readers_mutex_);
            reader_threads_.emplace_back([this, fd] { read_loop(fd); });
            inbound_fds_.push_back(fd);
        }
    }

    void read_loop(int fd) {
        protocol::FrameReader reader;
        char buf[4096];
        while (running_) {
            const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
            if (n <= 0) break;
            std::vector<std::string> payloads;
            try {
                payloads = reader.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            } catch (const DecodeError&) {
                break;  // oversized/corrupt stream; drop the connection
            }
            for (auto& p : payloads) {
                if (handler_) handler_(p);
            }
        }
        ::close(fd);
    }

    std::shared_ptr<Connection> connection_to(const std::string& address) {
        {
            std::lock_guard lock(conn_mutex_);
            auto it = connections_.find(address);
            if (it != connections_.end()) return it->second;
        }
        std::pair<std::string, std::uint16_t> parsed;
        try {
            parsed = parse_address(address);
        } catch (const Error&) {
            return nullptr;
        }
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) return nullptr;
        timeval tv{5, 0};  // bounded sends; a dead peer must not wedge a chain
        ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
        int on = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &on, sizeof(on));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(parsed.second);
        if (::inet_pton(AF_INET, parsed.first.c_str(), &addr.sin_addr) != 1 ||
            ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            return nullptr;
        }
        auto conn = std::make_shared<Connection>();
        conn->fd = fd;
        std::lock_guard lock(conn_mutex_);
        connections_[address] = conn;
        return conn;
    }

    static bool write_frame(Connection& conn, const std::string& framed) {
        std::lock_guard lock(conn.write_mutex);
        std::size_t sent = 0;
        while (sent < framed.size()) {
            const ssize_t n = ::send(conn.fd, framed.data() + sent, framed.size() - sent,
                                     MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<std::size_t>(n);
        }
        return true;
    }

    void drop_connection(const std::string& address) {
        std::lock_guard lock(conn_mutex_);
        auto it = connections_.find(address);
        if (it != connections_.end()) {
            ::close(it->second->fd);
            connections_.erase(it);
        }
    }

    void close_all() {
        if (!running_.exchange(false)) {
            if (listen_fd_ < 0) return;
        }
        if (listen_fd_ >= 0) {
            ::shutdown(listen_fd_, SHUT_RDWR);
            ::close(listen_fd_);
            listen_fd_ = -1;
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        {
            std::lock_guard lock(conn_mutex_);
            for (auto& [addr, conn] : connections_) ::close(conn->fd);
            connections_.clear();
        }
        std::vector<std::thread> readers;
        {
            std::lock_guard lock(readers_mutex_);
            for (int fd : inbound_fds_) ::shutdown(fd, SHUT_RDWR);
            inbound_fds_.clear();
            readers.swap(reader_threads_);
        }
        for (auto& t : readers) {
            if (t.joinable()) t.join();
        }
    }

    FrameHandler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;

    std::mutex conn_mutex_;
    std::map<std::string, std::shared_ptr<Connection>> connections_;

    std::mutex readers_mutex_;
    std::vector<std::thread> reader_threads_;
    std::vector<int> inbound_fds_;
};

} // namespace symphony::net
