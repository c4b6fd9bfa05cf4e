#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "softarm/session.hpp"

namespace softarm {

inline constexpr unsigned short kDefaultPort = 8765;

/// Port from SOFTARM_PORT, else the built-in default.
inline unsigned short default_port()
{
    const char* env = std::getenv("SOFTARM_PORT");
    if (!env || !*env) return kDefaultPort;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) throw ConfigurationError("SOFTARM_PORT must be a port number");
    return static_cast<unsigned short>(v);
}

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = kDefaultPort;  // 0 picks a free port
    double realtime_factor = 1.0;        // sim seconds per wall second; 0 runs flat out
};

namespace detail {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

/// One WebSocket client. Lives on the network thread only. Replies are
/// queued in order; snapshots keep a single slot, so a slow client skips
/// stale frames instead of queueing them.
class Client : public std::enable_shared_from_this<Client> {
public:
    using Sink = std::function<void(std::weak_ptr<Client>, std::string)>;
    using Drop = std::function<void(const std::shared_ptr<Client>&)>;

    Client(tcp::socket socket, Sink sink, Drop drop)
        : ws_(std::move(socket)), sink_(std::move(sink)), drop_(std::move(drop))
    {
    }

    void start()
    {
        http::async_read(ws_.next_layer(), buffer_, request_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
    }

    void reply(std::string text)
    {
        replies_.push_back(std::make_shared<const std::string>(std::move(text)));
        pump();
    }

    void offer(const std::shared_ptr<const std::string>& snapshot)
    {
        if (!subscribed_) return;
        pending_ = snapshot;
        pump();
    }

    void subscribe() { subscribed_ = true; }

    void close()
    {
        beast::error_code ec;
        ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_.next_layer().close(ec);
    }

private:
    void on_request(beast::error_code ec)
    {
        if (ec) return drop_(shared_from_this());
        if (!ws::is_upgrade(request_) || request_.target() != "/session") {
            auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, request_.version());
            res->set(http::field::content_type, "text/plain");
            res->body() = "websocket endpoint is /session\n";
            res->prepare_payload();
            http::async_write(ws_.next_layer(), *res,
                              [self = shared_from_this(), res](beast::error_code, std::size_t) {
                                  self->close();
                                  self->drop_(self);
                              });
            return;
        }
        ws_.text(true);
        ws_.async_accept(request_, [self = shared_from_this()](beast::error_code e) {
            if (e) return self->drop_(self);
            self->read();
        });
    }

    void read()
    {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->drop_(self);
            self->sink_(self, beast::buffers_to_string(self->buffer_.data()));
            self->buffer_.consume(self->buffer_.size());
            self->read();
        });
    }

    void pump()
    {
        if (writing_) return;
        std::shared_ptr<const std::string> next;
        if (!replies_.empty()) {
            next = replies_.front();
            replies_.pop_front();
        } else if (pending_) {
            next = std::move(pending_);
            pending_.reset();
        } else {
            return;
        }
        writing_ = true;
        ws_.async_write(asio::buffer(*next), [self = shared_from_this(), next](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            if (ec) return self->drop_(self);
            self->pump();
        });
    }

    ws::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    Sink sink_;
    Drop drop_;
    std::deque<std::shared_ptr<const std::string>> replies_;
    std::shared_ptr<const std::string> pending_;
    bool writing_ = false;
    bool subscribed_ = false;
};

}  // namespace detail

/// Serves one session on the WebSocket endpoint `/session`. The simulation
/// runs on its own worker and owns the session outright; the network thread
/// forwards commands to it through a queue and fans snapshots out to
/// clients. Wall-clock pacing only decides how many steps to take, never
/// their content.
class SessionServer {
public:
    SessionServer(Scenario scenario, ServerOptions opt)
        : session_(std::move(scenario)), opt_(std::move(opt)), acceptor_(io_)
    {
        if (!(opt_.realtime_factor >= 0.0) || !std::isfinite(opt_.realtime_factor))
            throw ConfigurationError("realtime factor must be finite and non-negative");
        namespace asio = detail::asio;
        const detail::tcp::endpoint ep(asio::ip::make_address(opt_.address), opt_.port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
        session_.on_snapshot = [this](const Snapshot& s) { broadcast(s.text); };
    }

    SessionServer(const SessionServer&) = delete;
    SessionServer& operator=(const SessionServer&) = delete;

    ~SessionServer() { stop(); }

    unsigned short port() const { return port_; }

    void start()
    {
        accept();
        net_ = std::thread([this] { io_.run(); });
        sim_ = std::thread([this] { loop(); });
    }

    /// Stops both workers and closes every client.
    void stop()
    {
        if (stopping_.exchange(true)) return;
        {
            std::lock_guard lock(mutex_);
            wake_.notify_all();
        }
        if (sim_.joinable()) sim_.join();
        detail::asio::post(io_, [this] {
            close_all();
            io_.stop();
        });
        if (net_.joinable()) net_.join();
    }

    /// Blocks until the session receives `stop` or stop() is called.
    void wait()
    {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [this] { return stopping_.load() || finished_; });
    }

    /// As wait(), giving up after `timeout`; true when finished.
    bool wait_for(std::chrono::milliseconds timeout)
    {
        std::unique_lock lock(mutex_);
        return wake_.wait_for(lock, timeout, [this] { return stopping_.load() || finished_; });
    }

    double sim_time() const { return sim_time_.load(); }
    std::size_t client_count() const { return clients_count_.load(); }

private:
    struct Inbound {
        std::weak_ptr<detail::Client> from;
        std::string text;
    };

    void accept()
    {
        acceptor_.async_accept([this](boost::beast::error_code ec, detail::tcp::socket socket) {
            if (ec) return;
            auto c = std::make_shared<detail::Client>(
                std::move(socket),
                [this](std::weak_ptr<detail::Client> from, std::string text) {
                    std::lock_guard lock(mutex_);
                    inbox_.push_back({std::move(from), std::move(text)});
                    wake_.notify_all();
                },
                [this](const std::shared_ptr<detail::Client>& who) {
                    clients_.erase(who);
                    clients_count_ = clients_.size();
                });
            clients_.insert(c);
            clients_count_ = clients_.size();
            c->start();
            accept();
        });
    }

    void close_all()
    {
        boost::beast::error_code ec;
        acceptor_.close(ec);
        for (const auto& c : clients_) c->close();
        clients_.clear();
        clients_count_ = 0;
    }

    void broadcast(std::shared_ptr<const std::string> text)
    {
        detail::asio::post(io_, [this, text] {
            for (const auto& c : clients_) c->offer(text);
        });
    }

    void handle(const Inbound& in)
    {
        std::string type;
        try {
            const auto j = nlohmann::json::parse(in.text);
            if (j.is_object() && j.contains("type") && j["type"].is_string()) type = j["type"];
        } catch (const nlohmann::json::exception&) {
        }
        const Reply r = session_.command_text(in.text);
        auto reply = std::make_shared<const std::string>(r.to_json(type).dump());
        // a hello subscribes the client and gets the current state at once
        std::shared_ptr<const std::string> first;
        if (type == "hello" && r.ok) first = session_.snapshot().text;
        detail::asio::post(io_, [from = in.from, reply, first] {
            auto c = from.lock();
            if (!c) return;
            c->reply(*reply);
            if (first) {
                c->subscribe();
                c->offer(first);
            }
        });
    }

    void loop()
    {
        using clock = std::chrono::steady_clock;
        const double dt = session_.dt();
        double budget = 0.0;
        auto last = clock::now();
        bool fault_sent = false;
        while (!stopping_) {
            std::deque<Inbound> batch;
            {
                std::unique_lock lock(mutex_);
                batch.swap(inbox_);
            }
            for (const auto& in : batch) handle(in);

            bool moved = false;
            if (opt_.realtime_factor == 0.0) {
                for (int i = 0; i < 256; ++i)
                    if (!(moved = session_.advance())) break;
            } else {
                const auto now = clock::now();
                budget += opt_.realtime_factor * std::chrono::duration<double>(now - last).count();
                last = now;
                budget = std::min(budget, 0.05 * opt_.realtime_factor + dt);  // no catch-up spiral
                int steps = 0;
                while (budget >= dt) {
                    if (!(moved = session_.advance())) {
                        budget = 0.0;
                        break;
                    }
                    budget -= dt;
                    if (++steps % 512 == 0 && has_inbox()) break;
                }
            }
            sim_time_ = session_.time();
            if (session_.fault() && !fault_sent) {
                fault_sent = true;
                broadcast(session_.snapshot().text);
            }
            if (session_.stopped()) {
                std::lock_guard lock(mutex_);
                finished_ = true;
                wake_.notify_all();
            }
            if (opt_.realtime_factor == 0.0 && moved) continue;
            std::unique_lock lock(mutex_);
            wake_.wait_for(lock, std::chrono::milliseconds(1), [this] { return stopping_.load() || !inbox_.empty(); });
        }
    }

    bool has_inbox()
    {
        std::lock_guard lock(mutex_);
        return !inbox_.empty();
    }

    Session session_;  // touched by the simulation worker only once started
    ServerOptions opt_;
    detail::asio::io_context io_;
    detail::tcp::acceptor acceptor_;
    unsigned short port_ = 0;
    std::set<std::shared_ptr<detail::Client>> clients_;  // network thread only

    std::mutex mutex_;
    std::condition_variable wake_;
    std::deque<Inbound> inbox_;
    bool finished_ = false;

    std::atomic<bool> stopping_{false};
    std::atomic<double> sim_time_{0.0};
    std::atomic<std::size_t> clients_count_{0};
    std::thread net_;
    std::thread sim_;
};

}  // namespace softarm
