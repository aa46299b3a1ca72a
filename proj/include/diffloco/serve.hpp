#pragma once

// WebSocket front end for LiveSession. Needs Boost (Asio + Beast); not part of the core headers.

#include "diffloco/live.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <mutex>
#include <thread>

namespace diffloco {

struct ServeOptions {
    std::string host = "127.0.0.1";
    unsigned short port = 0; // 0 picks a free port
    double rate_hz = 30.0;
    std::uint64_t max_ticks = 0; // 0 runs until stop()
};

namespace detail {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

/// One connected viewer. Lives on the io thread only. Control messages (hello, errors) are queued;
/// frames go through a single slot that newer frames overwrite, so a slow reader only loses frames.
class WsClient : public std::enable_shared_from_this<WsClient> {
public:
    using OnText = std::function<void(const std::shared_ptr<WsClient>&, const std::string&)>;

    WsClient(tcp::socket socket, OnText on_text) : ws_(std::move(socket)), on_text_(std::move(on_text)) {}

    void start(std::function<std::string()> hello) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this(), hello = std::move(hello)](beast::error_code ec) {
            if (ec) return;
            self->open_ = true;
            self->send_control(hello());
            self->read();
        });
    }

    bool open() const { return open_; }
    std::uint64_t dropped_frames() const { return dropped_; }

    void send_control(std::string msg) {
        if (!open_) return;
        control_.push_back(std::move(msg));
        pump();
    }

    void offer_frame(std::shared_ptr<const std::string> frame) {
        if (!open_) return;
        if (frame_) ++dropped_;
        frame_ = std::move(frame);
        pump();
    }

    void close() {
        if (!open_) return;
        open_ = false;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).close();
    }

private:
    void read() {
        ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->open_ = false;
                return;
            }
            const std::string text = beast::buffers_to_string(self->in_.data());
            self->in_.consume(self->in_.size());
            self->on_text_(self, text);
            self->read();
        });
    }

    void pump() {
        if (writing_ || !open_) return;
        if (!control_.empty()) {
            out_ = std::make_shared<const std::string>(std::move(control_.front()));
            control_.pop_front();
        } else if (frame_) {
            out_ = std::move(frame_);
            frame_.reset();
        } else {
            return;
        }
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(*out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            self->out_.reset();
            if (ec) {
                self->open_ = false;
                return;
            }
            self->pump();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    OnText on_text_;
    beast::flat_buffer in_;
    std::deque<std::string> control_;
    std::shared_ptr<const std::string> frame_;
    std::shared_ptr<const std::string> out_;
    bool writing_ = false;
    bool open_ = false;
    std::uint64_t dropped_ = 0;
};

} // namespace detail

/// Fixed-rate simulation loop plus WebSocket broadcast. The loop thread never waits on the network:
/// it reads the targets mailbox once per tick and hands frames to the io thread through a latest-only slot.
class Server {
public:
    Server(Checkpoint ck, ServeOptions opt)
        : opt_(std::move(opt)), session_(std::move(ck), opt_.rate_hz), acceptor_(ioc_),
          bounds_(session_.checkpoint().config.goal_bounds), mailbox_(session_.targets()) {
        namespace net = detail::net;
        const detail::tcp::endpoint ep(net::ip::make_address(opt_.host), opt_.port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
        hello_ = session_.hello();
    }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;
    ~Server() { stop(); }

    unsigned short port() const { return port_; }
    std::uint64_t ticks() const { return ticks_.load(); }
    std::uint64_t errors() const { return errors_.load(); }

    Goal targets() const {
        std::lock_guard lk(mailbox_mu_);
        return mailbox_;
    }

    void start() {
        accept();
        io_thread_ = std::thread([this] { ioc_.run(); });
        sim_thread_ = std::thread([this] { loop(); });
    }

    /// Blocks until the loop finishes (max_ticks reached or stop()).
    void wait() {
        if (sim_thread_.joinable()) sim_thread_.join();
    }

    void stop() {
        running_ = false;
        wait();
        if (io_thread_.joinable()) {
            detail::net::post(ioc_, [this] {
                beast_close();
                ioc_.stop();
            });
            io_thread_.join();
        }
    }

private:
    void beast_close() {
        boost::system::error_code ec;
        acceptor_.close(ec);
        for (auto& c : clients_) c->close();
        clients_.clear();
    }

    void accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, detail::tcp::socket socket) {
            if (ec) return;
            auto client = std::make_shared<detail::WsClient>(
                std::move(socket), [this](const std::shared_ptr<detail::WsClient>& c, const std::string& text) {
                    on_message(c, text);
                });
            clients_.push_back(client);
            client->start([this] {
                json h = hello_;
                const Goal g = targets();
                h["targets"] = {{"g_v", g.g_v}, {"g_h", g.g_h}, {"g_c", g.g_c}};
                return h.dump();
            });
            accept();
        });
    }

    void on_message(const std::shared_ptr<detail::WsClient>& c, const std::string& text) {
        try {
            std::lock_guard lk(mailbox_mu_);
            mailbox_ = parse_set_targets(text, mailbox_, bounds_);
        } catch (const ParseError& e) {
            c->send_control(error_message(e.what()).dump());
        }
    }

    // io thread: deliver whatever the loop published since the last notification
    void deliver() {
        std::shared_ptr<const std::string> frame;
        std::vector<std::string> errors;
        {
            std::lock_guard lk(outbox_mu_);
            frame = std::move(latest_);
            latest_.reset();
            errors.swap(errors_out_);
            notify_pending_ = false;
        }
        std::erase_if(clients_, [](const auto& c) { return !c->open() && c.use_count() == 1; });
        for (auto& c : clients_) {
            for (const auto& e : errors) c->send_control(e);
            if (frame) c->offer_frame(frame);
        }
    }

    void publish(std::shared_ptr<const std::string> frame, std::optional<std::string> error) {
        bool post = false;
        {
            std::lock_guard lk(outbox_mu_);
            latest_ = std::move(frame);
            if (error) errors_out_.push_back(std::move(*error));
            post = !notify_pending_;
            notify_pending_ = true;
        }
        if (post) detail::net::post(ioc_, [this] { deliver(); });
    }

    void loop() {
        using clock = std::chrono::steady_clock;
        const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / opt_.rate_hz));
        auto next = clock::now();
        while (running_ && (opt_.max_ticks == 0 || ticks_.load() < opt_.max_ticks)) {
            session_.set_targets(targets());
            std::optional<std::string> err = session_.tick();
            if (err) {
                ++errors_;
                err = error_message("simulation diverged, pose reset: " + *err).dump();
            }
            publish(std::make_shared<const std::string>(session_.frame().dump()), std::move(err));
            ++ticks_;
            next += period;
            const auto now = clock::now();
            if (next > now)
                std::this_thread::sleep_until(next);
            else
                next = now; // running behind: do not try to catch up
        }
    }

    ServeOptions opt_;
    LiveSession session_;
    detail::net::io_context ioc_;
    detail::tcp::acceptor acceptor_;
    unsigned short port_ = 0;
    json hello_;
    GoalBounds bounds_;

    mutable std::mutex mailbox_mu_;
    Goal mailbox_;

    std::mutex outbox_mu_;
    std::shared_ptr<const std::string> latest_;
    std::vector<std::string> errors_out_;
    bool notify_pending_ = false;

    std::vector<std::shared_ptr<detail::WsClient>> clients_; // io thread only
    std::atomic<bool> running_{true};
    std::atomic<std::uint64_t> ticks_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::thread io_thread_;
    std::thread sim_thread_;
};

} // namespace diffloco
