#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cerrno>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnav/error.hpp"
#include "hnav/scenario.hpp"
#include "hnav/simulator.hpp"

namespace hnav::gateway {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameSamples = 50;
inline constexpr std::size_t kMaxMessageBytes = 64u << 20;

// ---------------------------------------------------------------------------
// Events and frames

enum class EventKind { GoalSet, Waypoint, Joystick, Pause, Resume, Reset };

inline EventKind parse_event_kind(const std::string& s) {
    if (s == "goal_set") return EventKind::GoalSet;
    if (s == "waypoint") return EventKind::Waypoint;
    if (s == "joystick") return EventKind::Joystick;
    if (s == "pause") return EventKind::Pause;
    if (s == "resume") return EventKind::Resume;
    if (s == "reset") return EventKind::Reset;
    throw SchemaError("event.kind", "unknown event kind '" + s + "'");
}

struct OperatorEvent {
    double timestamp = 0.0;  // assigned on receipt
    EventKind kind = EventKind::Joystick;
    std::vector<Pose> poses;  // goal_set: new goal set; waypoint: one pose
    Velocity command;         // joystick
};

// {"kind": ..., "payload": ...}; payload is [x, y] for waypoint/joystick and
// [x, y] or [[x, y], ...] for goal_set.
inline OperatorEvent parse_event(const json& e) {
    if (!e.is_object()) throw SchemaError("event", "expected an object");
    auto kind = e.find("kind");
    if (kind == e.end() || !kind->is_string()) throw SchemaError("event.kind", "missing or not a string");
    OperatorEvent ev;
    ev.kind = parse_event_kind(kind->get<std::string>());
    auto payload = e.find("payload");
    auto need_payload = [&]() -> const json& {
        if (payload == e.end()) throw SchemaError("event.payload", "missing required field");
        return *payload;
    };
    switch (ev.kind) {
        case EventKind::Joystick: ev.command = detail::vec_at(need_payload(), "event.payload"); break;
        case EventKind::Waypoint: ev.poses = {detail::vec_at(need_payload(), "event.payload")}; break;
        case EventKind::GoalSet: {
            const auto& p = need_payload();
            if (p.is_array() && p.size() == 2 && p[0].is_number())
                ev.poses = {detail::vec_at(p, "event.payload")};
            else
                ev.poses = detail::poses_at(p, "event.payload");
            break;
        }
        default: break;
    }
    return ev;
}

struct FrameComponent {
    int id = 0;
    double weight = 0.0;
    std::vector<Pose> polyline;
};

struct TelemetryFrame {
    std::uint64_t tick = 0;        // per-session frame counter, strictly increasing
    std::size_t world_tick = 0;    // simulator tick (restarts after reset)
    double t = 0.0;
    Pose robot;
    std::vector<Pose> crowd;
    std::vector<FrameComponent> components;
    std::optional<std::size_t> chosen;
    int chosen_plan_id = -1;
    std::vector<WeightedSample> samples;
    bool assistive_mode = false;
    GoalSet pending_goals;
    std::vector<Pose> pending_waypoints;
    std::vector<JoystickSample> pending_joystick;  // active z^h window
    bool paused = true;
    bool finished = false;
    std::optional<RunSummary> summary;
};

inline json to_json(const TelemetryFrame& f) {
    json comps = json::array();
    for (const auto& c : f.components) comps.push_back({{"id", c.id}, {"weight", c.weight}, {"polyline", to_json(c.polyline)}});
    json samples = json::array();
    for (const auto& s : f.samples) samples.push_back({{"weight", s.weight}, {"polyline", to_json(s.robot.points)}});
    json joystick = json::array();
    for (const auto& j : f.pending_joystick) joystick.push_back({{"t", j.t}, {"command", to_json(j.command)}});
    json out = {
        {"tick", f.tick},
        {"world_tick", f.world_tick},
        {"t", f.t},
        {"robot", to_json(f.robot)},
        {"crowd", to_json(f.crowd)},
        {"components", comps},
        {"chosen", f.chosen ? json(*f.chosen) : json(nullptr)},
        {"chosen_plan_id", f.chosen_plan_id},
        {"samples", samples},
        {"assistive_mode", f.assistive_mode},
        {"pending",
         {{"goals", to_json(f.pending_goals)}, {"waypoints", to_json(f.pending_waypoints)}, {"joystick", joystick}}},
        {"paused", f.paused},
        {"finished", f.finished},
    };
    if (f.summary) out["summary"] = hnav::to_json(*f.summary);
    return out;
}

// ---------------------------------------------------------------------------
// Frame fan-out

class FrameQueue {
public:
    void push(const TelemetryFrame& f) {
        {
            std::lock_guard lock(mu_);
            frames_.push_back(f);
        }
        cv_.notify_all();
    }

    std::optional<TelemetryFrame> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        if (!cv_.wait_for(lock, timeout, [&] { return !frames_.empty(); })) return std::nullopt;
        auto f = std::move(frames_.front());
        frames_.pop_front();
        return f;
    }

    std::optional<TelemetryFrame> try_pop() {
        std::lock_guard lock(mu_);
        if (frames_.empty()) return std::nullopt;
        auto f = std::move(frames_.front());
        frames_.pop_front();
        return f;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return frames_.size();
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<TelemetryFrame> frames_;
};

struct Ack {
    std::uint64_t event_id = 0;
    double timestamp = 0.0;
    std::size_t applies_at_tick = 0;
};

// ---------------------------------------------------------------------------
// Session

// Owns one simulator exclusively. Events and steps serialize on the session
// lock, so every event lands between ticks.
class Session {
public:
    Session(std::string id, Scenario scenario)
        : id_(std::move(id)), scenario_(std::move(scenario)), sim_(std::make_unique<Simulator>(scenario_)) {
        latest_ = make_frame(nullptr);
    }

    const std::string& id() const { return id_; }

    Ack submit(OperatorEvent ev) {
        std::lock_guard lock(mu_);
        ev.timestamp = sim_->now();
        Ack ack{++event_counter_, ev.timestamp, sim_->tick_count()};
        auto check_pose = [&](Pose p) {
            if (!scenario_.grid.contains(p)) throw OutOfBounds("event pose outside the map");
        };
        for (const auto& p : ev.poses) check_pose(p);
        switch (ev.kind) {
            case EventKind::Pause: paused_ = true; break;
            case EventKind::Resume: paused_ = false; break;
            case EventKind::Reset:
                sim_ = std::make_unique<Simulator>(scenario_);
                paused_ = true;
                break;
            case EventKind::Joystick:
                sim_->enqueue({0.0, InterventionKind::Joystick, {}, clamp_norm(ev.command, scenario_.models.v_max)});
                break;
            case EventKind::Waypoint: sim_->enqueue({0.0, InterventionKind::Waypoint, ev.poses, {}}); break;
            case EventKind::GoalSet: sim_->enqueue({0.0, InterventionKind::Goal, ev.poses, {}}); break;
        }
        return ack;
    }

    // Runs one tick when running and not finished; returns whether a frame was produced.
    bool step() {
        std::vector<std::shared_ptr<FrameQueue>> targets;
        TelemetryFrame frame;
        {
            std::lock_guard lock(mu_);
            if (paused_ || sim_->finished()) return false;
            const auto& rec = sim_->tick();
            frame = make_frame(&rec);
            latest_ = frame;
            targets = live_subscribers();
        }
        for (auto& q : targets) q->push(frame);
        return true;
    }

    // New subscribers first receive the latest frame, then every later one.
    std::shared_ptr<FrameQueue> subscribe() {
        auto q = std::make_shared<FrameQueue>();
        std::lock_guard lock(mu_);
        q->push(latest_);
        subscribers_.push_back(q);
        return q;
    }

    TelemetryFrame latest_frame() const {
        std::lock_guard lock(mu_);
        return latest_;
    }

    RunLog runlog() const {
        std::lock_guard lock(mu_);
        return sim_->log();
    }

    bool paused() const {
        std::lock_guard lock(mu_);
        return paused_;
    }

    bool finished() const {
        std::lock_guard lock(mu_);
        return sim_->finished();
    }

private:
    std::vector<std::shared_ptr<FrameQueue>> live_subscribers() {
        std::vector<std::shared_ptr<FrameQueue>> out;
        std::erase_if(subscribers_, [](const std::weak_ptr<FrameQueue>& w) { return w.expired(); });
        for (auto& w : subscribers_)
            if (auto q = w.lock()) out.push_back(std::move(q));
        return out;
    }

    TelemetryFrame make_frame(const TickRecord* rec) {
        TelemetryFrame f;
        f.tick = frame_counter_++;
        f.world_tick = sim_->tick_count();
        f.t = sim_->now();
        f.robot = sim_->robot().pose;
        f.crowd = sim_->crowd_positions();
        f.assistive_mode = sim_->assistive();
        const auto& ev = sim_->evidence();
        f.pending_goals = ev.goals;
        for (const auto& w : ev.waypoints) f.pending_waypoints.push_back(w.pose);
        f.paused = paused_;
        f.finished = sim_->finished();
        if (f.finished) f.summary = sim_->log().summary;

        // A frame shows the evidence and plan set the tick's decision used.
        GlobalPlanDistribution dist;
        if (rec != nullptr) {
            if (rec->distribution) dist = *rec->distribution;
            f.chosen = rec->component;
            f.chosen_plan_id = rec->plan_id;
            f.assistive_mode = rec->assistive;
            for (std::size_t i = 0; i < rec->thinned.size() && i < kMaxFrameSamples; ++i)
                f.samples.push_back(rec->thinned[i]);
            f.pending_joystick = joystick_window(ev, rec->t, scenario_.global.window);
        } else {
            dist = sim_->preview_distribution();
            f.pending_joystick = joystick_window(ev, sim_->now(), scenario_.global.window);
        }
        for (const auto& c : dist.components) f.components.push_back({c.id, c.weight, c.plan.points});
        return f;
    }

    std::string id_;
    Scenario scenario_;
    std::unique_ptr<Simulator> sim_;
    mutable std::mutex mu_;
    bool paused_ = true;
    std::uint64_t frame_counter_ = 0;
    std::uint64_t event_counter_ = 0;
    TelemetryFrame latest_;
    std::vector<std::weak_ptr<FrameQueue>> subscribers_;
};

// ---------------------------------------------------------------------------
// Session manager: the in-process service API

class SessionManager {
public:
    std::string open_session(const json& scenario_doc) {
        auto sc = load_scenario(scenario_doc);  // SchemaError / InvariantViolation propagate
        std::lock_guard lock(mu_);
        auto id = "s" + std::to_string(++counter_);
        sessions_.emplace(id, std::make_shared<Session>(id, std::move(sc)));
        return id;
    }

    std::shared_ptr<Session> session(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw UnknownSession("no session '" + id + "'");
        return it->second;
    }

    Ack submit_event(const std::string& id, const OperatorEvent& ev) { return session(id)->submit(ev); }

    std::shared_ptr<FrameQueue> stream_frames(const std::string& id) { return session(id)->subscribe(); }

    bool step(const std::string& id) { return session(id)->step(); }

    std::size_t step_all() {
        std::vector<std::shared_ptr<Session>> all;
        {
            std::lock_guard lock(mu_);
            for (auto& [_, s] : sessions_) all.push_back(s);
        }
        std::size_t stepped = 0;
        for (auto& s : all) stepped += s->step() ? 1 : 0;
        return stepped;
    }

    void close_session(const std::string& id) {
        std::lock_guard lock(mu_);
        if (sessions_.erase(id) == 0) throw UnknownSession("no session '" + id + "'");
    }

private:
    mutable std::mutex mu_;
    std::uint64_t counter_ = 0;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// ---------------------------------------------------------------------------
// Wire format: 4-byte big-endian length, then that many bytes of UTF-8 JSON.

inline std::string encode_message(const json& msg) {
    const std::string body = msg.dump();
    const auto n = static_cast<std::uint32_t>(body.size());
    std::string out(4, '\0');
    out[0] = static_cast<char>((n >> 24) & 0xff);
    out[1] = static_cast<char>((n >> 16) & 0xff);
    out[2] = static_cast<char>((n >> 8) & 0xff);
    out[3] = static_cast<char>(n & 0xff);
    return out + body;
}

// Incremental decoder; feed raw bytes, pull complete messages.
class MessageReader {
public:
    void feed(std::string_view bytes) { buffer_.append(bytes); }

    std::optional<json> next() {
        if (buffer_.size() < 4) return std::nullopt;
        const auto b = reinterpret_cast<const unsigned char*>(buffer_.data());
        const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                                (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
        if (n > kMaxMessageBytes) throw SchemaError("message", "message exceeds size limit");
        if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
        std::string body = buffer_.substr(4, n);
        buffer_.erase(0, 4 + static_cast<std::size_t>(n));
        try {
            return json::parse(body);
        } catch (const json::parse_error& e) {
            throw SchemaError("message", std::string("malformed JSON: ") + e.what());
        }
    }

private:
    std::string buffer_;
};

inline json error_message(const std::string& code, const std::string& what) {
    return {{"v", kProtocolVersion}, {"kind", "error"}, {"code", code}, {"message", what}};
}

inline json frame_message(const std::string& session, const TelemetryFrame& f) {
    return {{"v", kProtocolVersion}, {"kind", "frame"}, {"session", session}, {"frame", to_json(f)}};
}

// Blocking socket helpers

namespace net {

inline bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Socket() { close(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void shutdown() const {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }
    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

}  // namespace net

// Minimal blocking client, used by tests and scripted drivers.
class Client {
public:
    Client(const std::string& host, int port) {
        sock_ = net::Socket(::socket(AF_INET, SOCK_STREAM, 0));
        if (!sock_.valid()) throw Error("IoError", "socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw Error("IoError", "bad host " + host);
        if (::connect(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw Error("IoError", "connect failed: " + std::string(std::strerror(errno)));
        int one = 1;
        ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    void send(const json& msg) {
        if (!net::send_all(sock_.fd(), encode_message(msg))) throw Error("IoError", "send failed");
    }

    // Next message, or nullopt after `timeout` without one.
    std::optional<json> receive(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (auto m = reader_.next()) return m;
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            pollfd p{sock_.fd(), POLLIN, 0};
            const int r = ::poll(&p, 1, static_cast<int>(left.count()));
            if (r <= 0) continue;
            char buf[8192];
            const ssize_t n = ::recv(sock_.fd(), buf, sizeof buf, 0);
            if (n <= 0) throw Error("IoError", "connection closed");
            reader_.feed({buf, static_cast<std::size_t>(n)});
        }
    }

    // Skips messages of other kinds until one of `kind` arrives.
    std::optional<json> receive_kind(const std::string& kind, std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            auto m = receive(left);
            if (!m) return std::nullopt;
            if ((*m)["kind"] == kind) return m;
        }
    }

private:
    net::Socket sock_;
    MessageReader reader_;
};

// TCP server: one thread per connection, plus a ticker that advances every
// running session once per `tick_period`.
class Server {
public:
    Server(SessionManager& manager, int port, std::chrono::milliseconds tick_period)
        : manager_(manager), requested_port_(port), tick_period_(tick_period) {}

    ~Server() { stop(); }

    void start() {
        listener_ = net::Socket(::socket(AF_INET, SOCK_STREAM, 0));
        if (!listener_.valid()) throw Error("IoError", "socket() failed");
        int one = 1;
        ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(static_cast<std::uint16_t>(requested_port_));
        if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw Error("IoError", "bind failed: " + std::string(std::strerror(errno)));
        if (::listen(listener_.fd(), 16) != 0) throw Error("IoError", "listen failed");
        socklen_t len = sizeof addr;
        ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        running_ = true;
        acceptor_ = std::thread([this] { accept_loop(); });
        if (tick_period_.count() > 0) ticker_ = std::thread([this] { tick_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        listener_.shutdown();
        if (acceptor_.joinable()) acceptor_.join();
        if (ticker_.joinable()) ticker_.join();
        std::vector<std::thread> conns;
        {
            std::lock_guard lock(mu_);
            conns.swap(connections_);
        }
        for (auto& t : conns)
            if (t.joinable()) t.join();
        listener_.close();
    }

    int port() const { return port_; }

private:
    void accept_loop() {
        while (running_) {
            pollfd p{listener_.fd(), POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0) continue;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::lock_guard lock(mu_);
            connections_.emplace_back([this, fd] { serve(net::Socket(fd)); });
        }
    }

    void tick_loop() {
        auto next = std::chrono::steady_clock::now();
        while (running_) {
            next += tick_period_;
            manager_.step_all();
            std::this_thread::sleep_until(next);
        }
    }

    void serve(net::Socket sock) {
        MessageReader reader;
        std::vector<std::pair<std::string, std::shared_ptr<FrameQueue>>> subscriptions;
        auto reply = [&](const json& m) { return net::send_all(sock.fd(), encode_message(m)); };

        while (running_) {
            for (auto& [sid, q] : subscriptions)
                while (auto f = q->try_pop())
                    if (!reply(frame_message(sid, *f))) return;

            pollfd p{sock.fd(), POLLIN, 0};
            const int r = ::poll(&p, 1, 10);
            if (r < 0) return;
            if (r == 0) continue;
            char buf[8192];
            const ssize_t n = ::recv(sock.fd(), buf, sizeof buf, 0);
            if (n <= 0) return;
            reader.feed({buf, static_cast<std::size_t>(n)});
            try {
                while (auto msg = reader.next()) {
                    if (auto out = handle(*msg, subscriptions)) reply(*out);
                }
            } catch (const Error& e) {
                reply(error_message(e.code(), e.what()));
                return;  // framing is no longer trustworthy
            }
        }
    }

    std::optional<json> handle(const json& msg,
                               std::vector<std::pair<std::string, std::shared_ptr<FrameQueue>>>& subscriptions) {
        try {
            if (!msg.is_object()) throw SchemaError("message", "expected an object");
            if (msg.value("v", -1) != kProtocolVersion)
                return error_message("UnsupportedVersion", "expected v=" + std::to_string(kProtocolVersion));
            const std::string kind = msg.value("kind", "");
            if (kind == "hello") {
                std::string sid;
                if (auto sc = msg.find("scenario"); sc != msg.end()) sid = manager_.open_session(*sc);
                else if (auto s = msg.find("session"); s != msg.end() && s->is_string()) sid = s->get<std::string>();
                else throw SchemaError("hello", "needs a scenario or a session id");
                auto q = manager_.stream_frames(sid);
                subscriptions.emplace_back(sid, std::move(q));
                return json{{"v", kProtocolVersion}, {"kind", "hello"}, {"session", sid}};
            }
            if (kind == "event") {
                auto s = msg.find("session");
                if (s == msg.end() || !s->is_string()) throw SchemaError("session", "missing session id");
                auto e = msg.find("event");
                if (e == msg.end()) throw SchemaError("event", "missing event");
                const auto ack = manager_.submit_event(s->get<std::string>(), parse_event(*e));
                json out = {{"v", kProtocolVersion},  {"kind", "ack"},          {"session", *s},
                            {"event_id", ack.event_id}, {"timestamp", ack.timestamp}, {"applies_at_tick", ack.applies_at_tick}};
                if (auto ref = msg.find("ref"); ref != msg.end()) out["ref"] = *ref;
                return out;
            }
            throw SchemaError("kind", "unsupported message kind '" + kind + "'");
        } catch (const Error& e) {
            return error_message(e.code(), e.what());
        } catch (const json::exception& e) {
            return error_message("SchemaError", e.what());
        }
    }

    SessionManager& manager_;
    int requested_port_;
    int port_ = 0;
    std::chrono::milliseconds tick_period_;
    std::atomic<bool> running_{false};
    net::Socket listener_;
    std::thread acceptor_;
    std::thread ticker_;
    std::mutex mu_;
    std::vector<std::thread> connections_;
};

}  // namespace hnav::gateway
