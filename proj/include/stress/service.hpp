#pragma once

// HTTP inference service over an immutable network snapshot.
//   GET  /api/health   -> {"status":"ok","version":...}
//   GET  /api/network  -> nodes, states, edges, no-evidence marginals
//   POST /api/infer    {"evidence":{node:state},"query":node} -> {"query":node,"posterior":{state:p}}
//   POST /api/reload   {"path":net file[, "model":model file]}

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "stress/bayes_net.hpp"
#include "stress/error.hpp"
#include "stress/tcn.hpp"

namespace stress::service {

struct Snapshot {
    bn::BayesNet net;
    std::string net_path;
    std::optional<tcn::LoadedModel> model;
    std::string version;
    nlohmann::json network_payload;  // precomputed; the snapshot never changes
};

inline nlohmann::json posterior_json(const bn::Posterior& p) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t k = 0; k < p.states.size(); ++k) j[p.states[k]] = p.probabilities[k];
    return j;
}

inline nlohmann::json network_json(const bn::BayesNet& net) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"states", n.states}});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [from, to] : net.edges()) edges.push_back({from, to});
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [id, p] : bn::marginals(net)) m[id] = posterior_json(p);
    return {{"nodes", nodes}, {"edges", edges}, {"marginals", m}};
}

// Readers take a shared_ptr copy under the lock and then work lock-free on it, so a
// request sees exactly one snapshot however many reloads happen meanwhile.
class ServiceState {
public:
    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard lock(mu_);
        return current_;
    }

    std::shared_ptr<const Snapshot> install(bn::BayesNet net, std::string net_path = {},
                                            std::optional<tcn::LoadedModel> model = std::nullopt) {
        net.validate();
        auto s = std::make_shared<Snapshot>();
        s->network_payload = network_json(net);
        s->net = std::move(net);
        s->net_path = std::move(net_path);
        s->model = std::move(model);
        std::lock_guard lock(mu_);
        s->version = std::to_string(++counter_);
        current_ = s;
        return s;
    }

    std::shared_ptr<const Snapshot> load(const std::string& net_path, const std::string& model_path = {}) {
        auto net = bn::load_net(net_path);
        std::optional<tcn::LoadedModel> model;
        if (!model_path.empty()) model = tcn::load_model(model_path);
        return install(std::move(net), net_path, std::move(model));
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const Snapshot> current_;
    std::uint64_t counter_ = 0;
};

struct Response {
    int status = 200;
    nlohmann::json body;
};

inline Response error_response(int status, const std::string& code, const std::string& message,
                               const std::string& field = {}) {
    return {status, {{"error", {{"code", code}, {"message", message}, {"field", field}}}}};
}

inline Response error_response(const Error& e, int status = 400) {
    return error_response(status, e.code(), e.message(), e.field());
}

namespace detail {

inline std::shared_ptr<const Snapshot> require_snapshot(const ServiceState& st) {
    auto s = st.snapshot();
    if (!s) fail("NoNetworkLoaded", "no network is loaded; POST /api/reload first");
    return s;
}

inline nlohmann::json parse_body(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        if (!j.is_object()) fail("InvalidRequest", "request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        fail("InvalidRequest", std::string("malformed JSON: ") + e.what());
    }
}

template <class F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return error_response(e, e.code() == "NoNetworkLoaded" ? 503 : 400);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, "InvalidRequest", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

}  // namespace detail

inline Response handle_health(const ServiceState& st) {
    auto s = st.snapshot();
    nlohmann::json j{{"status", "ok"}, {"version", s ? nlohmann::json(s->version) : nlohmann::json()}};
    if (s) {
        j["network"] = s->net_path;
        j["model"] = s->model ? nlohmann::json(std::string(tcn::to_string(s->model->task))) : nlohmann::json();
    }
    return {200, j};
}

inline Response handle_network(const ServiceState& st) {
    return detail::guarded([&] {
        auto s = detail::require_snapshot(st);
        auto j = s->network_payload;
        j["version"] = s->version;
        return Response{200, j};
    });
}

// Answers come from one snapshot; the result is exactly bn::infer on that network.
inline Response handle_infer(const ServiceState& st, const std::string& body) {
    return detail::guarded([&] {
        auto s = detail::require_snapshot(st);
        const auto req = detail::parse_body(body);
        for (auto it = req.begin(); it != req.end(); ++it)
            if (it.key() != "evidence" && it.key() != "query")
                fail("InvalidRequest", "unknown key " + it.key(), it.key());
        if (!req.contains("query") || !req["query"].is_string()) fail("InvalidRequest", "query must be a node id", "query");
        bn::Evidence ev;
        if (req.contains("evidence")) {
            if (!req["evidence"].is_object()) fail("InvalidRequest", "evidence must map node ids to states", "evidence");
            for (auto it = req["evidence"].begin(); it != req["evidence"].end(); ++it) {
                if (!it.value().is_string()) fail("InvalidRequest", "evidence state must be a string", it.key());
                ev[it.key()] = it.value().get<std::string>();
            }
        }
        const auto post = bn::infer(s->net, ev, req["query"].get<std::string>());
        return Response{200, {{"query", post.query}, {"posterior", posterior_json(post)}, {"version", s->version}}};
    });
}

// A failed reload leaves the current snapshot in place.
inline Response handle_reload(ServiceState& st, const std::string& body) {
    return detail::guarded([&] {
        const auto req = detail::parse_body(body);
        if (!req.contains("path") || !req["path"].is_string()) fail("InvalidRequest", "path must be a file path", "path");
        auto s = st.load(req["path"].get<std::string>(), req.value("model", std::string()));
        return Response{200, {{"status", "ok"}, {"version", s->version}}};
    });
}

// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("STRESS_ENGINE_LOG");
    const std::string s = v ? v : "warn";
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 8080;
};

inline BindAddress parse_bind(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0) fail("InvalidArgument", "bind address must be host:port, got " + s, "bind");
    BindAddress b;
    b.host = s.substr(0, colon);
    try {
        std::size_t used = 0;
        b.port = std::stoi(s.substr(colon + 1), &used);
        if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        fail("InvalidArgument", "bad port in " + s, "bind");
    }
    if (b.port < 0 || b.port > 65535) fail("InvalidArgument", "port out of range in " + s, "bind");
    return b;
}

inline BindAddress bind_from_env() {
    const char* v = std::getenv("STRESS_ENGINE_BIND");
    return v && *v ? parse_bind(v) : BindAddress{};
}

class ApiServer {
public:
    explicit ApiServer(ServiceState& state, LogLevel level = log_level_from_env()) : state_(state), level_(level) {
        auto reply = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        // httplib's default adds SO_REUSEPORT, which lets a second server silently share the port.
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
        });
        server_.Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, handle_health(state_));
        });
        server_.Get("/api/network", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, handle_network(state_));
        });
        server_.Post("/api/infer", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, handle_infer(state_, req.body));
        });
        server_.Post("/api/reload", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, handle_reload(state_, req.body));
        });
        server_.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
            if (res.status == 404) reply(res, error_response(404, "NotFound", "no route " + req.method + " " + req.path));
        });
        server_.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
            const bool failed = res.status >= 400;
            if (level_ >= LogLevel::Info || (failed && level_ >= LogLevel::Warn))
                std::clog << req.method << " " << req.path << " " << res.status << "\n";
            if (level_ >= LogLevel::Debug) std::clog << "  " << req.body << "\n";
        });
    }

    // Port 0 picks a free port. Returns the bound port.
    int bind(const BindAddress& addr) {
        int port = addr.port;
        bool ok = false;
        if (port == 0) {
            port = server_.bind_to_any_port(addr.host);
            ok = port > 0;
        } else {
            ok = server_.bind_to_port(addr.host, port);
        }
        if (!ok) fail("BindFailure", "cannot bind " + addr.host + ":" + std::to_string(addr.port), "bind");
        port_ = port;
        return port;
    }

    // Blocks until stop().
    void run() { server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }
    int port() const { return port_; }

private:
    ServiceState& state_;
    LogLevel level_;
    httplib::Server server_;
    int port_ = 0;
};

}  // namespace stress::service
