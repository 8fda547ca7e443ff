#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "stress/fusion.hpp"
#include "stress/service.hpp"
#include "test_support.hpp"

using namespace stress;
using namespace stress::service;
using nlohmann::json;

namespace {

const std::vector<std::string> kStates{"baseline", "stress", "amusement"};
const std::vector<std::string> kSensors{"ACC", "EDA", "RESP", "TEMP"};

bn::BayesNet random_star(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> g(1.0, 1.0);
    auto net = fusion::build_star_network(kSensors, kStates);
    for (const auto& node : net.nodes()) {
        std::vector<std::vector<double>> rows(net.row_count(node.id));
        for (auto& r : rows) {
            double s = 0;
            for (std::size_t k = 0; k < node.states.size(); ++k) r.push_back(g(rng) + 1e-3), s += r.back();
            for (auto& v : r) v /= s;
        }
        net.set_cpt(node.id, rows);
    }
    return net;
}

json random_request(std::mt19937_64& rng, const bn::BayesNet& net) {
    const auto& nodes = net.nodes();
    const auto& q = nodes[rng() % nodes.size()];
    json ev = json::object();
    for (const auto& n : nodes)
        if (n.id != q.id && rng() % 2) ev[n.id] = n.states[rng() % n.states.size()];
    return {{"evidence", ev}, {"query", q.id}};
}

bn::Evidence evidence_of(const json& req) {
    bn::Evidence ev;
    for (auto it = req["evidence"].begin(); it != req["evidence"].end(); ++it) ev[it.key()] = it.value().get<std::string>();
    return ev;
}

// Exact equality through a JSON round trip: the wire format must not lose bits.
void expect_same_posterior(const json& body, const bn::Posterior& lib) {
    ASSERT_EQ(body["query"], lib.query);
    ASSERT_EQ(body["posterior"].size(), lib.states.size());
    for (std::size_t k = 0; k < lib.states.size(); ++k)
        EXPECT_EQ(body["posterior"][lib.states[k]].get<double>(), lib.probabilities[k]) << lib.states[k];
}

struct RunningServer {
    explicit RunningServer(ServiceState& st) : server(st, LogLevel::Error) {
        port = server.bind({"127.0.0.1", 0});
        thread = std::thread([this] { server.run(); });
        server.wait_until_ready();
    }
    ~RunningServer() {
        server.stop();
        thread.join();
    }
    ApiServer server;
    int port = 0;
    std::thread thread;
};

}  // namespace

TEST(Handlers, InferMatchesLibraryExactly) {
    ServiceState st;
    std::mt19937_64 rng(3);
    for (int n = 0; n < 5; ++n) {
        const auto net = random_star(100 + n);
        st.install(net);
        for (int i = 0; i < 40; ++i) {
            const auto req = random_request(rng, net);
            const auto r = handle_infer(st, req.dump());
            ASSERT_EQ(r.status, 200) << r.body.dump();
            expect_same_posterior(json::parse(r.body.dump()), bn::infer(net, evidence_of(req), req["query"]));
        }
    }
}

TEST(Handlers, ErrorsAreStructured) {
    ServiceState st;
    auto r = handle_network(st);
    EXPECT_EQ(r.status, 503);
    EXPECT_EQ(r.body["error"]["code"], "NoNetworkLoaded");
    EXPECT_TRUE(handle_health(st).body["version"].is_null());

    st.install(random_star(1));
    auto code = [&](const std::string& body) {
        auto r = handle_infer(st, body);
        EXPECT_EQ(r.status, 400) << body;
        return r.body["error"]["code"].get<std::string>();
    };
    EXPECT_EQ(code(R"({"evidence":{"EDA":"panic"},"query":"Fused"})"), "UnknownState");
    EXPECT_EQ(code(R"({"evidence":{"GSR":"stress"},"query":"Fused"})"), "UnknownNode");
    EXPECT_EQ(code(R"({"evidence":{},"query":"Nope"})"), "UnknownNode");
    EXPECT_EQ(code(R"({"evidence":{"Fused":"stress"},"query":"Fused"})"), "EvidenceOnQuery");
    EXPECT_EQ(code(R"({"evidence":{}})"), "InvalidRequest");
    EXPECT_EQ(code(R"({"query":"Fused","extra":1})"), "InvalidRequest");
    EXPECT_EQ(code(R"({"evidence":{"EDA":3},"query":"Fused"})"), "InvalidRequest");
    EXPECT_EQ(code("not json"), "InvalidRequest");
    EXPECT_EQ(handle_infer(st, R"({"evidence":{"EDA":"panic"},"query":"Fused"})").body["error"]["field"], "EDA");

    // No evidence at all is a valid request: marginal of the query.
    auto ok = handle_infer(st, R"({"query":"Fused"})");
    EXPECT_EQ(ok.status, 200);
}

TEST(Handlers, NetworkListingMirrorsFile) {
    ServiceState st;
    const auto net = random_star(9);
    st.install(net);
    const auto j = handle_network(st).body;
    ASSERT_EQ(j["nodes"].size(), 5u);
    EXPECT_EQ(j["edges"].size(), 4u);
    for (const auto& n : net.nodes()) {
        bool found = false;
        for (const auto& jn : j["nodes"])
            if (jn["id"] == n.id) found = jn["states"] == json(n.states);
        EXPECT_TRUE(found) << n.id;
        expect_same_posterior({{"query", n.id}, {"posterior", j["marginals"][n.id]}}, bn::infer(net, {}, n.id));
    }
}

TEST(Handlers, ReloadSwapsOrKeepsSnapshot) {
    const auto dir = test_support::scratch_dir("svc_reload");
    bn::save_net(random_star(1), (dir / "a.json").string());
    bn::save_net(random_star(2), (dir / "b.json").string());
    test_support::write_text(dir / "bad.json", "{");
    ServiceState st;
    st.load((dir / "a.json").string());
    const auto v1 = st.snapshot()->version;

    auto r = handle_reload(st, json{{"path", (dir / "bad.json").string()}}.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["code"], "InvalidNetworkFile");
    EXPECT_EQ(st.snapshot()->version, v1);
    EXPECT_EQ(handle_reload(st, json{{"path", (dir / "missing.json").string()}}.dump()).status, 400);
    EXPECT_EQ(st.snapshot()->version, v1);

    r = handle_reload(st, json{{"path", (dir / "b.json").string()}}.dump());
    ASSERT_EQ(r.status, 200);
    EXPECT_NE(r.body["version"], v1);
    EXPECT_EQ(bn::to_json(st.snapshot()->net), bn::to_json(bn::load_net((dir / "b.json").string())));
}

TEST(Bind, AddressParsing) {
    auto b = parse_bind("0.0.0.0:9000");
    EXPECT_EQ(b.host, "0.0.0.0");
    EXPECT_EQ(b.port, 9000);
    EXPECT_EQ(BindAddress{}.port, 8080);
    EXPECT_EQ(BindAddress{}.host, "127.0.0.1");
    for (const char* bad : {"localhost", ":80", "h:abc", "h:70000", "h:80x"}) EXPECT_THROW(parse_bind(bad), Error) << bad;
}

TEST(Http, EndpointsOverTheWire) {
    ServiceState st;
    const auto net = random_star(77);
    st.install(net);
    RunningServer srv(st);
    httplib::Client cli("127.0.0.1", srv.port);

    auto health = cli.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(json::parse(health->body)["status"], "ok");

    auto network = cli.Get("/api/network");
    ASSERT_TRUE(network);
    EXPECT_EQ(json::parse(network->body)["nodes"].size(), 5u);

    // Evidence on two sensors and the fused node, asking for a third sensor.
    const json req{{"evidence", {{"EDA", "baseline"}, {"ACC", "stress"}, {"Fused", "baseline"}}}, {"query", "RESP"}};
    auto inf = cli.Post("/api/infer", req.dump(), "application/json");
    ASSERT_TRUE(inf);
    ASSERT_EQ(inf->status, 200);
    expect_same_posterior(json::parse(inf->body), bn::infer(net, evidence_of(req), "RESP"));

    std::mt19937_64 rng(5);
    for (int i = 0; i < 30; ++i) {
        const auto q = random_request(rng, net);
        auto r = cli.Post("/api/infer", q.dump(), "application/json");
        ASSERT_TRUE(r);
        expect_same_posterior(json::parse(r->body), bn::infer(net, evidence_of(q), q["query"]));
    }

    auto bad = cli.Post("/api/infer", R"({"evidence":{"EDA":"panic"},"query":"RESP"})", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    EXPECT_EQ(json::parse(bad->body)["error"]["code"], "UnknownState");

    auto missing = cli.Get("/api/nothing");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
}

TEST(Http, BindFailureOnTakenPort) {
    ServiceState st;
    st.install(random_star(1));
    RunningServer srv(st);
    ApiServer second(st, LogLevel::Error);
    try {
        second.bind({"127.0.0.1", srv.port});
        FAIL() << "second bind succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "BindFailure");
    }
}

TEST(Http, ConcurrentReloadsNeverMixSnapshots) {
    const auto dir = test_support::scratch_dir("svc_atomic");
    // Same structure, different CPTs everywhere: a request mixing the two would match neither answer.
    const auto a = random_star(11), b = random_star(12);
    bn::save_net(a, (dir / "a.json").string());
    bn::save_net(b, (dir / "b.json").string());
    const json req{{"evidence", {{"EDA", "stress"}, {"TEMP", "amusement"}}}, {"query", "Fused"}};
    const auto pa = bn::infer(a, evidence_of(req), "Fused"), pb = bn::infer(b, evidence_of(req), "Fused");
    ASSERT_NE(pa.probabilities, pb.probabilities);

    ServiceState st;
    st.load((dir / "a.json").string());
    RunningServer srv(st);

    std::atomic<bool> done{false};
    std::atomic<int> answered{0}, mixed{0}, failed{0}, saw_a{0}, saw_b{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&] {
            httplib::Client cli("127.0.0.1", srv.port);
            while (!done) {
                auto r = cli.Post("/api/infer", req.dump(), "application/json");
                if (!r || r->status != 200) {
                    ++failed;
                    continue;
                }
                const auto post = json::parse(r->body)["posterior"];
                std::vector<double> p;
                for (const auto& s : kStates) p.push_back(post[s].get<double>());
                if (p == pa.probabilities) ++saw_a;
                else if (p == pb.probabilities) ++saw_b;
                else ++mixed;
                ++answered;
            }
        });
    httplib::Client admin("127.0.0.1", srv.port);
    for (int i = 0; i < 60; ++i) {
        const auto path = (dir / (i % 2 ? "a.json" : "b.json")).string();
        auto r = admin.Post("/api/reload", json{{"path", path}}.dump(), "application/json");
        ASSERT_TRUE(r);
        EXPECT_EQ(r->status, 200);
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    done = true;
    for (auto& t : readers) t.join();

    EXPECT_GT(answered.load(), 0);
    EXPECT_EQ(mixed.load(), 0);
    EXPECT_EQ(failed.load(), 0);
    EXPECT_GT(saw_a.load() + saw_b.load(), 0);

    // In-process: many readers against rapid installs of in-memory networks.
    ServiceState mem;
    mem.install(a);
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::thread writer([&] {
        for (int i = 0; i < 400; ++i) mem.install(i % 2 ? a : b);
        stop = true;
    });
    std::vector<std::thread> rs;
    for (int t = 0; t < 3; ++t)
        rs.emplace_back([&] {
            while (!stop) {
                auto s = mem.snapshot();
                const auto p = bn::infer(s->net, evidence_of(req), "Fused").probabilities;
                // The precomputed marginals must belong to the same network as the CPTs.
                const auto marg = s->network_payload["marginals"]["Fused"]["stress"].get<double>();
                const bool is_a = p == pa.probabilities, is_b = p == pb.probabilities;
                const bool marg_a = marg == bn::infer(a, {}, "Fused")["stress"];
                const bool marg_b = marg == bn::infer(b, {}, "Fused")["stress"];
                if (!((is_a && marg_a) || (is_b && marg_b))) ++bad;
            }
        });
    writer.join();
    for (auto& t : rs) t.join();
    EXPECT_EQ(bad.load(), 0);
}
