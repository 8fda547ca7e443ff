#pragma once

// Discrete Bayesian networks with exact inference by variable elimination,
// plus a brute-force joint enumeration used as an independent check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"

namespace stress::bn {

struct Node {
    std::string id;
    std::vector<std::string> states;
};

// rows[r] is the distribution of the node given the r-th joint parent
// assignment, enumerated row-major in `parents` order (last parent fastest).
struct Cpt {
    std::vector<std::string> parents;
    std::vector<std::vector<double>> rows;
};

using Evidence = std::map<std::string, std::string>;

struct Posterior {
    std::string query;
    std::vector<std::string> states;
    std::vector<double> probabilities;

    double operator[](const std::string& state) const {
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] == state) return probabilities[i];
        fail("UnknownState", "posterior has no state " + state, "state");
    }
};

class BayesNet {
public:
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
    const Cpt& cpt(const std::string& id) const { return cpts_.at(index(id)); }
    std::size_t size() const { return nodes_.size(); }

    bool has_node(const std::string& id) const { return index_.count(id) > 0; }

    std::size_t index(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) fail("UnknownNode", "no node " + id, "node");
        return it->second;
    }

    const Node& node(const std::string& id) const { return nodes_[index(id)]; }

    int state_index(const std::string& id, const std::string& state) const {
        const auto& st = node(id).states;
        auto it = std::find(st.begin(), st.end(), state);
        if (it == st.end()) fail("UnknownState", "node " + id + " has no state " + state, id);
        return static_cast<int>(it - st.begin());
    }

    int cardinality(std::size_t i) const { return static_cast<int>(nodes_[i].states.size()); }

    void add_node(const std::string& id, std::vector<std::string> states) {
        if (index_.count(id)) fail("DuplicateNodeId", "node " + id + " already exists", id);
        if (states.empty()) fail("InvalidArgument", "node " + id + " needs at least one state", id);
        std::set<std::string> uniq(states.begin(), states.end());
        if (uniq.size() != states.size()) fail("InvalidArgument", "node " + id + " has duplicate states", id);
        index_[id] = nodes_.size();
        nodes_.push_back({id, std::move(states)});
        cpts_.push_back({});
        reset_uniform(nodes_.size() - 1);
    }

    // Appends `parent` to the child's parent list and resets its CPT to uniform.
    void add_edge(const std::string& parent, const std::string& child) {
        const auto p = index(parent), c = index(child);
        if (p == c || reaches(c, p)) fail("CyclicGraph", "edge " + parent + " -> " + child + " closes a cycle", child);
        for (const auto& e : edges_)
            if (e.first == parent && e.second == child) fail("DuplicateEdge", parent + " -> " + child, child);
        edges_.emplace_back(parent, child);
        cpts_[c].parents.push_back(parent);
        reset_uniform(c);
    }

    std::size_t row_count(const std::string& id) const { return row_count(index(id)); }

    void set_cpt(const std::string& id, std::vector<std::vector<double>> rows) {
        const auto i = index(id);
        if (rows.size() != row_count(i))
            fail("MalformedCpt", "node " + id + " needs " + std::to_string(row_count(i)) + " rows", id);
        for (const auto& r : rows) check_row(id, r, static_cast<std::size_t>(cardinality(i)));
        cpts_[i].rows = std::move(rows);
    }

    // Row index of a joint parent assignment given as state indices in parent order.
    std::size_t row_index(const std::string& id, const std::vector<int>& parent_states) const {
        const auto& ps = cpt(id).parents;
        std::size_t r = 0;
        for (std::size_t k = 0; k < ps.size(); ++k) r = r * cardinality(index(ps[k])) + parent_states.at(k);
        return r;
    }

    std::vector<std::size_t> parent_indices(std::size_t i) const {
        std::vector<std::size_t> out;
        for (const auto& p : cpts_[i].parents) out.push_back(index(p));
        return out;
    }

    void validate() const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (cpts_[i].rows.size() != row_count(i)) fail("MalformedCpt", "wrong row count", nodes_[i].id);
            for (const auto& r : cpts_[i].rows)
                check_row(nodes_[i].id, r, static_cast<std::size_t>(cardinality(i)));
        }
    }

    static void check_row(const std::string& id, const std::vector<double>& r, std::size_t card) {
        if (r.size() != card) fail("MalformedCpt", "row width differs from state count", id);
        double s = 0.0;
        for (double v : r) {
            if (!(v >= 0.0) || !std::isfinite(v)) fail("MalformedCpt", "negative or non-finite probability", id);
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) fail("MalformedCpt", "row does not sum to 1", id);
    }

private:
    std::size_t row_count(std::size_t i) const {
        std::size_t n = 1;
        for (auto p : parent_indices(i)) n *= static_cast<std::size_t>(cardinality(p));
        return n;
    }

    void reset_uniform(std::size_t i) {
        const auto card = static_cast<std::size_t>(cardinality(i));
        cpts_[i].rows.assign(row_count(i), std::vector<double>(card, 1.0 / static_cast<double>(card)));
    }

    // Is `to` reachable from `from` along edges?
    bool reaches(std::size_t from, std::size_t to) const {
        std::vector<std::size_t> stack{from};
        std::vector<bool> seen(nodes_.size(), false);
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            if (u == to) return true;
            if (seen[u]) continue;
            seen[u] = true;
            for (const auto& e : edges_)
                if (index(e.first) == u) stack.push_back(index(e.second));
        }
        return false;
    }

    std::vector<Node> nodes_;
    std::vector<Cpt> cpts_;
    std::vector<std::pair<std::string, std::string>> edges_;
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Factors over node indices, row-major with the last variable fastest.

struct Factor {
    std::vector<std::size_t> vars;
    std::vector<int> cards;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

inline Factor cpt_factor(const BayesNet& net, std::size_t i) {
    Factor f;
    f.vars = net.parent_indices(i);
    f.vars.push_back(i);
    for (auto v : f.vars) f.cards.push_back(net.cardinality(v));
    const auto& rows = net.cpt(net.nodes()[i].id).rows;
    for (const auto& r : rows) f.values.insert(f.values.end(), r.begin(), r.end());
    return f;
}

inline Factor restrict_factor(const Factor& f, std::size_t var, int state) {
    auto it = std::find(f.vars.begin(), f.vars.end(), var);
    if (it == f.vars.end()) return f;
    const auto pos = static_cast<std::size_t>(it - f.vars.begin());
    Factor g;
    std::size_t inner = 1;
    for (std::size_t k = pos + 1; k < f.vars.size(); ++k) inner *= f.cards[k];
    const auto card = static_cast<std::size_t>(f.cards[pos]);
    const std::size_t outer = f.size() / (inner * card);
    for (std::size_t k = 0; k < f.vars.size(); ++k)
        if (k != pos) {
            g.vars.push_back(f.vars[k]);
            g.cards.push_back(f.cards[k]);
        }
    g.values.reserve(outer * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) g.values.push_back(f.values[(o * card + state) * inner + in]);
    return g;
}

inline Factor sum_out(const Factor& f, std::size_t var) {
    auto it = std::find(f.vars.begin(), f.vars.end(), var);
    if (it == f.vars.end()) return f;
    const auto pos = static_cast<std::size_t>(it - f.vars.begin());
    Factor g;
    std::size_t inner = 1;
    for (std::size_t k = pos + 1; k < f.vars.size(); ++k) inner *= f.cards[k];
    const auto card = static_cast<std::size_t>(f.cards[pos]);
    const std::size_t outer = f.size() / (inner * card);
    for (std::size_t k = 0; k < f.vars.size(); ++k)
        if (k != pos) {
            g.vars.push_back(f.vars[k]);
            g.cards.push_back(f.cards[k]);
        }
    g.values.assign(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t s = 0; s < card; ++s)
            for (std::size_t in = 0; in < inner; ++in) g.values[o * inner + in] += f.values[(o * card + s) * inner + in];
    return g;
}

inline Factor multiply(const Factor& a, const Factor& b) {
    Factor g;
    g.vars = a.vars;
    g.cards = a.cards;
    for (std::size_t k = 0; k < b.vars.size(); ++k)
        if (std::find(g.vars.begin(), g.vars.end(), b.vars[k]) == g.vars.end()) {
            g.vars.push_back(b.vars[k]);
            g.cards.push_back(b.cards[k]);
        }
    std::size_t n = 1;
    for (int c : g.cards) n *= static_cast<std::size_t>(c);
    g.values.assign(n, 0.0);

    // Stride of each output variable inside a and b (0 when absent).
    auto strides = [&](const Factor& f) {
        std::vector<std::size_t> s(g.vars.size(), 0);
        std::size_t step = 1;
        for (std::size_t k = f.vars.size(); k-- > 0;) {
            auto pos = static_cast<std::size_t>(std::find(g.vars.begin(), g.vars.end(), f.vars[k]) - g.vars.begin());
            s[pos] = step;
            step *= static_cast<std::size_t>(f.cards[k]);
        }
        return s;
    };
    const auto sa = strides(a), sb = strides(b);
    std::vector<int> assign(g.vars.size(), 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t idx = 0; idx < n; ++idx) {
        g.values[idx] = a.values[ia] * b.values[ib];
        for (std::size_t k = g.vars.size(); k-- > 0;) {
            if (++assign[k] < g.cards[k]) {
                ia += sa[k];
                ib += sb[k];
                break;
            }
            ia -= sa[k] * static_cast<std::size_t>(g.cards[k] - 1);
            ib -= sb[k] * static_cast<std::size_t>(g.cards[k] - 1);
            assign[k] = 0;
        }
    }
    return g;
}

namespace detail {

struct ResolvedQuery {
    std::size_t query = 0;
    std::map<std::size_t, int> evidence;
};

inline ResolvedQuery resolve(const BayesNet& net, const Evidence& ev, const std::string& query) {
    ResolvedQuery r;
    r.query = net.index(query);
    for (const auto& [id, state] : ev) {
        if (id == query) fail("EvidenceOnQuery", "node " + id + " is both evidence and query", id);
        r.evidence[net.index(id)] = net.state_index(id, state);
    }
    return r;
}

inline Posterior normalize(const BayesNet& net, std::size_t q, std::vector<double> mass) {
    const double z = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(z > 0.0)) fail("ImpossibleEvidence", "evidence has probability zero", "evidence");
    for (auto& m : mass) m /= z;
    return {net.nodes()[q].id, net.nodes()[q].states, std::move(mass)};
}

}  // namespace detail

// Exact posterior by variable elimination with a greedy min-size order.
inline Posterior infer(const BayesNet& net, const Evidence& ev, const std::string& query) {
    const auto rq = detail::resolve(net, ev, query);
    std::vector<Factor> factors;
    for (std::size_t i = 0; i < net.size(); ++i) {
        Factor f = cpt_factor(net, i);
        for (const auto& [var, state] : rq.evidence) f = restrict_factor(f, var, state);
        factors.push_back(std::move(f));
    }

    std::set<std::size_t> hidden;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (i != rq.query && !rq.evidence.count(i)) hidden.insert(i);

    while (!hidden.empty()) {
        // Pick the variable whose product factor is smallest; ties go to the lowest index.
        std::size_t best = *hidden.begin();
        double best_cost = -1.0;
        for (auto v : hidden) {
            std::set<std::size_t> scope;
            for (const auto& f : factors)
                if (std::find(f.vars.begin(), f.vars.end(), v) != f.vars.end()) scope.insert(f.vars.begin(), f.vars.end());
            double cost = 1.0;
            for (auto u : scope) cost *= net.cardinality(u);
            if (best_cost < 0.0 || cost < best_cost) {
                best_cost = cost;
                best = v;
            }
        }
        hidden.erase(best);
        std::vector<Factor> keep;
        Factor prod;
        bool any = false;
        for (auto& f : factors) {
            if (std::find(f.vars.begin(), f.vars.end(), best) == f.vars.end()) {
                keep.push_back(std::move(f));
            } else if (!any) {
                prod = std::move(f);
                any = true;
            } else {
                prod = multiply(prod, f);
            }
        }
        if (any) keep.push_back(sum_out(prod, best));
        factors = std::move(keep);
    }

    Factor result;
    result.values = {1.0};
    for (const auto& f : factors) result = multiply(result, f);
    // Only the query variable can remain in scope.
    std::vector<double> mass(static_cast<std::size_t>(net.cardinality(rq.query)), 0.0);
    if (result.vars.empty()) {
        std::fill(mass.begin(), mass.end(), result.values[0]);
    } else {
        mass = result.values;
    }
    return detail::normalize(net, rq.query, std::move(mass));
}

// Sums the mass of every consistent joint assignment. For verification only.
inline Posterior brute_force_joint(const BayesNet& net, const Evidence& ev, const std::string& query,
                                   double max_states = 1e7) {
    const auto rq = detail::resolve(net, ev, query);
    double space = 1.0;
    for (std::size_t i = 0; i < net.size(); ++i) space *= net.cardinality(i);
    if (space > max_states) fail("StateSpaceTooLarge", "joint space of " + std::to_string(space) + " states", "net");

    const std::size_t n = net.size();
    std::vector<std::vector<std::size_t>> parents(n);
    for (std::size_t i = 0; i < n; ++i) parents[i] = net.parent_indices(i);
    std::vector<int> assign(n, 0);
    std::vector<double> mass(static_cast<std::size_t>(net.cardinality(rq.query)), 0.0);
    const auto total = static_cast<std::size_t>(space);
    for (std::size_t idx = 0; idx < total; ++idx) {
        bool consistent = true;
        for (const auto& [var, state] : rq.evidence)
            if (assign[var] != state) consistent = false;
        if (consistent) {
            double p = 1.0;
            for (std::size_t i = 0; i < n && p > 0.0; ++i) {
                std::size_t row = 0;
                for (auto pa : parents[i]) row = row * net.cardinality(pa) + assign[pa];
                p *= net.cpt(net.nodes()[i].id).rows[row][assign[i]];
            }
            mass[assign[rq.query]] += p;
        }
        for (std::size_t k = n; k-- > 0;) {
            if (++assign[k] < net.cardinality(k)) break;
            assign[k] = 0;
        }
    }
    return detail::normalize(net, rq.query, std::move(mass));
}

// Prior marginal of every node.
inline std::map<std::string, Posterior> marginals(const BayesNet& net, const Evidence& ev = {}) {
    std::map<std::string, Posterior> out;
    for (const auto& n : net.nodes()) {
        if (ev.count(n.id)) continue;
        out.emplace(n.id, infer(net, ev, n.id));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network file: {"nodes":[{"id","states"}], "edges":[[p,c]], "cpts":{id:{"parents","rows"}}}

inline nlohmann::json to_json(const BayesNet& net) {
    nlohmann::json j;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"states", n.states}});
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : net.edges()) edges.push_back({e.first, e.second});
    auto& cpts = j["cpts"] = nlohmann::json::object();
    for (const auto& n : net.nodes()) cpts[n.id] = {{"parents", net.cpt(n.id).parents}, {"rows", net.cpt(n.id).rows}};
    return j;
}

inline BayesNet net_from_json(const nlohmann::json& j) {
    BayesNet net;
    try {
        for (const auto& n : j.at("nodes"))
            net.add_node(n.at("id").get<std::string>(), n.at("states").get<std::vector<std::string>>());
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) fail("InvalidNetworkFile", "edge must be [parent, child]", "edges");
            net.add_edge(e[0].get<std::string>(), e[1].get<std::string>());
        }
        const auto& cpts = j.at("cpts");
        for (const auto& n : net.nodes()) {
            if (!cpts.contains(n.id)) fail("InvalidNetworkFile", "missing CPT for " + n.id, n.id);
            const auto& c = cpts.at(n.id);
            if (c.at("parents").get<std::vector<std::string>>() != net.cpt(n.id).parents)
                fail("InvalidNetworkFile", "CPT parents of " + n.id + " disagree with edges", n.id);
            net.set_cpt(n.id, c.at("rows").get<std::vector<std::vector<double>>>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail("InvalidNetworkFile", e.what());
    }
    return net;
}

inline void save_net(const BayesNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write " + path, path);
    out << to_json(net).dump(1) << '\n';
}

inline BayesNet load_net(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("InvalidNetworkFile", "cannot open " + path, path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        fail("InvalidNetworkFile", e.what(), path);
    }
    return net_from_json(j);
}

}  // namespace stress::bn
