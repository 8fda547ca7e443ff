#pragma once

// Star-shaped fusion network: one root per sensor, a single fused child.
// CPTs are populated from per-sensor prediction logs, either from predicted
// classes or from binned stress confidence.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "stress/bayes_net.hpp"
#include "stress/error.hpp"
#include "stress/prediction_log.hpp"

namespace stress::fusion {

inline constexpr const char* kFusedId = "Fused";

// bin(p) = min(floor(p * 10), 9); 0 is confident no-stress, 9 confident stress.
struct BinningSpec {
    int n_bins = 10;

    int bin(double p) const {
        if (!(p >= -1e-12 && p <= 1.0 + 1e-12)) fail("InvalidArgument", "confidence outside [0, 1]", "confidence");
        const int b = static_cast<int>(std::floor(std::clamp(p, 0.0, 1.0) * n_bins));
        return std::min(b, n_bins - 1);
    }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (int b = 0; b < n_bins; ++b) out.push_back(std::to_string(b));
        return out;
    }
};

inline bn::BayesNet build_star_network(const std::vector<std::string>& sensors, const std::vector<std::string>& states,
                                       const std::string& fused_id = kFusedId) {
    if (sensors.empty()) fail("InvalidArgument", "a star network needs at least one sensor", "sensors");
    bn::BayesNet net;
    for (const auto& s : sensors) net.add_node(s, states);
    net.add_node(fused_id, states);
    for (const auto& s : sensors) net.add_edge(s, fused_id);
    return net;
}

inline std::vector<std::string> sensor_ids(const bn::BayesNet& net, const std::string& fused_id) {
    const auto& parents = net.cpt(fused_id).parents;
    return {parents.begin(), parents.end()};
}

// Per-sample states observed for every sensor plus the fused outcome.
struct AlignedSample {
    std::vector<int> sensor_states;
    int fused_state = 0;
};

namespace detail {

template <class StateOf, class FusedOf>
std::vector<AlignedSample> align(const bn::BayesNet& net, const std::map<std::string, PredictionLog>& logs,
                                 const std::string& fused_id, StateOf state_of, FusedOf fused_of) {
    const auto sensors = sensor_ids(net, fused_id);
    std::vector<std::map<std::string, const PredictionEntry*>> by_id(sensors.size());
    for (std::size_t s = 0; s < sensors.size(); ++s) {
        auto it = logs.find(sensors[s]);
        if (it == logs.end()) fail("MisalignedLogs", "no prediction log for sensor " + sensors[s], sensors[s]);
        for (const auto& e : it->second.entries)
            if (!by_id[s].emplace(e.sample_id, &e).second)
                fail("MisalignedLogs", "duplicate sample " + e.sample_id, sensors[s]);
    }
    for (std::size_t s = 1; s < sensors.size(); ++s) {
        if (by_id[s].size() != by_id[0].size())
            fail("MisalignedLogs", sensors[s] + " and " + sensors[0] + " cover different samples", sensors[s]);
        for (const auto& kv : by_id[0])
            if (!by_id[s].count(kv.first))
                fail("MisalignedLogs", "sample " + kv.first + " missing from " + sensors[s], sensors[s]);
    }
    std::vector<AlignedSample> out;
    out.reserve(by_id[0].size());
    for (const auto& kv : by_id[0]) {
        AlignedSample a;
        std::string truth;
        for (std::size_t s = 0; s < sensors.size(); ++s) {
            const auto& log = logs.at(sensors[s]);
            const auto* e = by_id[s].at(kv.first);
            const auto& t = log.labels.at(e->true_label);
            if (s == 0) truth = t;
            else if (t != truth) fail("MisalignedLogs", "sensors disagree on the truth of " + kv.first, sensors[s]);
            a.sensor_states.push_back(state_of(sensors[s], log, *e));
        }
        a.fused_state = fused_of(logs.at(sensors[0]), *by_id[0].at(kv.first));
        out.push_back(std::move(a));
    }
    return out;
}

// Roots get their empirical state histogram; the fused child gets additive
// smoothing (count + α) / (row total + α C). A row with no mass is uniform.
inline bn::BayesNet populate(bn::BayesNet net, const std::vector<AlignedSample>& samples, double alpha,
                             const std::string& fused_id) {
    if (!(alpha >= 0.0)) fail("NegativeSmoothing", "smoothing must be >= 0", "alpha");
    if (samples.empty()) fail("EmptyLog", "no aligned samples", "logs");
    const auto sensors = sensor_ids(net, fused_id);
    for (std::size_t s = 0; s < sensors.size(); ++s) {
        const auto card = net.node(sensors[s]).states.size();
        std::vector<long> counts(card, 0);
        for (const auto& a : samples) ++counts[a.sensor_states[s]];
        std::vector<double> prior(card);
        for (std::size_t k = 0; k < card; ++k)
            prior[k] = static_cast<double>(counts[k]) / static_cast<double>(samples.size());
        net.set_cpt(sensors[s], {prior});
    }
    const auto card = net.node(fused_id).states.size();
    const auto rows = net.row_count(fused_id);
    std::vector<std::vector<long>> counts(rows, std::vector<long>(card, 0));
    for (const auto& a : samples) ++counts[net.row_index(fused_id, a.sensor_states)][a.fused_state];
    std::vector<std::vector<double>> table(rows, std::vector<double>(card));
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (auto c : counts[r]) total += static_cast<double>(c);
        const double denom = total + alpha * static_cast<double>(card);
        for (std::size_t k = 0; k < card; ++k)
            table[r][k] = denom > 0.0 ? (static_cast<double>(counts[r][k]) + alpha) / denom
                                      : 1.0 / static_cast<double>(card);
    }
    net.set_cpt(fused_id, std::move(table));
    return net;
}

inline int label_state(const bn::BayesNet& net, const std::string& node, const std::string& label) {
    const auto& st = net.node(node).states;
    auto it = std::find(st.begin(), st.end(), label);
    if (it == st.end()) fail("StateMismatch", "label " + label + " is not a state of " + node, node);
    return static_cast<int>(it - st.begin());
}

inline std::size_t stress_index(const PredictionLog& log) {
    auto it = std::find(log.labels.begin(), log.labels.end(), "stress");
    if (it == log.labels.end()) fail("StateMismatch", "log has no stress class", "labels");
    return static_cast<std::size_t>(it - log.labels.begin());
}

}  // namespace detail

// Sensor states are predicted classes; the fused state is the window's true class.
inline bn::BayesNet populate_class_cpts(bn::BayesNet net, const std::map<std::string, PredictionLog>& logs,
                                        double alpha = 1.0, const std::string& fused_id = kFusedId) {
    if (!(alpha >= 0.0)) fail("NegativeSmoothing", "smoothing must be >= 0", "alpha");
    const auto samples = detail::align(
        net, logs, fused_id,
        [&](const std::string& sensor, const PredictionLog& log, const PredictionEntry& e) {
            return detail::label_state(net, sensor, log.labels.at(e.predicted_label));
        },
        [&](const PredictionLog& log, const PredictionEntry& e) {
            return detail::label_state(net, fused_id, log.labels.at(e.true_label));
        });
    return detail::populate(std::move(net), samples, alpha, fused_id);
}

// Sensor states are bin(confidence[stress]); the fused state bins the one-hot
// truth, so it is 9 for stress windows and 0 otherwise.
inline bn::BayesNet populate_confidence_cpts(bn::BayesNet net, const std::map<std::string, PredictionLog>& logs,
                                             const BinningSpec& binning = {}, double alpha = 1.0,
                                             const std::string& fused_id = kFusedId) {
    if (!(alpha >= 0.0)) fail("NegativeSmoothing", "smoothing must be >= 0", "alpha");
    const auto samples = detail::align(
        net, logs, fused_id,
        [&](const std::string& sensor, const PredictionLog& log, const PredictionEntry& e) {
            const int b = binning.bin(e.confidence.at(detail::stress_index(log)));
            return detail::label_state(net, sensor, std::to_string(b));
        },
        [&](const PredictionLog& log, const PredictionEntry& e) {
            const bool stressed = e.true_label == static_cast<int>(detail::stress_index(log));
            return detail::label_state(net, fused_id, std::to_string(binning.bin(stressed ? 1.0 : 0.0)));
        });
    return detail::populate(std::move(net), samples, alpha, fused_id);
}

// Replaces the fused CPT with a weighted vote: P(fused = c | parents) is
// proportional to the summed weight of sensors whose state is c.
inline bn::BayesNet apply_sem_weights(bn::BayesNet net, const std::map<std::string, double>& weights,
                                      const std::string& fused_id = kFusedId) {
    const auto sensors = sensor_ids(net, fused_id);
    bool any_positive = false;
    for (const auto& [id, w] : weights) {
        if (std::find(sensors.begin(), sensors.end(), id) == sensors.end())
            fail("UnknownNode", "weight given for non-sensor " + id, id);
        if (!(w >= 0.0)) fail("InvalidArgument", "weights must be nonnegative", id);
        any_positive |= w > 0.0;
    }
    if (!any_positive) fail("AllZeroWeights", "at least one sensor weight must be positive", "weights");

    const auto& fused_states = net.node(fused_id).states;
    const auto card = fused_states.size();
    // Map each sensor state to the fused state with the same label (-1 if none).
    std::vector<std::vector<int>> to_fused(sensors.size());
    std::vector<int> cards;
    std::vector<double> w(sensors.size(), 0.0);
    for (std::size_t s = 0; s < sensors.size(); ++s) {
        if (auto it = weights.find(sensors[s]); it != weights.end()) w[s] = it->second;
        const auto& st = net.node(sensors[s]).states;
        cards.push_back(static_cast<int>(st.size()));
        for (const auto& label : st) {
            auto f = std::find(fused_states.begin(), fused_states.end(), label);
            to_fused[s].push_back(f == fused_states.end() ? -1 : static_cast<int>(f - fused_states.begin()));
        }
    }
    const auto rows = net.row_count(fused_id);
    std::vector<std::vector<double>> table(rows, std::vector<double>(card, 0.0));
    std::vector<int> assign(sensors.size(), 0);
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t s = 0; s < sensors.size(); ++s) {
            const int c = to_fused[s][assign[s]];
            if (c >= 0 && w[s] > 0.0) {
                table[r][c] += w[s];
                total += w[s];
            }
        }
        for (auto& v : table[r]) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(card);
        for (std::size_t k = sensors.size(); k-- > 0;) {
            if (++assign[k] < cards[k]) break;
            assign[k] = 0;
        }
    }
    net.set_cpt(fused_id, std::move(table));
    return net;
}

}  // namespace stress::fusion
