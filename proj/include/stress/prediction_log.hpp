#pragma once

// Per-sample classifier outputs: the hand-off from the classifier to fusion.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"
#include "stress/signal.hpp"

namespace stress {

struct PredictionEntry {
    std::string sample_id;
    std::string subject_id;
    std::string modality;
    int true_label = 0;       // index into PredictionLog::labels
    int predicted_label = 0;  // index into PredictionLog::labels
    std::vector<double> confidence;
};

// Lowest index wins ties.
inline int argmax(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct PredictionLog {
    // Label space: affect class names in code order, or subject ids for identification.
    std::vector<std::string> labels;
    std::vector<PredictionEntry> entries;

    std::size_t size() const { return entries.size(); }

    void check_invariants() const {
        for (const auto& e : entries) {
            if (e.confidence.size() != labels.size())
                fail("MalformedLog", "confidence length differs from label count", e.sample_id);
            double sum = 0.0;
            for (double p : e.confidence) {
                if (!(p >= 0.0)) fail("MalformedLog", "negative or non-finite confidence", e.sample_id);
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) fail("MalformedLog", "confidence does not sum to 1", e.sample_id);
            if (e.predicted_label != argmax(e.confidence))
                fail("MalformedLog", "predicted label is not the argmax of confidence", e.sample_id);
        }
    }

    // Fraction of entries predicted as each label.
    std::vector<double> predicted_histogram() const {
        std::vector<double> h(labels.size(), 0.0);
        if (entries.empty()) return h;
        std::vector<long> counts(labels.size(), 0);
        for (const auto& e : entries) ++counts.at(e.predicted_label);
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = static_cast<double>(counts[i]) / static_cast<double>(entries.size());
        return h;
    }
};

// JSON Lines; labels are written by name.
inline void save_prediction_log(const PredictionLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write " + path, path);
    for (const auto& e : log.entries) {
        nlohmann::json j = {{"sample_id", e.sample_id},
                            {"subject_id", e.subject_id},
                            {"modality", e.modality},
                            {"true_label", log.labels.at(e.true_label)},
                            {"predicted_label", log.labels.at(e.predicted_label)},
                            {"confidence", e.confidence}};
        out << j.dump() << '\n';
    }
}

// Reads an affect-class log. The class scheme follows from the confidence width.
inline PredictionLog load_prediction_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("MissingFile", "cannot open " + path, path);
    PredictionLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            fail("MalformedLog", "line " + std::to_string(lineno) + " is not JSON", path);
        }
        PredictionEntry e;
        try {
            e.sample_id = j.at("sample_id").get<std::string>();
            e.subject_id = j.at("subject_id").get<std::string>();
            e.modality = j.at("modality").get<std::string>();
            e.confidence = j.at("confidence").get<std::vector<double>>();
            if (log.labels.empty()) {
                if (e.confidence.size() != 3 && e.confidence.size() != 4)
                    fail("MalformedLog", "affect logs carry 3 or 4 confidences", path);
                log.labels = class_labels(e.confidence.size() == 3 ? ClassScheme::Three : ClassScheme::Four);
            }
            auto t = parse_affect(j.at("true_label").get<std::string>());
            auto p = parse_affect(j.at("predicted_label").get<std::string>());
            if (!t || !p || static_cast<std::size_t>(*t) >= log.labels.size() ||
                static_cast<std::size_t>(*p) >= log.labels.size())
                fail("MalformedLog", "line " + std::to_string(lineno) + ": label outside class scheme", path);
            e.true_label = static_cast<int>(*t);
            e.predicted_label = static_cast<int>(*p);
        } catch (const nlohmann::json::exception& ex) {
            fail("MalformedLog", "line " + std::to_string(lineno) + ": " + ex.what(), path);
        }
        log.entries.push_back(std::move(e));
    }
    log.check_invariants();
    return log;
}

}  // namespace stress
