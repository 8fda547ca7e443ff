#pragma once

// Confusion matrices and the derived accuracy / precision / recall / F1.
//
// Every metric is a single integer ratio, so the double value is the
// correctly rounded quotient; the exact Ratio is also exposed.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stress/error.hpp"
#include "stress/prediction_log.hpp"

namespace stress {

struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

    Ratio reduced() const {
        if (den == 0) return {0, 1};
        const auto g = std::gcd(num, den);
        return g ? Ratio{num / g, den / g} : Ratio{0, 1};
    }

    friend bool operator==(const Ratio& a, const Ratio& b) {
        const auto x = a.reduced();
        const auto y = b.reduced();
        return x.num == y.num && x.den == y.den;
    }
};

// Rows are true labels, columns predicted labels.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> labels)
        : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

    // Two-class matrix with the positive class at index 0.
    static ConfusionMatrix binary(std::int64_t tp, std::int64_t fn, std::int64_t fp, std::int64_t tn) {
        ConfusionMatrix m({"positive", "negative"});
        m.at(0, 0) = tp;
        m.at(0, 1) = fn;
        m.at(1, 0) = fp;
        m.at(1, 1) = tn;
        return m;
    }

    int size() const { return static_cast<int>(labels_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }

    std::int64_t& at(int truth, int predicted) { return counts_.at(static_cast<std::size_t>(truth) * labels_.size() + predicted); }
    std::int64_t at(int truth, int predicted) const {
        return counts_.at(static_cast<std::size_t>(truth) * labels_.size() + predicted);
    }

    std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

    std::int64_t trace() const {
        std::int64_t t = 0;
        for (int i = 0; i < size(); ++i) t += at(i, i);
        return t;
    }

    // One-vs-rest reading for class c.
    std::int64_t tp(int c) const { return at(c, c); }
    std::int64_t fn(int c) const {
        std::int64_t s = 0;
        for (int j = 0; j < size(); ++j)
            if (j != c) s += at(c, j);
        return s;
    }
    std::int64_t fp(int c) const {
        std::int64_t s = 0;
        for (int i = 0; i < size(); ++i)
            if (i != c) s += at(i, c);
        return s;
    }
    std::int64_t tn(int c) const { return total() - tp(c) - fn(c) - fp(c); }
    std::int64_t support(int c) const { return tp(c) + fn(c); }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.labels_ != labels_) fail("InvalidArgument", "confusion matrices over different labels");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
        return *this;
    }

private:
    std::vector<std::string> labels_;
    std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion(const PredictionLog& log) {
    if (log.entries.empty()) fail("EmptyLog", "prediction log has no entries", "entries");
    ConfusionMatrix m(log.labels);
    const int C = m.size();
    for (const auto& e : log.entries) {
        if (e.true_label < 0 || e.true_label >= C || e.predicted_label < 0 || e.predicted_label >= C)
            fail("UnknownClass", "label index outside the class scheme", e.sample_id);
        ++m.at(e.true_label, e.predicted_label);
    }
    return m;
}

inline Ratio accuracy_ratio(const ConfusionMatrix& m) {
    if (m.total() == 0) fail("EmptyMatrix", "confusion matrix has no counts");
    return {m.trace(), m.total()};
}

inline double accuracy(const ConfusionMatrix& m) { return accuracy_ratio(m).value(); }

struct PrfRatios {
    Ratio precision;
    Ratio recall;
    Ratio f1;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Zero denominators give 0. F1 = 2PR / (P + R) = 2TP / (2TP + FP + FN).
inline PrfRatios precision_recall_f1_ratio(const ConfusionMatrix& m, int c) {
    if (c < 0 || c >= m.size()) fail("UnknownClass", "class index " + std::to_string(c) + " out of range", "class");
    const auto tp = m.tp(c), fp = m.fp(c), fn = m.fn(c);
    PrfRatios r;
    r.precision = tp + fp ? Ratio{tp, tp + fp} : Ratio{0, 1};
    r.recall = tp + fn ? Ratio{tp, tp + fn} : Ratio{0, 1};
    r.f1 = tp ? Ratio{2 * tp, 2 * tp + fp + fn} : Ratio{0, 1};
    return r;
}

inline Prf precision_recall_f1(const ConfusionMatrix& m, int c) {
    const auto r = precision_recall_f1_ratio(m, c);
    return {r.precision.value(), r.recall.value(), r.f1.value()};
}

inline Prf precision_recall_f1(const ConfusionMatrix& m, const std::string& label) {
    for (int c = 0; c < m.size(); ++c)
        if (m.labels()[c] == label) return precision_recall_f1(m, c);
    fail("UnknownClass", "no class named " + label, "class");
}

// Harmonic mean from precision and recall directly.
inline double f1_from(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct MetricsReport {
    std::vector<std::string> labels;
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;
    std::vector<std::int64_t> support;
    double macro_f1 = 0.0;
};

// Macro F1 averages over the classes that occur as a truth or a prediction.
inline MetricsReport report(const ConfusionMatrix& m) {
    MetricsReport r;
    r.labels = m.labels();
    r.accuracy = accuracy(m);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < m.size(); ++c) {
        const auto prf = precision_recall_f1(m, c);
        r.precision.push_back(prf.precision);
        r.recall.push_back(prf.recall);
        r.f1.push_back(prf.f1);
        r.support.push_back(m.support(c));
        if (m.support(c) > 0 || m.fp(c) > 0) {
            sum += prf.f1;
            ++present;
        }
    }
    r.macro_f1 = present ? sum / present : 0.0;
    return r;
}

}  // namespace stress
