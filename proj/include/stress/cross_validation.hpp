#pragma once

// k-fold and leave-one-subject-out protocols with per-fold retraining.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"
#include "stress/metrics.hpp"
#include "stress/prediction_log.hpp"
#include "stress/signal.hpp"
#include "stress/tcn.hpp"
#include "stress/train.hpp"

namespace stress {

struct FoldSpec {
    enum class Scheme { KFold, LeaveOneSubjectOut };
    Scheme scheme = Scheme::KFold;
    int k = 10;
    std::uint64_t seed = 0;

    static FoldSpec kfold(int k, std::uint64_t seed) { return {Scheme::KFold, k, seed}; }
    static FoldSpec loso() { return {Scheme::LeaveOneSubjectOut, 0, 0}; }

    std::string name() const { return scheme == Scheme::KFold ? "kfold:" + std::to_string(k) : "loso"; }

    // "kfold:10" or "loso"
    static FoldSpec parse(const std::string& s, std::uint64_t seed) {
        if (s == "loso") return loso();
        if (s.rfind("kfold:", 0) == 0) {
            try {
                return kfold(std::stoi(s.substr(6)), seed);
            } catch (const std::exception&) {
            }
        }
        fail("InvalidArgument", "cv must be kfold:N or loso, got " + s, "cv");
    }
};

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct FoldAssignment {
    std::vector<int> fold_of;  // dataset index -> fold
    std::vector<Fold> folds;
};

inline FoldAssignment assign_folds(const WindowedDataset& ds, const FoldSpec& spec) {
    const std::size_t n = ds.size();
    FoldAssignment fa;
    fa.fold_of.assign(n, -1);
    if (spec.scheme == FoldSpec::Scheme::KFold) {
        if (spec.k < 2) fail("TooFewSamples", "k-fold needs k >= 2", "k");
        if (static_cast<std::size_t>(spec.k) > n)
            fail("TooFewSamples", "k = " + std::to_string(spec.k) + " exceeds " + std::to_string(n) + " samples", "k");
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(spec.seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        // The first n % k folds take one extra sample.
        const std::size_t base = n / spec.k, extra = n % spec.k;
        std::size_t pos = 0;
        for (int f = 0; f < spec.k; ++f) {
            const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
            for (std::size_t i = 0; i < size; ++i) fa.fold_of[perm[pos++]] = f;
        }
        fa.folds.resize(spec.k);
    } else {
        const auto subjects = ds.subjects();
        if (subjects.size() < 2) fail("TooFewSubjects", "leave-one-subject-out needs >= 2 subjects", "subjects");
        for (std::size_t i = 0; i < n; ++i) {
            auto it = std::lower_bound(subjects.begin(), subjects.end(), ds.windows[i].subject_id);
            fa.fold_of[i] = static_cast<int>(it - subjects.begin());
        }
        fa.folds.resize(subjects.size());
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < fa.folds.size(); ++f)
            (static_cast<int>(f) == fa.fold_of[i] ? fa.folds[f].test : fa.folds[f].train).push_back(i);
    return fa;
}

inline std::vector<Fold> split(const WindowedDataset& ds, const FoldSpec& spec) { return assign_folds(ds, spec).folds; }

struct FoldResult {
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    ConfusionMatrix matrix;
    MetricsReport metrics;
};

struct CvSummary {
    std::string scheme;
    std::string task;
    std::string mode;
    std::string modality;
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    double std_macro_f1 = 0.0;
    // Every entry comes from the fold in which that window was held out; dataset order.
    PredictionLog held_out;
};

struct MeanStd {
    double mean = 0.0;
    double sd = 0.0;
};

// Sample (n - 1) standard deviation; 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return r;
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return r;
}

inline void summarize(CvSummary& s) {
    std::vector<double> acc, f1;
    for (const auto& f : s.folds) {
        acc.push_back(f.metrics.accuracy);
        f1.push_back(f.metrics.macro_f1);
    }
    const auto a = mean_std(acc), b = mean_std(f1);
    s.mean_accuracy = a.mean;
    s.std_accuracy = a.sd;
    s.mean_macro_f1 = b.mean;
    s.std_macro_f1 = b.sd;
}

struct ModelTemplate {
    tcn::Architecture arch;
    tcn::Mode mode = tcn::Mode::Generalized;
    std::uint64_t init_seed = 0;
};

struct EvalOptions {
    int threads = 1;  // folds trained concurrently; results are independent of completion order
};

// Trains a fresh model on every fold's training split and scores its test split.
inline CvSummary evaluate_cv(const ModelTemplate& tpl, const WindowedDataset& ds, const FoldSpec& spec,
                             const tcn::TrainConfig& cfg, const EvalOptions& opt = {}) {
    if (tpl.mode == tcn::Mode::Personalized && spec.scheme == FoldSpec::Scheme::LeaveOneSubjectOut)
        fail("InvalidArgument", "personalized models need the held-out subject in training; use k-fold", "cv");
    const auto fa = assign_folds(ds, spec);
    const auto labels = tcn::task_labels(ds, cfg.task);
    const auto targets = tcn::task_targets(ds, cfg.task, labels);

    struct Outcome {
        FoldResult result;
        std::vector<PredictionEntry> entries;  // aligned with the fold's test indices
    };

    auto run_fold = [&](std::size_t f) -> Outcome {
        const auto& fold = fa.folds[f];
        try {
            const auto train_ds = ds.subset(fold.train);
            auto mc = tcn::make_config(train_ds, cfg.task, tpl.mode, tpl.arch);
            mc.labels = labels;
            auto trained = tcn::train(tcn::ResTcnModel(mc, tpl.init_seed + f), train_ds, cfg).model;
            Outcome out;
            out.result.n_train = fold.train.size();
            out.result.n_test = fold.test.size();
            out.result.matrix = ConfusionMatrix(labels);
            for (auto i : fold.test) {
                const auto& w = ds.windows[i];
                PredictionEntry e;
                e.sample_id = w.sample_id;
                e.subject_id = w.subject_id;
                e.modality = w.modality.name();
                e.true_label = targets[i];
                e.confidence = trained.forward(w);
                e.predicted_label = argmax(e.confidence);
                ++out.result.matrix.at(e.true_label, e.predicted_label);
                out.entries.push_back(std::move(e));
            }
            out.result.metrics = report(out.result.matrix);
            return out;
        } catch (const Error& e) {
            throw Error(e.code(), "fold " + std::to_string(f) + ": " + e.message(), e.field());
        }
    };

    std::vector<Outcome> outcomes(fa.folds.size());
    if (opt.threads <= 1) {
        for (std::size_t f = 0; f < fa.folds.size(); ++f) outcomes[f] = run_fold(f);
    } else {
        for (std::size_t start = 0; start < fa.folds.size(); start += opt.threads) {
            std::vector<std::future<Outcome>> running;
            const std::size_t stop = std::min(fa.folds.size(), start + static_cast<std::size_t>(opt.threads));
            for (std::size_t f = start; f < stop; ++f) running.push_back(std::async(std::launch::async, run_fold, f));
            for (std::size_t f = start; f < stop; ++f) outcomes[f] = running[f - start].get();
        }
    }

    CvSummary s;
    s.scheme = spec.name();
    s.task = std::string(tcn::to_string(cfg.task));
    s.mode = std::string(tcn::to_string(tpl.mode));
    s.modality = ds.modality.name();
    s.held_out.labels = labels;
    s.held_out.entries.resize(ds.size());
    for (std::size_t f = 0; f < outcomes.size(); ++f) {
        const auto& test = fa.folds[f].test;
        for (std::size_t k = 0; k < test.size(); ++k) s.held_out.entries[test[k]] = std::move(outcomes[f].entries[k]);
        s.folds.push_back(std::move(outcomes[f].result));
    }
    summarize(s);
    return s;
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < r.labels.size(); ++c)
        per_class[r.labels[c]] = {
            {"precision", r.precision[c]}, {"recall", r.recall[c]}, {"f1", r.f1[c]}, {"support", r.support[c]}};
    return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"per_class", per_class}};
}

inline nlohmann::json to_json(const CvSummary& s) {
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t f = 0; f < s.folds.size(); ++f) {
        auto j = to_json(s.folds[f].metrics);
        j["fold"] = f;
        j["n_train"] = s.folds[f].n_train;
        j["n_test"] = s.folds[f].n_test;
        folds.push_back(std::move(j));
    }
    return {{"scheme", s.scheme},
            {"task", s.task},
            {"mode", s.mode},
            {"modality", s.modality},
            {"per_fold", folds},
            {"mean_accuracy", s.mean_accuracy},
            {"std_accuracy", s.std_accuracy},
            {"mean_macro_f1", s.mean_macro_f1},
            {"std_macro_f1", s.std_macro_f1}};
}

inline std::string percent_cell(double mean, double sd) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << mean * 100.0 << " ± " << sd * 100.0;
    return os.str();
}

// Plain-text table in the "% ± standard deviation" layout, one row per report.
inline std::string render_table(const std::vector<nlohmann::json>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Modality" << std::setw(10) << "Scheme" << std::setw(20) << "Accuracy"
       << "F1-score\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(14) << r.at("modality").get<std::string>() << std::setw(10)
           << r.at("scheme").get<std::string>() << std::setw(20)
           << percent_cell(r.at("mean_accuracy").get<double>(), r.at("std_accuracy").get<double>())
           << percent_cell(r.at("mean_macro_f1").get<double>(), r.at("std_macro_f1").get<double>()) << "\n";
    }
    return os.str();
}

}  // namespace stress
