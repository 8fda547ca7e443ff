#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"
#include "stress/signal.hpp"
#include "stress/tcn.hpp"

namespace stress::tcn {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    Task task = Task::EmotionClassification;
    // Input statistics are fitted on the training windows and stored in the model.
    NormScheme input_norm = NormScheme::ZScore;

    void validate() const {
        if (epochs < 0) fail("InvalidConfig", "epochs must be >= 0", "epochs");
        if (batch_size < 1) fail("InvalidConfig", "batch_size must be >= 1", "batch_size");
        if (!(learning_rate >= 0.0)) fail("InvalidConfig", "learning_rate must be >= 0", "learning_rate");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            fail("InvalidConfig", "Adam betas must lie in [0, 1)", "beta1");
        if (!(epsilon > 0.0)) fail("InvalidConfig", "epsilon must be positive", "epsilon");
    }
};

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad) {
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == OptimizerKind::SGD) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
            return;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

private:
    TrainConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

struct TrainResult {
    ResTcnModel model;
    double initial_loss = 0.0;         // full pass before the first update
    std::vector<double> loss_history;  // mean minibatch loss of each epoch
};

inline double mean_loss(const ResTcnModel& model, const WindowedDataset& ds, const std::vector<int>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) s += model.loss(ds.windows[i], y[i]);
    return ds.size() ? s / static_cast<double>(ds.size()) : 0.0;
}

// Minibatch cross-entropy training. Batches are drawn from a permutation
// seeded by cfg.seed; gradients are summed in sample order, so a run is
// bit-reproducible.
inline TrainResult train(ResTcnModel model, const WindowedDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.size() == 0) fail("InvalidArgument", "empty training set", "dataset");
    const auto y = task_targets(ds, cfg.task, model.config().labels);

    if (cfg.input_norm != NormScheme::None) {
        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), 0);
        model.input_norm = fit_normalization(ds, cfg.input_norm, all);
    }

    TrainResult result;
    result.initial_loss = mean_loss(model, ds, y);
    Optimizer opt(cfg, model.parameter_count());
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(model.parameter_count());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const auto i = order[k];
                batch_loss += model.loss_and_gradient(ds.windows[i], y[i], grad);
            }
            if (!std::isfinite(batch_loss))
                fail("NonFiniteLoss", "loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(batch_index), "loss");
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (auto& g : grad) g *= inv;
            opt.step(model.parameters(), grad);
            epoch_loss += batch_loss;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(ds.size()));
    }
    result.model = std::move(model);
    return result;
}

inline double training_accuracy(const ResTcnModel& model, const WindowedDataset& ds, Task task) {
    const auto y = task_targets(ds, task, model.config().labels);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (argmax(model.forward(ds.windows[i])) == y[i]) ++hit;
    return ds.size() ? static_cast<double>(hit) / static_cast<double>(ds.size()) : 0.0;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_parameter = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

// |a - n| / max(|a|, |n|, floor); the floor keeps parameters whose gradient
// is essentially zero from reporting pure round-off as relative error.
inline double relative_error(double a, double n, double floor = 1e-6) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Analytic cross-entropy gradient vs central differences (f(θ+h) − f(θ−h)) / 2h.
inline GradCheckResult grad_check(ResTcnModel model, const Window& sample, int target, double h = 1e-5) {
    GradCheckResult r;
    r.analytic.assign(model.parameter_count(), 0.0);
    model.loss_and_gradient(sample, target, r.analytic);
    r.numeric.resize(model.parameter_count());
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = model.loss(sample, target);
        params[i] = keep - h;
        const double down = model.loss(sample, target);
        params[i] = keep;
        r.numeric[i] = (up - down) / (2.0 * h);
        const double e = relative_error(r.analytic[i], r.numeric[i]);
        if (e > r.max_relative_error) {
            r.max_relative_error = e;
            r.worst_parameter = i;
        }
    }
    return r;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"optimizer", c.optimizer == OptimizerKind::SGD ? "sgd" : "adam"},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"seed", c.seed},
            {"task", std::string(to_string(c.task))},
            {"input_norm", std::string(stress::to_string(c.input_norm))}};
}

// Training and architecture settings read from one JSON object; unknown keys are rejected.
struct TrainingSpec {
    TrainConfig train;
    Architecture arch;
};

inline TrainingSpec training_spec_from_json(const nlohmann::json& j, TrainingSpec base = {}) {
    if (!j.is_object()) fail("InvalidConfig", "training config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        try {
            if (k == "epochs") base.train.epochs = v.get<int>();
            else if (k == "batch_size") base.train.batch_size = v.get<int>();
            else if (k == "learning_rate") base.train.learning_rate = v.get<double>();
            else if (k == "optimizer") {
                const auto s = v.get<std::string>();
                if (s == "sgd") base.train.optimizer = OptimizerKind::SGD;
                else if (s == "adam") base.train.optimizer = OptimizerKind::Adam;
                else fail("InvalidConfig", "optimizer must be sgd or adam", k);
            } else if (k == "beta1") base.train.beta1 = v.get<double>();
            else if (k == "beta2") base.train.beta2 = v.get<double>();
            else if (k == "epsilon") base.train.epsilon = v.get<double>();
            else if (k == "seed") base.train.seed = v.get<std::uint64_t>();
            else if (k == "task") base.train.task = parse_task(v.get<std::string>());
            else if (k == "input_norm") base.train.input_norm = parse_norm(v.get<std::string>());
            else if (k == "channels") base.arch.channels = v.get<int>();
            else if (k == "kernel_size") base.arch.kernel_size = v.get<int>();
            else if (k == "dilations") base.arch.dilations = v.get<std::vector<int>>();
            else if (k == "embedding_dim") base.arch.embedding_dim = v.get<int>();
            else fail("InvalidConfig", "unknown key " + k, k);
        } catch (const nlohmann::json::exception& e) {
            fail("InvalidConfig", e.what(), k);
        }
    }
    base.train.validate();
    return base;
}

}  // namespace stress::tcn
