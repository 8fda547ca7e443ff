#pragma once

// Two-branch residual temporal convolutional network.
//
// General branch: residual blocks of causal dilated 1D convolutions followed
// by global average pooling. Personal branch: a learned subject embedding,
// concatenated to the pooled features (zeros in generalized mode). The head
// is an affine layer with softmax. Everything is float64 and kept in one flat
// parameter vector whose layout is fixed by the configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"
#include "stress/prediction_log.hpp"
#include "stress/signal.hpp"

namespace stress::tcn {

enum class Mode { Generalized, Personalized };
enum class Task { EmotionClassification, SubjectIdentification };

inline std::string_view to_string(Mode m) { return m == Mode::Generalized ? "general" : "personal"; }
inline std::string_view to_string(Task t) { return t == Task::EmotionClassification ? "emotion" : "identify"; }

inline Mode parse_mode(std::string_view s) {
    if (s == "general" || s == "generalized") return Mode::Generalized;
    if (s == "personal" || s == "personalized") return Mode::Personalized;
    fail("InvalidArgument", "mode must be general or personal", "mode");
}

inline Task parse_task(std::string_view s) {
    if (s == "emotion") return Task::EmotionClassification;
    if (s == "identify" || s == "identification") return Task::SubjectIdentification;
    fail("InvalidArgument", "task must be emotion or identify", "task");
}

struct ModelConfig {
    int in_channels = 1;
    int window_len = 0;  // 0 accepts any length
    int channels = 32;
    int kernel_size = 3;
    std::vector<int> dilations{1, 2, 4};
    int embedding_dim = 8;
    Mode mode = Mode::Generalized;
    std::vector<std::string> labels;    // output classes
    std::vector<std::string> subjects;  // embedding table rows

    int n_classes() const { return static_cast<int>(labels.size()); }
    int feature_dim() const {
        return (dilations.empty() ? in_channels : channels) + embedding_dim;
    }
};

// One causal convolution's view into the flat parameter vector.
// weights are out x in x k; tap j looks back (k - 1 - j) * dilation samples.
struct CausalConv {
    int in = 0;
    int out = 0;
    int k = 1;
    int dilation = 1;
    std::size_t w_off = 0;
    std::size_t b_off = 0;

    std::size_t weight_count() const { return static_cast<std::size_t>(out) * in * k; }
    int lookback(int j) const { return (k - 1 - j) * dilation; }

    // x: in x T, y: out x T (overwritten)
    void forward(std::span<const double> params, std::span<const double> x, int T, std::span<double> y) const {
        const double* w = params.data() + w_off;
        const double* b = params.data() + b_off;
        for (int o = 0; o < out; ++o) {
            double* yo = y.data() + static_cast<std::size_t>(o) * T;
            std::fill(yo, yo + T, b[o]);
            for (int i = 0; i < in; ++i) {
                const double* xi = x.data() + static_cast<std::size_t>(i) * T;
                for (int j = 0; j < k; ++j) {
                    const double wv = w[(static_cast<std::size_t>(o) * in + i) * k + j];
                    const int s = lookback(j);
                    for (int t = s; t < T; ++t) yo[t] += wv * xi[t - s];
                }
            }
        }
    }

    // Accumulates parameter gradients into `grad` and input gradients into dx.
    void backward(std::span<const double> params, std::span<const double> x, int T, std::span<const double> dy,
                  std::span<double> grad, std::span<double> dx) const {
        const double* w = params.data() + w_off;
        double* dw = grad.data() + w_off;
        double* db = grad.data() + b_off;
        for (int o = 0; o < out; ++o) {
            const double* dyo = dy.data() + static_cast<std::size_t>(o) * T;
            double acc = 0.0;
            for (int t = 0; t < T; ++t) acc += dyo[t];
            db[o] += acc;
            for (int i = 0; i < in; ++i) {
                const double* xi = x.data() + static_cast<std::size_t>(i) * T;
                double* dxi = dx.empty() ? nullptr : dx.data() + static_cast<std::size_t>(i) * T;
                for (int j = 0; j < k; ++j) {
                    const std::size_t widx = (static_cast<std::size_t>(o) * in + i) * k + j;
                    const int s = lookback(j);
                    double g = 0.0;
                    for (int t = s; t < T; ++t) g += dyo[t] * xi[t - s];
                    dw[widx] += g;
                    if (dxi) {
                        const double wv = w[widx];
                        for (int t = s; t < T; ++t) dxi[t - s] += wv * dyo[t];
                    }
                }
            }
        }
    }
};

// output = relu(conv2(relu(conv1(x)))) + project(x)
struct ResidualBlock {
    CausalConv conv1;
    CausalConv conv2;
    bool has_projection = false;
    CausalConv projection;  // 1x1, only when channel counts differ
};

// Activations of one forward pass, kept for backpropagation.
struct BlockTrace {
    std::vector<double> input;
    std::vector<double> pre1, act1, pre2, out;
};

struct Trace {
    int T = 0;
    std::vector<double> input;  // normalized, in_channels x T
    std::vector<BlockTrace> blocks;
    std::vector<double> features;  // pooled ++ embedding
    std::vector<double> logits;
    std::vector<double> probs;
    int subject_row = -1;

    // Last block output (or the input itself when there are no blocks).
    const std::vector<double>& hidden() const { return blocks.empty() ? input : blocks.back().out; }
};

inline void softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

class ResTcnModel {
public:
    ResTcnModel() = default;

    ResTcnModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        layout();
        initialize(seed);
    }

    static ResTcnModel from_parameters(ModelConfig cfg, std::vector<double> params) {
        ResTcnModel m;
        m.cfg_ = std::move(cfg);
        m.layout();
        if (params.size() != m.params_.size())
            fail("ShapeMismatch", "expected " + std::to_string(m.params_.size()) + " parameters, got " +
                                      std::to_string(params.size()), "weights");
        m.params_ = std::move(params);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }
    std::size_t parameter_count() const { return params_.size(); }
    const std::vector<ResidualBlock>& blocks() const { return blocks_; }

    // Offsets of the head and embedding table inside parameters().
    std::size_t head_weight_offset() const { return head_w_; }
    std::size_t head_bias_offset() const { return head_b_; }
    std::size_t embedding_offset() const { return emb_off_; }

    NormStats input_norm;

    // 1 + sum over blocks of 2 (k - 1) d.
    int receptive_field() const {
        int rf = 1;
        for (int d : cfg_.dilations) rf += 2 * (cfg_.kernel_size - 1) * d;
        return rf;
    }

    int subject_row(const std::string& subject) const {
        auto it = subject_index_.find(subject);
        return it == subject_index_.end() ? -1 : it->second;
    }

    // x is in_channels x T, raw (the model's input normalization is applied here).
    Trace trace(std::span<const double> x, int T, const std::string& subject) const {
        if (T < 1 || x.size() != static_cast<std::size_t>(cfg_.in_channels) * T)
            fail("ShapeMismatch", "input is not " + std::to_string(cfg_.in_channels) + " x T", "window");
        if (cfg_.window_len > 0 && T != cfg_.window_len)
            fail("ShapeMismatch", "window length " + std::to_string(T) + " != " + std::to_string(cfg_.window_len),
                 "window");
        Trace tr;
        tr.T = T;
        tr.input.assign(x.begin(), x.end());
        input_norm.apply(tr.input, cfg_.in_channels, T);

        const std::vector<double>* cur = &tr.input;
        tr.blocks.resize(blocks_.size());
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            auto& bt = tr.blocks[b];
            bt.input = *cur;
            const std::size_t n = static_cast<std::size_t>(blk.conv1.out) * T;
            bt.pre1.resize(n);
            blk.conv1.forward(params_, bt.input, T, bt.pre1);
            bt.act1.resize(n);
            for (std::size_t i = 0; i < n; ++i) bt.act1[i] = bt.pre1[i] > 0.0 ? bt.pre1[i] : 0.0;
            bt.pre2.resize(n);
            blk.conv2.forward(params_, bt.act1, T, bt.pre2);
            bt.out.resize(n);
            if (blk.has_projection) {
                blk.projection.forward(params_, bt.input, T, bt.out);
            } else {
                bt.out = bt.input;
            }
            for (std::size_t i = 0; i < n; ++i) bt.out[i] += bt.pre2[i] > 0.0 ? bt.pre2[i] : 0.0;
            cur = &bt.out;
        }

        const int C = blocks_.empty() ? cfg_.in_channels : cfg_.channels;
        tr.features.assign(cfg_.feature_dim(), 0.0);
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int t = 0; t < T; ++t) s += (*cur)[static_cast<std::size_t>(c) * T + t];
            tr.features[c] = s / T;
        }
        if (cfg_.mode == Mode::Personalized && cfg_.embedding_dim > 0) {
            tr.subject_row = subject_row(subject);
            if (tr.subject_row < 0) fail("UnknownSubject", "subject " + subject + " has no embedding", "subject_id");
            const double* e = params_.data() + emb_off_ + static_cast<std::size_t>(tr.subject_row) * cfg_.embedding_dim;
            std::copy_n(e, cfg_.embedding_dim, tr.features.begin() + C);
        }

        const int K = cfg_.n_classes();
        const int F = cfg_.feature_dim();
        tr.logits.assign(K, 0.0);
        for (int c = 0; c < K; ++c) {
            double z = params_[head_b_ + c];
            const double* w = params_.data() + head_w_ + static_cast<std::size_t>(c) * F;
            for (int f = 0; f < F; ++f) z += w[f] * tr.features[f];
            tr.logits[c] = z;
        }
        tr.probs = tr.logits;
        softmax_inplace(tr.probs);
        return tr;
    }

    Trace trace(const Window& w) const {
        if (w.channels != cfg_.in_channels)
            fail("ShapeMismatch", "window has " + std::to_string(w.channels) + " channels, model expects " +
                                      std::to_string(cfg_.in_channels), "window");
        return trace(w.data, w.length, w.subject_id);
    }

    std::vector<double> forward(const Window& w) const { return trace(w).probs; }

    std::vector<std::vector<double>> forward(const std::vector<Window>& batch) const {
        std::vector<std::vector<double>> out;
        out.reserve(batch.size());
        for (const auto& w : batch) out.push_back(forward(w));
        return out;
    }

    // Gradient of the loss w.r.t. logits is `dlogits`; accumulates into grad.
    void backward(const Trace& tr, std::span<const double> dlogits, std::span<double> grad) const {
        const int K = cfg_.n_classes();
        const int F = cfg_.feature_dim();
        const int T = tr.T;
        std::vector<double> dfeat(F, 0.0);
        for (int c = 0; c < K; ++c) {
            const double g = dlogits[c];
            grad[head_b_ + c] += g;
            double* gw = grad.data() + head_w_ + static_cast<std::size_t>(c) * F;
            const double* w = params_.data() + head_w_ + static_cast<std::size_t>(c) * F;
            for (int f = 0; f < F; ++f) {
                gw[f] += g * tr.features[f];
                dfeat[f] += g * w[f];
            }
        }
        const int C = blocks_.empty() ? cfg_.in_channels : cfg_.channels;
        if (tr.subject_row >= 0) {
            double* ge = grad.data() + emb_off_ + static_cast<std::size_t>(tr.subject_row) * cfg_.embedding_dim;
            for (int e = 0; e < cfg_.embedding_dim; ++e) ge[e] += dfeat[C + e];
        }
        if (blocks_.empty()) return;

        std::vector<double> dout(static_cast<std::size_t>(C) * T);
        for (int c = 0; c < C; ++c)
            std::fill_n(dout.begin() + static_cast<std::ptrdiff_t>(c) * T, T, dfeat[c] / T);

        for (std::size_t bi = blocks_.size(); bi-- > 0;) {
            const auto& blk = blocks_[bi];
            const auto& bt = tr.blocks[bi];
            const std::size_t n = dout.size();
            std::vector<double> dpre2(n);
            for (std::size_t i = 0; i < n; ++i) dpre2[i] = bt.pre2[i] > 0.0 ? dout[i] : 0.0;
            std::vector<double> dact1(n, 0.0);
            blk.conv2.backward(params_, bt.act1, T, dpre2, grad, dact1);
            for (std::size_t i = 0; i < n; ++i)
                if (!(bt.pre1[i] > 0.0)) dact1[i] = 0.0;
            const bool need_dx = bi > 0;
            std::vector<double> dx(need_dx ? bt.input.size() : 0, 0.0);
            blk.conv1.backward(params_, bt.input, T, dact1, grad, dx);
            if (blk.has_projection) {
                blk.projection.backward(params_, bt.input, T, dout, grad, dx);
            } else if (need_dx) {
                for (std::size_t i = 0; i < n; ++i) dx[i] += dout[i];
            }
            dout = std::move(dx);
        }
    }

    // Cross-entropy of one window against `target`; accumulates its gradient.
    double loss_and_gradient(const Window& w, int target, std::span<double> grad) const {
        const auto tr = trace(w);
        std::vector<double> dlogits = tr.probs;
        dlogits.at(target) -= 1.0;
        backward(tr, dlogits, grad);
        return -std::log(std::max(tr.probs[target], 1e-300));
    }

    double loss(const Window& w, int target) const {
        const auto tr = trace(w);
        return -std::log(std::max(tr.probs.at(target), 1e-300));
    }

private:
    void layout() {
        if (cfg_.in_channels < 1) fail("InvalidArgument", "in_channels must be >= 1", "in_channels");
        if (cfg_.n_classes() < 1) fail("InvalidArgument", "model needs at least one output class", "labels");
        if (cfg_.kernel_size < 1) fail("InvalidArgument", "kernel_size must be >= 1", "kernel_size");
        if (!cfg_.dilations.empty() && cfg_.channels < 1)
            fail("InvalidArgument", "channels must be >= 1", "channels");
        if (cfg_.embedding_dim < 0) fail("InvalidArgument", "embedding_dim must be >= 0", "embedding_dim");
        std::size_t off = 0;
        auto conv = [&](int in, int out, int k, int d) {
            CausalConv c{in, out, k, d, off, 0};
            off += c.weight_count();
            c.b_off = off;
            off += static_cast<std::size_t>(out);
            return c;
        };
        blocks_.clear();
        int in = cfg_.in_channels;
        for (int d : cfg_.dilations) {
            if (d < 1) fail("InvalidArgument", "dilations must be >= 1", "dilations");
            ResidualBlock b;
            b.conv1 = conv(in, cfg_.channels, cfg_.kernel_size, d);
            b.conv2 = conv(cfg_.channels, cfg_.channels, cfg_.kernel_size, d);
            if (in != cfg_.channels) {
                b.has_projection = true;
                b.projection = conv(in, cfg_.channels, 1, 1);
            }
            blocks_.push_back(b);
            in = cfg_.channels;
        }
        head_w_ = off;
        off += static_cast<std::size_t>(cfg_.n_classes()) * cfg_.feature_dim();
        head_b_ = off;
        off += static_cast<std::size_t>(cfg_.n_classes());
        emb_off_ = off;
        off += cfg_.subjects.size() * static_cast<std::size_t>(cfg_.embedding_dim);
        params_.assign(off, 0.0);
        subject_index_.clear();
        for (std::size_t i = 0; i < cfg_.subjects.size(); ++i) {
            if (!subject_index_.emplace(cfg_.subjects[i], static_cast<int>(i)).second)
                fail("InvalidArgument", "duplicate subject " + cfg_.subjects[i], "subjects");
        }
    }

    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto fill = [&](std::size_t off, std::size_t n, double sd) {
            std::normal_distribution<double> d(0.0, sd);
            for (std::size_t i = 0; i < n; ++i) params_[off + i] = d(rng);
        };
        for (const auto& b : blocks_) {
            for (const auto* c : {&b.conv1, &b.conv2}) fill(c->w_off, c->weight_count(), std::sqrt(2.0 / (c->in * c->k)));
            if (b.has_projection) fill(b.projection.w_off, b.projection.weight_count(), std::sqrt(1.0 / b.projection.in));
        }
        fill(head_w_, static_cast<std::size_t>(cfg_.n_classes()) * cfg_.feature_dim(),
             std::sqrt(1.0 / cfg_.feature_dim()));
        fill(emb_off_, cfg_.subjects.size() * static_cast<std::size_t>(cfg_.embedding_dim), 0.5);
    }

    ModelConfig cfg_;
    std::vector<ResidualBlock> blocks_;
    std::size_t head_w_ = 0;
    std::size_t head_b_ = 0;
    std::size_t emb_off_ = 0;
    std::vector<double> params_;
    std::map<std::string, int> subject_index_;
};

// ---------------------------------------------------------------------------
// Targets and model construction for a dataset.

inline std::vector<std::string> task_labels(const WindowedDataset& ds, Task task) {
    return task == Task::EmotionClassification ? class_labels(ds.class_scheme) : ds.subjects();
}

inline std::vector<int> task_targets(const WindowedDataset& ds, Task task, const std::vector<std::string>& labels) {
    std::vector<int> y;
    y.reserve(ds.size());
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
    for (const auto& w : ds.windows) {
        if (task == Task::EmotionClassification) {
            const int c = static_cast<int>(w.label);
            if (c >= static_cast<int>(labels.size()))
                fail("LabelMismatch", "window label outside the model's class scheme", w.sample_id);
            y.push_back(c);
        } else {
            auto it = index.find(w.subject_id);
            if (it == index.end()) fail("LabelMismatch", "subject " + w.subject_id + " is not a model class", w.sample_id);
            y.push_back(it->second);
        }
    }
    return y;
}

// Architecture knobs that are independent of the dataset.
struct Architecture {
    int channels = 32;
    int kernel_size = 3;
    std::vector<int> dilations{1, 2, 4};
    int embedding_dim = 8;
};

inline ModelConfig make_config(const WindowedDataset& ds, Task task, Mode mode, const Architecture& arch = {}) {
    if (task == Task::SubjectIdentification && mode == Mode::Personalized)
        fail("InvalidArgument", "identification cannot be given the subject identity", "mode");
    ModelConfig cfg;
    cfg.in_channels = ds.channels;
    cfg.window_len = ds.window_len;
    cfg.channels = arch.channels;
    cfg.kernel_size = arch.kernel_size;
    cfg.dilations = arch.dilations;
    cfg.embedding_dim = arch.embedding_dim;
    cfg.mode = mode;
    cfg.labels = task_labels(ds, task);
    if (mode == Mode::Personalized) cfg.subjects = ds.subjects();
    return cfg;
}

// ---------------------------------------------------------------------------
// Persistence: JSON with the config and the flat weights in layout order.

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"in_channels", c.in_channels}, {"window_len", c.window_len}, {"channels", c.channels},
            {"kernel_size", c.kernel_size}, {"dilations", c.dilations},   {"embedding_dim", c.embedding_dim},
            {"mode", std::string(to_string(c.mode))}, {"labels", c.labels}, {"subjects", c.subjects}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.window_len = j.at("window_len").get<int>();
    c.channels = j.at("channels").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.labels = j.at("labels").get<std::vector<std::string>>();
    c.subjects = j.at("subjects").get<std::vector<std::string>>();
    return c;
}

inline nlohmann::json to_json(const ResTcnModel& m, Task task) {
    return {{"format", "res-tcn"},
            {"version", 1},
            {"task", std::string(to_string(task))},
            {"config", to_json(m.config())},
            {"normalization",
             {{"scheme", std::string(stress::to_string(m.input_norm.scheme))},
              {"center", m.input_norm.center},
              {"scale", m.input_norm.scale}}},
            {"weights", std::vector<double>(m.parameters().begin(), m.parameters().end())}};
}

struct LoadedModel {
    ResTcnModel model;
    Task task = Task::EmotionClassification;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "res-tcn" || j.at("version").get<int>() != 1)
            fail("MalformedModel", "unsupported model format");
        LoadedModel out;
        out.task = parse_task(j.at("task").get<std::string>());
        out.model = ResTcnModel::from_parameters(model_config_from_json(j.at("config")),
                                                 j.at("weights").get<std::vector<double>>());
        const auto& n = j.at("normalization");
        out.model.input_norm.scheme = parse_norm(n.at("scheme").get<std::string>());
        out.model.input_norm.center = n.at("center").get<std::vector<double>>();
        out.model.input_norm.scale = n.at("scale").get<std::vector<double>>();
        return out;
    } catch (const nlohmann::json::exception& e) {
        fail("MalformedModel", e.what());
    }
}

inline void save_model(const ResTcnModel& m, Task task, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write " + path, path);
    out << to_json(m, task).dump() << '\n';
}

inline LoadedModel load_model(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::slurp(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail("MalformedModel", e.what(), path);
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------

inline PredictionLog predict_log(const ResTcnModel& model, const WindowedDataset& ds, Task task) {
    PredictionLog log;
    log.labels = model.config().labels;
    const auto targets = task_targets(ds, task, log.labels);
    log.entries.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& w = ds.windows[i];
        PredictionEntry e;
        e.sample_id = w.sample_id;
        e.subject_id = w.subject_id;
        e.modality = w.modality.name();
        e.true_label = targets[i];
        e.confidence = model.forward(w);
        e.predicted_label = argmax(e.confidence);
        log.entries.push_back(std::move(e));
    }
    return log;
}

inline PredictionLog predict_log(const ResTcnModel& model, const WindowedDataset& ds) {
    const bool emotion = model.config().labels == class_labels(ClassScheme::Three) ||
                         model.config().labels == class_labels(ClassScheme::Four);
    return predict_log(model, ds, emotion ? Task::EmotionClassification : Task::SubjectIdentification);
}

}  // namespace stress::tcn
