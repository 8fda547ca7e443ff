#pragma once

// End-to-end orchestration: ingest -> evaluate (held-out logs) -> train final
// models -> fuse -> SEM -> report, with a SHA-256 manifest over every artifact.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "stress/cross_validation.hpp"
#include "stress/error.hpp"
#include "stress/fusion.hpp"
#include "stress/sem.hpp"
#include "stress/signal.hpp"
#include "stress/synth.hpp"
#include "stress/tcn.hpp"
#include "stress/train.hpp"

namespace stress {

namespace fs = std::filesystem;

struct SyntheticSource {
    int subjects = 17;
    double seconds_per_condition = 12.0;
    double sampling_rate = 32.0;
    double noise_scale = 1.0;
};

struct RecordingSource {
    std::string manifest;
    std::string data;
};

struct EvaluationSpec {
    tcn::Task task = tcn::Task::EmotionClassification;
    tcn::Mode mode = tcn::Mode::Personalized;
    std::string cv = "kfold:10";

    std::string id() const {
        std::string c = cv;
        c.erase(std::remove(c.begin(), c.end(), ':'), c.end());
        return std::string(tcn::to_string(task)) + "_" + std::string(tcn::to_string(mode)) + "_" + c;
    }
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "artifacts";
    std::optional<SyntheticSource> synthetic;
    std::vector<RecordingSource> recordings;
    std::vector<SensorModality> modalities;  // synthetic only; empty = the six chest sensors
    ClassScheme class_scheme = ClassScheme::Three;
    int window_len = 0;  // 0 = one second of samples
    int stride = 0;      // 0 = half the window
    NormScheme ingest_norm = NormScheme::None;
    tcn::TrainingSpec training;
    std::vector<EvaluationSpec> evaluations{{tcn::Task::EmotionClassification, tcn::Mode::Personalized, "kfold:10"},
                                            {tcn::Task::EmotionClassification, tcn::Mode::Generalized, "loso"}};
    std::string fusion_mode = "class";
    double alpha = 1.0;
    int fusion_source = -1;  // evaluation whose held-out logs feed fusion; -1 = first emotion evaluation
    bool sem = true;
    bool sem_allow_boundary = false;
    bool train_final_models = true;
    int threads = 1;

    void validate() const {
        if (!synthetic && recordings.empty()) fail("InvalidConfig", "no data source: give synthetic or recordings", "data");
        if (synthetic && !recordings.empty()) fail("InvalidConfig", "synthetic and recordings are exclusive", "data");
        if (synthetic && synthetic->subjects < 1) fail("InvalidConfig", "synthetic.subjects must be >= 1", "subjects");
        if (window_len < 0 || stride < 0) fail("InvalidConfig", "window length and stride must be >= 0", "window");
        if (evaluations.empty()) fail("InvalidConfig", "at least one evaluation is required", "evaluations");
        for (const auto& e : evaluations) {
            FoldSpec::parse(e.cv, seed);
            if (e.task == tcn::Task::SubjectIdentification && e.mode == tcn::Mode::Personalized)
                fail("InvalidConfig", "identification cannot run in personal mode", "evaluations");
            if (e.mode == tcn::Mode::Personalized && e.cv == "loso")
                fail("InvalidConfig", "personal mode needs k-fold", "evaluations");
        }
        if (fusion_mode != "class" && fusion_mode != "confidence")
            fail("InvalidConfig", "fusion mode must be class or confidence", "fusion.mode");
        if (!(alpha >= 0.0)) fail("NegativeSmoothing", "alpha must be >= 0", "fusion.alpha");
        if (fusion_source >= static_cast<int>(evaluations.size()))
            fail("InvalidConfig", "fusion.source is not an evaluation index", "fusion.source");
        if (fusion_source >= 0 && evaluations[fusion_source].task != tcn::Task::EmotionClassification)
            fail("InvalidConfig", "fusion needs an emotion evaluation", "fusion.source");
        if (threads < 1) fail("InvalidConfig", "threads must be >= 1", "threads");
        training.train.validate();
    }

    int resolved_fusion_source() const {
        if (fusion_source >= 0) return fusion_source;
        for (std::size_t i = 0; i < evaluations.size(); ++i)
            if (evaluations[i].task == tcn::Task::EmotionClassification) return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) fail("InvalidConfig", where + " must be an object", where);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
            fail("InvalidConfig", "unknown key " + where + "." + it.key(), it.key());
}

}  // namespace detail

// {"seed", "output_dir", "data": {"synthetic": {...}} | {"recordings": [{"manifest","data"}]},
//  "modalities", "class_scheme", "window": {"length","stride","norm"}, "training": {...},
//  "evaluations": [{"task","mode","cv"}], "fusion": {"mode","alpha","source"},
//  "sem": {"enabled","allow_boundary"}, "train_final_models", "threads"}
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        detail::check_keys(j, {"seed", "output_dir", "data", "modalities", "class_scheme", "window", "training",
                               "evaluations", "fusion", "sem", "train_final_models", "threads"},
                           "config");
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("data")) {
            const auto& d = j["data"];
            detail::check_keys(d, {"synthetic", "recordings"}, "data");
            if (d.contains("synthetic")) {
                const auto& s = d["synthetic"];
                detail::check_keys(s, {"subjects", "seconds_per_condition", "sampling_rate", "noise_scale"}, "synthetic");
                SyntheticSource src;
                src.subjects = s.value("subjects", src.subjects);
                src.seconds_per_condition = s.value("seconds_per_condition", src.seconds_per_condition);
                src.sampling_rate = s.value("sampling_rate", src.sampling_rate);
                src.noise_scale = s.value("noise_scale", src.noise_scale);
                c.synthetic = src;
            }
            if (d.contains("recordings"))
                for (const auto& r : d["recordings"]) {
                    detail::check_keys(r, {"manifest", "data"}, "recordings[]");
                    c.recordings.push_back({r.at("manifest").get<std::string>(), r.at("data").get<std::string>()});
                }
        }
        if (j.contains("modalities"))
            for (const auto& m : j["modalities"]) c.modalities.push_back(SensorModality::parse(m.get<std::string>()));
        if (j.contains("class_scheme")) c.class_scheme = parse_scheme(j["class_scheme"].get<std::string>());
        if (j.contains("window")) {
            const auto& w = j["window"];
            detail::check_keys(w, {"length", "stride", "norm"}, "window");
            c.window_len = w.value("length", 0);
            c.stride = w.value("stride", 0);
            if (w.contains("norm")) c.ingest_norm = parse_norm(w["norm"].get<std::string>());
        }
        if (j.contains("training")) c.training = tcn::training_spec_from_json(j["training"]);
        if (j.contains("evaluations")) {
            c.evaluations.clear();
            for (const auto& e : j["evaluations"]) {
                detail::check_keys(e, {"task", "mode", "cv"}, "evaluations[]");
                EvaluationSpec s;
                s.task = tcn::parse_task(e.value("task", std::string("emotion")));
                s.mode = tcn::parse_mode(e.value("mode", std::string("personal")));
                s.cv = e.value("cv", std::string("kfold:10"));
                c.evaluations.push_back(s);
            }
        }
        if (j.contains("fusion")) {
            const auto& f = j["fusion"];
            detail::check_keys(f, {"mode", "alpha", "source"}, "fusion");
            c.fusion_mode = f.value("mode", c.fusion_mode);
            c.alpha = f.value("alpha", c.alpha);
            c.fusion_source = f.value("source", c.fusion_source);
        }
        if (j.contains("sem")) {
            const auto& s = j["sem"];
            detail::check_keys(s, {"enabled", "allow_boundary"}, "sem");
            c.sem = s.value("enabled", c.sem);
            c.sem_allow_boundary = s.value("allow_boundary", c.sem_allow_boundary);
        }
        if (j.contains("train_final_models")) c.train_final_models = j["train_final_models"].get<bool>();
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail("InvalidConfig", e.what(), "config");
    }
    c.validate();
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::slurp(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail("InvalidConfig", e.what(), path);
    }
    return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------

inline std::string sha256_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail("IoError", "cannot read " + p.string(), p.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

struct ArtifactEntry {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct ArtifactManifest {
    std::uint64_t seed = 0;
    std::vector<ArtifactEntry> artifacts;

    const ArtifactEntry* find(const std::string& path) const {
        for (const auto& a : artifacts)
            if (a.path == path) return &a;
        return nullptr;
    }
};

inline nlohmann::json to_json(const ArtifactManifest& m) {
    nlohmann::json arts = nlohmann::json::array();
    for (const auto& a : m.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    return {{"seed", m.seed}, {"artifacts", arts}};
}

inline ArtifactManifest hash_artifacts(const fs::path& dir, std::uint64_t seed) {
    ArtifactManifest m;
    m.seed = seed;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == "manifest.json") continue;
        m.artifacts.push_back({rel, sha256_file(entry.path()), entry.file_size()});
    }
    std::sort(m.artifacts.begin(), m.artifacts.end(),
              [](const ArtifactEntry& a, const ArtifactEntry& b) { return a.path < b.path; });
    return m;
}

// Node id of a modality in the fusion network: the bare kind when it is unique in the run.
inline std::string sensor_node_id(const SensorModality& m, const std::vector<SensorModality>& all) {
    const auto n = std::count_if(all.begin(), all.end(), [&](const SensorModality& o) { return o.kind() == m.kind(); });
    return n > 1 ? m.name() : m.short_name();
}

// SEM input: row i is one sample (logs aligned by sample_id, rows in sample_id order),
// column j is sensor j's stress confidence.
inline Eigen::MatrixXd stress_confidence_matrix(const std::map<std::string, PredictionLog>& logs,
                                                const std::vector<std::string>& sensors) {
    if (sensors.empty()) fail("InvalidArgument", "no sensors", "sensors");
    std::map<std::string, std::vector<double>> rows;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
        const auto it = logs.find(sensors[s]);
        if (it == logs.end()) fail("UnknownNode", "no prediction log for " + sensors[s], sensors[s]);
        const auto k = fusion::detail::stress_index(it->second);
        std::size_t seen = 0;
        for (const auto& e : it->second.entries) {
            auto& r = rows[e.sample_id];
            if (s == 0) r.assign(sensors.size(), std::nan(""));
            else if (r.empty()) fail("MisalignedLogs", sensors[s] + " has sample " + e.sample_id + " missing elsewhere", sensors[s]);
            r[s] = e.confidence.at(k);
            ++seen;
        }
        if (seen != rows.size() || it->second.size() != rows.size())
            fail("MisalignedLogs", sensors[s] + " does not cover the same samples as " + sensors[0], sensors[s]);
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(sensors.size()));
    Eigen::Index i = 0;
    for (const auto& [id, r] : rows) {
        for (std::size_t s = 0; s < r.size(); ++s) X(i, static_cast<Eigen::Index>(s)) = r[s];
        ++i;
    }
    return X;
}

namespace detail {

inline void write_json(const fs::path& p, const nlohmann::json& j) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) fail("IoError", "cannot write " + p.string(), p.string());
    out << j.dump(2) << '\n';
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.code(), name + ": " + e.message(), e.field());
    } catch (const std::exception& e) {
        throw Error("StageFailure", name + ": " + e.what(), name);
    }
}

inline void prepare_output(const fs::path& dir) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) fail("InvalidConfig", dir.string() + " is not a directory", "output_dir");
        const bool empty = fs::directory_iterator(dir) == fs::directory_iterator();
        if (!empty && !fs::exists(dir / "manifest.json") && !fs::exists(dir / "pipeline_config.json"))
            fail("InvalidConfig", dir.string() + " is not empty and holds no earlier pipeline run", "output_dir");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

inline nlohmann::json config_echo(const PipelineConfig& c) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : c.evaluations)
        evals.push_back({{"task", tcn::to_string(e.task)}, {"mode", tcn::to_string(e.mode)}, {"cv", e.cv}});
    nlohmann::json data;
    if (c.synthetic)
        data["synthetic"] = {{"subjects", c.synthetic->subjects},
                             {"seconds_per_condition", c.synthetic->seconds_per_condition},
                             {"sampling_rate", c.synthetic->sampling_rate},
                             {"noise_scale", c.synthetic->noise_scale}};
    for (const auto& r : c.recordings) data["recordings"].push_back({{"manifest", r.manifest}, {"data", r.data}});
    std::vector<std::string> mods;
    for (const auto& m : c.modalities) mods.push_back(m.name());
    auto training = tcn::to_json(c.training.train);
    training.erase("seed");
    training["channels"] = c.training.arch.channels;
    training["kernel_size"] = c.training.arch.kernel_size;
    training["dilations"] = c.training.arch.dilations;
    training["embedding_dim"] = c.training.arch.embedding_dim;
    return {{"seed", c.seed},
            {"data", data},
            {"modalities", mods},
            {"class_scheme", to_string(c.class_scheme)},
            {"window", {{"length", c.window_len}, {"stride", c.stride}, {"norm", to_string(c.ingest_norm)}}},
            {"training", training},
            {"evaluations", evals},
            {"fusion", {{"mode", c.fusion_mode}, {"alpha", c.alpha}, {"source", c.resolved_fusion_source()}}},
            {"sem", {{"enabled", c.sem}, {"allow_boundary", c.sem_allow_boundary}}},
            {"train_final_models", c.train_final_models},
            {"threads", c.threads}};
}

}  // namespace detail

// Ingest stage on its own: one windowed dataset per modality, sorted by modality name.
inline std::vector<WindowedDataset> ingest_datasets(const PipelineConfig& cfg) {
    std::vector<Recording> recs;
    if (cfg.synthetic) {
        SynthOptions opt;
        if (!cfg.modalities.empty()) opt.modalities = cfg.modalities;
        opt.sampling_rate = cfg.synthetic->sampling_rate;
        opt.seconds_per_condition = cfg.synthetic->seconds_per_condition;
        opt.noise_scale = cfg.synthetic->noise_scale;
        recs = synth_generate(cfg.synthetic->subjects, cfg.class_scheme, cfg.seed, opt);
    } else {
        for (const auto& r : cfg.recordings) {
            if (!fs::exists(r.manifest)) fail("MissingInput", "manifest not found: " + r.manifest, r.manifest);
            if (!fs::exists(r.data)) fail("MissingInput", "signal data not found: " + r.data, r.data);
            recs.push_back(load_recording(r.manifest, r.data));
        }
    }
    std::map<std::string, std::vector<WindowedDataset>> by_modality;
    for (const auto& rec : recs) {
        auto [len, stride] = default_window(rec.sampling_rate);
        if (cfg.window_len > 0) len = cfg.window_len;
        if (cfg.stride > 0) stride = cfg.stride;
        else if (cfg.window_len > 0) stride = std::max(1, len / 2);
        by_modality[rec.modality.name()].push_back(segment_windows(rec, len, stride, cfg.class_scheme));
    }
    std::vector<WindowedDataset> out;
    for (auto& [name, parts] : by_modality) {
        auto ds = merge(std::move(parts));
        if (ds.size() == 0) fail("EmptyDataset", "no windows for " + name, name);
        if (cfg.ingest_norm != NormScheme::None) ds = normalize(ds, cfg.ingest_norm);
        out.push_back(std::move(ds));
    }
    return out;
}

struct PipelineResult {
    ArtifactManifest manifest;
    std::map<std::string, CvSummary> summaries;  // "<modality>/<evaluation id>"
    std::optional<bn::BayesNet> net;
    std::optional<sem::SemFit> sem_fit;
};

inline std::string export_report(const fs::path& dir);

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    const fs::path out = cfg.output_dir;
    detail::stage("setup", [&] { detail::prepare_output(out); });
    detail::write_json(out / "pipeline_config.json", detail::config_echo(cfg));

    PipelineResult result;
    for (const char* sub : {"datasets", "reports", "logs", "models"}) fs::create_directories(out / sub);
    const auto datasets = detail::stage("ingest", [&] {
        auto ds = ingest_datasets(cfg);
        for (const auto& d : ds) save_dataset(d, (out / "datasets" / (d.modality.name() + ".bin")).string());
        return ds;
    });
    std::vector<SensorModality> mods;
    for (const auto& d : datasets) mods.push_back(d.modality);

    tcn::TrainConfig train_cfg = cfg.training.train;
    train_cfg.seed = cfg.seed;
    const int source = cfg.resolved_fusion_source();
    std::map<std::string, PredictionLog> fusion_logs;

    detail::stage("evaluate", [&] {
        for (const auto& ds : datasets)
            for (std::size_t e = 0; e < cfg.evaluations.size(); ++e) {
                const auto& spec = cfg.evaluations[e];
                auto tc = train_cfg;
                tc.task = spec.task;
                ModelTemplate tpl{cfg.training.arch, spec.mode, cfg.seed};
                auto summary = evaluate_cv(tpl, ds, FoldSpec::parse(spec.cv, cfg.seed), tc, {cfg.threads});
                detail::write_json(out / "reports" / ds.modality.name() / (spec.id() + ".json"), to_json(summary));
                const auto node = sensor_node_id(ds.modality, mods);
                fs::create_directories(out / "logs" / spec.id());
                save_prediction_log(summary.held_out, (out / "logs" / spec.id() / (node + ".jsonl")).string());
                if (static_cast<int>(e) == source) fusion_logs[node] = summary.held_out;
                result.summaries[ds.modality.name() + "/" + spec.id()] = std::move(summary);
            }
    });

    if (cfg.train_final_models && source >= 0)
        detail::stage("train", [&] {
            const auto& spec = cfg.evaluations[source];
            for (const auto& ds : datasets) {
                auto tc = train_cfg;
                tc.task = spec.task;
                auto mc = tcn::make_config(ds, spec.task, spec.mode, cfg.training.arch);
                auto trained = tcn::train(tcn::ResTcnModel(mc, cfg.seed), ds, tc).model;
                tcn::save_model(trained, spec.task, (out / "models" / (ds.modality.name() + ".json")).string());
            }
        });

    if (source >= 0) {
        std::vector<std::string> sensors;
        for (const auto& m : mods) sensors.push_back(sensor_node_id(m, mods));
        fusion::BinningSpec binning;
        result.net = detail::stage("fuse", [&] {
            bn::BayesNet net;
            if (cfg.fusion_mode == "class")
                net = fusion::populate_class_cpts(fusion::build_star_network(sensors, class_labels(cfg.class_scheme)),
                                                  fusion_logs, cfg.alpha);
            else
                net = fusion::populate_confidence_cpts(fusion::build_star_network(sensors, binning.labels()), fusion_logs,
                                                       binning, cfg.alpha);
            net.validate();
            bn::save_net(net, (out / "net.json").string());
            return net;
        });

        if (cfg.sem)
            detail::stage("sem", [&] {
                if (sensors.size() < 3) fail("TooFewIndicators", "SEM needs at least 3 sensors", "sem");
                const auto X = stress_confidence_matrix(fusion_logs, sensors);
                sem::FitOptions opt;
                opt.throw_on_boundary = !cfg.sem_allow_boundary;
                try {
                    result.sem_fit = sem::fit_sem(X, {fusion::kFusedId, sensors}, opt);
                } catch (const Error& e) {
                    detail::write_json(out / "sem.json", {{"error", {{"code", e.code()}, {"message", e.message()}}}});
                    throw;
                }
                detail::write_json(out / "sem.json", sem::to_json(*result.sem_fit));
                const auto weights = sem::sensor_weights(sem::rank_sensors(*result.sem_fit));
                bn::save_net(fusion::apply_sem_weights(*result.net, weights), (out / "net_sem.json").string());
            });
    }

    detail::stage("report", [&] {
        std::ofstream r(out / "report.txt");
        r << export_report(out);
    });

    result.manifest = hash_artifacts(out, cfg.seed);
    detail::write_json(out / "manifest.json", to_json(result.manifest));
    return result;
}

// ---------------------------------------------------------------------------

// Text report over an artifact directory: CV tables, fusion summary, SEM arc table.
inline std::string export_report(const fs::path& dir) {
    const auto reports_dir = dir / "reports";
    std::map<std::string, std::vector<nlohmann::json>> by_eval;  // evaluation id -> one report per modality
    if (fs::is_directory(reports_dir))
        for (const auto& mod : fs::directory_iterator(reports_dir)) {
            if (!mod.is_directory()) continue;
            for (const auto& f : fs::directory_iterator(mod.path()))
                if (f.path().extension() == ".json")
                    by_eval[f.path().stem().string()].push_back(nlohmann::json::parse(detail::slurp(f.path().string())));
        }
    if (by_eval.empty()) fail("MissingArtifact", "no evaluation reports under " + reports_dir.string(), "reports");

    std::ostringstream os;
    os << "Evaluation (% ± standard deviation)\n";
    for (auto& [id, reports] : by_eval) {
        std::sort(reports.begin(), reports.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
            return a.at("modality").get<std::string>() < b.at("modality").get<std::string>();
        });
        const auto& r0 = reports.front();
        os << "\n[" << id << "] task=" << r0.at("task").get<std::string>() << " mode=" << r0.at("mode").get<std::string>()
           << "\n"
           << render_table(reports);
    }

    if (fs::exists(dir / "net.json")) {
        const auto net = bn::load_net((dir / "net.json").string());
        os << "\nFusion network: " << net.size() << " nodes, " << net.edges().size() << " edges\n";
        const auto fused = bn::infer(net, {}, fusion::kFusedId);
        os << "P(" << fusion::kFusedId << ") without evidence:";
        for (std::size_t k = 0; k < fused.states.size(); ++k)
            os << " " << fused.states[k] << "=" << std::fixed << std::setprecision(4) << fused.probabilities[k];
        os << "\n";
    }

    if (fs::exists(dir / "sem.json")) {
        const auto j = nlohmann::json::parse(detail::slurp((dir / "sem.json").string()));
        if (j.contains("error")) {
            os << "\nSEM failed: " << j["error"]["code"].get<std::string>() << "\n";
        } else {
            os << "\nSEM path coefficients (latent " << j["latent"].get<std::string>() << ")\n";
            os << std::left << std::setw(10) << "arc" << std::setw(12) << "estimate" << std::setw(12) << "se"
               << std::setw(12) << "z" << "p\n";
            auto cell = [](const nlohmann::json& v, int prec, bool sci = false) {
                if (v.is_null()) return std::string("-");
                std::ostringstream c;
                if (sci) c << std::scientific;
                else c << std::fixed;
                c << std::setprecision(prec) << v.get<double>();
                return c.str();
            };
            for (const auto& a : j["arcs"])
                os << std::left << std::setw(10) << a["to"].get<std::string>() << std::setw(12) << cell(a["estimate"], 3)
                   << std::setw(12) << cell(a["se"], 3) << std::setw(12) << cell(a["z"], 2) << cell(a["p_value"], 2, true)
                   << "\n";
        }
    }
    return os.str();
}

}  // namespace stress
