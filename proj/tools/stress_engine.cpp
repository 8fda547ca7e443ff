// stress-engine: command-line front end over the header-only engine.
// Every verb prints a JSON summary on stdout; failures print {"error":{...}} on stderr, exit 1.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "stress/pipeline.hpp"
#include "stress/service.hpp"

using namespace stress;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config;
    std::string out;
};

json read_json_file(const std::string& path) {
    try {
        return json::parse(detail::slurp(path));
    } catch (const json::parse_error& e) {
        fail("InvalidConfig", e.what(), path);
    }
}

std::string require_out(const Globals& g, const char* what) {
    if (g.out.empty()) fail("InvalidArgument", std::string("--out is required: ") + what, "out");
    return g.out;
}

tcn::TrainingSpec training_spec(const Globals& g) {
    tcn::TrainingSpec spec;
    if (!g.config.empty()) spec = tcn::training_spec_from_json(read_json_file(g.config));
    if (g.seed_given) spec.train.seed = g.seed;
    return spec;
}

// "EDA=path/to/log.jsonl" pairs plus every *.jsonl in a directory (sensor id = file stem).
std::map<std::string, PredictionLog> collect_logs(const std::vector<std::string>& pairs, const std::string& dir) {
    std::map<std::string, PredictionLog> logs;
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) fail("InvalidArgument", "expected SENSOR=path, got " + p, "log");
        logs[p.substr(0, eq)] = load_prediction_log(p.substr(eq + 1));
    }
    if (!dir.empty()) {
        if (!fs::is_directory(dir)) fail("MissingInput", "not a directory: " + dir, dir);
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".jsonl") logs[e.path().stem().string()] = load_prediction_log(e.path().string());
    }
    if (logs.empty()) fail("InvalidArgument", "no prediction logs given", "log");
    return logs;
}

std::vector<std::string> keys(const std::map<std::string, PredictionLog>& logs) {
    std::vector<std::string> k;
    for (const auto& [id, _] : logs) k.push_back(id);
    return k;
}

std::atomic<service::ApiServer*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal stress detection engine"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--config", g.config, "JSON config (pipeline config, or training settings for train/evaluate)");
    app.add_option("--out", g.out, "Output path");

    std::function<json()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "Write synthetic recordings (manifest + CSV per subject and modality)");
    int n_subjects = 17;
    SynthOptions synth_opt;
    std::vector<std::string> synth_mods;
    std::string scheme_name = "three";
    synth->add_option("--subjects", n_subjects)->check(CLI::PositiveNumber);
    synth->add_option("--seconds", synth_opt.seconds_per_condition);
    synth->add_option("--rate", synth_opt.sampling_rate);
    synth->add_option("--noise", synth_opt.noise_scale);
    synth->add_option("--modality", synth_mods, "e.g. chest_eda; repeatable");
    synth->add_option("--classes", scheme_name, "three | four");
    synth->callback([&] {
        action = [&] {
            const fs::path out = require_out(g, "directory for recordings");
            fs::create_directories(out);
            if (!synth_mods.empty()) {
                synth_opt.modalities.clear();
                for (const auto& m : synth_mods) synth_opt.modalities.push_back(SensorModality::parse(m));
            }
            json written = json::array();
            for (const auto& r : synth_generate(n_subjects, parse_scheme(scheme_name), g.seed, synth_opt)) {
                const auto stem = r.subject_id + "_" + r.modality.name();
                save_recording(r, (out / (stem + ".json")).string(), (out / (stem + ".csv")).string());
                written.push_back({{"manifest", (out / (stem + ".json")).string()}, {"data", (out / (stem + ".csv")).string()}});
            }
            return json{{"recordings", written}};
        };
    });

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Window recordings into one dataset file per modality");
    std::vector<std::string> manifests, datas;
    int win_len = 0, win_stride = 0;
    std::string norm_name = "none";
    ingest->add_option("--manifest", manifests, "Recording manifest; repeatable, paired with --data")->required();
    ingest->add_option("--data", datas, "Signal CSV; repeatable")->required();
    ingest->add_option("--window-len,--window", win_len, "Window length in samples (default: one second)");
    ingest->add_option("--stride", win_stride, "Default: half the window");
    ingest->add_option("--norm", norm_name, "none | zscore | minmax");
    ingest->add_option("--classes", scheme_name);
    ingest->callback([&] {
        action = [&] {
            if (manifests.size() != datas.size()) fail("InvalidArgument", "--manifest and --data must pair up", "data");
            PipelineConfig cfg;
            for (std::size_t i = 0; i < manifests.size(); ++i) cfg.recordings.push_back({manifests[i], datas[i]});
            cfg.window_len = win_len;
            cfg.stride = win_stride;
            cfg.ingest_norm = parse_norm(norm_name);
            cfg.class_scheme = parse_scheme(scheme_name);
            // --out x.bin writes the single modality there; anything else is a directory of <modality>.bin.
            const fs::path out = require_out(g, "dataset file or directory");
            const auto datasets = ingest_datasets(cfg);
            const bool single = out.extension() == ".bin";
            if (single && datasets.size() != 1)
                fail("InvalidArgument", "recordings span " + std::to_string(datasets.size()) +
                                            " modalities; give a directory for --out", "out");
            if (!single) fs::create_directories(out);
            json written = json::array();
            for (const auto& ds : datasets) {
                const auto path = single ? out.string() : (out / (ds.modality.name() + ".bin")).string();
                save_dataset(ds, path);
                written.push_back({{"path", path}, {"windows", ds.size()}, {"modality", ds.modality.name()}});
            }
            return json{{"datasets", written}};
        };
    });

    // train
    auto* train = app.add_subcommand("train", "Train a Res-TCN on a dataset");
    std::string dataset_path, task_name = "emotion", mode_name = "general";
    train->add_option("--dataset", dataset_path)->required();
    train->add_option("--task", task_name, "emotion | identify");
    train->add_option("--mode", mode_name, "general | personal");
    train->callback([&] {
        action = [&] {
            const auto ds = load_dataset(dataset_path);
            auto spec = training_spec(g);
            spec.train.task = tcn::parse_task(task_name);
            const auto mode = tcn::parse_mode(mode_name);
            auto res = tcn::train(tcn::ResTcnModel(tcn::make_config(ds, spec.train.task, mode, spec.arch), spec.train.seed),
                                  ds, spec.train);
            const auto out = require_out(g, "model file");
            tcn::save_model(res.model, spec.train.task, out);
            return json{{"model", out},
                        {"training_accuracy", tcn::training_accuracy(res.model, ds, spec.train.task)},
                        {"final_loss", res.loss_history.empty() ? json() : json(res.loss_history.back())}};
        };
    });

    // predict
    auto* predict = app.add_subcommand("predict", "Write a prediction log for a dataset");
    std::string model_path;
    predict->add_option("--model", model_path)->required();
    predict->add_option("--dataset", dataset_path)->required();
    predict->callback([&] {
        action = [&] {
            const auto lm = tcn::load_model(model_path);
            const auto log = tcn::predict_log(lm.model, load_dataset(dataset_path), lm.task);
            const auto out = require_out(g, "log file");
            save_prediction_log(log, out);
            return json{{"log", out}, {"entries", log.size()}};
        };
    });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Cross-validate on a dataset");
    std::string cv = "kfold:10";
    int threads = 1;
    evaluate->add_option("--dataset", dataset_path)->required();
    evaluate->add_option("--task", task_name);
    evaluate->add_option("--mode", mode_name);
    evaluate->add_option("--cv", cv, "kfold:K | loso");
    evaluate->add_option("--threads", threads)->check(CLI::PositiveNumber);
    std::string report_path, emit_log;
    evaluate->add_option("--report", report_path, "Write the JSON report here");
    evaluate->add_option("--emit-log", emit_log, "Write the held-out prediction log here");
    evaluate->callback([&] {
        action = [&] {
            const auto ds = load_dataset(dataset_path);
            auto spec = training_spec(g);
            spec.train.task = tcn::parse_task(task_name);
            ModelTemplate tpl{spec.arch, tcn::parse_mode(mode_name), spec.train.seed};
            const auto s = evaluate_cv(tpl, ds, FoldSpec::parse(cv, spec.train.seed), spec.train, {threads});
            auto j = to_json(s);
            if (!report_path.empty()) std::ofstream(report_path) << j.dump(2) << '\n';
            if (!emit_log.empty()) save_prediction_log(s.held_out, emit_log);
            if (!g.out.empty()) {
                const fs::path out = g.out;
                fs::create_directories(out);
                std::ofstream(out / "report.json") << j.dump(2) << '\n';
                save_prediction_log(s.held_out, (out / (ds.modality.short_name() + ".jsonl")).string());
            }
            return j;
        };
    });

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Build and populate the fusion network from prediction logs");
    std::vector<std::string> log_pairs;
    std::string logs_dir, fusion_mode = "class", sem_path;
    double alpha = 1.0;
    fuse->add_option("--log", log_pairs, "SENSOR=prediction_log.jsonl; repeatable");
    fuse->add_option("--logs", logs_dir, "Directory of <SENSOR>.jsonl logs");
    fuse->add_option("--mode", fusion_mode, "class | confidence");
    fuse->add_option("--alpha", alpha, "Additive smoothing");
    fuse->add_option("--sem", sem_path, "sem.json whose ranking weights replace the counted fused CPT");
    fuse->callback([&] {
        action = [&] {
            const auto logs = collect_logs(log_pairs, logs_dir);
            const auto sensors = keys(logs);
            bn::BayesNet net;
            if (fusion_mode == "class")
                net = fusion::populate_class_cpts(fusion::build_star_network(sensors, logs.begin()->second.labels), logs, alpha);
            else if (fusion_mode == "confidence") {
                fusion::BinningSpec b;
                net = fusion::populate_confidence_cpts(fusion::build_star_network(sensors, b.labels()), logs, b, alpha);
            } else
                fail("InvalidArgument", "mode must be class or confidence", "mode");
            if (!sem_path.empty()) {
                std::map<std::string, double> w;
                const auto fit = read_json_file(sem_path);
                for (const auto& r : fit.at("ranking")) w[r.at("id").get<std::string>()] = r.at("weight").get<double>();
                net = fusion::apply_sem_weights(net, w);
            }
            const auto out = require_out(g, "network file");
            bn::save_net(net, out);
            return json{{"network", out}, {"sensors", sensors}};
        };
    });

    // sem
    auto* semc = app.add_subcommand("sem", "Fit the one-factor path model on sensors' stress confidences");
    bool allow_boundary = false;
    semc->add_option("--log", log_pairs, "SENSOR=prediction_log.jsonl; repeatable");
    semc->add_option("--logs", logs_dir, "Directory of <SENSOR>.jsonl logs");
    std::vector<std::string> indicators;
    semc->add_option("--indicators", indicators, "Sensor ids in model order; the first carries the fixed loading")
        ->delimiter(',');
    semc->add_flag("--allow-boundary", allow_boundary, "Report boundary and unidentified fits instead of failing");
    semc->callback([&] {
        action = [&] {
            const auto logs = collect_logs(log_pairs, logs_dir);
            const auto sensors = indicators.empty() ? keys(logs) : indicators;
            sem::FitOptions opt;
            opt.throw_on_boundary = !allow_boundary;
            const auto fit = sem::fit_sem(stress_confidence_matrix(logs, sensors), {fusion::kFusedId, sensors}, opt);
            auto j = sem::to_json(fit);
            if (!g.out.empty()) std::ofstream(g.out) << j.dump(2) << '\n';
            return j;
        };
    });

    // infer
    auto* inferc = app.add_subcommand("infer", "Posterior of one node given evidence");
    std::string net_path, query = fusion::kFusedId;
    std::vector<std::string> evidence;
    inferc->add_option("--net", net_path)->required();
    inferc->add_option("--evidence", evidence, "NODE=state; repeatable");
    inferc->add_option("--query", query);
    inferc->callback([&] {
        action = [&] {
            bn::Evidence ev;
            for (const auto& e : evidence) {
                const auto eq = e.find('=');
                if (eq == std::string::npos || eq == 0) fail("InvalidArgument", "expected NODE=state, got " + e, "evidence");
                ev[e.substr(0, eq)] = e.substr(eq + 1);
            }
            const auto p = bn::infer(bn::load_net(net_path), ev, query);
            return json{{"query", p.query}, {"posterior", service::posterior_json(p)}};
        };
    });

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP inference service (STRESS_ENGINE_BIND, STRESS_ENGINE_LOG)");
    std::string bind;
    serve->add_option("--net", net_path)->required();
    serve->add_option("--model", model_path);
    serve->add_option("--bind", bind, "host:port; overrides STRESS_ENGINE_BIND");
    serve->callback([&] {
        action = [&] {
            service::ServiceState state;
            state.load(net_path, model_path);
            service::ApiServer server(state);
            const auto addr = bind.empty() ? service::bind_from_env() : service::parse_bind(bind);
            const int port = server.bind(addr);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << json{{"listening", addr.host + ":" + std::to_string(port)}}.dump() << std::endl;
            server.run();
            g_server = nullptr;
            return json{{"stopped", true}};
        };
    });

    // report
    auto* report = app.add_subcommand("report", "Render the text report of an artifact directory");
    std::string dir;
    report->add_option("--dir", dir, "Artifact directory")->required();
    report->callback([&] {
        action = [&] {
            const auto text = export_report(dir);
            if (g.out.empty()) {
                std::cout << text;
                return json();
            }
            std::ofstream(g.out) << text;
            return json{{"report", g.out}};
        };
    });

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a pipeline config (--config)");
    pipeline->callback([&] {
        action = [&] {
            if (g.config.empty()) fail("InvalidArgument", "--config is required", "config");
            auto j = read_json_file(g.config);
            if (g.seed_given) j["seed"] = g.seed;
            if (!g.out.empty()) j["output_dir"] = g.out;
            const auto res = run_pipeline(pipeline_config_from_json(j));
            return json{{"output_dir", j.value("output_dir", std::string("artifacts"))},
                        {"artifacts", res.manifest.artifacts.size()}};
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"code", "UsageError"}, {"message", e.what()}, {"field", ""}}}}.dump() << '\n';
        return 2;
    }

    try {
        const auto out = action();
        if (!out.is_null()) std::cout << out.dump(2) << '\n';
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"message", e.message()}, {"field", e.field()}}}}.dump() << '\n';
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "Internal"}, {"message", e.what()}, {"field", ""}}}}.dump() << '\n';
    }
    return 1;
}
