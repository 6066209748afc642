#include "negsynth/config.hpp"

#include <cstdlib>
#include <ctime>

#include "json.hpp"
#include "negsynth/stubs.hpp"
#include "negsynth/util.hpp"

namespace negsynth {

using nlohmann::json;

TrainConfig default_train_config(Task task) {
    TrainConfig config;
    config.task = task;
    config.warm_start_steps = 100;
    switch (task) {
        case Task::ExtractiveQA:
            config.batch_size = 32;
            config.epochs = 3;
            break;
        case Task::BooleanQA:
            config.batch_size = 16;
            config.epochs = 10;
            break;
        case Task::RTE:
            config.batch_size = 16;
            config.epochs = 10;
            break;
    }
    return config;
}

LossWeights default_loss_weights(Task task) {
    switch (task) {
        case Task::ExtractiveQA: return {0.0, 1.0, 1.0};
        case Task::BooleanQA: return {1.0, 0.0, 1.0};
        case Task::RTE: return {1.0, 0.0, 1.0};
    }
    throw std::logic_error("unreachable task");
}

namespace {

// Enum-like config tokens are user input; translate bad ones to usage
// errors so the CLI exits 2 instead of 1.
template <typename F>
auto usage_checked(const std::string& key, F&& parse) {
    try {
        return parse();
    } catch (const std::invalid_argument& e) {
        throw UsageError("config key '" + key + "': " + e.what());
    } catch (const LoadError& e) {
        throw UsageError("config key '" + key + "': " + e.what());
    }
}

BackendSpec parse_backend_spec(const json& j, const std::string& default_kind) {
    BackendSpec spec;
    spec.kind = default_kind;
    if (j.is_null()) return spec;
    spec.kind = j.value("kind", default_kind);
    if (spec.kind != "lexical" && spec.kind != "jaccard" && spec.kind != "lexicon" &&
        spec.kind != "echo" && spec.kind != "remote") {
        throw UsageError("unknown backend kind: " + spec.kind);
    }
    spec.graded = j.value("graded", false);
    spec.gold_from = j.value("gold_from", std::string());
    if (j.contains("state")) spec.state_path = j.at("state").get<std::string>();
    spec.seed = j.value("seed", 0ull);
    spec.tau = j.value("tau", 0.6);
    spec.sentinel = j.value("sentinel", std::string("<mask>"));
    if (j.contains("command")) spec.command = j.at("command").get<std::vector<std::string>>();
    return spec;
}

}  // namespace

AppConfig load_app_config(const std::filesystem::path& path) {
    std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError("config " + path.string() + ": " + e.what());
    }

    AppConfig config;
    config.snapshot = text;
    const std::string task_token = j.value("task", std::string("extractive_qa"));
    config.task = usage_checked("task", [&] { return task_from_name(task_token); });
    config.train = default_train_config(config.task);
    config.weights = default_loss_weights(config.task);

    config.train_data = j.value("train_data", std::string());
    config.data_format = j.value("data_format", std::string());
    config.out_dir = j.value("out_dir", std::string("out"));

    config.train.seed = j.value("seed", 0ull);
    config.train.batch_size = j.value("batch_size", config.train.batch_size);
    config.train.epochs = j.value("epochs", config.train.epochs);
    config.train.warm_start_steps = j.value("warm_start_steps", config.train.warm_start_steps);
    config.train.use_shuffle = j.value("use_shuffle", true);
    config.train.use_retrieval = j.value("use_retrieval", config.task == Task::ExtractiveQA);
    config.train.pre_fit = j.value("pre_fit", true);
    const std::string ablation_token = j.value("ablation", std::string("full"));
    config.train.ablation =
        usage_checked("ablation", [&] { return ablation_from_name(ablation_token); });

    if (j.contains("weights")) {
        const json& w = j.at("weights");
        config.weights.lambda_shuf = w.value("lambda_shuf", config.weights.lambda_shuf);
        config.weights.lambda_retr = w.value("lambda_retr", config.weights.lambda_retr);
        config.weights.lambda_scene = w.value("lambda_scene", config.weights.lambda_scene);
    }
    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        config.train.perturbation.beta_a = p.value("beta_a", 2.0);
        config.train.perturbation.beta_b = p.value("beta_b", 5.0);
        config.train.perturbation.min_masks = p.value("min_masks", 1);
        config.train.perturbation.collapse_adjacent = p.value("collapse_adjacent", true);
        config.train.perturbation.sentinel = p.value("sentinel", std::string("<mask>"));
    }
    if (j.contains("bm25")) {
        const json& b = j.at("bm25");
        config.bm25.k1 = b.value("k1", 0.9);
        config.bm25.b = b.value("b", 0.4);
    }

    const json backends = j.value("backends", json::object());
    config.qa = parse_backend_spec(backends.value("qa", json()), "lexical");
    config.infiller = parse_backend_spec(backends.value("infiller", json()), "lexicon");
    config.detector = parse_backend_spec(backends.value("detector", json()), "jaccard");
    return config;
}

Dataset load_dataset_any(const std::filesystem::path& path, const std::string& format,
                         Task task) {
    std::string effective = format;
    if (effective.empty()) {
        auto ext = path.extension().string();
        if (ext == ".jsonl") effective = "jsonl";
        else if (ext == ".tsv") effective = "pairs";
        else effective = "extractive";
    }
    if (effective == "extractive") return load_extractive(path);
    if (effective == "pairs") return load_pairs(path, task);
    if (effective == "jsonl") return load_jsonl(path);
    throw UsageError("unknown data format: " + effective);
}

namespace {

std::vector<std::string> remote_command(const BackendSpec& spec) {
    if (const char* override_cmd = std::getenv("NEGSYNTH_REMOTE")) {
        std::vector<std::string> argv;
        for (auto& token : split_whitespace(override_cmd)) argv.push_back(token);
        if (!argv.empty()) return argv;
    }
    if (spec.command.empty()) {
        throw UsageError("remote backend needs a command (or NEGSYNTH_REMOTE)");
    }
    return spec.command;
}

}  // namespace

OwnedBackends make_backends(const AppConfig& config) {
    OwnedBackends out;

    auto channel_for = [&](const BackendSpec& spec) -> std::shared_ptr<LineChannel> {
        // One subprocess serves all remote adapters of this run.
        if (!out.channel) {
            out.channel = std::make_shared<SubprocessChannel>(remote_command(spec));
        }
        return out.channel;
    };

    if (config.qa.kind == "remote") {
        out.qa = std::make_unique<RemoteQaBackend>(channel_for(config.qa), config.task);
    } else if (config.qa.kind == "lexical") {
        auto lexical = std::make_unique<LexicalQa>(config.task, config.qa.graded);
        if (config.qa.state_path) {
            lexical->restore_state(read_file(*config.qa.state_path));
        } else if (!config.qa.gold_from.empty() && config.qa.gold_from != "none") {
            auto source = config.qa.gold_from == "train"
                              ? config.train_data
                              : config.qa.gold_from;
            if (source.empty()) throw UsageError("gold_from: no data path available");
            lexical->memorize_dataset(load_dataset_any(source, config.data_format, config.task));
        }
        out.qa = std::move(lexical);
    } else {
        throw UsageError("unsupported answering backend kind: " + config.qa.kind);
    }

    if (config.infiller.kind == "remote") {
        out.infiller = std::make_unique<RemoteInfiller>(channel_for(config.infiller));
    } else if (config.infiller.kind == "echo") {
        out.infiller = std::make_unique<EchoInfiller>();
    } else if (config.infiller.kind == "lexicon") {
        out.infiller =
            std::make_unique<LexiconInfiller>(config.infiller.seed, config.infiller.sentinel);
    } else {
        throw UsageError("unsupported infiller kind: " + config.infiller.kind);
    }

    if (config.detector.kind == "remote") {
        out.detector = std::make_unique<RemoteDetector>(channel_for(config.detector));
    } else if (config.detector.kind == "jaccard") {
        out.detector = std::make_unique<JaccardDetector>(config.detector.tau);
    } else {
        throw UsageError("unsupported detector kind: " + config.detector.kind);
    }
    return out;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["command"] = manifest.command;
    // Keep the snapshot as structured JSON when it parses (it came from
    // a config file), else as a raw string.
    if (!manifest.config_snapshot.empty()) {
        try {
            j["config"] = json::parse(manifest.config_snapshot);
        } catch (const json::exception&) {
            j["config"] = manifest.config_snapshot;
        }
    }
    j["seed"] = manifest.seed;
    j["input_digests"] = manifest.input_digests;
    j["output_paths"] = manifest.output_paths;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["git_describe"] = manifest.git_describe;
    j["status"] = manifest.status;
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string current_utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string build_git_describe() {
#ifdef NEGSYNTH_GIT_DESCRIBE
    return NEGSYNTH_GIT_DESCRIBE;
#else
    return "unknown";
#endif
}

}  // namespace negsynth
