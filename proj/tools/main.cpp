#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "negsynth/bm25.hpp"
#include "negsynth/config.hpp"
#include "negsynth/corpus.hpp"
#include "negsynth/eval.hpp"
#include "negsynth/remote.hpp"
#include "negsynth/scene.hpp"
#include "negsynth/shuffle.hpp"
#include "negsynth/trainer.hpp"
#include "negsynth/util.hpp"

namespace fs = std::filesystem;
using namespace negsynth;

namespace {

BackendSpec stub_spec(const std::string& kind, const std::string& gold_from = "") {
    BackendSpec spec;
    spec.kind = kind;
    spec.gold_from = gold_from;
    return spec;
}

// Enum tokens coming from flags are usage errors when malformed.
Task parse_task_flag(const std::string& token) {
    try {
        return task_from_name(token);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const LoadError& e) {
        throw UsageError(e.what());
    }
}

AblationMode parse_ablation_flag(const std::string& token) {
    try {
        return ablation_from_name(token);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

RunManifest start_manifest(const std::string& command, uint64_t seed,
                           const std::string& config_snapshot,
                           const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs,
                           const fs::path& manifest_path) {
    RunManifest manifest;
    manifest.command = command;
    manifest.seed = seed;
    manifest.config_snapshot = config_snapshot;
    for (const auto& input : inputs) {
        manifest.input_digests[input] = file_digest(input);
    }
    manifest.output_paths = outputs;
    manifest.started_at = current_utc_timestamp();
    manifest.git_describe = build_git_describe();
    manifest.status = "running";
    write_manifest(manifest, manifest_path);
    return manifest;
}

void finish_manifest(RunManifest& manifest, const std::string& status,
                     const fs::path& manifest_path) {
    manifest.status = status;
    manifest.finished_at = current_utc_timestamp();
    write_manifest(manifest, manifest_path);
}

struct BuildIndexArgs {
    std::string corpus;
    std::string index_out;
    double k1 = 0.9;
    double b = 0.4;
    std::string format;
    std::string task = "extractive_qa";
};

int cmd_build_index(const BuildIndexArgs& args) {
    Task task = parse_task_flag(args.task);
    fs::path manifest_path = args.index_out + ".manifest.json";
    RunManifest manifest = start_manifest("build-index", 0, "", {args.corpus},
                                          {args.index_out}, manifest_path);
    Dataset dataset = load_dataset_any(args.corpus, args.format, task);
    PassagePool pool = pool_from_dataset(dataset);
    Bm25Index index = build_index(pool, Bm25Params{args.k1, args.b});
    index.save(args.index_out);
    std::printf("num_docs %zu\n", index.num_docs());
    std::printf("avg_doc_length %s\n", format_double(index.avg_doc_length()).c_str());
    finish_manifest(manifest, "completed", manifest_path);
    return 0;
}

struct SynthesizeArgs {
    std::string corpus;
    std::string out;
    std::string config_path;
    std::string index_path;
    std::string records_path;
    std::string format;
    std::string task = "extractive_qa";
    std::string ablation = "full";
    uint64_t seed = 0;
    size_t batch_size = 32;
    bool shuffle = false;
    bool retrieval = false;
    bool scene = false;
};

int cmd_synthesize(const SynthesizeArgs& args) {
    AblationMode mode = parse_ablation_flag(args.ablation);
    AppConfig config;
    if (!args.config_path.empty()) {
        config = load_app_config(args.config_path);
    } else {
        config.task = parse_task_flag(args.task);
        config.train = default_train_config(config.task);
        // Frozen stub backends: the answering stub is primed with the
        // corpus it is asked to counterfactualize.
        config.qa = stub_spec("lexical", "train");
        config.infiller = stub_spec("lexicon");
        config.detector = stub_spec("jaccard");
    }
    config.train_data = args.corpus;
    config.data_format = args.format;

    if (args.retrieval && args.index_path.empty()) {
        throw LoadError("--retrieval requires --index");
    }
    if (args.out.empty()) throw UsageError("--out is required");

    std::vector<std::string> outputs = {args.out};
    if (!args.records_path.empty()) outputs.push_back(args.records_path);
    fs::path manifest_path = args.out + ".manifest.json";
    RunManifest manifest = start_manifest("synthesize", args.seed, config.snapshot,
                                          {args.corpus}, outputs, manifest_path);

    Dataset dataset = load_dataset_any(args.corpus, args.format, config.task);

    std::map<std::string, std::vector<std::string>> gold_sets;
    std::string effective_format = args.format;
    if (effective_format.empty() && fs::path(args.corpus).extension() == ".json") {
        effective_format = "extractive";
    }
    if (effective_format == "extractive") gold_sets = load_gold_sets(args.corpus);

    std::vector<Example> synthesized;
    std::map<std::string, size_t> origin_counts;
    std::map<std::string, size_t> decision_counts;
    origin_counts["original"] = dataset.size();

    if (args.retrieval) {
        Bm25Index index = Bm25Index::load(args.index_path);
        PassagePool pool = pool_from_dataset(dataset);
        for (const auto& ex : dataset.examples) {
            if (!ex.label.is_span()) continue;
            auto negative = retrieve_negative(index, pool, ex);
            if (!negative) continue;
            ++origin_counts["retrieval"];
            synthesized.push_back(std::move(*negative));
        }
    }

    // Batching in file order keeps the output inspectable; the in-batch
    // permutation and masking draw from seed-derived streams.
    auto all_batches = batches(dataset, args.batch_size, 0, /*shuffle=*/false);

    if (args.shuffle) {
        for (const auto& batch : all_batches) {
            std::mt19937_64 rng(derive_seed(args.seed, "shuffle", batch.batch_index));
            for (auto& negative : shuffle_negatives(batch, rng)) {
                ++origin_counts["shuffle"];
                synthesized.push_back(std::move(negative));
            }
        }
    }

    std::vector<SceneRecord> scene_records;
    if (args.scene) {
        OwnedBackends backends = make_backends(config);
        SceneOptions options;
        options.mode = mode;
        options.perturbation = config.train.perturbation;
        options.gold_sets = gold_sets.empty() ? nullptr : &gold_sets;
        for (const auto& batch : all_batches) {
            auto records = scene_batch(batch, *backends.qa, *backends.infiller,
                                       *backends.detector, options,
                                       derive_seed(args.seed, "scene", batch.batch_index));
            for (auto& record : records) {
                if (record.decision) {
                    ++decision_counts[decision_name(*record.decision)];
                } else {
                    ++decision_counts["backend-error"];
                }
                if (record.failure == "only-noans-drop") ++decision_counts["only-noans-drop"];
                if (record.delta == 1) {
                    ++origin_counts["scene"];
                    synthesized.push_back(*record.example);
                }
                scene_records.push_back(std::move(record));
            }
        }
    }

    std::string out_text;
    for (const auto& ex : synthesized) {
        validate_example(ex);
        out_text += example_to_json_line(ex);
        out_text.push_back('\n');
    }
    write_file_atomic(args.out, out_text);

    if (!args.records_path.empty()) {
        std::string records_text;
        for (const auto& record : scene_records) {
            records_text += scene_record_to_json_line(record);
            records_text.push_back('\n');
        }
        write_file_atomic(args.records_path, records_text);
    }

    std::printf("synthesized %zu examples -> %s\n", synthesized.size(), args.out.c_str());
    for (const auto& [origin, count] : origin_counts) {
        std::printf("origin %s: %zu\n", origin.c_str(), count);
    }
    for (const auto& [decision, count] : decision_counts) {
        std::printf("decision %s: %zu\n", decision.c_str(), count);
    }
    finish_manifest(manifest, "completed", manifest_path);
    return 0;
}

int cmd_train(const std::string& config_path) {
    AppConfig config = load_app_config(config_path);
    if (config.train_data.empty()) throw UsageError("config needs train_data");

    Dataset dataset = load_dataset_any(config.train_data, config.data_format, config.task);
    OwnedBackends backends = make_backends(config);

    TrainBackends tb;
    tb.qa = backends.qa.get();
    tb.infiller = backends.infiller.get();
    tb.detector = backends.detector.get();

    std::map<std::string, std::vector<std::string>> gold_sets;
    {
        std::string effective = config.data_format;
        if (effective.empty() && fs::path(config.train_data).extension() == ".json") {
            effective = "extractive";
        }
        if (effective == "extractive") {
            gold_sets = load_gold_sets(config.train_data);
            tb.gold_sets = &gold_sets;
        }
    }

    PassagePool pool;
    std::optional<Bm25Index> index;
    if (config.train.normalized().use_retrieval) {
        pool = pool_from_dataset(dataset);
        index = build_index(pool, config.bm25);
        tb.index = &*index;
        tb.pool = &pool;
    }

    fs::create_directories(config.out_dir);
    fs::path out_dir = config.out_dir;
    fs::path manifest_path = out_dir / "manifest.json";
    fs::path log_path = out_dir / "run_log.jsonl";
    fs::path checkpoint_path = out_dir / "checkpoint.json";
    RunManifest manifest = start_manifest(
        "train", config.train.seed, config.snapshot, {config.train_data},
        {log_path.string(), checkpoint_path.string()}, manifest_path);

    RunLog log;
    try {
        log = train(dataset, tb, config.weights, config.train);
    } catch (const TrainError& e) {
        save_run_log(e.partial, log_path);
        finish_manifest(manifest, "failed", manifest_path);
        std::fprintf(stderr, "training failed at step %lld: %s\n",
                     static_cast<long long>(e.step), e.what());
        return 1;
    }

    save_run_log(log, log_path);
    write_file_atomic(checkpoint_path, backends.qa->clone_state());

    if (config.weights.lambda_scene > 0.0 && !log.scene_ever_active()) {
        std::printf("warning: SCENE never activated (warm start exceeds total steps)\n");
    }
    std::printf("trained %zu steps\n", log.steps.size());
    if (!log.steps.empty()) {
        std::printf("final overall loss %s\n",
                    format_double(log.steps.back().loss_overall).c_str());
    }
    std::printf("run log: %s\n", log_path.string().c_str());
    std::printf("checkpoint: %s\n", checkpoint_path.string().c_str());
    finish_manifest(manifest, "completed", manifest_path);
    return 0;
}

struct EvalArgs {
    std::string dataset_path;
    std::string config_path;
    std::string format;
    std::string task = "extractive_qa";
    std::string out = "eval_report.txt";
    std::string noans_subsets_path;
    std::vector<double> gap_values;
    bool threshold_sweep = false;
};

int cmd_eval(const EvalArgs& args) {
    std::optional<double> gap_value;
    if (!args.gap_values.empty()) {
        if (args.gap_values.size() != 3) {
            throw UsageError("--gap needs exactly three values: scene base full");
        }
        gap_value = gap(GapInputs{args.gap_values[0], args.gap_values[1], args.gap_values[2]});
        std::printf("%.1f%%\n", *gap_value * 100.0);
        if (args.dataset_path.empty()) return 0;
    }
    if (args.dataset_path.empty()) throw UsageError("dataset path required (or --gap)");

    AppConfig config;
    if (!args.config_path.empty()) {
        config = load_app_config(args.config_path);
    } else {
        config.task = parse_task_flag(args.task);
        config.qa = stub_spec("lexical", "none");
        config.infiller = stub_spec("lexicon");
        config.detector = stub_spec("jaccard");
    }

    Dataset dataset = load_dataset_any(args.dataset_path, args.format, config.task);
    if (dataset.examples.empty()) throw LoadError("empty dataset: " + args.dataset_path);

    fs::path manifest_path = args.out + ".manifest.json";
    RunManifest manifest = start_manifest("eval", 0, config.snapshot, {args.dataset_path},
                                          {args.out}, manifest_path);

    OwnedBackends backends = make_backends(config);

    EvalOptions options;
    std::map<std::string, std::vector<std::string>> gold_sets;
    {
        std::string effective = args.format;
        if (effective.empty() && fs::path(args.dataset_path).extension() == ".json") {
            effective = "extractive";
        }
        if (effective == "extractive") {
            gold_sets = load_gold_sets(args.dataset_path);
            options.gold_sets = &gold_sets;
        }
    }
    std::map<std::string, std::string> noans_subsets;
    if (!args.noans_subsets_path.empty()) {
        auto j = nlohmann::json::parse(read_file(args.noans_subsets_path));
        noans_subsets = j.get<std::map<std::string, std::string>>();
        options.noans_subsets = &noans_subsets;
    }

    Metrics metrics = evaluate(dataset, *backends.qa, options);
    std::string report = metrics_report(metrics);
    if (gap_value) {
        char line[64];
        std::snprintf(line, sizeof(line), "performance gap: %.1f%%\n", *gap_value * 100.0);
        report += line;
    }

    if (args.threshold_sweep) {
        std::vector<SweepPrediction> predictions;
        predictions.reserve(dataset.size());
        for (const auto& ex : dataset.examples) {
            Prediction pred = backends.qa->predict(ex.query, ex.context);
            SweepPrediction sp;
            sp.predicted = pred.label;
            sp.confidence = pred.confidence;
            sp.gold = ex.label;
            if (options.gold_sets) {
                auto it = options.gold_sets->find(ex.id);
                if (it != options.gold_sets->end() && it->second.size() > 1) {
                    sp.alt_golds.assign(it->second.begin() + 1, it->second.end());
                }
            }
            predictions.push_back(std::move(sp));
        }
        SweepResult sweep = threshold_sweep(dataset.task, predictions);
        char line[64];
        std::snprintf(line, sizeof(line), "best threshold: %.2f\n", sweep.best_theta);
        report += line;
        report += metrics_report(sweep.at_best);
    }

    std::fputs(report.c_str(), stdout);
    write_file_atomic(args.out, report);
    finish_manifest(manifest, "completed", manifest_path);
    return 0;
}

int cmd_serve(const std::string& config_path, const std::string& task_token) {
    AppConfig config;
    if (!config_path.empty()) {
        config = load_app_config(config_path);
    } else {
        config.task = parse_task_flag(task_token);
        config.qa = stub_spec("lexical", "none");
        config.infiller = stub_spec("lexicon");
        config.detector = stub_spec("jaccard");
    }
    OwnedBackends backends = make_backends(config);
    // stdout carries protocol lines only; anything else corrupts the
    // conversation, so the serve loop owns both ends until EOF.
    FdChannel channel(0, 1, /*owns_fds=*/false);
    serve_backends(channel, backends.qa.get(), backends.infiller.get(),
                   backends.detector.get());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic-negative generation, training, and evaluation"};
    app.require_subcommand(1);

    BuildIndexArgs bi;
    auto* build_index_cmd =
        app.add_subcommand("build-index", "Build a retrieval index from a corpus");
    build_index_cmd->add_option("corpus", bi.corpus, "Corpus file")->required();
    build_index_cmd->add_option("index", bi.index_out, "Index output path")->required();
    build_index_cmd->add_option("--k1", bi.k1, "Term-frequency saturation");
    build_index_cmd->add_option("--b", bi.b, "Length normalization");
    build_index_cmd->add_option("--format", bi.format, "extractive|pairs|jsonl");
    build_index_cmd->add_option("--task", bi.task, "Task of the corpus");

    SynthesizeArgs sy;
    auto* synthesize_cmd =
        app.add_subcommand("synthesize", "Generate synthetic examples offline");
    synthesize_cmd->add_option("corpus", sy.corpus, "Corpus file")->required();
    synthesize_cmd->add_option("--out", sy.out, "Output JSONL path")->required();
    synthesize_cmd->add_option("--config", sy.config_path, "Backend/config file");
    synthesize_cmd->add_option("--index", sy.index_path, "Index for --retrieval");
    synthesize_cmd->add_option("--records", sy.records_path,
                               "Write per-element generation records here");
    synthesize_cmd->add_option("--format", sy.format, "extractive|pairs|jsonl");
    synthesize_cmd->add_option("--task", sy.task, "Task of the corpus");
    synthesize_cmd->add_option("--ablation", sy.ablation,
                               "full|assume_noans|assume_noans_noretr|only_noans|no_filter");
    synthesize_cmd->add_option("--seed", sy.seed, "Root random seed");
    synthesize_cmd->add_option("--batch-size", sy.batch_size, "Batch size");
    synthesize_cmd->add_flag("--shuffle", sy.shuffle, "Emit in-batch shuffled negatives");
    synthesize_cmd->add_flag("--retrieval", sy.retrieval, "Emit retrieval negatives");
    synthesize_cmd->add_flag("--scene", sy.scene, "Emit self-labeled counterfactuals");

    std::string train_config_path;
    auto* train_cmd = app.add_subcommand("train", "Run the composite training loop");
    train_cmd->add_option("--config", train_config_path, "Config file")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score a labeled dataset");
    eval_cmd->add_option("dataset", ev.dataset_path, "Labeled dataset");
    eval_cmd->add_option("--config", ev.config_path, "Backend/config file");
    eval_cmd->add_option("--format", ev.format, "extractive|pairs|jsonl");
    eval_cmd->add_option("--task", ev.task, "Task of the dataset");
    eval_cmd->add_option("--out", ev.out, "Report output path");
    eval_cmd->add_option("--noans-subsets", ev.noans_subsets_path,
                         "JSON map: example id -> no-answer subgroup");
    eval_cmd->add_option("--gap", ev.gap_values,
                         "Three scores: method baseline oracle")
        ->expected(3);
    eval_cmd->add_flag("--threshold-sweep", ev.threshold_sweep,
                       "Sweep confidence thresholds on this set");

    std::string serve_config_path;
    std::string serve_task = "extractive_qa";
    auto* serve_cmd = app.add_subcommand("serve", "Serve backends over stdio");
    serve_cmd->add_option("--config", serve_config_path, "Backend/config file");
    serve_cmd->add_option("--task", serve_task, "Task for the default stub set");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build_index_cmd->parsed()) return cmd_build_index(bi);
        if (synthesize_cmd->parsed()) return cmd_synthesize(sy);
        if (train_cmd->parsed()) return cmd_train(train_config_path);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (serve_cmd->parsed()) return cmd_serve(serve_config_path, serve_task);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
