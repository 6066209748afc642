#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "negsynth/backends.hpp"
#include "negsynth/bm25.hpp"
#include "negsynth/corpus.hpp"
#include "negsynth/remote.hpp"
#include "negsynth/trainer.hpp"

namespace negsynth {

// Bad option values (unknown enum tokens and the like) are usage errors
// and exit with code 2; unreadable files and bad data exit with 1.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct BackendSpec {
    std::string kind;  // "lexical", "jaccard", "lexicon", "echo", "remote"
    bool graded = false;                  // lexical: graded confidence
    std::string gold_from;                // lexical: "train", "none", or a path
    std::optional<std::string> state_path;  // lexical: restore a checkpoint
    uint64_t seed = 0;                    // lexicon infiller
    double tau = 0.6;                     // jaccard detector
    std::string sentinel = "<mask>";
    std::vector<std::string> command;     // remote: argv to spawn
};

struct AppConfig {
    Task task = Task::ExtractiveQA;
    std::string train_data;
    std::string data_format;  // "extractive", "pairs", "jsonl", or "" = by extension
    std::string out_dir = "out";
    LossWeights weights;
    TrainConfig train;
    Bm25Params bm25;
    BackendSpec qa;
    BackendSpec infiller;
    BackendSpec detector;
    std::string snapshot;  // raw config file text, for the manifest
};

// Per-task defaults for the training loop (batch size 32/16/16 and
// epochs 3/10/10 for extractive/boolean/entailment, warm start 100).
TrainConfig default_train_config(Task task);

// Default loss weighting per task's best-performing combination.
LossWeights default_loss_weights(Task task);

// Reads a JSON config whose keys mirror the config structs. Unknown
// enum tokens raise UsageError; I/O and JSON syntax failures raise
// LoadError.
AppConfig load_app_config(const std::filesystem::path& path);

// Loads a dataset in the named format ("" infers from the extension:
// .json extractive, .tsv pairs, .jsonl line-delimited).
Dataset load_dataset_any(const std::filesystem::path& path, const std::string& format,
                         Task task);

// Instantiated backend set; the channel keeps any remote subprocess
// alive for the adapters' lifetime.
struct OwnedBackends {
    std::unique_ptr<QaBackend> qa;
    std::unique_ptr<Infiller> infiller;
    std::unique_ptr<ParaphraseDetector> detector;
    std::shared_ptr<LineChannel> channel;
};

// Builds backends from their specs. The NEGSYNTH_REMOTE environment
// variable, when set, overrides every remote spec's command line.
OwnedBackends make_backends(const AppConfig& config);

struct RunManifest {
    std::string command;
    std::string config_snapshot;
    uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;  // path -> content digest
    std::vector<std::string> output_paths;
    std::string started_at;   // UTC, second resolution
    std::string finished_at;  // empty while running
    std::string git_describe;
    std::string status = "running";
};

// Written atomically at run start (status "running") and rewritten at
// completion, so a crash leaves a readable record either way.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

std::string current_utc_timestamp();
std::string build_git_describe();

}  // namespace negsynth
