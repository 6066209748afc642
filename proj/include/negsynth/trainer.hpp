#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "negsynth/backends.hpp"
#include "negsynth/bm25.hpp"
#include "negsynth/corpus.hpp"
#include "negsynth/perturb.hpp"
#include "negsynth/scene.hpp"

namespace negsynth {

struct LossWeights {
    double lambda_shuf = 0.0;
    double lambda_retr = 0.0;
    double lambda_scene = 0.0;
};

struct TrainConfig {
    int warm_start_steps = 100;  // counterfactual weight is 0 before this
    int batch_size = 32;
    int epochs = 3;
    uint64_t seed = 0;
    AblationMode ablation = AblationMode::Full;
    Task task = Task::ExtractiveQA;
    bool use_retrieval = true;
    bool use_shuffle = true;
    // Plain positive-only training pass before the composite loop; turn
    // off when the backend is already fit.
    bool pre_fit = true;
    PerturbationConfig perturbation;

    // Applies the forcing rules: retrieval is only defined for
    // extractive QA, and the retrieval-free ablation disables it too.
    TrainConfig normalized() const;
};

struct StepRecord {
    int64_t step = 0;
    int epoch = 0;
    size_t batch_index = 0;
    size_t batch_size = 0;  // m, the counterfactual-loss divisor

    // Component losses: originals and counterfactuals are means over the
    // batch size m (gated terms contribute zero); shuffle/retrieval are
    // means over their own emitted sets.
    double loss = 0.0;
    double loss_shuf = 0.0;
    double loss_retr = 0.0;
    double loss_scene = 0.0;
    double loss_overall = 0.0;   // composite of the four components
    double backend_total = 0.0;  // the backend's weighted-sum loss
    double effective_lambda_scene = 0.0;

    size_t shuffle_count = 0;
    size_t retrieval_count = 0;
    size_t scene_accepted = 0;
    size_t scene_discard_ambiguity = 0;
    size_t scene_discard_bad_prediction = 0;
    size_t scene_backend_errors = 0;
    size_t scene_only_noans_drops = 0;
};

struct RunLog {
    std::vector<StepRecord> steps;

    bool scene_ever_active() const;
};

std::string step_record_to_json_line(const StepRecord& record);
void save_run_log(const RunLog& log, const std::filesystem::path& path);

// Raised when the backend fails mid-run; carries the failing step and
// everything logged before it.
class TrainError : public std::runtime_error {
  public:
    TrainError(const std::string& message, int64_t step, RunLog partial);

    int64_t step;
    RunLog partial;
};

// loss + lambda_scene' * scene + lambda_shuf * shuf + lambda_retr * retr,
// with lambda_scene' zeroed before warm_start_steps.
double composite_loss(double loss, double loss_shuf, double loss_retr, double loss_scene,
                      const LossWeights& weights, int64_t step, const TrainConfig& config);

struct TrainBackends {
    QaBackend* qa = nullptr;
    Infiller* infiller = nullptr;            // required when lambda_scene > 0
    ParaphraseDetector* detector = nullptr;  // required when lambda_scene > 0
    const Bm25Index* index = nullptr;        // required when use_retrieval
    const PassagePool* pool = nullptr;       // required when use_retrieval
    const std::map<std::string, std::vector<std::string>>* gold_sets = nullptr;
};

// The composite loop: per batch, train on originals plus whichever
// negative sets are enabled, encoding the lambda weights as per-example
// training weights so the backend's weighted total equals the composite
// loss. Augmentation is resampled fresh every batch from the live model;
// retrieval negatives are precomputed once (they never change). No early
// stopping, no validation-based selection.
RunLog train(const Dataset& dataset, const TrainBackends& backends, const LossWeights& weights,
             const TrainConfig& config);

}  // namespace negsynth
