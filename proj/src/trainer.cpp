#include "negsynth/trainer.hpp"

#include <stdexcept>

#include "json.hpp"
#include "negsynth/shuffle.hpp"
#include "negsynth/util.hpp"

namespace negsynth {

using nlohmann::json;

TrainConfig TrainConfig::normalized() const {
    TrainConfig out = *this;
    if (out.task != Task::ExtractiveQA) out.use_retrieval = false;
    if (out.ablation == AblationMode::AssumeNoAnsNoRetr) out.use_retrieval = false;
    return out;
}

bool RunLog::scene_ever_active() const {
    for (const auto& record : steps) {
        if (record.effective_lambda_scene > 0.0) return true;
    }
    return false;
}

std::string step_record_to_json_line(const StepRecord& r) {
    json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["batch_index"] = r.batch_index;
    j["batch_size"] = r.batch_size;
    j["loss"] = r.loss;
    j["loss_shuf"] = r.loss_shuf;
    j["loss_retr"] = r.loss_retr;
    j["loss_scene"] = r.loss_scene;
    j["loss_overall"] = r.loss_overall;
    j["backend_total"] = r.backend_total;
    j["effective_lambda_scene"] = r.effective_lambda_scene;
    j["shuffle_count"] = r.shuffle_count;
    j["retrieval_count"] = r.retrieval_count;
    j["scene_accepted"] = r.scene_accepted;
    j["scene_discard_ambiguity"] = r.scene_discard_ambiguity;
    j["scene_discard_bad_prediction"] = r.scene_discard_bad_prediction;
    j["scene_backend_errors"] = r.scene_backend_errors;
    j["scene_only_noans_drops"] = r.scene_only_noans_drops;
    return j.dump();
}

void save_run_log(const RunLog& log, const std::filesystem::path& path) {
    std::string out;
    for (const auto& record : log.steps) {
        out += step_record_to_json_line(record);
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

TrainError::TrainError(const std::string& message, int64_t step_, RunLog partial_)
    : std::runtime_error(message), step(step_), partial(std::move(partial_)) {}

double composite_loss(double loss, double loss_shuf, double loss_retr, double loss_scene,
                      const LossWeights& weights, int64_t step, const TrainConfig& config) {
    if (loss < 0.0 || loss_shuf < 0.0 || loss_retr < 0.0 || loss_scene < 0.0) {
        throw std::invalid_argument("composite_loss: negative component loss");
    }
    double lambda_scene =
        step < config.warm_start_steps ? 0.0 : weights.lambda_scene;
    return loss + lambda_scene * loss_scene + weights.lambda_shuf * loss_shuf +
           weights.lambda_retr * loss_retr;
}

namespace {

void check_preconditions(const Dataset& dataset, const TrainBackends& backends,
                         const LossWeights& weights, const TrainConfig& config) {
    if (!backends.qa) throw std::invalid_argument("train: qa backend required");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (config.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (config.warm_start_steps < 0) {
        throw std::invalid_argument("train: warm_start_steps must be >= 0");
    }
    if (weights.lambda_shuf < 0.0 || weights.lambda_retr < 0.0 || weights.lambda_scene < 0.0) {
        throw std::invalid_argument("train: loss weights must be >= 0");
    }
    if (dataset.task != config.task) {
        throw std::invalid_argument("train: dataset task does not match config task");
    }
    if (config.use_retrieval && (!backends.index || !backends.pool)) {
        throw std::invalid_argument("train: retrieval enabled but index/pool missing");
    }
    if (weights.lambda_scene > 0.0 && (!backends.infiller || !backends.detector)) {
        throw std::invalid_argument("train: counterfactual loss enabled but backends missing");
    }
}

// Deterministic retrieval cache: the hard negative per positive example
// never changes, so it is computed once up front.
std::map<std::string, Example> build_retrieval_cache(const Dataset& dataset,
                                                     const TrainBackends& backends) {
    std::map<std::string, Example> cache;
    for (const auto& ex : dataset.examples) {
        if (!ex.label.is_span()) continue;
        auto negative = retrieve_negative(*backends.index, *backends.pool, ex);
        if (negative) cache.emplace(ex.id, std::move(*negative));
    }
    return cache;
}

}  // namespace

RunLog train(const Dataset& dataset, const TrainBackends& backends, const LossWeights& weights,
             const TrainConfig& raw_config) {
    const TrainConfig config = raw_config.normalized();
    check_preconditions(dataset, backends, weights, config);

    RunLog log;
    if (config.epochs == 0 || dataset.examples.empty()) return log;

    QaBackend& qa = *backends.qa;

    if (config.pre_fit) {
        auto prefit_batches = batches(dataset, static_cast<size_t>(config.batch_size),
                                      derive_seed(config.seed, "prefit"), /*shuffle=*/true);
        for (const auto& batch : prefit_batches) {
            std::vector<WeightedExample> plain;
            plain.reserve(batch.size());
            double w = 1.0 / static_cast<double>(batch.size());
            for (const auto& ex : batch.examples) plain.push_back({ex, w});
            qa.train_batch(plain);
        }
    }

    std::map<std::string, Example> retrieval_cache;
    if (config.use_retrieval) retrieval_cache = build_retrieval_cache(dataset, backends);

    int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto epoch_batches = batches(dataset, static_cast<size_t>(config.batch_size),
                                     derive_seed(config.seed, "batches", epoch),
                                     /*shuffle=*/true);
        for (const auto& batch : epoch_batches) {
            const size_t m = batch.size();
            StepRecord record;
            record.step = step;
            record.epoch = epoch;
            record.batch_index = batch.batch_index;
            record.batch_size = m;
            record.effective_lambda_scene =
                step < config.warm_start_steps ? 0.0 : weights.lambda_scene;

            std::vector<WeightedExample> train_set;
            const double original_weight = 1.0 / static_cast<double>(m);
            for (const auto& ex : batch.examples) train_set.push_back({ex, original_weight});
            const size_t originals_end = train_set.size();

            if (config.use_shuffle) {
                std::mt19937_64 rng(derive_seed(config.seed, "shuffle", static_cast<uint64_t>(step)));
                auto negatives = shuffle_negatives(batch, rng);
                record.shuffle_count = negatives.size();
                if (!negatives.empty()) {
                    double w = weights.lambda_shuf / static_cast<double>(negatives.size());
                    for (auto& neg : negatives) train_set.push_back({std::move(neg), w});
                }
            }
            const size_t shuffle_end = train_set.size();

            if (config.use_retrieval) {
                std::vector<const Example*> attached;
                for (const auto& ex : batch.examples) {
                    auto it = retrieval_cache.find(ex.id);
                    if (it != retrieval_cache.end()) attached.push_back(&it->second);
                }
                record.retrieval_count = attached.size();
                if (!attached.empty()) {
                    double w = weights.lambda_retr / static_cast<double>(attached.size());
                    for (const Example* neg : attached) train_set.push_back({*neg, w});
                }
            }
            const size_t retrieval_end = train_set.size();

            if (record.effective_lambda_scene > 0.0) {
                SceneOptions options;
                options.mode = config.ablation;
                options.perturbation = config.perturbation;
                options.step = step;
                options.gold_sets = backends.gold_sets;
                auto records = scene_batch(batch, qa, *backends.infiller, *backends.detector,
                                           options, derive_seed(config.seed, "scene",
                                                                static_cast<uint64_t>(step)));
                double scene_weight = record.effective_lambda_scene / static_cast<double>(m);
                for (const auto& r : records) {
                    if (r.delta == 1) {
                        ++record.scene_accepted;
                        train_set.push_back({*r.example, scene_weight});
                        continue;
                    }
                    if (r.failure.rfind("backend-error", 0) == 0) {
                        ++record.scene_backend_errors;
                    } else if (r.failure == "only-noans-drop") {
                        ++record.scene_only_noans_drops;
                    } else if (r.decision &&
                               r.decision->kind == FilterDecision::Kind::DiscardAmbiguity) {
                        ++record.scene_discard_ambiguity;
                    } else if (r.decision &&
                               r.decision->kind == FilterDecision::Kind::DiscardBadPrediction) {
                        ++record.scene_discard_bad_prediction;
                    }
                }
            }

            TrainResult result;
            try {
                result = qa.train_batch(train_set);
            } catch (const std::exception& e) {
                throw TrainError(std::string("backend training failure: ") + e.what(), step,
                                 std::move(log));
            }
            if (result.per_example.size() != train_set.size()) {
                throw TrainError("backend returned mismatched per-example losses", step,
                                 std::move(log));
            }

            auto segment_sum = [&](size_t from, size_t to) {
                double sum = 0.0;
                for (size_t i = from; i < to; ++i) sum += result.per_example[i];
                return sum;
            };
            record.loss = segment_sum(0, originals_end) / static_cast<double>(m);
            if (record.shuffle_count > 0) {
                record.loss_shuf = segment_sum(originals_end, shuffle_end) /
                                   static_cast<double>(record.shuffle_count);
            }
            if (record.retrieval_count > 0) {
                record.loss_retr = segment_sum(shuffle_end, retrieval_end) /
                                   static_cast<double>(record.retrieval_count);
            }
            // Gated sum over the batch, divided by m even when elements
            // were discarded.
            record.loss_scene =
                segment_sum(retrieval_end, train_set.size()) / static_cast<double>(m);
            record.loss_overall = composite_loss(record.loss, record.loss_shuf,
                                                 record.loss_retr, record.loss_scene, weights,
                                                 step, config);
            record.backend_total = result.loss;

            log.steps.push_back(record);
            ++step;
        }
    }
    return log;
}

}  // namespace negsynth
