#pragma once

#include <map>
#include <string>

#include "negsynth/backends.hpp"

namespace negsynth {

// Rule-based answering stub. For extractive QA it memorizes query ->
// answer text and predicts a span at the answer's first literal
// occurrence in the context, or NoAns when the answer is absent or the
// query is unknown. For classification tasks it memorizes exact
// (query, context) pairs and predicts the task's negative class on any
// unseen pair, which makes shuffled and perturbed inputs self-label as
// negatives. train_batch computes 0/1 per-example losses against the
// pre-update state, then memorizes examples with positive weight.
class LexicalQa : public QaBackend {
  public:
    // graded=true replaces the constant 1.0 confidence with the fraction
    // of query tokens present in the context (for threshold baselines).
    explicit LexicalQa(Task task, bool graded = false);

    void memorize(const Example& example);
    void memorize_dataset(const Dataset& dataset);

    Prediction predict(const std::string& query, const std::string& context) override;
    TrainResult train_batch(std::span<const WeightedExample> examples) override;
    std::string clone_state() const override;
    void restore_state(const std::string& state) override;
    bool concurrent_safe() const override { return true; }

    Task task() const { return task_; }

  private:
    static std::string query_key(const std::string& query);
    static std::string pair_key(const std::string& query, const std::string& context);
    double confidence_for(const std::string& query, const std::string& context) const;

    Task task_;
    bool graded_;
    std::map<std::string, std::string> answers_;      // extractive: query key -> answer
    std::map<std::string, std::string> pair_labels_;  // classification: pair key -> kind name
};

// Token-set Jaccard paraphrase stub: Paraphrase iff J(a, b) >= tau.
// Two empty texts have J = 1, preserving judge(x, x) = Paraphrase.
class JaccardDetector : public ParaphraseDetector {
  public:
    explicit JaccardDetector(double tau = 0.6);

    ParaphraseVerdict judge(const std::string& a, const std::string& b) override;
    bool concurrent_safe() const override { return true; }

    double tau() const { return tau_; }

  private:
    double tau_;
};

// Deterministic infilling stub: each sentinel occurrence is replaced by
// a lexicon entry (possibly multi-word) chosen by hashing the seed, the
// sentinel's ordinal, and its neighbouring words. A pure function of
// (seed, input), so repeated calls agree without shared RNG state.
class LexiconInfiller : public Infiller {
  public:
    explicit LexiconInfiller(uint64_t seed, std::string sentinel = "<mask>");

    std::string infill(const std::string& masked_text) override;
    bool concurrent_safe() const override { return true; }

  private:
    uint64_t seed_;
    std::string sentinel_;
};

// Infiller that returns its input untouched (identity perturbations).
class EchoInfiller : public Infiller {
  public:
    std::string infill(const std::string& masked_text) override { return masked_text; }
    bool concurrent_safe() const override { return true; }
};

}  // namespace negsynth
