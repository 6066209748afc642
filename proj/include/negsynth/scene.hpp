#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negsynth/backends.hpp"
#include "negsynth/corpus.hpp"
#include "negsynth/perturb.hpp"

namespace negsynth {

// Pipeline variants for the counterfactual generator:
//   Full             perturb -> filter -> self-label
//   AssumeNoAns      accept every perturbation, labeled negative
//   AssumeNoAnsNoRetr  AssumeNoAns + retrieval negatives disabled
//   OnlyNoAns        full pipeline, but accepted positives are gated out
//   NoFilter         self-label with the model's prediction, no filter
enum class AblationMode { Full, AssumeNoAns, AssumeNoAnsNoRetr, OnlyNoAns, NoFilter };

std::string ablation_name(AblationMode mode);
AblationMode ablation_from_name(const std::string& name);

struct FilterDecision {
    enum class Kind { Accept, DiscardAmbiguity, DiscardBadPrediction };

    Kind kind = Kind::Accept;
    std::optional<Label> imputed;  // present iff kind == Accept

    static FilterDecision accept(Label imputed);
    static FilterDecision discard_ambiguity();
    static FilterDecision discard_bad_prediction();

    bool is_accept() const { return kind == Kind::Accept; }
};

std::string decision_name(const FilterDecision& decision);

// The filter rule:
//   DiscardAmbiguity      iff verdict == Paraphrase and y_hat != y_tilde
//   DiscardBadPrediction  iff y_hat == y_tilde and y_hat != gold
//   Accept(y_tilde)       otherwise
// The two discard clauses are mutually exclusive (one needs agreement,
// the other disagreement). Span equality is normalized-text equality;
// alt_golds supplies additional acceptable gold answer texts.
FilterDecision decide(ParaphraseVerdict verdict, const Label& y_hat, const Label& y_tilde,
                      const Label& y_gold, std::span<const std::string> alt_golds = {});

// Premise-perturbation self-labeling: the detector verdict alone decides
// the label (NotParaphrase -> NotEntailment, Paraphrase -> Entailment).
Label decide_rte(ParaphraseVerdict verdict);

// One per batch element, aligned by index. delta gates the loss; the
// synthesized example is present iff delta == 1.
struct SceneRecord {
    Example parent;
    std::string perturbed;  // generator output (query, or premise for RTE)
    std::optional<Label> y_hat;
    std::optional<Label> y_tilde;
    std::optional<ParaphraseVerdict> verdict;
    std::optional<FilterDecision> decision;  // absent on backend failure
    int delta = 0;
    std::optional<Example> example;
    std::string failure;  // non-empty iff a backend call failed
};

// Inspection line: example-shaped JSON with verdict/decision/delta.
std::string scene_record_to_json_line(const SceneRecord& record);

struct SceneOptions {
    AblationMode mode = AblationMode::Full;
    PerturbationConfig perturbation;
    std::optional<int64_t> step;  // stamped into provenance when set
    // Extra acceptable gold answer texts keyed by parent example id.
    const std::map<std::string, std::vector<std::string>>* gold_sets = nullptr;
};

// Runs the generator over a batch; element k draws from its own derived
// random stream, so results do not depend on evaluation order. Backend
// failures mark only the affected element.
std::vector<SceneRecord> scene_batch(const Batch& batch, QaBackend& qa, Infiller& infiller,
                                     ParaphraseDetector& detector, const SceneOptions& options,
                                     uint64_t seed);

}  // namespace negsynth
