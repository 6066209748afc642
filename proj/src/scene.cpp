#include "negsynth/scene.hpp"

#include <stdexcept>

#include "json.hpp"
#include "negsynth/util.hpp"

namespace negsynth {

using nlohmann::json;

std::string ablation_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::Full: return "full";
        case AblationMode::AssumeNoAns: return "assume_noans";
        case AblationMode::AssumeNoAnsNoRetr: return "assume_noans_noretr";
        case AblationMode::OnlyNoAns: return "only_noans";
        case AblationMode::NoFilter: return "no_filter";
    }
    throw std::logic_error("unreachable ablation mode");
}

AblationMode ablation_from_name(const std::string& name) {
    if (name == "full") return AblationMode::Full;
    if (name == "assume_noans") return AblationMode::AssumeNoAns;
    if (name == "assume_noans_noretr") return AblationMode::AssumeNoAnsNoRetr;
    if (name == "only_noans") return AblationMode::OnlyNoAns;
    if (name == "no_filter") return AblationMode::NoFilter;
    throw std::invalid_argument("unknown ablation mode: " + name);
}

FilterDecision FilterDecision::accept(Label imputed) {
    return FilterDecision{Kind::Accept, std::move(imputed)};
}
FilterDecision FilterDecision::discard_ambiguity() {
    return FilterDecision{Kind::DiscardAmbiguity, std::nullopt};
}
FilterDecision FilterDecision::discard_bad_prediction() {
    return FilterDecision{Kind::DiscardBadPrediction, std::nullopt};
}

std::string decision_name(const FilterDecision& decision) {
    switch (decision.kind) {
        case FilterDecision::Kind::Accept: return "accept";
        case FilterDecision::Kind::DiscardAmbiguity: return "discard_ambiguity";
        case FilterDecision::Kind::DiscardBadPrediction: return "discard_bad_prediction";
    }
    throw std::logic_error("unreachable decision kind");
}

namespace {

bool matches_gold(const Label& prediction, const Label& y_gold,
                  std::span<const std::string> alt_golds) {
    if (labels_match(prediction, y_gold)) return true;
    if (!prediction.is_span()) return false;
    auto normalized = normalize_answer(prediction.text);
    for (const auto& gold : alt_golds) {
        if (normalize_answer(gold) == normalized) return true;
    }
    return false;
}

}  // namespace

FilterDecision decide(ParaphraseVerdict verdict, const Label& y_hat, const Label& y_tilde,
                      const Label& y_gold, std::span<const std::string> alt_golds) {
    bool predictions_agree = labels_match(y_hat, y_tilde);
    if (verdict == ParaphraseVerdict::Paraphrase && !predictions_agree) {
        return FilterDecision::discard_ambiguity();
    }
    if (predictions_agree && !matches_gold(y_hat, y_gold, alt_golds)) {
        return FilterDecision::discard_bad_prediction();
    }
    return FilterDecision::accept(y_tilde);
}

Label decide_rte(ParaphraseVerdict verdict) {
    return verdict == ParaphraseVerdict::NotParaphrase ? Label::not_entailment()
                                                       : Label::entailment();
}

namespace {

const char* verdict_name(ParaphraseVerdict verdict) {
    return verdict == ParaphraseVerdict::Paraphrase ? "paraphrase" : "not_paraphrase";
}

Example make_scene_example(const Example& parent, const std::string& perturbed,
                           const Label& imputed, const SceneOptions& options, size_t position) {
    Example out;
    out.id = synthetic_id(parent.id, Provenance::Origin::Scene, position);
    out.task = parent.task;
    if (parent.task == Task::RTE) {
        out.query = parent.query;      // hypothesis unchanged
        out.context = perturbed;       // perturbed premise
        out.provenance.perturbed_from = parent.context;
    } else {
        out.query = perturbed;         // perturbed question
        out.context = parent.context;
        out.provenance.perturbed_from = parent.query;
    }
    out.label = imputed;
    out.provenance.origin = Provenance::Origin::Scene;
    out.provenance.parent_id = parent.id;
    out.provenance.step = options.step;
    return out;
}

std::span<const std::string> alt_golds_for(const Example& parent, const SceneOptions& options) {
    if (!options.gold_sets) return {};
    auto it = options.gold_sets->find(parent.id);
    if (it == options.gold_sets->end()) return {};
    return it->second;
}

SceneRecord scene_element(const Example& parent, QaBackend& qa, Infiller& infiller,
                          ParaphraseDetector& detector, const SceneOptions& options,
                          size_t position, std::mt19937_64& rng) {
    SceneRecord record;
    record.parent = parent;

    const bool rte = parent.task == Task::RTE;
    const std::string& original = rte ? parent.context : parent.query;
    try {
        record.perturbed = perturb(original, infiller, options.perturbation, rng);
    } catch (const std::exception& e) {
        record.failure = std::string("backend-error: ") + e.what();
        return record;  // delta stays 0
    }

    try {
        switch (options.mode) {
            case AblationMode::AssumeNoAns:
            case AblationMode::AssumeNoAnsNoRetr: {
                // Accept everything as the negative class; no model calls.
                record.decision = FilterDecision::accept(negative_label(parent.task));
                break;
            }
            case AblationMode::NoFilter: {
                // Pure self-training: trust the model's prediction.
                const std::string& query = rte ? parent.query : record.perturbed;
                const std::string& context = rte ? record.perturbed : parent.context;
                record.y_tilde = qa.predict(query, context).label;
                record.decision = FilterDecision::accept(*record.y_tilde);
                break;
            }
            case AblationMode::Full:
            case AblationMode::OnlyNoAns: {
                record.verdict = detector.judge(record.perturbed, original);
                if (rte) {
                    // Premise variant: the verdict alone labels the pair.
                    record.y_tilde = decide_rte(*record.verdict);
                    record.decision = FilterDecision::accept(*record.y_tilde);
                } else {
                    record.y_hat = qa.predict(parent.query, parent.context).label;
                    record.y_tilde = qa.predict(record.perturbed, parent.context).label;
                    record.decision = decide(*record.verdict, *record.y_hat, *record.y_tilde,
                                             parent.label, alt_golds_for(parent, options));
                }
                break;
            }
        }
    } catch (const std::exception& e) {
        record.failure = std::string("backend-error: ") + e.what();
        return record;
    }

    if (!record.decision->is_accept()) return record;

    const Label& imputed = *record.decision->imputed;
    if (options.mode == AblationMode::OnlyNoAns && !label_is_negative(imputed)) {
        record.failure = "only-noans-drop";  // decision stands, gate closes
        return record;
    }

    record.delta = 1;
    Example ex = make_scene_example(parent, record.perturbed, imputed, options, position);
    ex.provenance.decision = decision_name(*record.decision);
    record.example = std::move(ex);
    return record;
}

}  // namespace

std::vector<SceneRecord> scene_batch(const Batch& batch, QaBackend& qa, Infiller& infiller,
                                     ParaphraseDetector& detector, const SceneOptions& options,
                                     uint64_t seed) {
    std::vector<SceneRecord> records;
    records.reserve(batch.size());
    for (size_t k = 0; k < batch.examples.size(); ++k) {
        std::mt19937_64 rng(derive_seed(seed, "scene-elem", k));
        records.push_back(
            scene_element(batch.examples[k], qa, infiller, detector, options, k, rng));
    }
    return records;
}

std::string scene_record_to_json_line(const SceneRecord& record) {
    json j;
    j["parent_id"] = record.parent.id;
    j["task"] = task_name(record.parent.task);
    j["perturbed"] = record.perturbed;
    j["delta"] = record.delta;
    if (record.verdict) j["verdict"] = verdict_name(*record.verdict);
    if (record.y_hat) j["y_hat"] = label_kind_name(record.y_hat->kind);
    if (record.y_tilde) j["y_tilde"] = label_kind_name(record.y_tilde->kind);
    if (record.decision) {
        j["decision"] = decision_name(*record.decision);
    } else {
        j["decision"] = "backend-error";
    }
    if (!record.failure.empty()) j["failure"] = record.failure;
    if (record.example) j["example"] = json::parse(example_to_json_line(*record.example));
    return j.dump();
}

}  // namespace negsynth
