#include "negsynth/stubs.hpp"

#include <set>

#include "json.hpp"
#include "negsynth/bm25.hpp"
#include "negsynth/util.hpp"

namespace negsynth {

using nlohmann::json;

LexicalQa::LexicalQa(Task task, bool graded) : task_(task), graded_(graded) {}

std::string LexicalQa::query_key(const std::string& query) {
    return normalize_for_containment(query);
}

std::string LexicalQa::pair_key(const std::string& query, const std::string& context) {
    // \x1f cannot appear in collapsed text, so the key is unambiguous.
    return normalize_for_containment(query) + '\x1f' + normalize_for_containment(context);
}

double LexicalQa::confidence_for(const std::string& query, const std::string& context) const {
    auto query_tokens = tokenize(query);
    if (query_tokens.empty()) return 0.0;
    std::set<std::string> context_tokens;
    for (auto& t : tokenize(context)) context_tokens.insert(std::move(t));
    size_t found = 0;
    for (const auto& t : query_tokens) {
        if (context_tokens.count(t)) ++found;
    }
    return static_cast<double>(found) / static_cast<double>(query_tokens.size());
}

void LexicalQa::memorize(const Example& example) {
    if (task_ == Task::ExtractiveQA) {
        // Only span labels are memorized: the no-answer behaviour falls
        // out of the containment test, and storing NoAns for a query
        // would clobber the positive mapping its shuffled twin relies on.
        if (example.label.is_span()) {
            answers_[query_key(example.query)] = example.label.text;
        }
    } else {
        pair_labels_[pair_key(example.query, example.context)] =
            label_kind_name(example.label.kind);
    }
}

void LexicalQa::memorize_dataset(const Dataset& dataset) {
    for (const auto& ex : dataset.examples) memorize(ex);
}

Prediction LexicalQa::predict(const std::string& query, const std::string& context) {
    Prediction pred;
    pred.confidence = graded_ ? confidence_for(query, context) : 1.0;
    if (task_ == Task::ExtractiveQA) {
        auto it = answers_.find(query_key(query));
        if (it != answers_.end()) {
            size_t pos = context.find(it->second);
            if (pos != std::string::npos) {
                pred.label = Label::span(it->second, pos, pos + it->second.size());
                return pred;
            }
        }
        pred.label = Label::no_ans();
        if (graded_) pred.confidence = 1.0 - pred.confidence;
        return pred;
    }
    auto it = pair_labels_.find(pair_key(query, context));
    if (it != pair_labels_.end()) {
        Label label;
        if (it->second == "yes") label = Label::yes();
        else if (it->second == "no") label = Label::no();
        else if (it->second == "idk") label = Label::idk();
        else if (it->second == "entailment") label = Label::entailment();
        else label = Label::not_entailment();
        pred.label = label;
        return pred;
    }
    pred.label = negative_label(task_);
    if (graded_) pred.confidence = 1.0 - pred.confidence;
    return pred;
}

TrainResult LexicalQa::train_batch(std::span<const WeightedExample> examples) {
    TrainResult result;
    result.per_example.reserve(examples.size());
    // Losses reflect the state before this call's updates, so batch
    // order cannot leak into the reported components.
    for (const auto& weighted : examples) {
        const Example& ex = weighted.example;
        Prediction pred = predict(ex.query, ex.context);
        double loss = labels_match(pred.label, ex.label) ? 0.0 : 1.0;
        result.per_example.push_back(loss);
        result.loss += weighted.weight * loss;
    }
    for (const auto& weighted : examples) {
        if (weighted.weight > 0.0) memorize(weighted.example);
    }
    return result;
}

std::string LexicalQa::clone_state() const {
    json j;
    j["task"] = task_name(task_);
    j["answers"] = answers_;
    j["pair_labels"] = pair_labels_;
    return j.dump();
}

void LexicalQa::restore_state(const std::string& state) {
    json j = json::parse(state);
    if (task_from_name(j.at("task").get<std::string>()) != task_) {
        throw BackendError("restore_state: state belongs to a different task");
    }
    answers_ = j.at("answers").get<std::map<std::string, std::string>>();
    pair_labels_ = j.at("pair_labels").get<std::map<std::string, std::string>>();
}

JaccardDetector::JaccardDetector(double tau) : tau_(tau) {}

ParaphraseVerdict JaccardDetector::judge(const std::string& a, const std::string& b) {
    auto ta = tokenize(a);
    auto tb = tokenize(b);
    std::set<std::string> sa(ta.begin(), ta.end());
    std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return ParaphraseVerdict::Paraphrase;
    size_t intersection = 0;
    for (const auto& t : sa) {
        if (sb.count(t)) ++intersection;
    }
    size_t unions = sa.size() + sb.size() - intersection;
    double jaccard = static_cast<double>(intersection) / static_cast<double>(unions);
    return jaccard >= tau_ ? ParaphraseVerdict::Paraphrase : ParaphraseVerdict::NotParaphrase;
}

namespace {

// Substitution inventory for the infilling stub. Multi-word entries
// exercise downstream length-change handling.
const std::vector<std::string>& lexicon() {
    static const std::vector<std::string> entries = {
        "reportedly",      "never",
        "in 1994",         "sometimes",
        "the committee",   "a rival group",
        "several decades", "almost certainly",
        "nobody",          "the northern region",
        "without warning", "an early prototype",
        "every spring",    "under protest",
        "a famous rival",  "long before that",
    };
    return entries;
}

}  // namespace

LexiconInfiller::LexiconInfiller(uint64_t seed, std::string sentinel)
    : seed_(seed), sentinel_(std::move(sentinel)) {}

std::string LexiconInfiller::infill(const std::string& masked_text) {
    auto words = split_whitespace(masked_text);
    std::string out;
    size_t ordinal = 0;
    for (size_t i = 0; i < words.size(); ++i) {
        if (!out.empty()) out.push_back(' ');
        if (words[i] != sentinel_) {
            out += words[i];
            continue;
        }
        const std::string prev = i > 0 ? words[i - 1] : std::string();
        const std::string next = i + 1 < words.size() ? words[i + 1] : std::string();
        uint64_t h = fnv1a64(prev + '\x1f' + next, derive_seed(seed_, "infill", ordinal));
        out += lexicon()[h % lexicon().size()];
        ++ordinal;
    }
    if (out.empty()) out = lexicon()[derive_seed(seed_, "infill-empty") % lexicon().size()];
    return out;
}

}  // namespace negsynth
