#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace negsynth {

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Task { ExtractiveQA, BooleanQA, RTE };

std::string task_name(Task task);
Task task_from_name(const std::string& name);

// Task label spaces:
//   ExtractiveQA: Span | NoAns
//   BooleanQA:    Yes | No | IDK
//   RTE:          Entailment | NotEntailment
struct Label {
    enum class Kind { Span, NoAns, Yes, No, IDK, Entailment, NotEntailment };

    Kind kind = Kind::NoAns;
    std::string text;      // Span only
    size_t char_start = 0; // Span only, byte offset into the context
    size_t char_end = 0;   // Span only, exclusive

    static Label span(std::string text, size_t char_start, size_t char_end);
    static Label no_ans() { return Label{Kind::NoAns, {}, 0, 0}; }
    static Label yes() { return Label{Kind::Yes, {}, 0, 0}; }
    static Label no() { return Label{Kind::No, {}, 0, 0}; }
    static Label idk() { return Label{Kind::IDK, {}, 0, 0}; }
    static Label entailment() { return Label{Kind::Entailment, {}, 0, 0}; }
    static Label not_entailment() { return Label{Kind::NotEntailment, {}, 0, 0}; }

    bool is_span() const { return kind == Kind::Span; }
    bool operator==(const Label&) const = default;
};

std::string label_kind_name(Label::Kind kind);

// Prediction-level label equality: kinds must match, and span labels
// compare by normalized answer text, never by offsets (two mentions of
// the same answer count as the same prediction).
bool labels_match(const Label& a, const Label& b);

// The distinguished no-support class of each task.
Label negative_label(Task task);
bool label_is_negative(const Label& label);
bool label_valid_for_task(const Label& label, Task task);

struct Provenance {
    enum class Origin { Original, Shuffle, Retrieval, Scene };

    Origin origin = Origin::Original;
    std::optional<std::string> parent_id;
    std::optional<std::string> perturbed_from; // original query/premise text
    std::optional<std::string> decision;
    std::optional<int64_t> step; // training step at creation

    bool operator==(const Provenance&) const = default;
};

std::string origin_name(Provenance::Origin origin);
Provenance::Origin origin_from_name(const std::string& name);

struct Example {
    std::string id;
    Task task = Task::ExtractiveQA;
    std::string query;   // question q or hypothesis h
    std::string context; // passage p or premise
    Label label;
    Provenance provenance;

    bool operator==(const Example&) const = default;
};

// Throws ValidationError if any invariant fails: non-empty query/context,
// label within the task's space, span bounds and substring equality,
// provenance consistency.
void validate_example(const Example& example);

// Id for a synthesized example: "<parent_id>#<origin>#<counter>".
std::string synthetic_id(const std::string& parent_id, Provenance::Origin origin,
                         size_t counter);

struct Dataset {
    Task task = Task::ExtractiveQA;
    std::vector<Example> examples;
    bool positive_only = false;

    size_t size() const { return examples.size(); }
};

struct Batch {
    std::vector<Example> examples;
    size_t batch_index = 0;

    size_t size() const { return examples.size(); }
};

// Hierarchical reading-comprehension JSON: articles -> paragraphs -> QA
// entries. Unanswerable entries carry an explicit boolean flag and an
// empty answer list. Offsets are byte offsets; char_end is derived as
// start + len(text).
Dataset load_extractive(const std::filesystem::path& path);

// Tab-separated rows: query <TAB> context <TAB> label.
// Label tokens: yes/no/idk (BooleanQA), entailment/not_entailment (RTE).
Dataset load_pairs(const std::filesystem::path& path, Task task);

// Line-delimited records, one Example per line with fields
// id, task, query, context, label, provenance.
Dataset load_jsonl(const std::filesystem::path& path);
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);

std::string example_to_json_line(const Example& example);
Example example_from_json_line(const std::string& line);

// Label alone, in the same {"type": ...} shape the example lines use.
std::string label_to_json_string(const Label& label);
Label label_from_json_string(const std::string& text);

// All gold answer texts per record id of a hierarchical JSON file.
// Unanswerable records map to an empty list.
std::map<std::string, std::vector<std::string>> load_gold_sets(
    const std::filesystem::path& path);

// Deterministic partition of the dataset into batches of at most
// batch_size examples (final one may be smaller). Order is permuted only
// when shuffle is true.
std::vector<Batch> batches(const Dataset& dataset, size_t batch_size, uint64_t seed,
                           bool shuffle);

}  // namespace negsynth
