#include "negsynth/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "negsynth/util.hpp"

namespace negsynth {

using nlohmann::json;

std::string task_name(Task task) {
    switch (task) {
        case Task::ExtractiveQA: return "extractive_qa";
        case Task::BooleanQA: return "boolean_qa";
        case Task::RTE: return "rte";
    }
    throw std::logic_error("unreachable task");
}

Task task_from_name(const std::string& name) {
    if (name == "extractive_qa") return Task::ExtractiveQA;
    if (name == "boolean_qa") return Task::BooleanQA;
    if (name == "rte") return Task::RTE;
    throw LoadError("unknown task name: " + name);
}

Label Label::span(std::string text, size_t char_start, size_t char_end) {
    Label l;
    l.kind = Kind::Span;
    l.text = std::move(text);
    l.char_start = char_start;
    l.char_end = char_end;
    return l;
}

std::string label_kind_name(Label::Kind kind) {
    switch (kind) {
        case Label::Kind::Span: return "span";
        case Label::Kind::NoAns: return "no_ans";
        case Label::Kind::Yes: return "yes";
        case Label::Kind::No: return "no";
        case Label::Kind::IDK: return "idk";
        case Label::Kind::Entailment: return "entailment";
        case Label::Kind::NotEntailment: return "not_entailment";
    }
    throw std::logic_error("unreachable label kind");
}

static Label::Kind label_kind_from_name(const std::string& name) {
    if (name == "span") return Label::Kind::Span;
    if (name == "no_ans") return Label::Kind::NoAns;
    if (name == "yes") return Label::Kind::Yes;
    if (name == "no") return Label::Kind::No;
    if (name == "idk") return Label::Kind::IDK;
    if (name == "entailment") return Label::Kind::Entailment;
    if (name == "not_entailment") return Label::Kind::NotEntailment;
    throw LoadError("unknown label kind: " + name);
}

bool labels_match(const Label& a, const Label& b) {
    if (a.kind != b.kind) return false;
    if (a.kind != Label::Kind::Span) return true;
    return normalize_answer(a.text) == normalize_answer(b.text);
}

Label negative_label(Task task) {
    switch (task) {
        case Task::ExtractiveQA: return Label::no_ans();
        case Task::BooleanQA: return Label::idk();
        case Task::RTE: return Label::not_entailment();
    }
    throw std::logic_error("unreachable task");
}

bool label_is_negative(const Label& label) {
    return label.kind == Label::Kind::NoAns || label.kind == Label::Kind::IDK ||
           label.kind == Label::Kind::NotEntailment;
}

bool label_valid_for_task(const Label& label, Task task) {
    switch (task) {
        case Task::ExtractiveQA:
            return label.kind == Label::Kind::Span || label.kind == Label::Kind::NoAns;
        case Task::BooleanQA:
            return label.kind == Label::Kind::Yes || label.kind == Label::Kind::No ||
                   label.kind == Label::Kind::IDK;
        case Task::RTE:
            return label.kind == Label::Kind::Entailment ||
                   label.kind == Label::Kind::NotEntailment;
    }
    return false;
}

std::string origin_name(Provenance::Origin origin) {
    switch (origin) {
        case Provenance::Origin::Original: return "original";
        case Provenance::Origin::Shuffle: return "shuffle";
        case Provenance::Origin::Retrieval: return "retrieval";
        case Provenance::Origin::Scene: return "scene";
    }
    throw std::logic_error("unreachable origin");
}

Provenance::Origin origin_from_name(const std::string& name) {
    if (name == "original") return Provenance::Origin::Original;
    if (name == "shuffle") return Provenance::Origin::Shuffle;
    if (name == "retrieval") return Provenance::Origin::Retrieval;
    if (name == "scene") return Provenance::Origin::Scene;
    throw LoadError("unknown provenance origin: " + name);
}

void validate_example(const Example& example) {
    if (example.id.empty()) throw ValidationError("example has empty id");
    if (example.query.empty())
        throw ValidationError("example " + example.id + ": empty query");
    if (example.context.empty())
        throw ValidationError("example " + example.id + ": empty context");
    if (!label_valid_for_task(example.label, example.task))
        throw ValidationError("example " + example.id + ": label " +
                              label_kind_name(example.label.kind) +
                              " not valid for task " + task_name(example.task));
    if (example.label.is_span()) {
        const auto& l = example.label;
        if (l.char_start >= l.char_end || l.char_end > example.context.size())
            throw ValidationError("example " + example.id + ": span bounds [" +
                                  std::to_string(l.char_start) + ", " +
                                  std::to_string(l.char_end) +
                                  ") invalid for context of length " +
                                  std::to_string(example.context.size()));
        if (example.context.compare(l.char_start, l.char_end - l.char_start, l.text) != 0)
            throw ValidationError("example " + example.id +
                                  ": span text does not match context substring at [" +
                                  std::to_string(l.char_start) + ", " +
                                  std::to_string(l.char_end) + ")");
    }
    const auto& prov = example.provenance;
    if (prov.origin == Provenance::Origin::Original && prov.parent_id)
        throw ValidationError("example " + example.id +
                              ": original provenance must not carry parent_id");
    if (prov.origin == Provenance::Origin::Scene && !prov.perturbed_from)
        throw ValidationError("example " + example.id +
                              ": scene provenance requires perturbed_from");
}

std::string synthetic_id(const std::string& parent_id, Provenance::Origin origin,
                         size_t counter) {
    return parent_id + "#" + origin_name(origin) + "#" + std::to_string(counter);
}

namespace {

json label_to_json(const Label& label) {
    json j;
    j["type"] = label_kind_name(label.kind);
    if (label.is_span()) {
        j["text"] = label.text;
        j["char_start"] = label.char_start;
        j["char_end"] = label.char_end;
    }
    return j;
}

Label label_from_json(const json& j) {
    const auto kind = label_kind_from_name(j.at("type").get<std::string>());
    if (kind == Label::Kind::Span)
        return Label::span(j.at("text").get<std::string>(),
                           j.at("char_start").get<size_t>(),
                           j.at("char_end").get<size_t>());
    Label l;
    l.kind = kind;
    return l;
}

json provenance_to_json(const Provenance& prov) {
    json j;
    j["origin"] = origin_name(prov.origin);
    if (prov.parent_id) j["parent_id"] = *prov.parent_id;
    if (prov.perturbed_from) j["perturbed_from"] = *prov.perturbed_from;
    if (prov.decision) j["decision"] = *prov.decision;
    if (prov.step) j["step"] = *prov.step;
    return j;
}

Provenance provenance_from_json(const json& j) {
    Provenance p;
    p.origin = origin_from_name(j.at("origin").get<std::string>());
    if (j.contains("parent_id")) p.parent_id = j.at("parent_id").get<std::string>();
    if (j.contains("perturbed_from"))
        p.perturbed_from = j.at("perturbed_from").get<std::string>();
    if (j.contains("decision")) p.decision = j.at("decision").get<std::string>();
    if (j.contains("step")) p.step = j.at("step").get<int64_t>();
    return p;
}

void check_unique_ids(const std::vector<Example>& examples) {
    std::set<std::string> seen;
    for (const auto& ex : examples)
        if (!seen.insert(ex.id).second)
            throw LoadError("duplicate example id: " + ex.id);
}

bool compute_positive_only(const std::vector<Example>& examples) {
    return std::none_of(examples.begin(), examples.end(),
                        [](const Example& ex) { return label_is_negative(ex.label); });
}

}  // namespace

std::string label_to_json_string(const Label& label) { return label_to_json(label).dump(); }

Label label_from_json_string(const std::string& text) {
    return label_from_json(json::parse(text));
}

std::string example_to_json_line(const Example& example) {
    json j;
    j["id"] = example.id;
    j["task"] = task_name(example.task);
    j["query"] = example.query;
    j["context"] = example.context;
    j["label"] = label_to_json(example.label);
    j["provenance"] = provenance_to_json(example.provenance);
    return j.dump();
}

Example example_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed example record: ") + e.what());
    }
    try {
        Example ex;
        ex.id = j.at("id").get<std::string>();
        ex.task = task_from_name(j.at("task").get<std::string>());
        ex.query = j.at("query").get<std::string>();
        ex.context = j.at("context").get<std::string>();
        ex.label = label_from_json(j.at("label"));
        ex.provenance = provenance_from_json(j.at("provenance"));
        return ex;
    } catch (const json::exception& e) {
        std::string id = j.contains("id") && j["id"].is_string()
                             ? j["id"].get<std::string>()
                             : "<missing id>";
        throw LoadError("malformed example record " + id + ": " + e.what());
    }
}

Dataset load_extractive(const std::filesystem::path& path) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw LoadError("cannot parse " + path.string() + ": " + e.what());
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(e.what());
    }
    if (!root.contains("data") || !root["data"].is_array())
        throw LoadError(path.string() + ": missing top-level \"data\" array");

    Dataset ds;
    ds.task = Task::ExtractiveQA;
    bool any_impossible = false;
    for (const auto& article : root["data"]) {
        if (!article.contains("paragraphs"))
            throw LoadError(path.string() + ": article without \"paragraphs\"");
        for (const auto& paragraph : article["paragraphs"]) {
            if (!paragraph.contains("context") || !paragraph.contains("qas"))
                throw LoadError(path.string() + ": paragraph missing context or qas");
            const auto context = paragraph["context"].get<std::string>();
            for (const auto& qa : paragraph["qas"]) {
                std::string id = qa.contains("id") && qa["id"].is_string()
                                     ? qa["id"].get<std::string>()
                                     : "";
                if (id.empty()) throw LoadError(path.string() + ": qa entry without id");
                if (!qa.contains("question") || !qa["question"].is_string())
                    throw LoadError("record " + id + ": missing question");

                Example ex;
                ex.id = id;
                ex.task = Task::ExtractiveQA;
                ex.query = qa["question"].get<std::string>();
                ex.context = context;

                const bool impossible =
                    qa.contains("is_impossible") && qa["is_impossible"].get<bool>();
                const auto answers = qa.contains("answers") ? qa["answers"] : json::array();
                if (impossible) {
                    any_impossible = true;
                    if (!answers.empty())
                        throw LoadError("record " + id +
                                        ": flagged unanswerable but has answers");
                    ex.label = Label::no_ans();
                } else {
                    if (answers.empty())
                        throw LoadError("record " + id + ": answerable entry without answers");
                    // All supplied answers must point at their stated substring;
                    // the first one becomes the label.
                    for (const auto& ans : answers) {
                        if (!ans.contains("text") || !ans.contains("answer_start"))
                            throw LoadError("record " + id +
                                            ": answer missing text or answer_start");
                        const auto text = ans["text"].get<std::string>();
                        const auto start = ans["answer_start"].get<size_t>();
                        const size_t end = start + text.size();
                        if (end > context.size() ||
                            context.compare(start, text.size(), text) != 0)
                            throw ValidationError(
                                "record " + id + ": answer text \"" + text +
                                "\" does not match context at offset " +
                                std::to_string(start));
                    }
                    const auto& first = answers.front();
                    const auto text = first["text"].get<std::string>();
                    const auto start = first["answer_start"].get<size_t>();
                    ex.label = Label::span(text, start, start + text.size());
                }
                validate_example(ex);
                ds.examples.push_back(std::move(ex));
            }
        }
    }
    check_unique_ids(ds.examples);
    ds.positive_only = !any_impossible;
    return ds;
}

std::map<std::string, std::vector<std::string>> load_gold_sets(
    const std::filesystem::path& path) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw LoadError("cannot parse " + path.string() + ": " + e.what());
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(e.what());
    }
    std::map<std::string, std::vector<std::string>> golds;
    for (const auto& article : root.at("data")) {
        for (const auto& paragraph : article.at("paragraphs")) {
            for (const auto& qa : paragraph.at("qas")) {
                const auto id = qa.at("id").get<std::string>();
                std::vector<std::string> texts;
                if (qa.contains("answers"))
                    for (const auto& ans : qa["answers"])
                        texts.push_back(ans.at("text").get<std::string>());
                golds[id] = std::move(texts);
            }
        }
    }
    return golds;
}

Dataset load_pairs(const std::filesystem::path& path, Task task) {
    if (task != Task::BooleanQA && task != Task::RTE)
        throw std::invalid_argument("load_pairs supports BooleanQA and RTE only");

    std::ifstream in(path);
    if (!in) throw LoadError("cannot open file: " + path.string());

    Dataset ds;
    ds.task = task;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos
                                                    : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            throw LoadError("record row-" + std::to_string(line_no) +
                            ": expected 3 tab-separated columns");

        Example ex;
        ex.id = "row-" + std::to_string(line_no);
        ex.task = task;
        ex.query = line.substr(0, tab1);
        ex.context = line.substr(tab1 + 1, tab2 - tab1 - 1);
        std::string token = to_lower(collapse_whitespace(line.substr(tab2 + 1)));
        std::replace(token.begin(), token.end(), ' ', '_');

        if (task == Task::BooleanQA) {
            if (token == "yes") ex.label = Label::yes();
            else if (token == "no") ex.label = Label::no();
            else if (token == "idk") ex.label = Label::idk();
            else
                throw LoadError("record " + ex.id + ": unknown label token \"" + token +
                                "\"");
        } else {
            if (token == "entailment") ex.label = Label::entailment();
            else if (token == "not_entailment") ex.label = Label::not_entailment();
            else
                throw LoadError("record " + ex.id + ": unknown label token \"" + token +
                                "\"");
        }
        validate_example(ex);
        ds.examples.push_back(std::move(ex));
    }
    check_unique_ids(ds.examples);
    ds.positive_only = compute_positive_only(ds.examples);
    return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open file: " + path.string());

    Dataset ds;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Example ex = example_from_json_line(line);
        validate_example(ex);
        if (first) {
            ds.task = ex.task;
            first = false;
        } else if (ex.task != ds.task) {
            throw LoadError("example " + ex.id + ": task " + task_name(ex.task) +
                            " differs from dataset task " + task_name(ds.task));
        }
        ds.examples.push_back(std::move(ex));
    }
    check_unique_ids(ds.examples);
    ds.positive_only = compute_positive_only(ds.examples);
    return ds;
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
    std::string out;
    for (const auto& ex : dataset.examples) {
        out += example_to_json_line(ex);
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<Batch> batches(const Dataset& dataset, size_t batch_size, uint64_t seed,
                           bool shuffle) {
    if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");

    std::vector<size_t> order(dataset.examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle) {
        std::mt19937_64 rng(seed);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[bounded_uniform(rng, i)]);
    }

    std::vector<Batch> out;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        b.batch_index = out.size();
        const size_t end = std::min(start + batch_size, order.size());
        b.examples.reserve(end - start);
        for (size_t i = start; i < end; ++i)
            b.examples.push_back(dataset.examples[order[i]]);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace negsynth
