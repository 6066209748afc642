#include "negsynth/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "negsynth/util.hpp"

namespace negsynth {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::optional<size_t> PassagePool::find(std::string_view text) const {
    for (size_t i = 0; i < passages.size(); ++i) {
        if (passages[i] == text) return i;
    }
    return std::nullopt;
}

PassagePool pool_from_dataset(const Dataset& dataset) {
    PassagePool pool;
    std::unordered_map<std::string, size_t> seen;
    for (const auto& ex : dataset.examples) {
        if (seen.emplace(ex.context, pool.passages.size()).second) {
            pool.passages.push_back(ex.context);
        }
    }
    return pool;
}

Bm25Index::Bm25Index(const PassagePool& pool, Bm25Params params) : params_(params) {
    if (pool.size() == 0) throw std::invalid_argument("bm25: empty passage pool");
    num_docs_ = pool.size();
    doc_lengths_.reserve(num_docs_);
    uint64_t total_length = 0;
    for (size_t doc = 0; doc < pool.passages.size(); ++doc) {
        auto tokens = tokenize(pool.passages[doc]);
        doc_lengths_.push_back(static_cast<uint32_t>(tokens.size()));
        total_length += tokens.size();
        std::map<std::string, uint32_t> counts;
        for (auto& t : tokens) ++counts[t];
        for (auto& [term, tf] : counts) {
            postings_[term].push_back({doc, tf});
        }
    }
    avg_doc_length_ = num_docs_ > 0 ? static_cast<double>(total_length) / num_docs_ : 0.0;
    compute_idf();
}

void Bm25Index::compute_idf() {
    for (const auto& [term, plist] : postings_) {
        double df = static_cast<double>(plist.size());
        double n = static_cast<double>(num_docs_);
        idf_[term] = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }
}

double Bm25Index::idf(const std::string& term) const {
    auto it = idf_.find(term);
    return it == idf_.end() ? 0.0 : it->second;
}

namespace {

double term_score(double idf, uint32_t tf, uint32_t doc_len, double avg_len,
                  const Bm25Params& p) {
    double norm = p.k1 * (1.0 - p.b + p.b * doc_len / avg_len);
    return idf * (tf * (p.k1 + 1.0)) / (tf + norm);
}

}  // namespace

double Bm25Index::score(const std::string& query, size_t doc_id) const {
    if (doc_id >= num_docs_) throw std::out_of_range("bm25: doc_id out of range");
    double total = 0.0;
    // Query terms contribute once per occurrence, so a repeated term
    // counts with its multiplicity.
    for (const auto& term : tokenize(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& plist = it->second;
        auto pit = std::lower_bound(plist.begin(), plist.end(), doc_id,
                                    [](const Posting& p, size_t id) { return p.doc_id < id; });
        if (pit == plist.end() || pit->doc_id != doc_id) continue;
        total += term_score(idf_.at(term), pit->term_frequency, doc_lengths_[doc_id],
                            avg_doc_length_, params_);
    }
    return total;
}

std::vector<double> Bm25Index::score_all(const std::string& query) const {
    std::vector<double> scores(num_docs_, 0.0);
    for (const auto& term : tokenize(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        double idf = idf_.at(term);
        for (const auto& posting : it->second) {
            scores[posting.doc_id] += term_score(idf, posting.term_frequency,
                                                 doc_lengths_[posting.doc_id],
                                                 avg_doc_length_, params_);
        }
    }
    return scores;
}

Bm25Index build_index(const PassagePool& pool, Bm25Params params) {
    return Bm25Index(pool, params);
}

void Bm25Index::save(const std::filesystem::path& path) const {
    std::ostringstream out;
    out << "bm25-index v1\n";
    out << "k1 " << format_double(params_.k1) << "\n";
    out << "b " << format_double(params_.b) << "\n";
    out << "num_docs " << num_docs_ << "\n";
    out << "avg_doc_length " << format_double(avg_doc_length_) << "\n";
    out << "doc_lengths";
    for (auto len : doc_lengths_) out << " " << len;
    out << "\n";
    // std::map iterates terms in lexicographic order and postings were
    // appended in ascending doc order, so the body is fully determined
    // by the pool contents.
    for (const auto& [term, plist] : postings_) {
        out << term;
        for (const auto& posting : plist) {
            out << " " << posting.doc_id << ":" << posting.term_frequency;
        }
        out << "\n";
    }
    write_file_atomic(path, out.str());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open index file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "bm25-index v1") {
        throw LoadError("bad index header in " + path.string());
    }
    Bm25Index index;
    auto expect_key = [&](const std::string& key) -> std::string {
        if (!std::getline(in, line)) throw LoadError("truncated index file: " + path.string());
        if (line.rfind(key + " ", 0) != 0) {
            throw LoadError("expected '" + key + "' line in " + path.string());
        }
        return line.substr(key.size() + 1);
    };
    index.params_.k1 = std::stod(expect_key("k1"));
    index.params_.b = std::stod(expect_key("b"));
    index.num_docs_ = std::stoull(expect_key("num_docs"));
    index.avg_doc_length_ = std::stod(expect_key("avg_doc_length"));
    {
        std::istringstream lens(expect_key("doc_lengths"));
        uint32_t len;
        while (lens >> len) index.doc_lengths_.push_back(len);
    }
    if (index.doc_lengths_.size() != index.num_docs_) {
        throw LoadError("doc_lengths count mismatch in " + path.string());
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string term;
        row >> term;
        auto& plist = index.postings_[term];
        std::string pair;
        while (row >> pair) {
            auto colon = pair.find(':');
            if (colon == std::string::npos) {
                throw LoadError("malformed posting '" + pair + "' in " + path.string());
            }
            Posting posting;
            posting.doc_id = std::stoull(pair.substr(0, colon));
            posting.term_frequency = static_cast<uint32_t>(std::stoul(pair.substr(colon + 1)));
            if (posting.doc_id >= index.num_docs_) {
                throw LoadError("posting doc_id out of range in " + path.string());
            }
            plist.push_back(posting);
        }
        if (plist.empty()) throw LoadError("term with no postings in " + path.string());
    }
    index.compute_idf();
    return index;
}

std::optional<Example> retrieve_negative(const Bm25Index& index, const PassagePool& pool,
                                         const Example& example) {
    if (example.task != Task::ExtractiveQA) {
        throw std::invalid_argument("retrieve_negative: requires an extractive example");
    }
    if (example.label.kind != Label::Kind::Span) return std::nullopt;
    if (index.num_docs() != pool.size()) {
        throw std::invalid_argument("retrieve_negative: index/pool size mismatch");
    }
    auto own = pool.find(example.context);
    auto scores = index.score_all(example.query);
    std::optional<size_t> best;
    for (size_t doc = 0; doc < scores.size(); ++doc) {
        if (own && doc == *own) continue;
        if (contains_normalized(pool.passages[doc], example.label.text)) continue;
        // Strictly-greater keeps the lowest doc_id among ties.
        if (!best || scores[doc] > scores[*best]) best = doc;
    }
    if (!best) return std::nullopt;
    Example negative;
    negative.id = synthetic_id(example.id, Provenance::Origin::Retrieval, *best);
    negative.task = example.task;
    negative.query = example.query;
    negative.context = pool.passages[*best];
    negative.label = Label::no_ans();
    negative.provenance.origin = Provenance::Origin::Retrieval;
    negative.provenance.parent_id = example.id;
    return negative;
}

}  // namespace negsynth
