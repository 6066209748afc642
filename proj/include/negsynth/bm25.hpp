#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "negsynth/corpus.hpp"

namespace negsynth {

// Lowercase terms split on any non-alphanumeric run; empty tokens dropped.
std::vector<std::string> tokenize(std::string_view text);

struct PassagePool {
    // doc_ids are positions: contiguous from 0, deduplicated by exact text.
    std::vector<std::string> passages;

    size_t size() const { return passages.size(); }
    // Index of an exact passage text, if present.
    std::optional<size_t> find(std::string_view text) const;
};

// One pool entry per distinct context, in first-appearance order.
PassagePool pool_from_dataset(const Dataset& dataset);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    size_t doc_id;
    uint32_t term_frequency;
};

// Immutable inverted index. idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)),
// which is nonnegative for every indexed term.
class Bm25Index {
  public:
    Bm25Index(const PassagePool& pool, Bm25Params params);

    // score(q, d) = sum over query term occurrences of
    //   idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen))
    double score(const std::string& query, size_t doc_id) const;

    // Scores for all documents at once (postings traversal). Documents
    // sharing no term with the query score 0.
    std::vector<double> score_all(const std::string& query) const;

    const Bm25Params& params() const { return params_; }
    size_t num_docs() const { return num_docs_; }
    double avg_doc_length() const { return avg_doc_length_; }
    const std::vector<uint32_t>& doc_lengths() const { return doc_lengths_; }
    const std::map<std::string, std::vector<Posting>>& postings() const {
        return postings_;
    }
    double idf(const std::string& term) const;

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

  private:
    Bm25Index() = default;
    void compute_idf();

    Bm25Params params_;
    size_t num_docs_ = 0;
    double avg_doc_length_ = 0.0;
    std::vector<uint32_t> doc_lengths_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, double> idf_;
};

Bm25Index build_index(const PassagePool& pool, Bm25Params params = {});

// Hard negative for a positive extractive example: the highest-scoring
// pool passage that is not the example's own passage and does not contain
// the answer string (case-insensitive, whitespace-collapsed substring
// test). Ties break toward the lowest doc_id; zero-score candidates are
// still eligible. Absent when no passage qualifies.
std::optional<Example> retrieve_negative(const Bm25Index& index, const PassagePool& pool,
                                         const Example& example);

}  // namespace negsynth
