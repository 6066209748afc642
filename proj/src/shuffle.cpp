#include "negsynth/shuffle.hpp"

#include <stdexcept>

#include "negsynth/util.hpp"

namespace negsynth {

Permutation sample_permutation(size_t m, std::mt19937_64& rng) {
    if (m < 1) throw std::invalid_argument("sample_permutation: m must be >= 1");
    Permutation perm;
    perm.mapping.resize(m);
    for (size_t i = 0; i < m; ++i) perm.mapping[i] = i;
    for (size_t i = m - 1; i > 0; --i) {
        size_t j = bounded_uniform(rng, i + 1);
        std::swap(perm.mapping[i], perm.mapping[j]);
    }
    return perm;
}

std::vector<Example> shuffle_negatives(const Batch& batch, std::mt19937_64& rng) {
    const auto& examples = batch.examples;
    if (examples.empty()) return {};
    Task task = examples.front().task;
    for (const auto& ex : examples) {
        if (ex.task != task) {
            throw std::invalid_argument("shuffle_negatives: mixed-task batch");
        }
    }
    auto sigma = sample_permutation(examples.size(), rng);
    std::vector<Example> negatives;
    for (size_t k = 0; k < examples.size(); ++k) {
        if (sigma(k) == k) continue;
        const Example& query_owner = examples[sigma(k)];
        const Example& context_owner = examples[k];
        Example neg;
        neg.id = synthetic_id(query_owner.id, Provenance::Origin::Shuffle, k);
        neg.task = task;
        neg.query = query_owner.query;
        neg.context = context_owner.context;
        neg.label = negative_label(task);
        neg.provenance.origin = Provenance::Origin::Shuffle;
        neg.provenance.parent_id = query_owner.id;
        negatives.push_back(std::move(neg));
    }
    return negatives;
}

}  // namespace negsynth
