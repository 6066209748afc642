#pragma once

#include <random>
#include <vector>

#include "negsynth/corpus.hpp"

namespace negsynth {

// Bijection on {0..m-1}, stored as mapping[k] = sigma(k).
struct Permutation {
    std::vector<size_t> mapping;

    size_t size() const { return mapping.size(); }
    size_t operator()(size_t k) const { return mapping.at(k); }
};

// Uniform over the m! permutations (Fisher-Yates with a portable
// bounded draw, so results are identical across platforms per seed).
Permutation sample_permutation(size_t m, std::mt19937_64& rng);

// In-batch negatives: for each position k with sigma(k) != k, pair
// query sigma(k) with context k and label it with the task's negative
// class. Fixed points emit nothing, so a batch of m yields m minus the
// permutation's fixed-point count.
std::vector<Example> shuffle_negatives(const Batch& batch, std::mt19937_64& rng);

}  // namespace negsynth
