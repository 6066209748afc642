#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "negsynth/backends.hpp"

namespace negsynth {

struct PerturbationConfig {
    double beta_a = 2.0;
    double beta_b = 5.0;
    int min_masks = 1;
    bool collapse_adjacent = true;
    std::string sentinel = "<mask>";
};

struct MaskedText {
    std::vector<std::string> words;
    std::set<size_t> masked_positions;
    std::string rendered;  // one sentinel per masked run when collapsing
};

// Mask ratio alpha ~ Beta(beta_a, beta_b), strictly inside (0,1).
double sample_mask_ratio(const PerturbationConfig& config, std::mt19937_64& rng);

// Masks exactly max(min_masks, round-half-up(alpha * W)) distinct word
// positions, chosen uniformly without replacement over the W
// whitespace-split words.
MaskedText apply_masks(const std::string& text, double alpha, const PerturbationConfig& config,
                       std::mt19937_64& rng);

// Full perturbation: sample a ratio, mask, and let the infiller rewrite
// the masked text. The output may equal the input; downstream filtering
// deals with that. Infiller failures propagate.
std::string perturb(const std::string& text, Infiller& infiller,
                    const PerturbationConfig& config, std::mt19937_64& rng);

}  // namespace negsynth
