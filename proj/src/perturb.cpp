#include "negsynth/perturb.hpp"

#include <cmath>
#include <stdexcept>

#include "negsynth/util.hpp"

namespace negsynth {

double sample_mask_ratio(const PerturbationConfig& config, std::mt19937_64& rng) {
    if (config.beta_a <= 0.0 || config.beta_b <= 0.0) {
        throw std::invalid_argument("sample_mask_ratio: beta parameters must be positive");
    }
    // Beta(a,b) = Ga/(Ga+Gb) with Ga~Gamma(a), Gb~Gamma(b). Resample the
    // (measure-zero) boundary draws so the ratio is usable directly.
    std::gamma_distribution<double> ga(config.beta_a, 1.0);
    std::gamma_distribution<double> gb(config.beta_b, 1.0);
    for (;;) {
        double x = ga(rng);
        double y = gb(rng);
        double alpha = x / (x + y);
        if (alpha > 0.0 && alpha < 1.0) return alpha;
    }
}

MaskedText apply_masks(const std::string& text, double alpha, const PerturbationConfig& config,
                       std::mt19937_64& rng) {
    MaskedText out;
    out.words = split_whitespace(text);
    if (out.words.empty()) throw std::invalid_argument("apply_masks: empty text");
    size_t w = out.words.size();
    size_t want = static_cast<size_t>(std::floor(alpha * static_cast<double>(w) + 0.5));
    size_t n = std::max<size_t>(static_cast<size_t>(config.min_masks), want);
    n = std::min(n, w);
    // Uniform n-subset via a partial Fisher-Yates over the index vector.
    std::vector<size_t> indices(w);
    for (size_t i = 0; i < w; ++i) indices[i] = i;
    for (size_t i = 0; i < n; ++i) {
        size_t j = i + bounded_uniform(rng, w - i);
        std::swap(indices[i], indices[j]);
    }
    out.masked_positions.insert(indices.begin(), indices.begin() + n);

    std::string rendered;
    bool in_masked_run = false;
    for (size_t i = 0; i < w; ++i) {
        bool masked = out.masked_positions.count(i) > 0;
        if (masked && in_masked_run && config.collapse_adjacent) continue;
        if (!rendered.empty()) rendered.push_back(' ');
        rendered += masked ? config.sentinel : out.words[i];
        in_masked_run = masked;
    }
    out.rendered = std::move(rendered);
    return out;
}

std::string perturb(const std::string& text, Infiller& infiller,
                    const PerturbationConfig& config, std::mt19937_64& rng) {
    double alpha = sample_mask_ratio(config, rng);
    MaskedText masked = apply_masks(text, alpha, config, rng);
    return infiller.infill(masked.rendered);
}

}  // namespace negsynth
