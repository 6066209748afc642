#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "negsynth/corpus.hpp"

namespace negsynth {

// Raised when a backend call fails (remote transport errors, protocol
// violations, adapter-reported failures).
class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Prediction {
    Label label;
    double confidence = 1.0;  // probability of the returned label, in [0,1]
};

struct WeightedExample {
    Example example;
    double weight = 1.0;
};

struct TrainResult {
    double loss = 0.0;  // weighted sum of per-example losses
    std::vector<double> per_example;  // unweighted, aligned with the input
};

enum class ParaphraseVerdict { Paraphrase, NotParaphrase };

// Answering/classification model. Training calls are never concurrent;
// predict may be called concurrently only when concurrent_safe() is true.
class QaBackend {
  public:
    virtual ~QaBackend() = default;
    virtual Prediction predict(const std::string& query, const std::string& context) = 0;
    virtual TrainResult train_batch(std::span<const WeightedExample> examples) = 0;
    virtual std::string clone_state() const = 0;
    virtual void restore_state(const std::string& state) = 0;
    virtual bool concurrent_safe() const = 0;
};

// Mask-denoising rewriter: consumes text containing sentinel markers,
// produces the filled-in text (never empty).
class Infiller {
  public:
    virtual ~Infiller() = default;
    virtual std::string infill(const std::string& masked_text) = 0;
    virtual bool concurrent_safe() const = 0;
};

// Binary paraphrase judgement; judge(a, a) is always Paraphrase.
class ParaphraseDetector {
  public:
    virtual ~ParaphraseDetector() = default;
    virtual ParaphraseVerdict judge(const std::string& a, const std::string& b) = 0;
    virtual bool concurrent_safe() const = 0;
};

}  // namespace negsynth
