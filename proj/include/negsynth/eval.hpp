#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negsynth/backends.hpp"
#include "negsynth/corpus.hpp"

namespace negsynth {

// 1 iff the normalized prediction equals any normalized gold. A
// no-answer outcome is represented as the empty string on either side.
double em(const std::string& prediction, std::span<const std::string> golds);

// Max over golds of token-multiset F1 on normalized texts. Both sides
// empty -> 1; exactly one empty -> 0.
double f1(const std::string& prediction, std::span<const std::string> golds);

// Unweighted mean. This is the macro rule used everywhere a table
// "Average" column is reported; exposed so subset scores can be
// combined without re-running an evaluation.
double macro_average(std::span<const double> subset_scores);

struct Score {
    std::optional<double> em;        // extractive, 0..100
    std::optional<double> f1;        // extractive, 0..100
    std::optional<double> accuracy;  // classification, 0..100
};

struct Metrics {
    Task task = Task::ExtractiveQA;
    std::map<std::string, Score> subsets;
    Score macro;
    // True when an expected subset had no examples; the macro then
    // averages only the subsets that are present.
    bool partial = false;
    std::vector<std::string> absent_subsets;
};

struct EvalOptions {
    // All acceptable gold answer texts per example id (extractive).
    // Absent ids fall back to the example's own label.
    const std::map<std::string, std::vector<std::string>>* gold_sets = nullptr;
    // Optional no-answer sub-grouping per example id; when present, the
    // NoAns score is the mean of the sub-group means, computed before
    // the HasAns/NoAns macro.
    const std::map<std::string, std::string>* noans_subsets = nullptr;
};

// Subset construction:
//   ExtractiveQA: HasAns and NoAns subsets, EM/F1 each; macro is their
//     mean (NoAns sub-groups averaged first when configured).
//   BooleanQA: per-class accuracy; macro = mean(mean(Yes, No), IDK).
//   RTE: overall accuracy.
Metrics evaluate(const Dataset& dataset, QaBackend& backend, const EvalOptions& options = {});

struct GapInputs {
    double m_scene = 0.0;
    double m_base = 0.0;
    double m_full = 0.0;
};

// Fraction of the baseline-to-oracle difference recovered:
// (m_scene - m_base) / (m_full - m_base). Zero denominator is an error.
double gap(const GapInputs& inputs);

struct SweepPrediction {
    Label predicted;
    double confidence = 1.0;
    Label gold;
    std::vector<std::string> alt_golds;  // extra gold texts (extractive)
};

struct SweepResult {
    double best_theta = 0.0;
    Metrics at_best;
};

// For each theta in the grid, relabels predictions with confidence below
// theta as the task's negative class and scores the macro average
// (macro F1 for extractive, macro accuracy otherwise). Returns the best
// theta, smallest first on ties. Default grid: 0.00..1.00 step 0.01.
SweepResult threshold_sweep(Task task, std::span<const SweepPrediction> predictions,
                            std::span<const double> grid = {});

// Plain-text evaluation report.
std::string metrics_report(const Metrics& metrics);

}  // namespace negsynth
