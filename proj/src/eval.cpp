#include "negsynth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "negsynth/util.hpp"

namespace negsynth {

double em(const std::string& prediction, std::span<const std::string> golds) {
    std::string pred = normalize_answer(prediction);
    for (const auto& gold : golds) {
        if (normalize_answer(gold) == pred) return 1.0;
    }
    return 0.0;
}

namespace {

double token_f1(const std::string& normalized_pred, const std::string& normalized_gold) {
    auto pred_tokens = split_whitespace(normalized_pred);
    auto gold_tokens = split_whitespace(normalized_gold);
    if (pred_tokens.empty() && gold_tokens.empty()) return 1.0;
    if (pred_tokens.empty() || gold_tokens.empty()) return 0.0;
    // Multiset overlap: each gold token occurrence can match once.
    std::map<std::string, int> gold_counts;
    for (const auto& t : gold_tokens) ++gold_counts[t];
    int common = 0;
    for (const auto& t : pred_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / pred_tokens.size();
    double recall = static_cast<double>(common) / gold_tokens.size();
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double f1(const std::string& prediction, std::span<const std::string> golds) {
    std::string pred = normalize_answer(prediction);
    double best = 0.0;
    for (const auto& gold : golds) {
        best = std::max(best, token_f1(pred, normalize_answer(gold)));
    }
    return best;
}

double macro_average(std::span<const double> subset_scores) {
    if (subset_scores.empty()) {
        throw std::invalid_argument("macro_average: no subset scores");
    }
    double sum = 0.0;
    for (double v : subset_scores) sum += v;
    return sum / static_cast<double>(subset_scores.size());
}

namespace {

// One scored example, already reduced to prediction/gold values.
struct ScoredItem {
    double em = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::string subset;
    std::string subgroup;  // NoAns sub-grouping, may be empty
};

struct Accumulator {
    double em_sum = 0.0, f1_sum = 0.0, acc_sum = 0.0;
    size_t n = 0;

    void add(const ScoredItem& item) {
        em_sum += item.em;
        f1_sum += item.f1;
        acc_sum += item.accuracy;
        ++n;
    }
    double mean_em() const { return 100.0 * em_sum / n; }
    double mean_f1() const { return 100.0 * f1_sum / n; }
    double mean_acc() const { return 100.0 * acc_sum / n; }
};

Metrics assemble_extractive(const std::vector<ScoredItem>& items) {
    Metrics metrics;
    metrics.task = Task::ExtractiveQA;
    Accumulator has_ans, no_ans;
    std::map<std::string, Accumulator> subgroups;
    bool all_noans_tagged = true;
    for (const auto& item : items) {
        if (item.subset == "HasAns") {
            has_ans.add(item);
        } else {
            no_ans.add(item);
            if (item.subgroup.empty()) {
                all_noans_tagged = false;
            } else {
                subgroups[item.subgroup].add(item);
            }
        }
    }
    std::vector<double> macro_em, macro_f1;
    if (has_ans.n > 0) {
        metrics.subsets["HasAns"] = {has_ans.mean_em(), has_ans.mean_f1(), std::nullopt};
        macro_em.push_back(has_ans.mean_em());
        macro_f1.push_back(has_ans.mean_f1());
    } else {
        metrics.partial = true;
        metrics.absent_subsets.push_back("HasAns");
    }
    if (no_ans.n > 0) {
        double noans_em, noans_f1;
        if (!subgroups.empty() && all_noans_tagged) {
            // Sub-group means are averaged before entering the macro.
            std::vector<double> em_means, f1_means;
            for (const auto& [name, acc] : subgroups) {
                metrics.subsets["NoAns/" + name] = {acc.mean_em(), acc.mean_f1(), std::nullopt};
                em_means.push_back(acc.mean_em());
                f1_means.push_back(acc.mean_f1());
            }
            noans_em = macro_average(em_means);
            noans_f1 = macro_average(f1_means);
        } else {
            noans_em = no_ans.mean_em();
            noans_f1 = no_ans.mean_f1();
        }
        metrics.subsets["NoAns"] = {noans_em, noans_f1, std::nullopt};
        macro_em.push_back(noans_em);
        macro_f1.push_back(noans_f1);
    } else {
        metrics.partial = true;
        metrics.absent_subsets.push_back("NoAns");
    }
    metrics.macro = {macro_average(macro_em), macro_average(macro_f1), std::nullopt};
    return metrics;
}

Metrics assemble_boolean(const std::vector<ScoredItem>& items) {
    Metrics metrics;
    metrics.task = Task::BooleanQA;
    std::map<std::string, Accumulator> classes;
    for (const auto& item : items) classes[item.subset].add(item);
    std::vector<double> positive;
    for (const char* name : {"Yes", "No"}) {
        auto it = classes.find(name);
        if (it != classes.end()) {
            metrics.subsets[name] = {std::nullopt, std::nullopt, it->second.mean_acc()};
            positive.push_back(it->second.mean_acc());
        } else {
            metrics.partial = true;
            metrics.absent_subsets.push_back(name);
        }
    }
    std::vector<double> macro;
    if (!positive.empty()) {
        double positive_mean = macro_average(positive);
        metrics.subsets["Positive"] = {std::nullopt, std::nullopt, positive_mean};
        macro.push_back(positive_mean);
    }
    auto idk = classes.find("IDK");
    if (idk != classes.end()) {
        metrics.subsets["IDK"] = {std::nullopt, std::nullopt, idk->second.mean_acc()};
        macro.push_back(idk->second.mean_acc());
    } else {
        metrics.partial = true;
        metrics.absent_subsets.push_back("IDK");
    }
    metrics.macro = {std::nullopt, std::nullopt, macro_average(macro)};
    return metrics;
}

Metrics assemble_rte(const std::vector<ScoredItem>& items) {
    Metrics metrics;
    metrics.task = Task::RTE;
    Accumulator overall;
    for (const auto& item : items) overall.add(item);
    metrics.subsets["Overall"] = {std::nullopt, std::nullopt, overall.mean_acc()};
    metrics.macro = metrics.subsets["Overall"];
    return metrics;
}

Metrics assemble(Task task, const std::vector<ScoredItem>& items) {
    if (items.empty()) throw std::invalid_argument("evaluate: no examples to score");
    switch (task) {
        case Task::ExtractiveQA: return assemble_extractive(items);
        case Task::BooleanQA: return assemble_boolean(items);
        case Task::RTE: return assemble_rte(items);
    }
    throw std::logic_error("unreachable task");
}

ScoredItem score_one(Task task, const Label& predicted, const Label& gold,
                     std::span<const std::string> alt_golds) {
    ScoredItem item;
    if (task == Task::ExtractiveQA) {
        std::string pred_text = predicted.is_span() ? predicted.text : "";
        std::vector<std::string> golds;
        if (gold.is_span()) {
            golds.push_back(gold.text);
            golds.insert(golds.end(), alt_golds.begin(), alt_golds.end());
        } else {
            golds.emplace_back("");
        }
        item.em = em(pred_text, golds);
        item.f1 = f1(pred_text, golds);
        item.subset = gold.is_span() ? "HasAns" : "NoAns";
    } else {
        item.accuracy = predicted.kind == gold.kind ? 1.0 : 0.0;
        if (task == Task::BooleanQA) {
            if (gold.kind == Label::Kind::Yes) item.subset = "Yes";
            else if (gold.kind == Label::Kind::No) item.subset = "No";
            else item.subset = "IDK";
        } else {
            item.subset = "Overall";
        }
    }
    return item;
}

}  // namespace

Metrics evaluate(const Dataset& dataset, QaBackend& backend, const EvalOptions& options) {
    std::vector<ScoredItem> items;
    items.reserve(dataset.size());
    for (const auto& ex : dataset.examples) {
        Prediction pred = backend.predict(ex.query, ex.context);
        std::vector<std::string> alt_golds;
        Label gold = ex.label;
        if (options.gold_sets && ex.task == Task::ExtractiveQA) {
            auto it = options.gold_sets->find(ex.id);
            if (it != options.gold_sets->end()) {
                if (it->second.empty()) {
                    gold = Label::no_ans();
                } else {
                    // First text is authoritative; the rest are alternates.
                    gold = Label::span(it->second.front(), 0, it->second.front().size());
                    alt_golds.assign(it->second.begin() + 1, it->second.end());
                }
            }
        }
        ScoredItem item = score_one(dataset.task, pred.label, gold, alt_golds);
        if (options.noans_subsets && item.subset == "NoAns") {
            auto it = options.noans_subsets->find(ex.id);
            if (it != options.noans_subsets->end()) item.subgroup = it->second;
        }
        items.push_back(std::move(item));
    }
    return assemble(dataset.task, items);
}

double gap(const GapInputs& inputs) {
    double denominator = inputs.m_full - inputs.m_base;
    if (denominator == 0.0) {
        throw std::invalid_argument("gap: m_full equals m_base (zero denominator)");
    }
    return (inputs.m_scene - inputs.m_base) / denominator;
}

SweepResult threshold_sweep(Task task, std::span<const SweepPrediction> predictions,
                            std::span<const double> grid) {
    if (predictions.empty()) throw std::invalid_argument("threshold_sweep: no predictions");
    std::vector<double> default_grid;
    if (grid.empty()) {
        for (int i = 0; i <= 100; ++i) default_grid.push_back(i / 100.0);
        grid = default_grid;
    }
    const Label negative = negative_label(task);
    std::optional<SweepResult> best;
    double best_score = 0.0;
    for (double theta : grid) {
        std::vector<ScoredItem> items;
        items.reserve(predictions.size());
        for (const auto& p : predictions) {
            const Label& effective = p.confidence < theta ? negative : p.predicted;
            items.push_back(score_one(task, effective, p.gold, p.alt_golds));
        }
        Metrics metrics = assemble(task, items);
        double score = task == Task::ExtractiveQA ? *metrics.macro.f1 : *metrics.macro.accuracy;
        if (!best || score > best_score) {
            best = SweepResult{theta, std::move(metrics)};
            best_score = score;
        }
    }
    return *best;
}

std::string metrics_report(const Metrics& metrics) {
    std::ostringstream out;
    auto line = [&](const std::string& name, const Score& score) {
        char buf[128];
        if (score.em && score.f1) {
            std::snprintf(buf, sizeof(buf), "%-24s EM %6.2f   F1 %6.2f\n", name.c_str(),
                          *score.em, *score.f1);
        } else if (score.accuracy) {
            std::snprintf(buf, sizeof(buf), "%-24s accuracy %6.2f\n", name.c_str(),
                          *score.accuracy);
        } else {
            std::snprintf(buf, sizeof(buf), "%-24s (no scores)\n", name.c_str());
        }
        out << buf;
    };
    out << "task: " << task_name(metrics.task) << "\n";
    for (const auto& [name, score] : metrics.subsets) line(name, score);
    line("average", metrics.macro);
    if (metrics.partial) {
        out << "note: absent subsets:";
        for (const auto& name : metrics.absent_subsets) out << " " << name;
        out << " (macro covers present subsets only)\n";
    }
    return out.str();
}

}  // namespace negsynth
