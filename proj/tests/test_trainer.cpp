#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"
#include "negsynth/bm25.hpp"
#include "negsynth/stubs.hpp"
#include "negsynth/trainer.hpp"
#include "negsynth/util.hpp"
#include "toy.hpp"

using namespace negsynth;

namespace {

// Backend with losses scripted by example origin, so every segment of a
// composite batch has a predictable, nonzero contribution.
struct ScriptedQa : QaBackend {
    std::map<std::string, Label> by_query;
    double original_loss = 0.0;
    double shuffle_loss = 0.0;
    double retrieval_loss = 0.0;
    std::vector<double> scene_cycle = {0.0};
    size_t scene_cursor = 0;

    double loss_for(const Example& ex) {
        switch (ex.provenance.origin) {
            case Provenance::Origin::Original: return original_loss;
            case Provenance::Origin::Shuffle: return shuffle_loss;
            case Provenance::Origin::Retrieval: return retrieval_loss;
            case Provenance::Origin::Scene:
                return scene_cycle[scene_cursor++ % scene_cycle.size()];
        }
        return 0.0;
    }

    Prediction predict(const std::string& query, const std::string&) override {
        auto it = by_query.find(query);
        if (it != by_query.end()) return {it->second, 1.0};
        return {Label::no_ans(), 1.0};
    }
    TrainResult train_batch(std::span<const WeightedExample> examples) override {
        TrainResult result;
        for (const auto& weighted : examples) {
            const double loss = loss_for(weighted.example);
            result.per_example.push_back(loss);
            result.loss += weighted.weight * loss;
        }
        return result;
    }
    std::string clone_state() const override { return "{}"; }
    void restore_state(const std::string&) override {}
    bool concurrent_safe() const override { return true; }
};

struct MarkerDetector : ParaphraseDetector {
    std::string marker;
    ParaphraseVerdict judge(const std::string&, const std::string& original) override {
        return original.find(marker) != std::string::npos
                   ? ParaphraseVerdict::Paraphrase
                   : ParaphraseVerdict::NotParaphrase;
    }
    bool concurrent_safe() const override { return true; }
};

struct FixedInfiller : Infiller {
    std::string text;
    explicit FixedInfiller(std::string t) : text(std::move(t)) {}
    std::string infill(const std::string&) override { return text; }
    bool concurrent_safe() const override { return true; }
};

TrainConfig base_config(Task task) {
    TrainConfig config;
    config.task = task;
    config.warm_start_steps = 0;
    config.batch_size = 4;
    config.epochs = 1;
    config.seed = 7;
    config.use_shuffle = false;
    config.use_retrieval = false;
    config.pre_fit = false;
    return config;
}

}  // namespace

TEST_CASE("composite loss combines components with the warm-start gate") {
    TrainConfig config;
    config.warm_start_steps = 100;
    const LossWeights weights{1.0, 1.0, 1.0};

    // Past the gate: all four terms count.
    CHECK(composite_loss(0.5, 0.3, 0.2, 0.5, weights, 100, config) ==
          doctest::Approx(1.5).epsilon(1e-12));
    // Before the gate the counterfactual term is zeroed.
    CHECK(composite_loss(0.5, 0.3, 0.2, 0.5, weights, 99, config) ==
          doctest::Approx(1.0).epsilon(1e-12));
    // Zero weights reduce to the plain loss.
    CHECK(composite_loss(0.7, 0.3, 0.2, 0.5, LossWeights{}, 100, config) == 0.7);
    // Weights scale their components.
    CHECK(composite_loss(0.0, 0.5, 0.25, 1.0, LossWeights{2.0, 4.0, 3.0}, 100, config) ==
          doctest::Approx(0.5 * 2 + 0.25 * 4 + 1.0 * 3).epsilon(1e-12));
    CHECK_THROWS_AS(composite_loss(-0.1, 0, 0, 0, weights, 0, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(composite_loss(0, 0, -1, 0, weights, 0, config), std::invalid_argument);
}

TEST_CASE("normalized config disables retrieval where it is undefined") {
    TrainConfig config;
    config.use_retrieval = true;

    config.task = Task::ExtractiveQA;
    CHECK(config.normalized().use_retrieval);

    config.task = Task::BooleanQA;
    CHECK_FALSE(config.normalized().use_retrieval);
    config.task = Task::RTE;
    CHECK_FALSE(config.normalized().use_retrieval);

    config.task = Task::ExtractiveQA;
    config.ablation = AblationMode::AssumeNoAnsNoRetr;
    CHECK_FALSE(config.normalized().use_retrieval);
}

TEST_CASE("counterfactual loss divides by the batch size, not the accepted count") {
    // Four examples, two of which the detector flags as paraphrases.
    // The stub answers originals correctly and perturbations with NoAns,
    // so flagged elements discard as ambiguous and the rest are accepted
    // with scripted losses 0.8 and 0.4.
    Dataset ds;
    ds.task = Task::ExtractiveQA;
    ScriptedQa qa;
    for (int i = 0; i < 4; ++i) {
        Example ex;
        ex.id = "d" + std::to_string(i);
        ex.task = Task::ExtractiveQA;
        const std::string tag = i % 2 == 0 ? " keepmark" : "";
        ex.query = "where is relic" + std::to_string(i) + tag + "?";
        ex.context = "relic" + std::to_string(i) + " sits on shelf " + std::to_string(i);
        ex.label = Label::span("relic" + std::to_string(i), 0, 6);
        validate_example(ex);
        qa.by_query[ex.query] = ex.label;
        ds.examples.push_back(ex);
    }
    qa.scene_cycle = {0.8, 0.4};

    MarkerDetector detector;
    detector.marker = "keepmark";  // paraphrase verdict => discard as ambiguous
    FixedInfiller infiller("completely rewritten placeholder");

    TrainBackends backends;
    backends.qa = &qa;
    backends.infiller = &infiller;
    backends.detector = &detector;

    auto config = base_config(Task::ExtractiveQA);
    const LossWeights weights{0.0, 0.0, 1.0};
    const auto log = train(ds, backends, weights, config);
    REQUIRE(log.steps.size() == 1);
    const auto& s = log.steps[0];
    CHECK(s.batch_size == 4);
    CHECK(s.scene_accepted == 2);
    CHECK(s.scene_discard_ambiguity == 2);
    CHECK(s.scene_discard_bad_prediction == 0);
    // (0.8 + 0.4) / 4, not / 2: discarded elements keep their zero slots.
    CHECK(s.loss_scene == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.loss_overall == doctest::Approx(s.loss + 0.3).epsilon(1e-12));
    CHECK(s.backend_total == doctest::Approx(s.loss_overall).epsilon(1e-9));
}

TEST_CASE("backend weighted total equals the composite loss on every step") {
    // All four segments active with distinct scripted losses; the
    // trainer's weight encoding must make the backend's weighted sum
    // coincide with the assembled overall loss.
    auto ds = toy::extractive(12);
    ScriptedQa qa;
    qa.original_loss = 0.5;
    qa.shuffle_loss = 0.25;
    qa.retrieval_loss = 0.75;
    qa.scene_cycle = {0.8, 0.4, 0.2, 0.6};

    const auto pool = pool_from_dataset(ds);
    const auto index = build_index(pool);
    FixedInfiller infiller("stand-in rewrite");
    MarkerDetector detector;  // never fires: everything accepted in this mode

    TrainBackends backends;
    backends.qa = &qa;
    backends.infiller = &infiller;
    backends.detector = &detector;
    backends.index = &index;
    backends.pool = &pool;

    auto config = base_config(Task::ExtractiveQA);
    config.epochs = 2;
    config.warm_start_steps = 1;  // step 0 runs without the scene term
    config.use_shuffle = true;
    config.use_retrieval = true;
    config.ablation = AblationMode::AssumeNoAns;

    const LossWeights weights{0.7, 1.3, 2.0};
    const auto log = train(ds, backends, weights, config);
    REQUIRE(log.steps.size() == 6);  // 12 examples / 4 per batch * 2 epochs

    for (const auto& s : log.steps) {
        CHECK(s.loss == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(s.retrieval_count == 4);
        CHECK(s.loss_retr == doctest::Approx(0.75).epsilon(1e-12));
        if (s.shuffle_count > 0) CHECK(s.loss_shuf == doctest::Approx(0.25).epsilon(1e-12));
        if (s.step == 0) {
            CHECK(s.effective_lambda_scene == 0.0);
            CHECK(s.scene_accepted == 0);
            CHECK(s.loss_scene == 0.0);
        } else {
            CHECK(s.effective_lambda_scene == 2.0);
            CHECK(s.scene_accepted == 4);  // assume-negative accepts everything
            // One full cycle of scripted losses per step: 2.0 / 4.
            CHECK(s.loss_scene == doctest::Approx(0.5).epsilon(1e-12));
        }
        const double expected = composite_loss(s.loss, s.loss_shuf, s.loss_retr,
                                               s.loss_scene, weights, s.step, config);
        CHECK(s.loss_overall == doctest::Approx(expected).epsilon(1e-12));
        CHECK(s.backend_total == doctest::Approx(s.loss_overall).epsilon(1e-9));
    }

    // Step numbering is global; epochs and batch indices restart.
    for (size_t i = 0; i < log.steps.size(); ++i) {
        CHECK(log.steps[i].step == static_cast<int64_t>(i));
        CHECK(log.steps[i].epoch == static_cast<int>(i / 3));
        CHECK(log.steps[i].batch_index == i % 3);
    }
}

TEST_CASE("every enabled-segment combination keeps the identity and its counts") {
    const auto ds = toy::extractive(16);
    const auto pool = pool_from_dataset(ds);
    const auto index = build_index(pool);

    struct Combo {
        bool shuf, retr, scene;
    };
    const std::vector<Combo> combos = {
        {true, false, false}, {false, true, false}, {false, false, true},
        {true, true, false},  {true, false, true},  {false, true, true},
        {true, true, true},
    };
    for (const auto& combo : combos) {
        CAPTURE(combo.shuf);
        CAPTURE(combo.retr);
        CAPTURE(combo.scene);
        LexicalQa qa(Task::ExtractiveQA);
        LexiconInfiller infiller(3);
        JaccardDetector detector;
        TrainBackends backends;
        backends.qa = &qa;
        backends.infiller = &infiller;
        backends.detector = &detector;
        backends.index = &index;
        backends.pool = &pool;

        auto config = base_config(Task::ExtractiveQA);
        config.use_shuffle = combo.shuf;
        config.use_retrieval = combo.retr;
        LossWeights weights;
        weights.lambda_shuf = combo.shuf ? 1.0 : 0.0;
        weights.lambda_retr = combo.retr ? 1.0 : 0.0;
        weights.lambda_scene = combo.scene ? 0.5 : 0.0;

        const auto log = train(ds, backends, weights, config);
        REQUIRE(log.steps.size() == 4);
        size_t shuffle_total = 0, retrieval_total = 0, scene_total = 0;
        for (const auto& s : log.steps) {
            shuffle_total += s.shuffle_count;
            retrieval_total += s.retrieval_count;
            scene_total += s.scene_accepted + s.scene_discard_ambiguity +
                           s.scene_discard_bad_prediction + s.scene_backend_errors +
                           s.scene_only_noans_drops;
            const double expected = composite_loss(s.loss, s.loss_shuf, s.loss_retr,
                                                   s.loss_scene, weights, s.step, config);
            CHECK(s.loss_overall == doctest::Approx(expected).epsilon(1e-12));
            CHECK(s.backend_total == doctest::Approx(s.loss_overall).epsilon(1e-9));
        }
        if (combo.shuf) CHECK(shuffle_total > 0);
        else CHECK(shuffle_total == 0);
        if (combo.retr) CHECK(retrieval_total == 16);  // one cached negative each
        else CHECK(retrieval_total == 0);
        if (combo.scene) CHECK(scene_total == 16);  // every element reaches a verdict
        else CHECK(scene_total == 0);
        CHECK(log.scene_ever_active() == combo.scene);
    }
}

TEST_CASE("warm start gates the counterfactual stream by global step") {
    const auto ds = toy::extractive(8);
    LexicalQa qa(Task::ExtractiveQA);
    LexiconInfiller infiller(3);
    JaccardDetector detector;
    TrainBackends backends;
    backends.qa = &qa;
    backends.infiller = &infiller;
    backends.detector = &detector;

    auto config = base_config(Task::ExtractiveQA);
    config.epochs = 2;            // 2 steps per epoch
    config.warm_start_steps = 2;  // exactly the first epoch
    const LossWeights weights{0.0, 0.0, 1.0};
    const auto log = train(ds, backends, weights, config);
    REQUIRE(log.steps.size() == 4);
    for (const auto& s : log.steps) {
        if (s.step < 2) {
            CHECK(s.effective_lambda_scene == 0.0);
            CHECK(s.scene_accepted + s.scene_discard_ambiguity +
                      s.scene_discard_bad_prediction ==
                  0);
            CHECK(s.loss_scene == 0.0);
        } else {
            CHECK(s.effective_lambda_scene == 1.0);
            CHECK(s.scene_accepted + s.scene_discard_ambiguity +
                      s.scene_discard_bad_prediction ==
                  4);
        }
    }
    CHECK(log.scene_ever_active());

    // A warm start longer than the run keeps the stream off throughout.
    LexicalQa fresh(Task::ExtractiveQA);
    backends.qa = &fresh;
    config.warm_start_steps = 100;
    const auto gated = train(ds, backends, weights, config);
    CHECK_FALSE(gated.scene_ever_active());
    for (const auto& s : gated.steps) CHECK(s.effective_lambda_scene == 0.0);
}

TEST_CASE("pre-fit pass removes the first-epoch misses") {
    const auto ds = toy::extractive(8);
    auto config = base_config(Task::ExtractiveQA);
    config.epochs = 2;

    // Without pre-fit, epoch 0 sees every original for the first time.
    {
        LexicalQa qa(Task::ExtractiveQA);
        TrainBackends backends;
        backends.qa = &qa;
        const auto log = train(ds, backends, LossWeights{}, config);
        REQUIRE(log.steps.size() == 4);
        CHECK(log.steps[0].loss == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(log.steps[1].loss == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(log.steps[2].loss == 0.0);
        CHECK(log.steps[3].loss == 0.0);
    }
    // With it, the model is already fit when step 0 runs.
    {
        LexicalQa qa(Task::ExtractiveQA);
        TrainBackends backends;
        backends.qa = &qa;
        config.pre_fit = true;
        const auto log = train(ds, backends, LossWeights{}, config);
        for (const auto& s : log.steps) CHECK(s.loss == 0.0);
    }
}

TEST_CASE("training is deterministic per seed") {
    const auto ds = toy::extractive(12);
    const auto pool = pool_from_dataset(ds);
    const auto index = build_index(pool);

    auto run = [&](uint64_t seed) {
        LexicalQa qa(Task::ExtractiveQA);
        LexiconInfiller infiller(3);
        JaccardDetector detector;
        TrainBackends backends;
        backends.qa = &qa;
        backends.infiller = &infiller;
        backends.detector = &detector;
        backends.index = &index;
        backends.pool = &pool;
        auto config = base_config(Task::ExtractiveQA);
        config.epochs = 2;
        config.use_shuffle = true;
        config.use_retrieval = true;
        config.seed = seed;
        return train(ds, backends, LossWeights{1.0, 1.0, 1.0}, config);
    };

    const auto a = run(42);
    const auto b = run(42);
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i)
        CHECK(step_record_to_json_line(a.steps[i]) == step_record_to_json_line(b.steps[i]));

    const auto c = run(43);
    bool any_diff = false;
    for (size_t i = 0; i < a.steps.size(); ++i)
        any_diff |= step_record_to_json_line(a.steps[i]) != step_record_to_json_line(c.steps[i]);
    CHECK(any_diff);
}

TEST_CASE("degenerate runs produce empty logs") {
    const auto ds = toy::extractive(4);
    LexicalQa qa(Task::ExtractiveQA);
    TrainBackends backends;
    backends.qa = &qa;
    auto config = base_config(Task::ExtractiveQA);

    config.epochs = 0;
    CHECK(train(ds, backends, LossWeights{}, config).steps.empty());

    config.epochs = 1;
    Dataset empty;
    empty.task = Task::ExtractiveQA;
    CHECK(train(empty, backends, LossWeights{}, config).steps.empty());
}

TEST_CASE("train validates its inputs") {
    const auto ds = toy::extractive(4);
    LexicalQa qa(Task::ExtractiveQA);
    LexiconInfiller infiller(1);
    JaccardDetector detector;
    TrainBackends backends;
    backends.qa = &qa;
    auto config = base_config(Task::ExtractiveQA);

    TrainBackends no_qa;
    CHECK_THROWS_AS(train(ds, no_qa, LossWeights{}, config), std::invalid_argument);

    auto bad = config;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, bad), std::invalid_argument);
    bad = config;
    bad.epochs = -1;
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, bad), std::invalid_argument);
    bad = config;
    bad.warm_start_steps = -1;
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, bad), std::invalid_argument);

    CHECK_THROWS_AS(train(ds, backends, LossWeights{-0.1, 0, 0}, config),
                    std::invalid_argument);

    auto mismatched = config;
    mismatched.task = Task::BooleanQA;
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, mismatched), std::invalid_argument);

    auto retrieval = config;
    retrieval.use_retrieval = true;  // no index/pool supplied
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, retrieval), std::invalid_argument);

    // Counterfactuals need both generator backends.
    CHECK_THROWS_AS(train(ds, backends, LossWeights{0, 0, 1.0}, config),
                    std::invalid_argument);
    backends.infiller = &infiller;
    CHECK_THROWS_AS(train(ds, backends, LossWeights{0, 0, 1.0}, config),
                    std::invalid_argument);
    backends.detector = &detector;
    CHECK_NOTHROW(train(ds, backends, LossWeights{0, 0, 1.0}, config));

    // Retrieval forced off by task makes the missing index acceptable.
    const auto booleans = toy::boolean_pairs(4);
    LexicalQa bool_qa(Task::BooleanQA);
    TrainBackends bool_backends;
    bool_backends.qa = &bool_qa;
    auto bool_config = base_config(Task::BooleanQA);
    bool_config.use_retrieval = true;
    CHECK_NOTHROW(train(booleans, bool_backends, LossWeights{}, bool_config));
}

TEST_CASE("backend failures surface as train errors with the partial log") {
    const auto ds = toy::extractive(8);

    struct FailingQa : QaBackend {
        LexicalQa inner{Task::ExtractiveQA};
        int calls = 0;
        int fail_on = 3;
        Prediction predict(const std::string& q, const std::string& c) override {
            return inner.predict(q, c);
        }
        TrainResult train_batch(std::span<const WeightedExample> examples) override {
            if (++calls == fail_on) throw BackendError("gpu fell off the bus");
            return inner.train_batch(examples);
        }
        std::string clone_state() const override { return inner.clone_state(); }
        void restore_state(const std::string& s) override { inner.restore_state(s); }
        bool concurrent_safe() const override { return true; }
    } qa;

    TrainBackends backends;
    backends.qa = &qa;
    auto config = base_config(Task::ExtractiveQA);
    config.epochs = 2;  // 4 steps of 2 batches... 8/4 = 2 steps per epoch

    try {
        train(ds, backends, LossWeights{}, config);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(e.step == 2);  // third train_batch call
        CHECK(e.partial.steps.size() == 2);
        CHECK(std::string(e.what()).find("gpu fell off the bus") != std::string::npos);
    }
}

TEST_CASE("mismatched per-example losses are rejected") {
    const auto ds = toy::extractive(4);

    struct ShortQa : QaBackend {
        Prediction predict(const std::string&, const std::string&) override {
            return {Label::no_ans(), 1.0};
        }
        TrainResult train_batch(std::span<const WeightedExample>) override {
            return {0.0, {0.0}};  // always one entry, whatever the batch
        }
        std::string clone_state() const override { return "{}"; }
        void restore_state(const std::string&) override {}
        bool concurrent_safe() const override { return true; }
    } qa;

    TrainBackends backends;
    backends.qa = &qa;
    const auto config = base_config(Task::ExtractiveQA);
    CHECK_THROWS_AS(train(ds, backends, LossWeights{}, config), TrainError);
}

TEST_CASE("step records serialize and save as line-delimited JSON") {
    StepRecord r;
    r.step = 17;
    r.epoch = 2;
    r.batch_index = 3;
    r.batch_size = 32;
    r.loss = 0.25;
    r.loss_scene = 0.125;
    r.loss_overall = 0.375;
    r.backend_total = 0.375;
    r.effective_lambda_scene = 1.0;
    r.scene_accepted = 20;
    r.scene_discard_ambiguity = 7;
    r.scene_discard_bad_prediction = 5;

    const auto line = step_record_to_json_line(r);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("step") == 17);
    CHECK(j.at("epoch") == 2);
    CHECK(j.at("batch_size") == 32);
    CHECK(j.at("loss") == 0.25);
    CHECK(j.at("loss_scene") == 0.125);
    CHECK(j.at("effective_lambda_scene") == 1.0);
    CHECK(j.at("scene_accepted") == 20);
    CHECK(j.at("scene_discard_ambiguity") == 7);
    CHECK(j.at("scene_discard_bad_prediction") == 5);
    CHECK(j.at("shuffle_count") == 0);

    RunLog log;
    log.steps = {r, r};
    const auto dir = toy::scratch_dir("trainer-log");
    save_run_log(log, dir / "run_log.jsonl");
    const auto content = read_file(dir / "run_log.jsonl");
    CHECK(std::count(content.begin(), content.end(), '\n') == 2);
    CHECK(content.find("\"step\":17") != std::string::npos);
}
