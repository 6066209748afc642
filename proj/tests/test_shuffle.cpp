#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <vector>

#include "negsynth/shuffle.hpp"
#include "negsynth/util.hpp"
#include "toy.hpp"

using namespace negsynth;

namespace {

Batch batch_of(const Dataset& ds, size_t count, size_t offset = 0) {
    Batch b;
    for (size_t i = 0; i < count; ++i) b.examples.push_back(ds.examples[offset + i]);
    return b;
}

// Lehmer-code rank of a permutation, for uniformity counting.
size_t permutation_rank(const std::vector<size_t>& mapping) {
    size_t rank = 0;
    for (size_t i = 0; i < mapping.size(); ++i) {
        size_t smaller = 0;
        for (size_t j = i + 1; j < mapping.size(); ++j)
            if (mapping[j] < mapping[i]) ++smaller;
        rank = rank * (mapping.size() - i) + smaller;
    }
    return rank;
}

}  // namespace

TEST_CASE("sample_permutation produces bijections deterministically") {
    std::mt19937_64 a(11), b(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = sample_permutation(8, a);
        const auto q = sample_permutation(8, b);
        CHECK(p.mapping == q.mapping);
        auto sorted = p.mapping;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    }
    std::mt19937_64 c(1);
    CHECK(sample_permutation(1, c).mapping == std::vector<size_t>{0});
    CHECK_THROWS_AS(sample_permutation(0, c), std::invalid_argument);
}

TEST_CASE("permutations of 5 elements are uniform (chi-square)") {
    // 120 cells, 12000 draws, expected 100 per cell. The chi-square
    // statistic has mean 119 and SD ~15.4; accept within 3 SD for this
    // pinned seed.
    std::mt19937_64 rng(404);
    std::vector<size_t> counts(120, 0);
    const int trials = 12000;
    for (int t = 0; t < trials; ++t) {
        const auto p = sample_permutation(5, rng);
        ++counts[permutation_rank(p.mapping)];
    }
    const double expected = trials / 120.0;
    double chi2 = 0.0;
    for (const auto c : counts) {
        const double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 > 119.0 - 3 * 15.4);
    CHECK(chi2 < 119.0 + 3 * 15.4);
}

TEST_CASE("expected negatives per batch of 32 is 31") {
    // A uniform permutation has one fixed point in expectation, so a
    // batch of m yields m - 1 negatives on average.
    const auto ds = toy::extractive(32);
    const auto batch = batch_of(ds, 32);
    std::mt19937_64 rng(7);
    double total = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
        total += static_cast<double>(shuffle_negatives(batch, rng).size());
    const double mean = total / trials;
    CHECK(mean > 30.9);
    CHECK(mean < 31.1);
}

TEST_CASE("emitted pairs rewire queries onto foreign contexts") {
    const auto ds = toy::extractive(16);
    const auto batch = batch_of(ds, 16);

    std::map<std::string, size_t> query_owner, context_owner;
    for (size_t i = 0; i < batch.size(); ++i) {
        query_owner[batch.examples[i].query] = i;
        context_owner[batch.examples[i].context] = i;
    }

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto negs = shuffle_negatives(batch, rng);
        std::vector<bool> context_used(batch.size(), false);
        std::vector<bool> query_used(batch.size(), false);
        for (const auto& neg : negs) {
            REQUIRE(query_owner.count(neg.query));
            REQUIRE(context_owner.count(neg.context));
            const size_t qi = query_owner[neg.query];
            const size_t ci = context_owner[neg.context];
            CHECK(qi != ci);  // fixed points emit nothing
            CHECK_FALSE(query_used[qi]);
            CHECK_FALSE(context_used[ci]);
            query_used[qi] = true;
            context_used[ci] = true;

            CHECK(neg.task == Task::ExtractiveQA);
            CHECK(neg.label == Label::no_ans());
            CHECK(neg.provenance.origin == Provenance::Origin::Shuffle);
            CHECK(neg.provenance.parent_id == batch.examples[qi].id);
            CHECK(neg.id == synthetic_id(batch.examples[qi].id,
                                         Provenance::Origin::Shuffle, ci));
            CHECK_NOTHROW(validate_example(neg));
        }
        // Unused positions must be exactly the fixed points: same count
        // on both sides of the pairing.
        CHECK(std::count(query_used.begin(), query_used.end(), true) ==
              static_cast<long>(negs.size()));
        CHECK(std::count(context_used.begin(), context_used.end(), true) ==
              static_cast<long>(negs.size()));
    }
}

TEST_CASE("single-element batches and empty batches emit nothing") {
    const auto ds = toy::extractive(2);
    std::mt19937_64 rng(1);
    CHECK(shuffle_negatives(batch_of(ds, 1), rng).empty());
    Batch empty;
    CHECK(shuffle_negatives(empty, rng).empty());
}

TEST_CASE("two-element batches emit a full swap or nothing") {
    const auto ds = toy::extractive(2);
    const auto batch = batch_of(ds, 2);
    std::mt19937_64 rng(5);
    bool saw_swap = false, saw_identity = false;
    for (int t = 0; t < 100; ++t) {
        const auto negs = shuffle_negatives(batch, rng);
        REQUIRE((negs.size() == 0 || negs.size() == 2));
        if (negs.empty()) saw_identity = true;
        else {
            saw_swap = true;
            CHECK(negs[0].query == batch.examples[1].query);
            CHECK(negs[0].context == batch.examples[0].context);
            CHECK(negs[1].query == batch.examples[0].query);
            CHECK(negs[1].context == batch.examples[1].context);
        }
    }
    CHECK(saw_swap);
    CHECK(saw_identity);
}

TEST_CASE("negative labels follow the batch task") {
    std::mt19937_64 rng(2);
    const auto booleans = toy::boolean_pairs(6);
    for (const auto& neg : shuffle_negatives(batch_of(booleans, 6), rng))
        CHECK(neg.label == Label::idk());
    const auto rte = toy::rte_pairs(6);
    for (const auto& neg : shuffle_negatives(batch_of(rte, 6), rng))
        CHECK(neg.label == Label::not_entailment());
}

TEST_CASE("mixed-task batches are rejected") {
    Batch mixed;
    mixed.examples.push_back(toy::extractive(1).examples[0]);
    mixed.examples.push_back(toy::boolean_pairs(1).examples[0]);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(shuffle_negatives(mixed, rng), std::invalid_argument);
}

TEST_CASE("same seed, same negatives; different seed, eventually different") {
    const auto ds = toy::extractive(12);
    const auto batch = batch_of(ds, 12);
    std::mt19937_64 a(9), b(9);
    const auto x = shuffle_negatives(batch, a);
    const auto y = shuffle_negatives(batch, b);
    REQUIRE(x.size() == y.size());
    for (size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);

    std::mt19937_64 c(10);
    bool differs = false;
    for (int t = 0; t < 10 && !differs; ++t) {
        const auto z = shuffle_negatives(batch, c);
        differs = z.size() != x.size() ||
                  !std::equal(z.begin(), z.end(), x.begin(),
                              [](const Example& l, const Example& r) { return l == r; });
    }
    CHECK(differs);
}
