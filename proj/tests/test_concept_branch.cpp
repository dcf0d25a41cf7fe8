#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <vtg/concept_branch.hpp>

using testutil::TempDir;
using testutil::box;
using vtg::SpatialVector;

namespace {

std::vector<vtg::Proposal> labeled(const std::vector<std::pair<vtg::Box, std::string>>& defs) {
    std::vector<vtg::Proposal> out;
    for (const auto& [b, label] : defs) out.push_back(testutil::proposal(b, label, 2));
    return out;
}

} // namespace

TEST_CASE("relations mark extremes and near-median centers within a label group", "[concept-branch]") {
    // Three dogs on the 100x100 canvas at centers (5,5), (50,50), (90,90).
    const auto proposals = labeled({{box(0, 0, 10, 10), "dog"},
                                    {box(40, 40, 60, 60), "dog"},
                                    {box(80, 80, 100, 100), "dog"}});
    const auto rel = vtg::proposal_relations(proposals, 100, 100);
    REQUIRE(rel.size() == 3);

    // Hand oracle: medians are (50,50); tolerance 10% of extent = 10.
    CHECK(rel[0].slots == std::array<std::uint8_t, 6>{1, 0, 1, 0, 0, 0}); // left+top extreme
    CHECK(rel[1].slots == std::array<std::uint8_t, 6>{0, 0, 0, 0, 1, 1}); // both centers
    CHECK(rel[2].slots == std::array<std::uint8_t, 6>{0, 1, 0, 1, 0, 0}); // right+bottom extreme
}

TEST_CASE("tied extremes are marked jointly", "[concept-branch]") {
    // Two cats sharing center x = 10, one cat to the right.
    const auto proposals = labeled({{box(5, 0, 15, 10), "cat"},
                                    {box(5, 40, 15, 60), "cat"},
                                    {box(80, 20, 90, 40), "cat"}});
    const auto rel = vtg::proposal_relations(proposals, 100, 100);
    CHECK(rel[0].slots[SpatialVector::kLeft] == 1);
    CHECK(rel[1].slots[SpatialVector::kLeft] == 1);
    CHECK(rel[2].slots[SpatialVector::kLeft] == 0);
    CHECK(rel[2].slots[SpatialVector::kRight] == 1);
}

TEST_CASE("even-sized groups use the mean of the middle two as median", "[concept-branch]") {
    // Centers x: 10, 20, 80, 90 -> median (20+80)/2 = 50; none within 10 of it.
    const auto proposals = labeled({{box(5, 45, 15, 55), "dog"},
                                    {box(15, 45, 25, 55), "dog"},
                                    {box(75, 45, 85, 55), "dog"},
                                    {box(85, 45, 95, 55), "dog"}});
    const auto rel = vtg::proposal_relations(proposals, 100, 100);
    for (const auto& r : rel) CHECK(r.slots[SpatialVector::kHCenter] == 0);
    // All four share center y = 50 == median -> everyone is vertically central
    // and jointly top/bottom extreme.
    for (const auto& r : rel) {
        CHECK(r.slots[SpatialVector::kVCenter] == 1);
        CHECK(r.slots[SpatialVector::kTop] == 1);
        CHECK(r.slots[SpatialVector::kBottom] == 1);
    }
}

TEST_CASE("singleton and cross-label groups carry no relations", "[concept-branch]") {
    const auto proposals = labeled({{box(0, 0, 10, 10), "dog"}, {box(80, 80, 100, 100), "cat"}});
    const auto rel = vtg::proposal_relations(proposals, 100, 100);
    CHECK_FALSE(rel[0].any());
    CHECK_FALSE(rel[1].any());
}

TEST_CASE("concept_score masks contradicted locatives to exactly -1", "[concept-branch]") {
    SpatialVector phrase_left;
    phrase_left.slots[SpatialVector::kLeft] = 1;
    SpatialVector relation_right;
    relation_right.slots[SpatialVector::kRight] = 1;
    SpatialVector relation_left;
    relation_left.slots[SpatialVector::kLeft] = 1;
    SpatialVector none;

    const double sim = 0.73;
    // Contradiction (dot == 0) with mask on: exactly -1, bit for bit.
    CHECK(vtg::concept_score(sim, phrase_left, relation_right, true) == -1.0);
    CHECK(vtg::concept_score(sim, phrase_left, none, true) == -1.0);
    // Agreement, no locative, or mask off: the raw cosine passes through.
    CHECK(vtg::concept_score(sim, phrase_left, relation_left, true) == sim);
    CHECK(vtg::concept_score(sim, none, relation_right, true) == sim);
    CHECK(vtg::concept_score(sim, phrase_left, relation_right, false) == sim);
}

TEST_CASE("concept_scores recomputes as head-label cosine with masking", "[concept-branch]") {
    TempDir dir("concept-scores");
    const auto table = testutil::toy_table(dir.path());
    const auto lexicon = vtg::Lexicon::defaults();
    const auto corpus = testutil::toy_corpus(4);
    const auto& ex = corpus.examples[0]; // dog(left), cat(right), dog(bottom)

    const auto scores = vtg::concept_scores(ex, ex.sentences[0], table, lexicon, true);
    REQUIRE(scores.rows() == 2);
    REQUIRE(scores.cols() == 3);

    // Independent recomputation, long double accumulation.
    const auto rel = vtg::proposal_relations(ex.proposals, ex.width, ex.height);
    const auto dog = table.lookup("dog");
    const auto cat = table.lookup("cat");
    auto brute_cos = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        long double num = 0, na = 0, nb = 0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            num += static_cast<long double>(a(i)) * b(i);
            na += static_cast<long double>(a(i)) * a(i);
            nb += static_cast<long double>(b(i)) * b(i);
        }
        return static_cast<double>(num / (std::sqrt(na) * std::sqrt(nb)));
    };

    // Phrase 0 "the dog on the left": proposal 0 is the left dog -> cosine(dog,dog)=1;
    // proposal 2 is the bottom dog -> contradiction -> exactly -1.
    CHECK(scores(0, 0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(scores(0, 2) == -1.0);
    // Proposal 1 has a different label (cat, singleton group): no relation, so the
    // locative phrase masks it too.
    CHECK(scores(0, 1) == -1.0);

    // Phrase 1 "the cat" has no locative: plain cosines everywhere.
    CHECK(std::abs(scores(1, 1) - brute_cos(cat, cat)) < 1e-9);
    CHECK(std::abs(scores(1, 0) - brute_cos(cat, dog)) < 1e-9);
    REQUIRE(rel[0].slots[SpatialVector::kLeft] == 1);
}
