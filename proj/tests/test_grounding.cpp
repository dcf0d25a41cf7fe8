#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <vtg/grounding.hpp>
#include <vtg/overlay.hpp>
#include <vtg/parallel.hpp>

using testutil::TempDir;

TEST_CASE("sentence signature averages phrase means with a hand oracle", "[grounding]") {
    TempDir dir("sig-oracle");
    const auto table = testutil::make_table(
        {{"aa", {2, 0}}, {"bb", {0, 4}}, {"cc", {6, 6}}}, dir.path());

    vtg::PhraseRecord p1;
    p1.tokens = {"aa", "bb"};
    vtg::PhraseRecord p2;
    p2.tokens = {"cc"};

    // ((aa+bb)/2 + cc)/2 = ((1,2) + (6,6))/2 = (3.5, 4)
    const auto sig = vtg::sentence_signature({p1, p2}, table);
    CHECK(sig(0) == Catch::Approx(3.5).margin(1e-12));
    CHECK(sig(1) == Catch::Approx(4.0).margin(1e-12));

    vtg::PhraseRecord empty;
    CHECK_THROWS_AS(vtg::sentence_signature({empty}, table), vtg::argument_error);
}

TEST_CASE("prepared corpus caches relations, signatures, and score matrices", "[grounding]") {
    TempDir dir("prep");
    const auto table = testutil::toy_table(dir.path());
    const auto lexicon = vtg::Lexicon::defaults();
    const auto corpus = testutil::toy_corpus(4);

    const auto pc = vtg::prepare(corpus, table, lexicon);
    REQUIRE(pc.images.size() == 2);
    CHECK(pc.corpus == &corpus);

    // Cached matrix equals the direct computation for the own-image pair.
    const auto direct = vtg::concept_scores(corpus.examples[0], corpus.examples[0].sentences[0], table, lexicon, true);
    const auto cached = pc.concept_matrix(0, 0, true);
    CHECK((direct - cached).norm() == 0.0);

    // Cross-pair matrices score one image's sentence against another image.
    const auto cross = pc.concept_matrix(pc.images[0].sentences[0], pc.images[1], true);
    CHECK(cross.rows() == 2);                                  // phrases of image 0's sentence
    CHECK(cross.cols() == 2);                                  // proposals of image 1
    const auto direct_cross =
        vtg::concept_scores(corpus.examples[1], corpus.examples[0].sentences[0], table, lexicon, true);
    CHECK((cross - direct_cross).norm() == 0.0);

    // Thread count never changes results.
    const auto pc4 = vtg::prepare(corpus, table, lexicon, 4);
    CHECK((pc4.concept_matrix(0, 0, true) - cached).norm() == 0.0);
    CHECK((pc4.images[1].sentences[0].signature - pc.images[1].sentences[0].signature).norm() == 0.0);
}

TEST_CASE("parallel_for covers every index once and rethrows failures", "[grounding]") {
    std::vector<int> hits(1000, 0);
    vtg::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 1000);

    vtg::parallel_for(0, 4, [&](std::size_t) { FAIL("must not run"); });

    CHECK_THROWS_AS(vtg::parallel_for(8, 3,
                                      [&](std::size_t i) {
                                          if (i == 5) throw vtg::state_error("boom");
                                      }),
                    vtg::state_error);
    CHECK(vtg::default_thread_count() >= 1);
}

TEST_CASE("svg overlay draws proposals and chosen boxes", "[grounding]") {
    const auto corpus = testutil::toy_corpus(2);
    const auto& ex = corpus.examples[0];
    const auto svg = vtg::svg_overlay(ex, {0, 1}, {"the dog <left>", "the cat & co"});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("&lt;left&gt;") != std::string::npos); // XML escaping
    CHECK(svg.find("&amp; co") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    CHECK_THROWS_AS(vtg::svg_overlay(ex, {0}, {"one", "two"}), vtg::argument_error);
    CHECK_THROWS_AS(vtg::svg_overlay(ex, {9, 1}, {"one", "two"}), vtg::argument_error);
}
