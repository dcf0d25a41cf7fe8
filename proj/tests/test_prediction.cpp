#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <vtg/prediction.hpp>

using testutil::TempDir;

TEST_CASE("refine blends scores convexly with a hand oracle", "[prediction]") {
    Eigen::MatrixXd learned(1, 1), prior(1, 1);
    learned << 0.8;
    prior << 0.4;
    // 0.4*0.8 + 0.6*0.4 = 0.56 exactly
    CHECK(vtg::refine(learned, prior, 0.4)(0, 0) == Catch::Approx(0.56).margin(1e-15));
    CHECK(vtg::refine(learned, prior, 0.0)(0, 0) == 0.4);
    CHECK(vtg::refine(learned, prior, 1.0)(0, 0) == 0.8);

    CHECK_THROWS_AS(vtg::refine(learned, prior, -0.1), vtg::argument_error);
    CHECK_THROWS_AS(vtg::refine(learned, prior, 1.1), vtg::argument_error);
    Eigen::MatrixXd wrong(2, 1);
    wrong.setZero();
    CHECK_THROWS_AS(vtg::refine(learned, wrong, 0.5), vtg::argument_error);
}

TEST_CASE("ground picks the strict argmax, ties to the lowest index", "[prediction]") {
    Eigen::MatrixXd scores(2, 4);
    scores << 0.1, 0.9, 0.9, 0.3, //
        -1.0, -1.0, -1.0, -1.0;
    const auto chosen = vtg::ground(scores);
    REQUIRE(chosen.size() == 2);
    CHECK(chosen[0] == 1); // first of the tied maxima
    CHECK(chosen[1] == 0); // all equal -> lowest index

    Eigen::MatrixXd none(1, 0);
    CHECK_THROWS_AS(vtg::ground_row(none, 0), vtg::argument_error);
}

TEST_CASE("learned scores are phrase/proposal cosines of the two branches", "[prediction]") {
    vtg::ModelDims dims;
    dims.feature_dim = 3;
    dims.embedding_dim = 4;
    dims.hidden_dim = 4;
    auto rng = vtg::make_rng(31);
    auto params = vtg::init_params<double>(dims, {"cat", "dog", "the"}, nullptr, rng);

    const auto corpus = testutil::toy_corpus(3);
    const auto& ex = corpus.examples[0];
    const auto scores = vtg::learned_scores(params, ex, ex.sentences[0]);
    REQUIRE(scores.rows() == 2);
    REQUIRE(scores.cols() == 3);
    CHECK(scores.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);

    // Entry (0,0) equals the cosine of the explicit branch outputs.
    const auto visual = vtg::visual_forward(params, ex);
    const auto text = vtg::textual_forward(params, vtg::phrase_rows(params.embeddings, ex.sentences[0].phrases[0].tokens));
    CHECK(scores(0, 0) == Catch::Approx(vtg::cosine(text, visual.col(0).eval())).margin(1e-12));
}
