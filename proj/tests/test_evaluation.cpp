#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <vtg/evaluation.hpp>
#include <vtg/training.hpp>

using testutil::TempDir;
using testutil::box;

TEST_CASE("iou hand values and properties", "[evaluation]") {
    CHECK(vtg::iou(box(0, 0, 2, 2), box(1, 0, 3, 2)) == Catch::Approx(2.0 / 6.0).margin(1e-9));
    CHECK(vtg::iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0);
    CHECK(vtg::iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0);
    CHECK(vtg::iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0); // edge contact only

    // Containment oracle: inner/outer = area ratio.
    CHECK(vtg::iou(box(1, 1, 3, 3), box(0, 0, 4, 4)) == Catch::Approx(4.0 / 16.0).margin(1e-12));

    auto rng = vtg::make_rng(5);
    for (int i = 0; i < 500; ++i) {
        const auto a = box(vtg::uniform(rng, 0, 50), vtg::uniform(rng, 0, 50), vtg::uniform(rng, 51, 100),
                           vtg::uniform(rng, 51, 100));
        const auto b = box(vtg::uniform(rng, 0, 50), vtg::uniform(rng, 0, 50), vtg::uniform(rng, 51, 100),
                           vtg::uniform(rng, 51, 100));
        const double ab = vtg::iou(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(ab == vtg::iou(b, a));
        CHECK(vtg::iou(a, a) == 1.0);
    }

    CHECK_THROWS_AS(vtg::iou(box(2, 2, 1, 1), box(0, 0, 1, 1)), vtg::argument_error);
}

TEST_CASE("pointing hits include the boundary", "[evaluation]") {
    // Center of (0,0,10,10) is (5,5).
    CHECK(vtg::pointing_hit(box(0, 0, 10, 10), box(0, 0, 10, 10)));
    CHECK(vtg::pointing_hit(box(0, 0, 10, 10), box(5, 5, 20, 20)));  // center on gt corner
    CHECK(vtg::pointing_hit(box(0, 0, 10, 10), box(0, 5, 10, 30)));  // center on gt edge
    CHECK_FALSE(vtg::pointing_hit(box(0, 0, 10, 10), box(5.01, 5.01, 20, 20)));
}

TEST_CASE("merge_boxes returns the hull", "[evaluation]") {
    const auto hull = vtg::merge_boxes({box(0, 0, 10, 10), box(90, 50, 100, 80)});
    CHECK(hull.x1 == 0.0);
    CHECK(hull.y1 == 0.0);
    CHECK(hull.x2 == 100.0);
    CHECK(hull.y2 == 80.0);
}

TEST_CASE("evaluate scores the concept-only branch against known layouts", "[evaluation]") {
    TempDir dir("eval-concept");
    const auto table = testutil::toy_table(dir.path());
    const auto lexicon = vtg::Lexicon::defaults();
    const auto corpus = testutil::toy_corpus(4);
    const auto pc = vtg::prepare(corpus, table, lexicon);

    vtg::EvalOptions opt;
    const auto report = vtg::evaluate_concept_only(pc, opt);
    // Every toy phrase names its labeled proposal with ground truth equal to
    // the proposal box: perfect scores, nothing unscored.
    CHECK(report.scored == 4);
    CHECK(report.unscored == 0);
    CHECK(report.accuracy == 1.0);
    CHECK(report.pointing_accuracy == 1.0);
    CHECK(report.checkpoint_id == "concept-only");
    REQUIRE(report.phrases.size() == 4);
    CHECK(report.phrases[0].chosen == 0);
    CHECK(report.phrases[1].chosen == 1);

    // Phrases without ground truth are tallied as unscored.
    auto stripped = corpus;
    stripped.examples[0].sentences[0].phrases[0].gt_boxes.clear();
    const auto pc2 = vtg::prepare(stripped, table, lexicon);
    const auto report2 = vtg::evaluate_concept_only(pc2, opt);
    CHECK(report2.scored == 3);
    CHECK(report2.unscored == 1);

    // Accuracy counts misses: point phrase 1's ground truth at the wrong box.
    auto wrong = corpus;
    wrong.examples[0].sentences[0].phrases[0].gt_boxes = {wrong.examples[0].proposals[1].box};
    const auto pc3 = vtg::prepare(wrong, table, lexicon);
    const auto report3 = vtg::evaluate_concept_only(pc3, opt);
    CHECK(report3.accuracy == Catch::Approx(0.75));
}

TEST_CASE("union and any-box ground-truth modes differ on split references", "[evaluation]") {
    TempDir dir("eval-gtmode");
    const auto table = testutil::toy_table(dir.path());
    const auto lexicon = vtg::Lexicon::defaults();
    auto corpus = testutil::toy_corpus(4);
    // Phrase 0's truth: its own box plus a far-away second reference. The
    // union hull dilutes IoU below 0.5; any-box keeps the direct match.
    auto& phrase = corpus.examples[0].sentences[0].phrases[0];
    phrase.gt_boxes = {corpus.examples[0].proposals[0].box, box(90, 90, 99, 99)};
    const auto pc = vtg::prepare(corpus, table, lexicon);

    vtg::EvalOptions union_opt;
    union_opt.gt_mode = vtg::GtMode::kUnion;
    vtg::EvalOptions any_opt;
    any_opt.gt_mode = vtg::GtMode::kAnyBox;

    const auto union_report = vtg::evaluate_concept_only(pc, union_opt);
    const auto any_report = vtg::evaluate_concept_only(pc, any_opt);
    CHECK(any_report.accuracy > union_report.accuracy);
}

TEST_CASE("omega sweep reuses both branches consistently", "[evaluation][slow]") {
    TempDir dir("eval-sweep");
    const auto table = testutil::toy_table(dir.path(), 6);
    const auto lexicon = vtg::Lexicon::defaults();
    const auto corpus = testutil::toy_corpus(3);
    const auto pc = vtg::prepare(corpus, table, lexicon);

    vtg::ModelDims dims;
    dims.feature_dim = 3;
    dims.embedding_dim = 6;
    dims.hidden_dim = 6;
    auto rng = vtg::make_rng(8);
    const auto params = vtg::init_params<double>(dims, vtg::collect_vocabulary(corpus), &table, rng);

    vtg::EvalOptions opt;
    const auto rows = vtg::sweep_omega(pc, params, {0.0, 0.5, 1.0}, opt);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].omega == 0.0);
    CHECK(rows[2].omega == 1.0);

    // Endpoints equal dedicated evaluations.
    const auto concept_only = vtg::evaluate_concept_only(pc, opt);
    CHECK(rows[0].accuracy == concept_only.accuracy);
    CHECK(rows[0].pointing_accuracy == concept_only.pointing_accuracy);

    auto opt1 = opt;
    opt1.omega = 1.0;
    const auto trained_only = vtg::evaluate(pc, &params, opt1);
    CHECK(rows[2].accuracy == trained_only.accuracy);

    CHECK_THROWS_AS(vtg::sweep_omega(pc, params, {}, opt), vtg::argument_error);
    CHECK_THROWS_AS(vtg::sweep_omega(pc, params, {0.5, 1.2}, opt), vtg::argument_error);
}

TEST_CASE("ablation emits the five configuration rows in order", "[evaluation][slow]") {
    TempDir dir("eval-ablate");
    const auto table = testutil::toy_table(dir.path(), 6);
    const auto lexicon = vtg::Lexicon::defaults();
    const auto corpus = testutil::toy_corpus(3);
    const auto pc = vtg::prepare(corpus, table, lexicon);

    vtg::ModelDims dims;
    dims.feature_dim = 3;
    dims.embedding_dim = 6;
    dims.hidden_dim = 6;
    auto rng = vtg::make_rng(8);
    const auto params = vtg::init_params<double>(dims, vtg::collect_vocabulary(corpus), &table, rng);

    vtg::EvalOptions opt;
    opt.omega = 0.4;
    const auto rows = vtg::ablation(pc, params, opt);
    REQUIRE(rows.size() == 5);

    // Row pattern: trained-only, concept-only, concept+position, blended
    // without position, everything on.
    CHECK_FALSE(rows[0].concept_branch);
    CHECK(rows[0].trained);
    CHECK_FALSE(rows[0].relative_position);

    CHECK(rows[1].concept_branch);
    CHECK_FALSE(rows[1].trained);
    CHECK_FALSE(rows[1].relative_position);

    CHECK(rows[2].concept_branch);
    CHECK_FALSE(rows[2].trained);
    CHECK(rows[2].relative_position);

    CHECK(rows[3].concept_branch);
    CHECK(rows[3].trained);
    CHECK_FALSE(rows[3].relative_position);

    CHECK(rows[4].concept_branch);
    CHECK(rows[4].trained);
    CHECK(rows[4].relative_position);

    // Rows agree with direct evaluations of the same settings.
    auto check_row = [&](const vtg::AblationRow& row, double omega, bool mask, bool with_params) {
        vtg::EvalOptions o;
        o.omega = omega;
        o.use_spatial_mask = mask;
        const auto r = with_params ? vtg::evaluate(pc, &params, o) : vtg::evaluate_concept_only(pc, o);
        CHECK(row.accuracy == r.accuracy);
        CHECK(row.pointing_accuracy == r.pointing_accuracy);
    };
    check_row(rows[0], 1.0, false, true);
    check_row(rows[1], 0.0, false, false);
    check_row(rows[2], 0.0, true, false);
    check_row(rows[3], 0.4, false, true);
    check_row(rows[4], 0.4, true, true);
}

TEST_CASE("evaluation respects the pointing/accuracy dominance", "[evaluation]") {
    // A prediction overlapping ground truth with IoU >= 0.5 always contains
    // its center in the ground-truth box, so pointing can never trail IoU
    // accuracy. Verified over random proposals on a synthetic layout.
    TempDir dir("eval-dominance");
    const auto table = testutil::toy_table(dir.path());
    const auto lexicon = vtg::Lexicon::defaults();
    auto rng = vtg::make_rng(13);

    vtg::Corpus corpus;
    corpus.feature_dim = 2;
    for (int i = 0; i < 20; ++i) {
        vtg::ImageExample ex;
        ex.image_id = "rand-" + std::to_string(i);
        ex.width = 100;
        ex.height = 100;
        for (int k = 0; k < 3; ++k) {
            const double x1 = vtg::uniform(rng, 0, 60), y1 = vtg::uniform(rng, 0, 60);
            ex.proposals.push_back(testutil::proposal(
                box(x1, y1, x1 + vtg::uniform(rng, 5, 40), y1 + vtg::uniform(rng, 5, 40)), k % 2 ? "cat" : "dog", 2,
                &rng));
        }
        ex.sentences = {testutil::sentence({"the dog", "the cat"})};
        // Ground truth is a random proposal, so predictions hit or miss freely.
        ex.sentences[0].phrases[0].gt_boxes = {ex.proposals[vtg::uniform_int(rng, 0, 2)].box};
        ex.sentences[0].phrases[1].gt_boxes = {ex.proposals[vtg::uniform_int(rng, 0, 2)].box};
        corpus.examples.push_back(std::move(ex));
    }
    const auto pc = vtg::prepare(corpus, table, lexicon);
    const auto report = vtg::evaluate_concept_only(pc, vtg::EvalOptions{});
    CHECK(report.pointing_accuracy >= report.accuracy);
}
