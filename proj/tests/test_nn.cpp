#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <vtg/nn.hpp>

using testutil::TempDir;
using testutil::box;

namespace {

vtg::ModelParams<double> small_params(std::size_t v, std::size_t g, std::uint64_t seed,
                                      const std::vector<std::string>& vocab) {
    vtg::ModelDims dims;
    dims.feature_dim = v;
    dims.embedding_dim = g;
    dims.hidden_dim = g;
    auto rng = vtg::make_rng(seed);
    return vtg::init_params<double>(dims, vocab, nullptr, rng);
}

} // namespace

TEST_CASE("spatial features normalize box geometry", "[nn]") {
    const auto f = vtg::spatial_features(box(10, 20, 30, 60), 100, 200);
    CHECK(f(0) == Catch::Approx(0.10));
    CHECK(f(1) == Catch::Approx(0.10));
    CHECK(f(2) == Catch::Approx(0.30));
    CHECK(f(3) == Catch::Approx(0.30));
    CHECK(f(4) == Catch::Approx(800.0 / 20000.0)); // area fraction
}

TEST_CASE("model dims enforce the embedding/hidden tie", "[nn]") {
    vtg::ModelDims dims;
    dims.feature_dim = 4;
    dims.embedding_dim = 8;
    dims.hidden_dim = 6;
    CHECK_THROWS_AS(dims.validate(), vtg::config_error);
    dims.hidden_dim = 8;
    CHECK_NOTHROW(dims.validate());
    CHECK(dims.visual_input_dim() == 9);
    CHECK(dims.gate_input_dim() == 16);
}

TEST_CASE("init draws respect Glorot bounds and forget-bias convention", "[nn]") {
    auto params = small_params(4, 6, 77, {"a", "b"});
    CHECK((params.b_forget.array() == 1.0).all());
    CHECK(params.b_input.norm() == 0.0);
    const double proj_bound = std::sqrt(6.0 / (9 + 6));
    CHECK(params.w_proj.cwiseAbs().maxCoeff() <= proj_bound);
    const double gate_bound = std::sqrt(6.0 / (12 + 6));
    CHECK(params.w_input.cwiseAbs().maxCoeff() <= gate_bound);
    CHECK(params.w_proj.cwiseAbs().maxCoeff() > 0.0);

    auto again = small_params(4, 6, 77, {"a", "b"});
    CHECK((params.w_candidate - again.w_candidate).norm() == 0.0); // seed-deterministic
}

TEST_CASE("phrase rows cap at twelve tokens and share embedding rows", "[nn]") {
    vtg::TrainableEmbeddingTable<double> table({"a", "b"}, 3);
    table.rows.setRandom();
    std::vector<std::string> tokens(15, "a");
    tokens[1] = "b";
    const auto rows = vtg::phrase_rows(table, tokens);
    REQUIRE(rows.size() == vtg::kMaxPhraseTokens);
    CHECK(rows[0] == 0);
    CHECK(rows[1] == 1);
    CHECK(rows[2] == 0);
    // Unknown tokens route to the shared unknown row.
    const auto unk = vtg::phrase_rows(table, {"mystery"});
    CHECK(unk[0] == table.unknown_row());
}

TEST_CASE("visual forward matches a hand recomputation", "[nn]") {
    auto params = small_params(3, 4, 5, {"cat", "dog"});
    vtg::ImageExample ex;
    ex.image_id = "x";
    ex.width = 100;
    ex.height = 100;
    auto rng = vtg::make_rng(8);
    ex.proposals = {testutil::proposal(box(0, 0, 50, 50), "dog", 3, &rng),
                    testutil::proposal(box(25, 25, 75, 75), "big dog", 3, &rng)};

    const auto out = vtg::visual_forward(params, ex);
    REQUIRE(out.rows() == 4);
    REQUIRE(out.cols() == 2);

    // Column 0 by hand: W*[spatial;feat] + b + mean(label rows of "dog").
    Eigen::VectorXd input(8);
    input.head<5>() = vtg::spatial_features(ex.proposals[0].box, 100, 100);
    for (int i = 0; i < 3; ++i) input(5 + i) = ex.proposals[0].feature[i];
    Eigen::VectorXd expect = params.w_proj * input + params.b_proj + params.embeddings.label_vector("dog");
    CHECK((out.col(0) - expect).norm() < 1e-12);

    // Multiword label averages both word rows.
    Eigen::VectorXd mean2 =
        (params.embeddings.rows.row(params.embeddings.row_of("big")).transpose() +
         params.embeddings.rows.row(params.embeddings.row_of("dog")).transpose()) /
        2.0;
    Eigen::VectorXd input1(8);
    input1.head<5>() = vtg::spatial_features(ex.proposals[1].box, 100, 100);
    for (int i = 0; i < 3; ++i) input1(5 + i) = ex.proposals[1].feature[i];
    Eigen::VectorXd expect1 = params.w_proj * input1 + params.b_proj + mean2;
    CHECK((out.col(1) - expect1).norm() < 1e-12);

    // Feature-length mismatch is rejected.
    ex.proposals[0].feature.resize(2);
    CHECK_THROWS_AS(vtg::visual_forward(params, ex), vtg::validation_error);
}

TEST_CASE("visual backward matches finite differences", "[nn]") {
    auto params = small_params(3, 4, 15, {"big", "cat", "dog"});
    vtg::ImageExample ex;
    ex.image_id = "x";
    ex.width = 120;
    ex.height = 80;
    auto rng = vtg::make_rng(16);
    // Shared-label rows exercise the 1/|R| gradient split.
    ex.proposals = {testutil::proposal(box(0, 0, 50, 50), "dog", 3, &rng),
                    testutil::proposal(box(25, 25, 75, 75), "big dog", 3, &rng),
                    testutil::proposal(box(10, 10, 90, 60), "cat", 3, &rng)};

    Eigen::MatrixXd direction(4, 3);
    auto drng = vtg::make_rng(99);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) direction(r, c) = vtg::gaussian(drng);

    auto loss = [&](vtg::ModelParams<double>& p) { return (vtg::visual_forward(p, ex).array() * direction.array()).sum(); };

    vtg::VisualTape<double> tape;
    vtg::visual_forward(params, ex, &tape);
    vtg::ModelGrads<double> grads(params);
    vtg::visual_backward(tape, direction, grads);

    const auto slots = testutil::flatten(params);
    const auto analytic = testutil::flatten_grads(params, grads);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + h;
        const double up = loss(params);
        *slots[i] = saved - h;
        const double down = loss(params);
        *slots[i] = saved;
        const double numeric = (up - down) / (2 * h);
        if (std::abs(numeric) < 1e-12 && std::abs(analytic[i]) < 1e-12) continue;
        worst = std::max(worst, testutil::rel_err(analytic[i], numeric));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("textual forward rejects empty phrases and uses the last hidden state", "[nn]") {
    auto params = small_params(3, 4, 25, {"cat", "dog"});
    CHECK_THROWS_AS(vtg::textual_forward(params, {}), vtg::argument_error);

    const auto one = vtg::textual_forward(params, vtg::phrase_rows(params.embeddings, {"cat"}));
    REQUIRE(one.size() == 4);
    // Prefix property: running ["cat","dog"] yields the state after the second
    // step, which differs from the one-token run.
    const auto two = vtg::textual_forward(params, vtg::phrase_rows(params.embeddings, {"cat", "dog"}));
    CHECK((one - two).norm() > 0.0);
}

TEST_CASE("textual backward matches finite differences including repeats", "[nn]") {
    auto params = small_params(2, 5, 35, {"cat", "dog", "the"});
    // Repeated token forces gradient accumulation into one row.
    const auto rows = vtg::phrase_rows(params.embeddings, {"the", "cat", "the", "mystery"});

    Eigen::VectorXd direction(5);
    auto drng = vtg::make_rng(123);
    for (int i = 0; i < 5; ++i) direction(i) = vtg::gaussian(drng);

    auto loss = [&](vtg::ModelParams<double>& p) {
        return vtg::textual_forward(p, vtg::phrase_rows(p.embeddings, {"the", "cat", "the", "mystery"})).dot(direction);
    };

    vtg::LstmTape<double> tape;
    vtg::textual_forward(params, rows, &tape);
    vtg::ModelGrads<double> grads(params);
    vtg::textual_backward(params, tape, direction, grads);

    const auto slots = testutil::flatten(params);
    const auto analytic = testutil::flatten_grads(params, grads);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + h;
        const double up = loss(params);
        *slots[i] = saved - h;
        const double down = loss(params);
        *slots[i] = saved;
        const double numeric = (up - down) / (2 * h);
        if (std::abs(numeric) < 1e-12 && std::abs(analytic[i]) < 1e-12) continue;
        worst = std::max(worst, testutil::rel_err(analytic[i], numeric));
    }
    CHECK(worst < 1e-5);
}
