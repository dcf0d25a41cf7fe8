#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vtg/concept_branch.hpp"
#include "vtg/corpus.hpp"
#include "vtg/errors.hpp"
#include "vtg/nn.hpp"

namespace vtg {

// Trained-branch score matrix for one sentence against one image: cosine
// between each phrase encoding and each proposal encoding. Scores are
// reduced to double no matter the model scalar type.
template <typename Real>
Eigen::MatrixXd learned_scores(const ModelParams<Real>& params, const ImageExample& ex, const Sentence& sentence) {
    const auto visual = visual_forward(params, ex); // g x n
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(sentence.phrases.size()),
                           static_cast<Eigen::Index>(ex.proposals.size()));
    for (std::size_t j = 0; j < sentence.phrases.size(); ++j) {
        const auto h_t = textual_forward(params, phrase_rows(params.embeddings, sentence.phrases[j].tokens));
        for (Eigen::Index k = 0; k < scores.cols(); ++k)
            scores(static_cast<Eigen::Index>(j), k) = cosine(h_t, visual.col(k));
    }
    return scores;
}

// Convex blend of the trained and untrained branches: omega of the trained
// score plus (1 - omega) of the concept score. omega = 0 is the untrained
// branch alone, omega = 1 the trained branch alone.
inline Eigen::MatrixXd refine(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& prior, double omega) {
    if (!(omega >= 0.0 && omega <= 1.0))
        throw argument_error("refine: omega must lie in [0, 1], got " + std::to_string(omega));
    if (learned.rows() != prior.rows() || learned.cols() != prior.cols())
        throw argument_error("refine: score shapes differ (" + std::to_string(learned.rows()) + "x" +
                             std::to_string(learned.cols()) + " vs " + std::to_string(prior.rows()) + "x" +
                             std::to_string(prior.cols()) + ")");
    return omega * learned + (1.0 - omega) * prior;
}

// Row argmax. Equal scores resolve to the lowest proposal index so the
// outcome never depends on traversal order.
inline std::size_t ground_row(const Eigen::MatrixXd& scores, Eigen::Index row) {
    if (scores.cols() == 0) throw argument_error("ground: no proposals to select from");
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
        if (scores(row, k) > scores(row, best)) best = k;
    return static_cast<std::size_t>(best);
}

inline std::vector<std::size_t> ground(const Eigen::MatrixXd& scores) {
    std::vector<std::size_t> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index j = 0; j < scores.rows(); ++j) out[static_cast<std::size_t>(j)] = ground_row(scores, j);
    return out;
}

// All three score views for one (sentence, image) pair.
struct RefinedScores {
    Eigen::MatrixXd learned; // trained branch
    Eigen::MatrixXd prior; // untrained branch
    Eigen::MatrixXd fused; // refine(learned, prior, omega)
};

} // namespace vtg
