#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/errors.hpp"
#include "vtg/phrase.hpp"

namespace vtg {

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

// Relative-position vector for every proposal, derived within groups of
// proposals sharing the same detector label. Within a group: the minimum /
// maximum box center on an axis earns the extreme slot for that axis (ties
// earn it jointly), and centers within 10% of the image extent of the group
// median earn the center slot. A proposal whose label is unique in the
// image carries an all-zero vector: it stands in no relation to anything.
inline std::vector<SpatialVector> proposal_relations(const std::vector<Proposal>& proposals, double image_width,
                                                     double image_height) {
    std::vector<SpatialVector> out(proposals.size());
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < proposals.size(); ++k) groups[proposals[k].label].push_back(k);

    for (const auto& [label, members] : groups) {
        if (members.size() < 2) continue;
        std::vector<double> xs, ys;
        xs.reserve(members.size());
        ys.reserve(members.size());
        for (auto k : members) {
            xs.push_back(proposals[k].box.center_x());
            ys.push_back(proposals[k].box.center_y());
        }
        const double min_x = *std::min_element(xs.begin(), xs.end());
        const double max_x = *std::max_element(xs.begin(), xs.end());
        const double min_y = *std::min_element(ys.begin(), ys.end());
        const double max_y = *std::max_element(ys.begin(), ys.end());
        const double med_x = detail::median(xs);
        const double med_y = detail::median(ys);
        const double x_band = 0.10 * image_width;
        const double y_band = 0.10 * image_height;

        for (std::size_t i = 0; i < members.size(); ++i) {
            SpatialVector& sv = out[members[i]];
            if (xs[i] == min_x) sv.slots[SpatialVector::kLeft] = 1;
            if (xs[i] == max_x) sv.slots[SpatialVector::kRight] = 1;
            if (ys[i] == min_y) sv.slots[SpatialVector::kTop] = 1;
            if (ys[i] == max_y) sv.slots[SpatialVector::kBottom] = 1;
            if (std::abs(xs[i] - med_x) <= x_band) sv.slots[SpatialVector::kHCenter] = 1;
            if (std::abs(ys[i] - med_y) <= y_band) sv.slots[SpatialVector::kVCenter] = 1;
        }
    }
    return out;
}

// Untrained similarity between one phrase and one proposal. The base score
// is the cosine between the phrase head's word vector and the proposal
// label's word vector. With masking on, a phrase that names a spatial
// relation (non-zero phrase vector) floors the score to exactly -1 for
// proposals whose relation vector shares no active slot with it.
inline double concept_score(double head_label_cosine, const SpatialVector& phrase_spatial,
                            const SpatialVector& relation, bool use_spatial_mask) {
    if (use_spatial_mask && phrase_spatial.any() && phrase_spatial.dot(relation) == 0) return -1.0;
    return head_label_cosine;
}

// Full phrase-by-proposal concept score matrix for one sentence of one
// image. Convenience wrapper; hot paths precompute the embeddings and
// relation vectors once and call concept_score directly.
inline Eigen::MatrixXd concept_scores(const ImageExample& ex, const Sentence& sentence,
                                      const FixedEmbeddingTable& table, const Lexicon& lexicon,
                                      bool use_spatial_mask) {
    const auto relations = proposal_relations(ex.proposals, ex.width, ex.height);
    std::vector<Eigen::VectorXd> label_vecs;
    label_vecs.reserve(ex.proposals.size());
    for (const auto& p : ex.proposals) label_vecs.push_back(table.lookup_label(p.label));

    Eigen::MatrixXd scores(static_cast<Eigen::Index>(sentence.phrases.size()),
                           static_cast<Eigen::Index>(ex.proposals.size()));
    for (std::size_t j = 0; j < sentence.phrases.size(); ++j) {
        const auto& q = sentence.phrases[j];
        const AnalyzedPhrase ap = analyze_phrase(q.tokens, q.head, lexicon);
        const Eigen::VectorXd head_vec = table.lookup(ap.head);
        for (std::size_t k = 0; k < ex.proposals.size(); ++k) {
            const double cos = cosine(head_vec, label_vecs[k]);
            scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                concept_score(cos, ap.spatial, relations[k], use_spatial_mask);
        }
    }
    return scores;
}

} // namespace vtg
