#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "vtg/concept_branch.hpp"
#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/errors.hpp"
#include "vtg/parallel.hpp"
#include "vtg/phrase.hpp"

namespace vtg {

// Mean over phrases of the mean fixed word vector of each phrase's tokens.
// Lives in the fixed embedding space, so it never moves during training;
// negative mining compares sentences through it.
inline Eigen::VectorXd sentence_signature(const std::vector<PhraseRecord>& phrases,
                                          const FixedEmbeddingTable& table) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(table.dim());
    std::size_t counted = 0;
    for (const auto& q : phrases) {
        if (q.tokens.empty()) continue;
        Eigen::VectorXd phrase_sum = Eigen::VectorXd::Zero(table.dim());
        for (const auto& t : q.tokens) phrase_sum += table.lookup(t);
        sum += phrase_sum / static_cast<double>(q.tokens.size());
        ++counted;
    }
    if (counted == 0) throw argument_error("sentence_signature: no phrase tokens");
    return sum / static_cast<double>(counted);
}

// Per-phrase fixed-table data reused by every score computation.
struct PreparedPhrase {
    AnalyzedPhrase analysis;
    Eigen::VectorXd head_vector; // fixed table, for the untrained branch
};

struct PreparedSentence {
    std::vector<PreparedPhrase> phrases;
    Eigen::VectorXd signature; // for negative mining
};

struct PreparedImage {
    std::vector<SpatialVector> relations;        // per proposal
    std::vector<Eigen::VectorXd> label_vectors;  // fixed table, per proposal
    std::vector<PreparedSentence> sentences;
};

// Immutable per-corpus cache of everything the untrained branch and the
// negative miner need: phrase analyses, fixed head/label embeddings,
// proposal relation vectors, sentence signatures. Holds a pointer into the
// corpus it was built from; the corpus must outlive it.
struct PreparedCorpus {
    const Corpus* corpus = nullptr;
    std::vector<PreparedImage> images;

    const ImageExample& example(std::size_t image) const { return corpus->examples[image]; }

    // Untrained score matrix between any sentence and any image's proposals
    // (they need not belong to the same image: training scores sentences
    // against negative images too).
    Eigen::MatrixXd concept_matrix(const PreparedSentence& sentence, const PreparedImage& image,
                                   bool use_spatial_mask) const {
        Eigen::MatrixXd scores(static_cast<Eigen::Index>(sentence.phrases.size()),
                               static_cast<Eigen::Index>(image.label_vectors.size()));
        for (std::size_t j = 0; j < sentence.phrases.size(); ++j) {
            const PreparedPhrase& q = sentence.phrases[j];
            for (std::size_t k = 0; k < image.label_vectors.size(); ++k) {
                const double cos = cosine(q.head_vector, image.label_vectors[k]);
                scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                    concept_score(cos, q.analysis.spatial, image.relations[k], use_spatial_mask);
            }
        }
        return scores;
    }

    Eigen::MatrixXd concept_matrix(std::size_t image, std::size_t sentence, bool use_spatial_mask) const {
        return concept_matrix(images[image].sentences[sentence], images[image], use_spatial_mask);
    }
};

inline PreparedCorpus prepare(const Corpus& corpus, const FixedEmbeddingTable& table, const Lexicon& lexicon,
                              unsigned threads = 1) {
    PreparedCorpus pc;
    pc.corpus = &corpus;
    pc.images.resize(corpus.examples.size());
    parallel_for(corpus.examples.size(), threads, [&](std::size_t i) {
        const ImageExample& ex = corpus.examples[i];
        PreparedImage& img = pc.images[i];
        img.relations = proposal_relations(ex.proposals, ex.width, ex.height);
        img.label_vectors.reserve(ex.proposals.size());
        for (const auto& p : ex.proposals) img.label_vectors.push_back(table.lookup_label(p.label));
        img.sentences.resize(ex.sentences.size());
        for (std::size_t s = 0; s < ex.sentences.size(); ++s) {
            const Sentence& sent = ex.sentences[s];
            PreparedSentence& ps = img.sentences[s];
            ps.phrases.reserve(sent.phrases.size());
            for (const auto& q : sent.phrases) {
                PreparedPhrase pp;
                pp.analysis = analyze_phrase(q.tokens, q.head, lexicon);
                pp.head_vector = table.lookup(pp.analysis.head);
                ps.phrases.push_back(std::move(pp));
            }
            ps.signature = sentence_signature(sent.phrases, table);
        }
    });
    return pc;
}

} // namespace vtg
