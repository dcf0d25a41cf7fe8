#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/errors.hpp"
#include "vtg/evaluation.hpp"
#include "vtg/rng.hpp"

namespace vtg {

struct GenConfig {
    int n_images = 100;          // training split size; val/test derive from it
    int proposals_per_image = 4;
    std::vector<std::string> concepts;
    double label_noise = 0.0;    // probability a proposal's label is replaced
    double duplicate_rate = 0.0; // probability an image holds a same-label pair
    int feature_dim = 16;
    std::uint64_t seed = 42;

    void validate() const {
        if (n_images < 2) throw config_error("n_images must be at least 2 (training needs negatives)");
        if (proposals_per_image < 1) throw config_error("proposals_per_image must be positive");
        if (feature_dim < 1) throw config_error("feature_dim must be positive");
        if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw config_error("label_noise must lie in [0, 1]");
        if (!(duplicate_rate >= 0.0 && duplicate_rate <= 1.0)) throw config_error("duplicate_rate must lie in [0, 1]");
        if (concepts.empty()) throw config_error("concepts list must be non-empty");
        if (static_cast<int>(concepts.size()) < proposals_per_image)
            throw config_error("need at least proposals_per_image distinct concepts (" +
                               std::to_string(proposals_per_image) + "), got " + std::to_string(concepts.size()));
        if (duplicate_rate > 0.0 && proposals_per_image < 2)
            throw config_error("duplicate_rate > 0 requires at least 2 proposals per image");
        std::set<std::string> unique(concepts.begin(), concepts.end());
        if (unique.size() != concepts.size()) throw config_error("concepts list contains duplicates");
        for (const auto& c : concepts) {
            const auto toks = tokenize(c);
            if (toks.size() != 1 || toks[0] != c)
                throw config_error("concept '" + c + "' must be a single lowercase token");
        }
    }
};

struct GeneratedCorpora {
    Corpus train, val, test;
};

namespace detail {

inline constexpr double kCanvas = 100.0;
inline constexpr std::uint64_t kSeedStreamEncoder = 0x20;
inline constexpr std::uint64_t kSeedStreamTrain = 0x21;
inline constexpr std::uint64_t kSeedStreamVal = 0x22;
inline constexpr std::uint64_t kSeedStreamTest = 0x23;

inline Box random_box(Rng& rng) {
    const double w = uniform(rng, 10.0, 40.0);
    const double h = uniform(rng, 10.0, 40.0);
    const double x1 = uniform(rng, 0.0, kCanvas - w);
    const double y1 = uniform(rng, 0.0, kCanvas - h);
    return {x1, y1, x1 + w, y1 + h};
}

// Box whose center on `axis` (0 = x, 1 = y) lies in [lo, hi]; the duplicate
// pair uses centers <= 35 and >= 65 so the pair is unambiguous (center gap
// >= 30 bounds their IoU well under 0.5).
inline Box random_box_on_side(Rng& rng, int axis, double lo, double hi) {
    const double w = uniform(rng, 10.0, 40.0);
    const double h = uniform(rng, 10.0, 40.0);
    const double side = axis == 0 ? w : h;
    const double c = uniform(rng, std::max(lo, side / 2), std::min(hi, kCanvas - side / 2));
    double x1, y1;
    if (axis == 0) {
        x1 = c - w / 2;
        y1 = uniform(rng, 0.0, kCanvas - h);
    } else {
        x1 = uniform(rng, 0.0, kCanvas - w);
        y1 = c - h / 2;
    }
    return {x1, y1, x1 + w, y1 + h};
}

inline bool overlaps_any(const Box& b, const std::vector<Box>& placed, double max_iou) {
    for (const auto& other : placed)
        if (iou(b, other) > max_iou) return true;
    return false;
}

// Rejection-sample a box with pairwise IoU <= 0.3 against the ones already
// placed; after repeated failures the draw shrinks so placement always
// terminates on crowded canvases.
inline Box place_box(Rng& rng, const std::vector<Box>& placed) {
    double shrink = 1.0;
    Box b;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        b = random_box(rng);
        if (shrink < 1.0) {
            const double w = std::max(3.0, b.width() * shrink);
            const double h = std::max(3.0, b.height() * shrink);
            b.x2 = std::min(b.x1 + w, kCanvas);
            b.y2 = std::min(b.y1 + h, kCanvas);
        }
        if (!overlaps_any(b, placed, 0.3)) return b;
        if ((attempt + 1) % 50 == 0) shrink *= 0.7;
    }
    return b; // canvas saturated: accept the last draw
}

struct DraftProposal {
    Box box;
    std::string true_concept;
    std::string label; // possibly noise-corrupted
    std::string qualifier; // empty, or left/right/top/bottom for duplicates
};

inline ImageExample generate_image(const GenConfig& cfg, const Eigen::MatrixXd& encoder,
                                   const std::vector<std::string>& concepts, const std::string& image_id,
                                   std::uint64_t image_seed) {
    Rng rng = make_rng(image_seed);
    const int p = cfg.proposals_per_image;

    const bool has_duplicate = uniform(rng) < cfg.duplicate_rate;
    std::vector<std::string> pool = concepts;
    shuffle(pool.begin(), pool.end(), rng);

    std::vector<DraftProposal> drafts;
    std::vector<Box> placed;
    if (has_duplicate) {
        const int axis = uniform(rng) < 0.5 ? 0 : 1;
        const char* near_name = axis == 0 ? "left" : "top";
        const char* far_name = axis == 0 ? "right" : "bottom";
        DraftProposal a, b;
        a.true_concept = b.true_concept = pool[0];
        a.box = random_box_on_side(rng, axis, 0.0, 35.0);
        b.box = random_box_on_side(rng, axis, 65.0, kCanvas);
        a.qualifier = near_name;
        b.qualifier = far_name;
        placed.push_back(a.box);
        placed.push_back(b.box);
        drafts.push_back(std::move(a));
        drafts.push_back(std::move(b));
        for (int k = 2; k < p; ++k) {
            DraftProposal d;
            d.true_concept = pool[static_cast<std::size_t>(k - 1)];
            d.box = place_box(rng, placed);
            placed.push_back(d.box);
            drafts.push_back(std::move(d));
        }
    } else {
        for (int k = 0; k < p; ++k) {
            DraftProposal d;
            d.true_concept = pool[static_cast<std::size_t>(k)];
            d.box = place_box(rng, placed);
            placed.push_back(d.box);
            drafts.push_back(std::move(d));
        }
    }

    // Label noise replaces the detector label with a uniformly drawn
    // different concept; phrases and features keep the true concept.
    for (auto& d : drafts) {
        d.label = d.true_concept;
        if (uniform(rng) < cfg.label_noise && cfg.concepts.size() > 1) {
            std::size_t pick = static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<std::int64_t>(cfg.concepts.size()) - 2));
            std::size_t self = static_cast<std::size_t>(
                std::find(cfg.concepts.begin(), cfg.concepts.end(), d.true_concept) - cfg.concepts.begin());
            if (pick >= self) ++pick;
            d.label = cfg.concepts[pick];
        }
    }

    shuffle(drafts.begin(), drafts.end(), rng);

    ImageExample ex;
    ex.image_id = image_id;
    ex.width = static_cast<int>(kCanvas);
    ex.height = static_cast<int>(kCanvas);

    Sentence sentence;
    for (const auto& d : drafts) {
        Proposal prop;
        prop.box = d.box;
        prop.label = d.label;
        prop.detector_score = uniform(rng, 0.5, 1.0);

        // Feature: fixed linear encoding of (true-concept one-hot ||
        // normalized geometry) plus gaussian noise, sigma 0.1.
        Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.concepts.size()) + kSpatialFeatures);
        const auto it = std::find(cfg.concepts.begin(), cfg.concepts.end(), d.true_concept);
        u(static_cast<Eigen::Index>(it - cfg.concepts.begin())) = 1.0;
        u.tail(kSpatialFeatures) = spatial_features(d.box, kCanvas, kCanvas);
        Eigen::VectorXd feat = encoder * u;
        prop.feature.resize(static_cast<std::size_t>(cfg.feature_dim));
        for (int i = 0; i < cfg.feature_dim; ++i)
            prop.feature[static_cast<std::size_t>(i)] = static_cast<float>(feat(i) + 0.1 * gaussian(rng));
        ex.proposals.push_back(std::move(prop));

        PhraseRecord phrase;
        std::string text = "the " + d.true_concept;
        if (!d.qualifier.empty()) text += " on the " + d.qualifier;
        if (!sentence.text.empty()) sentence.text += " and ";
        phrase.first_char = sentence.text.size();
        sentence.text += text;
        phrase.last_char = sentence.text.size();
        phrase.tokens = tokenize(text);
        phrase.gt_boxes.push_back(d.box);
        sentence.phrases.push_back(std::move(phrase));
    }
    ex.sentences.push_back(std::move(sentence));
    return ex;
}

inline Corpus generate_split(const GenConfig& cfg, const Eigen::MatrixXd& encoder, int count,
                             const std::string& split, std::uint64_t stream) {
    Corpus corpus;
    corpus.feature_dim = cfg.feature_dim;
    corpus.split = split;
    corpus.examples.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::ostringstream id;
        id << split << '-' << std::setw(6) << std::setfill('0') << i;
        corpus.examples[static_cast<std::size_t>(i)] = generate_image(
            cfg, encoder, cfg.concepts, id.str(), derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(i)));
    }
    return corpus;
}

} // namespace detail

// Three deterministic splits sharing one feature encoder: train of
// n_images, validation of max(2, n/10), test of max(2, n/5). Every concept
// must resolve in the fixed table (the untrained branch is blind to
// concepts it has no vector for).
inline GeneratedCorpora generate(const GenConfig& cfg, const FixedEmbeddingTable& table) {
    cfg.validate();
    for (const auto& c : cfg.concepts) {
        bool miss = false;
        table.lookup(c, &miss);
        if (miss) throw config_error("concept '" + c + "' is not in the embedding table");
    }

    Rng enc_rng = make_rng(derive_seed(cfg.seed, detail::kSeedStreamEncoder));
    const Eigen::Index in_dim = static_cast<Eigen::Index>(cfg.concepts.size()) + kSpatialFeatures;
    Eigen::MatrixXd encoder(cfg.feature_dim, in_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (Eigen::Index r = 0; r < encoder.rows(); ++r)
        for (Eigen::Index c = 0; c < encoder.cols(); ++c) encoder(r, c) = scale * gaussian(enc_rng);

    GeneratedCorpora out;
    out.train = detail::generate_split(cfg, encoder, cfg.n_images, "train", detail::kSeedStreamTrain);
    out.val = detail::generate_split(cfg, encoder, std::max(2, cfg.n_images / 10), "val", detail::kSeedStreamVal);
    out.test = detail::generate_split(cfg, encoder, std::max(2, cfg.n_images / 5), "test", detail::kSeedStreamTest);
    return out;
}

struct DatasetPaths {
    std::filesystem::path train_manifest, val_manifest, test_manifest;
};

inline DatasetPaths write_dataset(const GeneratedCorpora& corpora, const std::filesystem::path& dir) {
    DatasetPaths paths;
    paths.train_manifest = save_corpus(corpora.train, dir, "train");
    paths.val_manifest = save_corpus(corpora.val, dir, "val");
    paths.test_manifest = save_corpus(corpora.test, dir, "test");
    return paths;
}

// Small deterministic word-vector file covering the given tokens: unit
// gaussian directions, one line per token. Useful for tests and demos that
// must not depend on a real embedding download.
inline void write_toy_embeddings(const std::filesystem::path& path, const std::vector<std::string>& tokens, int dim,
                                 std::uint64_t seed) {
    if (dim < 1) throw argument_error("write_toy_embeddings: dim must be positive");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write embeddings: " + path.string());
    out << std::setprecision(17);
    std::set<std::string> seen;
    Rng rng = make_rng(derive_seed(seed, 0x30));
    for (const auto& token : tokens) {
        if (!seen.insert(token).second) continue;
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = gaussian(rng);
        v.normalize();
        out << token;
        for (int i = 0; i < dim; ++i) out << ' ' << v(i);
        out << '\n';
    }
    if (!out) throw io_error("failed writing embeddings: " + path.string());
}

// Template words every synthetic phrase can contain, for toy embedding
// files that must cover the whole generated vocabulary.
inline std::vector<std::string> synthetic_template_tokens() {
    return {"the", "on", "and", "left", "right", "top", "bottom"};
}

} // namespace vtg
