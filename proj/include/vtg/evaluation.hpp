#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "vtg/corpus.hpp"
#include "vtg/errors.hpp"
#include "vtg/grounding.hpp"
#include "vtg/nn.hpp"
#include "vtg/parallel.hpp"
#include "vtg/prediction.hpp"

namespace vtg {

inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw argument_error("iou: degenerate box");
    const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

// Hit when the predicted box's center lies inside the ground-truth box,
// boundary inclusive.
inline bool pointing_hit(const Box& pred, const Box& gt) {
    const double cx = pred.center_x();
    const double cy = pred.center_y();
    return cx >= gt.x1 && cx <= gt.x2 && cy >= gt.y1 && cy <= gt.y2;
}

// Tightest box enclosing all ground-truth boxes of a phrase.
inline Box merge_boxes(const std::vector<Box>& boxes) {
    if (boxes.empty()) throw argument_error("merge_boxes: empty list");
    Box out = boxes.front();
    for (const auto& b : boxes) {
        out.x1 = std::min(out.x1, b.x1);
        out.y1 = std::min(out.y1, b.y1);
        out.x2 = std::max(out.x2, b.x2);
        out.y2 = std::max(out.y2, b.y2);
    }
    return out;
}

enum class GtMode {
    kUnion, // score against the merged enclosing box
    kAnyBox // hit if any single ground-truth box matches
};

struct EvalOptions {
    double omega = 0.4;
    bool use_spatial_mask = true;
    GtMode gt_mode = GtMode::kUnion;
    unsigned threads = 1;
    std::string checkpoint_id = "none"; // echoed into the report, not used for scoring
};

struct PhraseResult {
    std::string image_id;
    std::size_t image_index = 0;
    std::size_t sentence_index = 0;
    std::size_t phrase_index = 0;
    std::size_t chosen = 0; // proposal index within the image
    Box chosen_box;
    bool scored = false; // carries ground truth
    double best_iou = 0;
    bool accuracy_hit = false;
    bool pointing = false;
};

struct EvalReport {
    double accuracy = 0;
    double pointing_accuracy = 0;
    std::size_t scored = 0;
    std::size_t unscored = 0;
    double omega = 0;
    std::string checkpoint_id;
    std::vector<PhraseResult> phrases;

    nlohmann::json to_json(bool include_phrases = true) const {
        nlohmann::json j{{"accuracy", accuracy},
                         {"pointing_accuracy", pointing_accuracy},
                         {"scored", scored},
                         {"unscored", unscored},
                         {"config", {{"omega", omega}, {"checkpoint", checkpoint_id}}}};
        if (include_phrases) {
            nlohmann::json list = nlohmann::json::array();
            for (const auto& r : phrases)
                list.push_back({{"image_id", r.image_id},
                                {"sentence", r.sentence_index},
                                {"phrase", r.phrase_index},
                                {"chosen", r.chosen},
                                {"box", {r.chosen_box.x1, r.chosen_box.y1, r.chosen_box.x2, r.chosen_box.y2}},
                                {"scored", r.scored},
                                {"iou", r.best_iou},
                                {"accuracy_hit", r.accuracy_hit},
                                {"pointing_hit", r.pointing}});
            j["phrases"] = list;
        }
        return j;
    }

    std::string summary() const {
        std::string s;
        s += "accuracy:          " + std::to_string(accuracy) + "\n";
        s += "pointing accuracy: " + std::to_string(pointing_accuracy) + "\n";
        s += "scored phrases:    " + std::to_string(scored) + "\n";
        s += "unscored phrases:  " + std::to_string(unscored) + "\n";
        s += "omega:             " + std::to_string(omega) + "\n";
        s += "checkpoint:        " + checkpoint_id + "\n";
        return s;
    }
};

namespace detail {

inline void score_phrase(PhraseResult& r, const PhraseRecord& record, const ImageExample& ex, GtMode gt_mode) {
    r.chosen_box = ex.proposals[r.chosen].box;
    if (record.gt_boxes.empty()) return;
    r.scored = true;
    if (gt_mode == GtMode::kUnion) {
        const Box gt = merge_boxes(record.gt_boxes);
        r.best_iou = iou(r.chosen_box, gt);
        r.accuracy_hit = r.best_iou >= 0.5;
        r.pointing = pointing_hit(r.chosen_box, gt);
    } else {
        for (const auto& gt : record.gt_boxes) {
            r.best_iou = std::max(r.best_iou, iou(r.chosen_box, gt));
            r.pointing = r.pointing || pointing_hit(r.chosen_box, gt);
        }
        r.accuracy_hit = r.best_iou >= 0.5;
    }
}

inline void finalize_report(EvalReport& report) {
    std::size_t acc_hits = 0, point_hits = 0;
    for (const auto& r : report.phrases) {
        if (!r.scored) {
            ++report.unscored;
            continue;
        }
        ++report.scored;
        acc_hits += r.accuracy_hit ? 1 : 0;
        point_hits += r.pointing ? 1 : 0;
    }
    report.accuracy = report.scored ? static_cast<double>(acc_hits) / report.scored : 0.0;
    report.pointing_accuracy = report.scored ? static_cast<double>(point_hits) / report.scored : 0.0;
    if (report.pointing_accuracy + 1e-12 < report.accuracy)
        throw state_error("evaluation invariant violated: pointing accuracy below box accuracy");
}

} // namespace detail

// Grounds every phrase and scores it against ground truth. params == nullptr
// evaluates the untrained branch alone; otherwise scores are the omega-blend
// of both branches. Phrases without ground truth are grounded but excluded
// from the metric denominators (tallied as unscored).
template <typename Real>
EvalReport evaluate(const PreparedCorpus& pc, const ModelParams<Real>* params, const EvalOptions& opt) {
    if (params && !(opt.omega >= 0.0 && opt.omega <= 1.0))
        throw argument_error("evaluate: omega must lie in [0, 1], got " + std::to_string(opt.omega));
    const Corpus& corpus = *pc.corpus;

    // Fixed phrase slots keep the report order deterministic under threads.
    std::vector<std::size_t> image_base(corpus.examples.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        image_base[i] = total;
        for (const auto& s : corpus.examples[i].sentences) total += s.phrases.size();
    }

    EvalReport report;
    report.omega = params ? opt.omega : 0.0;
    report.checkpoint_id = params ? opt.checkpoint_id : "concept-only";
    report.phrases.resize(total);

    parallel_for(corpus.examples.size(), opt.threads, [&](std::size_t i) {
        const ImageExample& ex = corpus.examples[i];
        std::size_t slot = image_base[i];
        for (std::size_t s = 0; s < ex.sentences.size(); ++s) {
            const Sentence& sent = ex.sentences[s];
            Eigen::MatrixXd scores = pc.concept_matrix(i, s, opt.use_spatial_mask);
            if (params) scores = refine(learned_scores(*params, ex, sent), scores, opt.omega);
            const auto chosen = ground(scores);
            for (std::size_t q = 0; q < sent.phrases.size(); ++q) {
                PhraseResult& r = report.phrases[slot++];
                r.image_id = ex.image_id;
                r.image_index = i;
                r.sentence_index = s;
                r.phrase_index = q;
                r.chosen = chosen[q];
                detail::score_phrase(r, sent.phrases[q], ex, opt.gt_mode);
            }
        }
    });

    detail::finalize_report(report);
    return report;
}

inline EvalReport evaluate_concept_only(const PreparedCorpus& pc, const EvalOptions& opt) {
    return evaluate<double>(pc, nullptr, opt);
}

struct SweepRow {
    double omega = 0;
    double accuracy = 0;
    double pointing_accuracy = 0;
};

// One evaluation per omega, but both branches' scores are computed once and
// only the blend is redone per omega.
template <typename Real>
std::vector<SweepRow> sweep_omega(const PreparedCorpus& pc, const ModelParams<Real>& params,
                                  const std::vector<double>& omegas, const EvalOptions& opt) {
    if (omegas.empty()) throw argument_error("sweep: empty omega list");
    for (double w : omegas)
        if (!(w >= 0.0 && w <= 1.0)) throw argument_error("sweep: omega must lie in [0, 1], got " + std::to_string(w));

    const Corpus& corpus = *pc.corpus;
    std::vector<std::size_t> image_base(corpus.examples.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        image_base[i] = total;
        for (const auto& s : corpus.examples[i].sentences) total += s.phrases.size();
    }

    std::vector<EvalReport> reports(omegas.size());
    for (std::size_t w = 0; w < omegas.size(); ++w) {
        reports[w].omega = omegas[w];
        reports[w].checkpoint_id = opt.checkpoint_id;
        reports[w].phrases.resize(total);
    }

    parallel_for(corpus.examples.size(), opt.threads, [&](std::size_t i) {
        const ImageExample& ex = corpus.examples[i];
        std::size_t slot = image_base[i];
        for (std::size_t s = 0; s < ex.sentences.size(); ++s) {
            const Sentence& sent = ex.sentences[s];
            const Eigen::MatrixXd prior = pc.concept_matrix(i, s, opt.use_spatial_mask);
            const Eigen::MatrixXd learned = learned_scores(params, ex, sent);
            for (std::size_t w = 0; w < omegas.size(); ++w) {
                const auto chosen = ground(refine(learned, prior, omegas[w]));
                for (std::size_t q = 0; q < sent.phrases.size(); ++q) {
                    PhraseResult& r = reports[w].phrases[slot + q];
                    r.image_id = ex.image_id;
                    r.image_index = i;
                    r.sentence_index = s;
                    r.phrase_index = q;
                    r.chosen = chosen[q];
                    detail::score_phrase(r, sent.phrases[q], ex, opt.gt_mode);
                }
            }
            slot += sent.phrases.size();
        }
    });

    std::vector<SweepRow> rows(omegas.size());
    for (std::size_t w = 0; w < omegas.size(); ++w) {
        detail::finalize_report(reports[w]);
        rows[w] = {omegas[w], reports[w].accuracy, reports[w].pointing_accuracy};
    }
    return rows;
}

struct AblationRow {
    bool concept_branch = false;
    bool trained = false;
    bool relative_position = false;
    double accuracy = 0;
    double pointing_accuracy = 0;
};

// Five-row component study. The row without either score branch is
// undefined and omitted; the position factor only matters when the
// untrained branch participates.
template <typename Real>
std::vector<AblationRow> ablation(const PreparedCorpus& pc, const ModelParams<Real>& params, const EvalOptions& opt) {
    auto run = [&](double omega, bool mask) {
        EvalOptions o = opt;
        o.omega = omega;
        o.use_spatial_mask = mask;
        return evaluate(pc, &params, o);
    };
    std::vector<AblationRow> rows;
    auto push = [&rows](bool c, bool t, bool r, const EvalReport& rep) {
        rows.push_back({c, t, r, rep.accuracy, rep.pointing_accuracy});
    };
    push(false, true, false, run(1.0, false));      // trained branch alone
    push(true, false, false, run(0.0, false));      // untrained branch, no mask
    push(true, false, true, run(0.0, true));        // untrained branch with mask
    push(true, true, false, run(opt.omega, false)); // blend, no mask
    push(true, true, true, run(opt.omega, true));   // blend with mask
    return rows;
}

} // namespace vtg
