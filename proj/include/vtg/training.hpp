#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "vtg/checkpoint.hpp"
#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/errors.hpp"
#include "vtg/evaluation.hpp"
#include "vtg/grounding.hpp"
#include "vtg/nn.hpp"
#include "vtg/parallel.hpp"
#include "vtg/prediction.hpp"
#include "vtg/rng.hpp"

namespace vtg {

enum class OptimizerKind { kSgd, kAdam };
enum class EmbeddingInit { kWarmStart, kRandom };

struct TrainConfig {
    double learning_rate = 1e-5;
    int epochs = 10;
    int batch_size = 32;
    double omega = 0.4;
    std::uint64_t seed = 42;
    double fraction = 1.0;
    double epsilon_norm = 1e-8; // denominator guard in the pair aggregation

    bool use_spatial_mask = true;
    // Comparison mode: aggregate raw blended scores instead of shifting them
    // into [0,1] first. Can drive the ratio denominator to zero; off by
    // default for that reason.
    bool raw_scores = false;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    double grad_clip = 0.0; // global-norm clip threshold; 0 disables
    // Mine negatives in the trainable embedding space rather than the fixed
    // one (signatures then move during training).
    bool signature_trainable = false;
    EmbeddingInit embedding_init = EmbeddingInit::kWarmStart;
    unsigned threads = 1;

    void validate() const {
        if (!(learning_rate > 0)) throw config_error("learning_rate must be positive");
        if (epochs < 0) throw config_error("epochs must be non-negative");
        if (batch_size < 2) throw config_error("batch_size must be at least 2: the loss needs a negative");
        if (!(omega >= 0.0 && omega <= 1.0)) throw config_error("omega must lie in [0, 1]");
        if (!(fraction > 0.0) || fraction > 1.0) throw config_error("fraction must lie in (0, 1]");
        if (!(epsilon_norm > 0)) throw config_error("epsilon_norm must be positive");
        if (grad_clip < 0) throw config_error("grad_clip must be non-negative");
    }
};

// Seed-stream tags: every consumer of the run seed derives its own stream so
// adding one never shifts another's draws.
inline constexpr std::uint64_t kSeedStreamInit = 1;
inline constexpr std::uint64_t kSeedStreamEpoch = 2;

struct BatchMember {
    std::size_t image = 0;    // index into corpus.examples
    std::size_t sentence = 0; // index into that example's sentences
};

// Hardest in-batch negative: the eligible member (different image than the
// positive) whose sentence signature has the highest cosine to the
// positive's. Ties resolve to the lowest batch index.
inline std::size_t select_negative(const std::vector<Eigen::VectorXd>& signatures,
                                   const std::vector<std::string>& image_ids, std::size_t positive) {
    if (signatures.size() != image_ids.size()) throw argument_error("select_negative: size mismatch");
    if (positive >= signatures.size()) throw argument_error("select_negative: positive index out of range");
    std::size_t best = signatures.size();
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < signatures.size(); ++b) {
        if (b == positive || image_ids[b] == image_ids[positive]) continue;
        const double c = cosine(signatures[b], signatures[positive]);
        if (c > best_cos) {
            best_cos = c;
            best = b;
        }
    }
    if (best == signatures.size())
        throw sampling_error("negative mining: every batch candidate shares the positive's image; re-batch");
    return best;
}

// f_pair aggregation over a score matrix already shifted into [0,1]:
// mean over rows of (row max) / (row sum + eps). When d_q is supplied it
// receives df/dQ (subgradient through the row argmax, lowest index on ties).
template <typename Real>
Real pair_aggregate(const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>& q, Real eps,
                    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>* d_q = nullptr) {
    const Eigen::Index m = q.rows();
    const Eigen::Index p = q.cols();
    if (m == 0 || p == 0) throw argument_error("pair_aggregate: empty score matrix");
    if (d_q) d_q->setZero(m, p);
    Real total = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::Index k_best = 0;
        for (Eigen::Index k = 1; k < p; ++k)
            if (q(j, k) > q(j, k_best)) k_best = k;
        const Real max = q(j, k_best);
        const Real denom = q.row(j).sum() + eps;
        total += max / denom;
        if (d_q) {
            for (Eigen::Index k = 0; k < p; ++k) (*d_q)(j, k) = -max / (denom * denom) / static_cast<Real>(m);
            (*d_q)(j, k_best) += Real(1) / denom / static_cast<Real>(m);
        }
    }
    return total / static_cast<Real>(m);
}

namespace detail {

template <typename Real>
Real cosine_with_norms(const typename ModelParams<Real>::Vector& a, const typename ModelParams<Real>::Vector& b,
                       Real& na, Real& nb) {
    na = a.norm();
    nb = b.norm();
    if (na < Real(1e-12) || nb < Real(1e-12)) return Real(0);
    return a.dot(b) / (na * nb);
}

// Encoded state of one batch: every image and sentence is run forward once;
// gradients accumulate into d_visual / d_phrase and flow back through the
// tapes only after all pair terms are processed.
template <typename Real>
struct BatchEncodings {
    using Matrix = typename ModelParams<Real>::Matrix;
    using Vector = typename ModelParams<Real>::Vector;

    std::vector<VisualTape<Real>> visual_tapes;            // per member
    std::vector<Matrix> visual;                            // g x n_b
    std::vector<Matrix> d_visual;                          // same shapes
    std::vector<Vector> proposal_norms;                    // per member, length n_b
    std::vector<std::vector<LstmTape<Real>>> phrase_tapes; // per member, per phrase
    std::vector<std::vector<Vector>> phrase_vecs;
    std::vector<std::vector<Vector>> d_phrase;
    std::vector<Vector> phrase_norms; // per member, length m_b
};

// Adds one pair term sign * f_pair(image b_img, sentence of member b_sent)
// to the loss and its gradients. share = sign / batch_size (the batch loss
// is the mean of member losses).
template <typename Real>
double pair_term(const PreparedCorpus& pc, const std::vector<BatchMember>& batch, BatchEncodings<Real>& enc,
                 const TrainConfig& cfg, std::size_t b_sent, std::size_t b_img, double sign) {
    using Matrix = typename ModelParams<Real>::Matrix;
    const Eigen::Index m = static_cast<Eigen::Index>(enc.phrase_vecs[b_sent].size());
    const Eigen::Index n = enc.visual[b_img].cols();

    const BatchMember& sm = batch[b_sent];
    const Eigen::MatrixXd prior = pc.concept_matrix(pc.images[sm.image].sentences[sm.sentence],
                                                      pc.images[batch[b_img].image], cfg.use_spatial_mask);

    Matrix p(m, n);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < n; ++k) {
            const Real na = enc.phrase_norms[b_sent](j);
            const Real nb = enc.proposal_norms[b_img](k);
            p(j, k) = (na < Real(1e-12) || nb < Real(1e-12))
                          ? Real(0)
                          : enc.phrase_vecs[b_sent][static_cast<std::size_t>(j)].dot(enc.visual[b_img].col(k)) /
                                (na * nb);
        }

    const Real w = static_cast<Real>(cfg.omega);
    Matrix p_hat = w * p + (Real(1) - w) * prior.cast<Real>();
    Matrix q;
    if (cfg.raw_scores)
        q = p_hat;
    else
        q = ((p_hat.array() + Real(1)) / Real(2)).matrix();

    Matrix d_q;
    const Real f = pair_aggregate<Real>(q, static_cast<Real>(cfg.epsilon_norm), &d_q);

    // dL/dP = share * (dQ/dP_hat) * omega * df/dQ; the concept term carries
    // no parameters, so its branch of P_hat gets no gradient.
    const Real scale =
        static_cast<Real>(sign / static_cast<double>(batch.size())) * (cfg.raw_scores ? Real(1) : Real(0.5)) * w;
    for (Eigen::Index j = 0; j < m; ++j) {
        const Real na = enc.phrase_norms[b_sent](j);
        if (na < Real(1e-12)) continue;
        const auto& ht = enc.phrase_vecs[b_sent][static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < n; ++k) {
            const Real nb = enc.proposal_norms[b_img](k);
            if (nb < Real(1e-12)) continue;
            const Real d_cos = scale * d_q(j, k);
            if (d_cos == Real(0)) continue;
            const auto hv = enc.visual[b_img].col(k);
            const Real inv = Real(1) / (na * nb);
            const Real c = p(j, k);
            enc.d_phrase[b_sent][static_cast<std::size_t>(j)] += d_cos * (hv * inv - (c / (na * na)) * ht);
            enc.d_visual[b_img].col(k) += d_cos * (ht * inv - (c / (nb * nb)) * hv);
        }
    }
    return sign * static_cast<double>(f);
}

} // namespace detail

// Forward + backward over one batch. Returns each member's contrastive loss
// (-positive pair + hardest-negative pair); `grads` receives d(mean member
// loss)/d(params). Encoding runs in parallel across members; the gradient
// reduction is serial in a fixed order so results do not depend on the
// thread count.
template <typename Real>
std::vector<double> batch_step(const PreparedCorpus& pc, const std::vector<BatchMember>& batch,
                               const ModelParams<Real>& params, const TrainConfig& cfg, ModelGrads<Real>& grads) {
    using Vector = typename ModelParams<Real>::Vector;
    if (batch.size() < 2) throw argument_error("batch_step: batch needs at least 2 members");
    const std::size_t B = batch.size();
    const Corpus& corpus = *pc.corpus;

    detail::BatchEncodings<Real> enc;
    enc.visual_tapes.resize(B);
    enc.visual.resize(B);
    enc.d_visual.resize(B);
    enc.proposal_norms.resize(B);
    enc.phrase_tapes.resize(B);
    enc.phrase_vecs.resize(B);
    enc.d_phrase.resize(B);
    enc.phrase_norms.resize(B);

    parallel_for(B, cfg.threads, [&](std::size_t b) {
        const ImageExample& ex = corpus.examples[batch[b].image];
        enc.visual[b] = visual_forward(params, ex, &enc.visual_tapes[b]);
        enc.d_visual[b].setZero(enc.visual[b].rows(), enc.visual[b].cols());
        enc.proposal_norms[b].resize(enc.visual[b].cols());
        for (Eigen::Index k = 0; k < enc.visual[b].cols(); ++k) enc.proposal_norms[b](k) = enc.visual[b].col(k).norm();

        const Sentence& sent = ex.sentences[batch[b].sentence];
        const std::size_t m = sent.phrases.size();
        enc.phrase_tapes[b].resize(m);
        enc.phrase_vecs[b].resize(m);
        enc.d_phrase[b].resize(m);
        enc.phrase_norms[b].resize(static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j) {
            enc.phrase_vecs[b][j] =
                textual_forward(params, phrase_rows(params.embeddings, sent.phrases[j].tokens), &enc.phrase_tapes[b][j]);
            enc.d_phrase[b][j] = Vector::Zero(enc.phrase_vecs[b][j].size());
            enc.phrase_norms[b](static_cast<Eigen::Index>(j)) = enc.phrase_vecs[b][j].norm();
        }
    });

    // Negative mining signatures: fixed space (cached) by default, current
    // trainable space when configured.
    std::vector<Eigen::VectorXd> signatures(B);
    std::vector<std::string> image_ids(B);
    for (std::size_t b = 0; b < B; ++b) {
        const BatchMember& mref = batch[b];
        image_ids[b] = corpus.examples[mref.image].image_id;
        if (cfg.signature_trainable) {
            const Sentence& sent = corpus.examples[mref.image].sentences[mref.sentence];
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(params.dims.embedding_dim);
            for (const auto& q : sent.phrases) {
                Eigen::VectorXd ps = Eigen::VectorXd::Zero(params.dims.embedding_dim);
                for (const auto& t : q.tokens)
                    ps += params.embeddings.rows.row(static_cast<Eigen::Index>(params.embeddings.row_of(t)))
                              .transpose()
                              .template cast<double>();
                sum += ps / static_cast<double>(q.tokens.size());
            }
            signatures[b] = sum / static_cast<double>(sent.phrases.size());
        } else {
            signatures[b] = pc.images[mref.image].sentences[mref.sentence].signature;
        }
    }

    std::vector<double> losses(B);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t neg = select_negative(signatures, image_ids, b);
        losses[b] = detail::pair_term(pc, batch, enc, cfg, b, b, -1.0) +
                    detail::pair_term(pc, batch, enc, cfg, b, neg, +1.0);
    }

    grads.set_zero();
    for (std::size_t b = 0; b < B; ++b) {
        visual_backward(enc.visual_tapes[b], enc.d_visual[b], grads);
        for (std::size_t j = 0; j < enc.phrase_tapes[b].size(); ++j)
            textual_backward(params, enc.phrase_tapes[b][j], enc.d_phrase[b][j], grads);
    }
    return losses;
}

// Forward-only image-sentence compatibility, the f_pair of the displayed
// loss: computed from blended scores shifted into [0,1].
template <typename Real>
double pair_similarity(const ImageExample& image, const Sentence& sentence, const ModelParams<Real>& params,
                       const FixedEmbeddingTable& fixed, const Lexicon& lexicon, double omega, double eps,
                       bool use_spatial_mask = true, bool raw_scores = false) {
    if (sentence.phrases.empty()) throw argument_error("pair_similarity: sentence has no phrases");
    const Eigen::MatrixXd learned = learned_scores(params, image, sentence);
    const Eigen::MatrixXd prior = concept_scores(image, sentence, fixed, lexicon, use_spatial_mask);
    const Eigen::MatrixXd p_hat = refine(learned, prior, omega);
    Eigen::MatrixXd q;
    if (raw_scores)
        q = p_hat;
    else
        q = ((p_hat.array() + 1.0) / 2.0).matrix();
    return pair_aggregate<double>(q, eps);
}

// Contrastive objective for one (positive image, sentence, negative image)
// triple, forward only.
template <typename Real>
double contrastive_loss(const ImageExample& positive, const Sentence& sentence, const ImageExample& negative,
                        const ModelParams<Real>& params, const FixedEmbeddingTable& fixed, const Lexicon& lexicon,
                        double omega, double eps, bool use_spatial_mask = true, bool raw_scores = false) {
    return -pair_similarity(positive, sentence, params, fixed, lexicon, omega, eps, use_spatial_mask, raw_scores) +
           pair_similarity(negative, sentence, params, fixed, lexicon, omega, eps, use_spatial_mask, raw_scores);
}

// Greedy batch packing over the shuffled (image, sentence) pool: each batch
// takes the earliest remaining members whose images it has not used yet, so
// an image contributes at most one pair per batch. A tail that cannot form
// a 2-member batch is dropped for the epoch.
inline std::vector<std::vector<BatchMember>> compose_batches(const Corpus& corpus, int batch_size, Rng& rng) {
    std::vector<BatchMember> pool;
    for (std::size_t i = 0; i < corpus.examples.size(); ++i)
        for (std::size_t s = 0; s < corpus.examples[i].sentences.size(); ++s) pool.push_back({i, s});
    shuffle(pool.begin(), pool.end(), rng);

    std::vector<std::vector<BatchMember>> batches;
    while (!pool.empty()) {
        std::vector<BatchMember> batch;
        std::set<std::string> used;
        std::vector<BatchMember> rest;
        for (const auto& member : pool) {
            const std::string& id = corpus.examples[member.image].image_id;
            if (static_cast<int>(batch.size()) < batch_size && !used.count(id)) {
                batch.push_back(member);
                used.insert(id);
            } else {
                rest.push_back(member);
            }
        }
        pool = std::move(rest);
        if (batch.size() < 2) break; // everything left shares one image
        batches.push_back(std::move(batch));
    }
    return batches;
}

template <typename Real>
void sgd_step(ModelParams<Real>& params, ModelGrads<Real>& grads, double learning_rate) {
    const Real lr = static_cast<Real>(learning_rate);
    for_each_block(params, grads, [lr](auto& p, const auto& g) { p -= lr * g; });
}

template <typename Real>
struct AdamState {
    ModelGrads<Real> m, v;
    long step = 0;
    explicit AdamState(const ModelParams<Real>& p) : m(p), v(p) {}
};

template <typename Real, typename Fn>
void for_each_block4(ModelParams<Real>& p, ModelGrads<Real>& g, ModelGrads<Real>& m, ModelGrads<Real>& v, Fn&& fn) {
    fn(p.w_proj, g.w_proj, m.w_proj, v.w_proj);
    fn(p.b_proj, g.b_proj, m.b_proj, v.b_proj);
    fn(p.w_input, g.w_input, m.w_input, v.w_input);
    fn(p.b_input, g.b_input, m.b_input, v.b_input);
    fn(p.w_forget, g.w_forget, m.w_forget, v.w_forget);
    fn(p.b_forget, g.b_forget, m.b_forget, v.b_forget);
    fn(p.w_output, g.w_output, m.w_output, v.w_output);
    fn(p.b_output, g.b_output, m.b_output, v.b_output);
    fn(p.w_candidate, g.w_candidate, m.w_candidate, v.w_candidate);
    fn(p.b_candidate, g.b_candidate, m.b_candidate, v.b_candidate);
    fn(p.embeddings.rows, g.embeddings, m.embeddings, v.embeddings);
}

template <typename Real>
void adam_step(ModelParams<Real>& params, ModelGrads<Real>& grads, AdamState<Real>& state, double learning_rate) {
    constexpr Real beta1 = Real(0.9), beta2 = Real(0.999), eps = Real(1e-8);
    ++state.step;
    const Real correction = static_cast<Real>(std::sqrt(1.0 - std::pow(0.999, state.step)) /
                                              (1.0 - std::pow(0.9, state.step)));
    const Real lr = static_cast<Real>(learning_rate) * correction;
    for_each_block4(params, grads, state.m, state.v, [&](auto& p, const auto& g, auto& m, auto& v) {
        m = beta1 * m + (Real(1) - beta1) * g;
        v = (beta2 * v.array() + (Real(1) - beta2) * g.array().square()).matrix();
        p.array() -= lr * m.array() / (v.array().sqrt() + eps);
    });
}

// Scales gradients so their global L2 norm does not exceed max_norm.
template <typename Real>
void clip_gradients(ModelParams<Real>& params, ModelGrads<Real>& grads, double max_norm) {
    double sq = 0;
    for_each_block(params, grads, [&sq](const auto&, const auto& g) { sq += static_cast<double>(g.squaredNorm()); });
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0) return;
    const Real scale = static_cast<Real>(max_norm / norm);
    for_each_block(params, grads, [scale](const auto&, auto& g) { g *= scale; });
}

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0;
    double val_accuracy = 0;
};

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    int best_epoch = 0; // 0 means the untouched initialization
    double best_val_accuracy = 0;
    std::vector<EpochStats> history;
};

// Full training run: per epoch, seeded shuffle into unique-image batches,
// mean-loss gradient step per batch, validation accuracy, JSONL log line.
// The checkpoint on disk is the epoch with the highest validation accuracy
// (earliest wins ties); with epochs = 0 it is the initialization itself.
template <typename Real>
TrainResult train(const Corpus& train_corpus_in, const Corpus& val_corpus, const FixedEmbeddingTable& fixed,
                  const Lexicon& lexicon, ModelDims dims, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
    cfg.validate();
    dims.validate();
    if (dims.feature_dim != train_corpus_in.feature_dim)
        throw config_error("model feature_dim " + std::to_string(dims.feature_dim) +
                           " does not match corpus feature_dim " + std::to_string(train_corpus_in.feature_dim));
    if (fixed.dim() != dims.embedding_dim)
        throw config_error("fixed embedding dim " + std::to_string(fixed.dim()) +
                           " does not match model embedding_dim " + std::to_string(dims.embedding_dim));

    const Corpus train_corpus = subsample_training(train_corpus_in, cfg.fraction, cfg.seed);
    {
        std::set<std::string> ids;
        for (const auto& ex : train_corpus.examples) ids.insert(ex.image_id);
        if (ids.size() < 2)
            throw validation_error("training requires at least two distinct images to form negatives");
    }

    const PreparedCorpus train_pc = prepare(train_corpus, fixed, lexicon, cfg.threads);
    const PreparedCorpus val_pc = prepare(val_corpus, fixed, lexicon, cfg.threads);

    Rng init_rng = make_rng(derive_seed(cfg.seed, kSeedStreamInit));
    ModelParams<Real> params =
        init_params<Real>(dims, collect_vocabulary(train_corpus),
                          cfg.embedding_init == EmbeddingInit::kWarmStart ? &fixed : nullptr, init_rng);

    std::filesystem::create_directories(out_dir);
    TrainResult result;
    result.checkpoint_path = out_dir / "model.ckpt";
    result.log_path = out_dir / "train_log.jsonl";
    save_checkpoint(params, result.checkpoint_path); // stands until an epoch beats it

    std::ofstream log(result.log_path, std::ios::binary);
    if (!log) throw io_error("cannot write training log: " + result.log_path.string());

    EvalOptions val_opt;
    val_opt.omega = cfg.omega;
    val_opt.use_spatial_mask = cfg.use_spatial_mask;
    val_opt.threads = cfg.threads;

    ModelGrads<Real> grads(params);
    AdamState<Real> adam(params);
    double best_val = -std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = make_rng(derive_seed(cfg.seed, kSeedStreamEpoch, static_cast<std::uint64_t>(epoch)));
        const auto batches = compose_batches(train_corpus, cfg.batch_size, epoch_rng);
        if (batches.empty()) throw state_error("epoch " + std::to_string(epoch) + ": no trainable batches");

        double loss_sum = 0;
        std::size_t member_count = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto losses = batch_step(train_pc, batches[b], params, cfg, grads);
            for (double l : losses) {
                if (!std::isfinite(l))
                    throw state_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(b) + " (image " +
                                      train_corpus.examples[batches[b][0].image].image_id + ")");
                loss_sum += l;
            }
            member_count += losses.size();
            if (cfg.grad_clip > 0) clip_gradients(params, grads, cfg.grad_clip);
            if (cfg.optimizer == OptimizerKind::kAdam)
                adam_step(params, grads, adam, cfg.learning_rate);
            else
                sgd_step(params, grads, cfg.learning_rate);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(member_count);
        stats.val_accuracy = evaluate(val_pc, &params, val_opt).accuracy;
        result.history.push_back(stats);
        log << nlohmann::json{{"epoch", stats.epoch},
                              {"mean_loss", stats.mean_loss},
                              {"val_accuracy", stats.val_accuracy}}
                   .dump()
            << '\n';
        log.flush();

        if (stats.val_accuracy > best_val) {
            best_val = stats.val_accuracy;
            result.best_epoch = epoch;
            save_checkpoint(params, result.checkpoint_path);
        }
    }

    if (cfg.epochs == 0)
        result.best_val_accuracy = evaluate(val_pc, &params, val_opt).accuracy;
    else
        result.best_val_accuracy = best_val;
    return result;
}

} // namespace vtg
