#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/errors.hpp"
#include "vtg/rng.hpp"

namespace vtg {

// Phrases longer than this keep only their first tokens before entering the
// sequence encoder.
inline constexpr std::size_t kMaxPhraseTokens = 12;

// Count of geometric features per proposal box fed to the visual branch.
inline constexpr int kSpatialFeatures = 5;

struct ModelDims {
    int feature_dim = 0;   // v: detector feature length
    int embedding_dim = 0; // g: word-vector length
    int hidden_dim = 0;    // tau: sequence-encoder state size

    void validate() const {
        if (feature_dim <= 0) throw config_error("feature_dim must be positive");
        if (embedding_dim <= 0) throw config_error("embedding_dim must be positive");
        if (hidden_dim <= 0) throw config_error("hidden_dim must be positive");
        if (hidden_dim != embedding_dim)
            throw config_error("hidden_dim (" + std::to_string(hidden_dim) + ") must equal embedding_dim (" +
                               std::to_string(embedding_dim) +
                               "): phrase and proposal encodings share one space");
    }

    int visual_input_dim() const { return kSpatialFeatures + feature_dim; }
    int gate_input_dim() const { return embedding_dim + hidden_dim; }
};

template <typename Real>
struct ModelParams {
    using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Vector<Real, Eigen::Dynamic>;

    ModelDims dims;

    Matrix w_proj; // g x (5+v)
    Vector b_proj; // g

    // Gate weights act on [x_t ; h_{t-1}], so each is tau x (g+tau).
    Matrix w_input, w_forget, w_output, w_candidate;
    Vector b_input, b_forget, b_output, b_candidate;

    TrainableEmbeddingTable<Real> embeddings;
};

template <typename Real>
struct ModelGrads {
    using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Vector<Real, Eigen::Dynamic>;
    using EmbMatrix = typename TrainableEmbeddingTable<Real>::Matrix;

    Matrix w_proj;
    Vector b_proj;
    Matrix w_input, w_forget, w_output, w_candidate;
    Vector b_input, b_forget, b_output, b_candidate;
    EmbMatrix embeddings;

    explicit ModelGrads(const ModelParams<Real>& p)
        : w_proj(Matrix::Zero(p.w_proj.rows(), p.w_proj.cols())),
          b_proj(Vector::Zero(p.b_proj.size())),
          w_input(Matrix::Zero(p.w_input.rows(), p.w_input.cols())),
          w_forget(Matrix::Zero(p.w_forget.rows(), p.w_forget.cols())),
          w_output(Matrix::Zero(p.w_output.rows(), p.w_output.cols())),
          w_candidate(Matrix::Zero(p.w_candidate.rows(), p.w_candidate.cols())),
          b_input(Vector::Zero(p.b_input.size())),
          b_forget(Vector::Zero(p.b_forget.size())),
          b_output(Vector::Zero(p.b_output.size())),
          b_candidate(Vector::Zero(p.b_candidate.size())),
          embeddings(EmbMatrix::Zero(p.embeddings.rows.rows(), p.embeddings.rows.cols())) {}

    void set_zero() {
        w_proj.setZero();
        b_proj.setZero();
        w_input.setZero();
        w_forget.setZero();
        w_output.setZero();
        w_candidate.setZero();
        b_input.setZero();
        b_forget.setZero();
        b_output.setZero();
        b_candidate.setZero();
        embeddings.setZero();
    }
};

// Applies fn(param_block, grad_block) to every trainable block, always in
// the same order. Optimizers and the checkpoint writer both rely on this
// fixed traversal.
template <typename Real, typename Fn>
void for_each_block(ModelParams<Real>& params, ModelGrads<Real>& grads, Fn&& fn) {
    fn(params.w_proj, grads.w_proj);
    fn(params.b_proj, grads.b_proj);
    fn(params.w_input, grads.w_input);
    fn(params.b_input, grads.b_input);
    fn(params.w_forget, grads.w_forget);
    fn(params.b_forget, grads.b_forget);
    fn(params.w_output, grads.w_output);
    fn(params.b_output, grads.b_output);
    fn(params.w_candidate, grads.w_candidate);
    fn(params.b_candidate, grads.b_candidate);
    fn(params.embeddings.rows, grads.embeddings);
}

namespace detail {

// Uniform Glorot fill in fixed row-major draw order so a given seed always
// produces the same parameters.
template <typename Matrix>
void glorot_fill(Matrix& m, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = static_cast<typename Matrix::Scalar>(uniform(rng, -limit, limit));
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

} // namespace detail

// Draw order: projection weights, then the four gates (input, forget,
// output, candidate), then embeddings. Biases start at zero except the
// forget gate's, which starts at one to keep early memory open.
template <typename Real>
ModelParams<Real> init_params(const ModelDims& dims, const std::vector<std::string>& vocabulary,
                              const FixedEmbeddingTable* warm_start, Rng& rng) {
    dims.validate();
    ModelParams<Real> p;
    p.dims = dims;

    p.w_proj.resize(dims.embedding_dim, dims.visual_input_dim());
    detail::glorot_fill(p.w_proj, dims.visual_input_dim(), dims.embedding_dim, rng);
    p.b_proj = ModelParams<Real>::Vector::Zero(dims.embedding_dim);

    const int gi = dims.gate_input_dim();
    for (auto* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_candidate}) {
        w->resize(dims.hidden_dim, gi);
        detail::glorot_fill(*w, gi, dims.hidden_dim, rng);
    }
    p.b_input = ModelParams<Real>::Vector::Zero(dims.hidden_dim);
    p.b_forget = ModelParams<Real>::Vector::Ones(dims.hidden_dim);
    p.b_output = ModelParams<Real>::Vector::Zero(dims.hidden_dim);
    p.b_candidate = ModelParams<Real>::Vector::Zero(dims.hidden_dim);

    p.embeddings = init_trainable_embeddings<Real>(vocabulary, dims.embedding_dim, warm_start, rng);
    return p;
}

// Normalized box geometry: corners over image extent plus relative area.
inline Eigen::Matrix<double, kSpatialFeatures, 1> spatial_features(const Box& box, double image_width,
                                                                   double image_height) {
    Eigen::Matrix<double, kSpatialFeatures, 1> s;
    s << box.x1 / image_width, box.y1 / image_height, box.x2 / image_width, box.y2 / image_height,
        box.area() / (image_width * image_height);
    return s;
}

template <typename Real>
struct VisualTape {
    using Vector = typename ModelParams<Real>::Vector;
    std::vector<Vector> inputs;                   // concatenated [spatial ; feature] per proposal
    std::vector<std::vector<std::size_t>> label_rows; // embedding rows averaged per proposal
};

// Encodes every proposal of an image: project [geometry ; feature] into the
// shared space and add the (mean) label embedding. Returns g x n, one
// column per proposal.
template <typename Real>
typename ModelParams<Real>::Matrix visual_forward(const ModelParams<Real>& params, const ImageExample& ex,
                                                  VisualTape<Real>* tape = nullptr) {
    using Vector = typename ModelParams<Real>::Vector;
    const int g = params.dims.embedding_dim;
    typename ModelParams<Real>::Matrix out(g, static_cast<Eigen::Index>(ex.proposals.size()));
    if (tape) {
        tape->inputs.clear();
        tape->label_rows.clear();
    }
    for (std::size_t k = 0; k < ex.proposals.size(); ++k) {
        const Proposal& p = ex.proposals[k];
        if (static_cast<int>(p.feature.size()) != params.dims.feature_dim)
            throw validation_error("proposal feature length " + std::to_string(p.feature.size()) +
                                   " does not match model feature_dim " +
                                   std::to_string(params.dims.feature_dim));
        Vector u(params.dims.visual_input_dim());
        u.head(kSpatialFeatures) = spatial_features(p.box, ex.width, ex.height).template cast<Real>();
        for (int i = 0; i < params.dims.feature_dim; ++i)
            u(kSpatialFeatures + i) = static_cast<Real>(p.feature[static_cast<std::size_t>(i)]);

        const auto rows = params.embeddings.label_rows(p.label);
        Vector emb = Vector::Zero(g);
        for (auto r : rows) emb += params.embeddings.rows.row(static_cast<Eigen::Index>(r)).transpose();
        emb /= static_cast<Real>(rows.size());

        out.col(static_cast<Eigen::Index>(k)) = params.w_proj * u + params.b_proj + emb;
        if (tape) {
            tape->inputs.push_back(std::move(u));
            tape->label_rows.push_back(rows);
        }
    }
    return out;
}

// d_visual holds dL/d(column k) for each proposal. A label averaged over n
// embedding rows passes 1/n of the gradient to each row.
template <typename Real>
void visual_backward(const VisualTape<Real>& tape,
                     const typename ModelParams<Real>::Matrix& d_visual, ModelGrads<Real>& grads) {
    for (std::size_t k = 0; k < tape.inputs.size(); ++k) {
        const auto dv = d_visual.col(static_cast<Eigen::Index>(k));
        grads.w_proj.noalias() += dv * tape.inputs[k].transpose();
        grads.b_proj += dv;
        const auto& rows = tape.label_rows[k];
        const Real share = Real(1) / static_cast<Real>(rows.size());
        for (auto r : rows)
            grads.embeddings.row(static_cast<Eigen::Index>(r)) += (dv * share).transpose();
    }
}

// Embedding rows feeding the sequence encoder for a phrase, capped at
// kMaxPhraseTokens (keep the first tokens, drop the rest).
template <typename Real>
std::vector<std::size_t> phrase_rows(const TrainableEmbeddingTable<Real>& table,
                                     const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw argument_error("phrase_rows: empty token list");
    std::vector<std::size_t> rows;
    rows.reserve(std::min(tokens.size(), kMaxPhraseTokens));
    for (std::size_t t = 0; t < tokens.size() && t < kMaxPhraseTokens; ++t)
        rows.push_back(table.row_of(tokens[t]));
    return rows;
}

template <typename Real>
struct LstmTape {
    using Vector = typename ModelParams<Real>::Vector;
    std::vector<std::size_t> token_rows;
    // Per step t = 0..T-1:
    std::vector<Vector> x;      // input embedding
    std::vector<Vector> i, f, o, cand; // gate activations
    std::vector<Vector> c;      // cell state
    std::vector<Vector> tanh_c; // tanh(cell state)
    std::vector<Vector> h;      // hidden state
};

// Single-layer recurrent pass over the phrase tokens; the encoding is the
// hidden state after the last token.
template <typename Real>
typename ModelParams<Real>::Vector textual_forward(const ModelParams<Real>& params,
                                                   const std::vector<std::size_t>& token_rows,
                                                   LstmTape<Real>* tape = nullptr) {
    using Vector = typename ModelParams<Real>::Vector;
    if (token_rows.empty()) throw argument_error("textual_forward: empty phrase");
    const int g = params.dims.embedding_dim;
    const int tau = params.dims.hidden_dim;

    if (tape) {
        *tape = LstmTape<Real>{};
        tape->token_rows = token_rows;
    }

    Vector h = Vector::Zero(tau);
    Vector c = Vector::Zero(tau);
    Vector z(g + tau);
    for (std::size_t t = 0; t < token_rows.size(); ++t) {
        const Vector x = params.embeddings.rows.row(static_cast<Eigen::Index>(token_rows[t])).transpose();
        z.head(g) = x;
        z.tail(tau) = h;

        Vector gate_i = params.w_input * z + params.b_input;
        Vector gate_f = params.w_forget * z + params.b_forget;
        Vector gate_o = params.w_output * z + params.b_output;
        Vector cand = params.w_candidate * z + params.b_candidate;
        for (int j = 0; j < tau; ++j) {
            gate_i(j) = detail::sigmoid(gate_i(j));
            gate_f(j) = detail::sigmoid(gate_f(j));
            gate_o(j) = detail::sigmoid(gate_o(j));
            cand(j) = std::tanh(cand(j));
        }
        c = gate_f.cwiseProduct(c) + gate_i.cwiseProduct(cand);
        Vector tc = c.array().tanh();
        h = gate_o.cwiseProduct(tc);

        if (tape) {
            tape->x.push_back(x);
            tape->i.push_back(gate_i);
            tape->f.push_back(gate_f);
            tape->o.push_back(gate_o);
            tape->cand.push_back(cand);
            tape->c.push_back(c);
            tape->tanh_c.push_back(tc);
            tape->h.push_back(h);
        }
    }
    return h;
}

// Backpropagation through time for the recurrent encoder. d_h_last is
// dL/d(final hidden state).
template <typename Real>
void textual_backward(const ModelParams<Real>& params, const LstmTape<Real>& tape,
                      const typename ModelParams<Real>::Vector& d_h_last, ModelGrads<Real>& grads) {
    using Vector = typename ModelParams<Real>::Vector;
    const int g = params.dims.embedding_dim;
    const int tau = params.dims.hidden_dim;
    const std::size_t T = tape.token_rows.size();

    Vector dh = d_h_last;
    Vector dc = Vector::Zero(tau);
    for (std::size_t t = T; t-- > 0;) {
        const Vector& i = tape.i[t];
        const Vector& f = tape.f[t];
        const Vector& o = tape.o[t];
        const Vector& cand = tape.cand[t];
        const Vector& tc = tape.tanh_c[t];
        const Vector c_prev = t == 0 ? Vector::Zero(tau) : tape.c[t - 1];
        const Vector h_prev = t == 0 ? Vector::Zero(tau) : tape.h[t - 1];

        // h = o .* tanh(c)
        const Vector do_pre = dh.cwiseProduct(tc).cwiseProduct(o).cwiseProduct(Vector::Ones(tau) - o);
        dc += dh.cwiseProduct(o).cwiseProduct(Vector::Ones(tau) - tc.cwiseProduct(tc));

        // c = f .* c_prev + i .* cand
        const Vector di_pre = dc.cwiseProduct(cand).cwiseProduct(i).cwiseProduct(Vector::Ones(tau) - i);
        const Vector df_pre = dc.cwiseProduct(c_prev).cwiseProduct(f).cwiseProduct(Vector::Ones(tau) - f);
        const Vector dcand_pre = dc.cwiseProduct(i).cwiseProduct(Vector::Ones(tau) - cand.cwiseProduct(cand));

        Vector z(g + tau);
        z.head(g) = tape.x[t];
        z.tail(tau) = h_prev;

        grads.w_input.noalias() += di_pre * z.transpose();
        grads.w_forget.noalias() += df_pre * z.transpose();
        grads.w_output.noalias() += do_pre * z.transpose();
        grads.w_candidate.noalias() += dcand_pre * z.transpose();
        grads.b_input += di_pre;
        grads.b_forget += df_pre;
        grads.b_output += do_pre;
        grads.b_candidate += dcand_pre;

        const Vector dz = params.w_input.transpose() * di_pre + params.w_forget.transpose() * df_pre +
                          params.w_output.transpose() * do_pre + params.w_candidate.transpose() * dcand_pre;
        grads.embeddings.row(static_cast<Eigen::Index>(tape.token_rows[t])) += dz.head(g).transpose();
        dh = dz.tail(tau);
        dc = dc.cwiseProduct(f);
    }
}

} // namespace vtg
