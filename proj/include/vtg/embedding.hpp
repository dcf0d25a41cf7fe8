#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "vtg/corpus.hpp"
#include "vtg/errors.hpp"
#include "vtg/rng.hpp"

namespace vtg {

// Cosine similarity with a zero-norm guard: any vector of norm < 1e-12 is
// treated as directionless and scores 0 against everything.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const double na = a.template cast<double>().norm();
    const double nb = b.template cast<double>().norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}

// Read-only word-vector table loaded from the whitespace text format
// "token v1 v2 ... vg", one entry per line. Kept in double precision.
class FixedEmbeddingTable {
public:
    static FixedEmbeddingTable load(const std::filesystem::path& path, std::size_t max_vocab = 0) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open embeddings: " + path.string());
        FixedEmbeddingTable table;
        std::string line;
        std::size_t line_no = 0;
        std::vector<double> values;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (max_vocab != 0 && table.tokens_.size() >= max_vocab) break;
            std::istringstream ls(line);
            std::string token;
            if (!(ls >> token))
                throw parse_error("embeddings " + path.string() + " line " + std::to_string(line_no) +
                                  ": missing token");
            values.clear();
            double v;
            while (ls >> v) values.push_back(v);
            if (values.empty())
                throw parse_error("embeddings " + path.string() + " line " + std::to_string(line_no) +
                                  ": no vector components");
            if (table.dim_ == 0) table.dim_ = static_cast<int>(values.size());
            if (static_cast<int>(values.size()) != table.dim_)
                throw parse_error("embeddings " + path.string() + " line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(table.dim_) + " components, found " + std::to_string(values.size()));
            if (table.index_.count(token)) continue; // first occurrence wins
            table.index_.emplace(token, table.tokens_.size());
            table.tokens_.push_back(token);
            table.data_.insert(table.data_.end(), values.begin(), values.end());
        }
        if (table.tokens_.empty()) throw validation_error("empty embedding table: " + path.string());
        return table;
    }

    int dim() const { return dim_; }
    std::size_t size() const { return tokens_.size(); }
    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    // Lookup cascade: exact match, then ASCII-lowercased match, then the mean
    // of hyphen-separated parts that match, else a zero vector (flagged OOV).
    Eigen::VectorXd lookup(const std::string& token, bool* out_of_vocab = nullptr) const {
        if (out_of_vocab) *out_of_vocab = false;
        if (auto it = index_.find(token); it != index_.end()) return row(it->second);
        std::string lower = token;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (auto it = index_.find(lower); it != index_.end()) return row(it->second);
        if (lower.find('-') != std::string::npos) {
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
            int found = 0;
            std::istringstream parts(lower);
            std::string part;
            while (std::getline(parts, part, '-')) {
                if (part.empty()) continue;
                if (auto it = index_.find(part); it != index_.end()) {
                    sum += row(it->second);
                    ++found;
                }
            }
            if (found > 0) return sum / found;
        }
        if (out_of_vocab) *out_of_vocab = true;
        return Eigen::VectorXd::Zero(dim_);
    }

    // Labels may hold several whitespace-separated words; embed as the mean
    // of the per-word lookups. Flagged OOV only when every word missed.
    Eigen::VectorXd lookup_label(const std::string& label, bool* out_of_vocab = nullptr) const {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
        int words = 0, misses = 0;
        std::istringstream ls(label);
        std::string word;
        while (ls >> word) {
            bool miss = false;
            sum += lookup(word, &miss);
            ++words;
            if (miss) ++misses;
        }
        if (words == 0) throw argument_error("lookup_label: blank label");
        if (out_of_vocab) *out_of_vocab = (misses == words);
        return sum / words;
    }

private:
    Eigen::VectorXd row(std::size_t i) const {
        return Eigen::Map<const Eigen::VectorXd>(data_.data() + i * static_cast<std::size_t>(dim_), dim_);
    }

    int dim_ = 0;
    std::vector<std::string> tokens_;
    std::vector<double> data_; // row-major, tokens_.size() x dim_
    std::unordered_map<std::string, std::size_t> index_;
};

// Sorted, de-duplicated set of every phrase token and label word seen in a
// corpus. Sort order makes the vocabulary independent of container iteration.
inline std::vector<std::string> collect_vocabulary(const Corpus& corpus) {
    std::set<std::string> vocab;
    for (const auto& ex : corpus.examples) {
        for (const auto& p : ex.proposals) {
            std::istringstream ls(p.label);
            std::string word;
            while (ls >> word) vocab.insert(word);
        }
        for (const auto& s : ex.sentences)
            for (const auto& q : s.phrases)
                for (const auto& t : q.tokens) vocab.insert(t);
    }
    return {vocab.begin(), vocab.end()};
}

// Trainable embedding matrix shared between the phrase encoder and the
// proposal-label lookup. One row per vocabulary token plus a final
// catch-all row for unknown tokens.
template <typename Real>
class TrainableEmbeddingTable {
public:
    using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    TrainableEmbeddingTable() = default;

    TrainableEmbeddingTable(std::vector<std::string> vocabulary, int dim) : tokens_(std::move(vocabulary)) {
        if (dim <= 0) throw argument_error("embedding dim must be positive");
        rows = Matrix::Zero(static_cast<Eigen::Index>(tokens_.size()) + 1, dim);
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], i).second)
                throw argument_error("duplicate vocabulary token: " + tokens_[i]);
        }
    }

    // rows is exposed for the optimizer; everything else reads through it.
    Matrix rows;

    int dim() const { return static_cast<int>(rows.cols()); }
    std::size_t vocab_size() const { return tokens_.size(); }
    std::size_t row_count() const { return tokens_.size() + 1; }
    std::size_t unknown_row() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::size_t row_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? unknown_row() : it->second;
    }

    // Row indices backing a label: one per whitespace-separated word. The
    // label vector is the mean of these rows, so each row receives 1/n of
    // the incoming gradient.
    std::vector<std::size_t> label_rows(const std::string& label) const {
        std::vector<std::size_t> out;
        std::istringstream ls(label);
        std::string word;
        while (ls >> word) out.push_back(row_of(word));
        if (out.empty()) throw argument_error("label_rows: blank label");
        return out;
    }

    Eigen::RowVector<Real, Eigen::Dynamic> label_vector(const std::string& label) const {
        const auto idx = label_rows(label);
        Eigen::RowVector<Real, Eigen::Dynamic> sum = Eigen::RowVector<Real, Eigen::Dynamic>::Zero(dim());
        for (auto i : idx) sum += rows.row(static_cast<Eigen::Index>(i));
        return sum / static_cast<Real>(idx.size());
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Fills a trainable table. Warm start copies the fixed table's lookup
// result per token (so a token the fixed table cannot resolve starts at
// zero, as does the catch-all unknown row). Passing warm_start = nullptr
// draws every row from a small seeded gaussian instead.
template <typename Real>
TrainableEmbeddingTable<Real> init_trainable_embeddings(const std::vector<std::string>& vocabulary, int dim,
                                                        const FixedEmbeddingTable* warm_start, Rng& rng) {
    if (warm_start && warm_start->dim() != dim)
        throw config_error("embedding dim mismatch: model uses " + std::to_string(dim) + ", table provides " +
                           std::to_string(warm_start->dim()));
    TrainableEmbeddingTable<Real> table(vocabulary, dim);
    if (warm_start) {
        for (std::size_t i = 0; i < table.vocab_size(); ++i)
            table.rows.row(static_cast<Eigen::Index>(i)) = warm_start->lookup(vocabulary[i]).transpose().cast<Real>();
    } else {
        for (std::size_t i = 0; i < table.row_count(); ++i)
            for (int j = 0; j < dim; ++j)
                table.rows(static_cast<Eigen::Index>(i), j) = static_cast<Real>(0.1 * gaussian(rng));
    }
    return table;
}

} // namespace vtg
