// Shared fixtures for the unit and acceptance suites: tiny hand-built corpora,
// temp-dir management, file comparison, and a finite-difference probe that
// treats every trainable block as flat scalar storage.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include <vtg/vtg.hpp>

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp root; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        const auto stamp = std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
        path_ = fs::temp_directory_path() / ("vtg-" + tag + "-" + stamp);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

inline vtg::Box box(double x1, double y1, double x2, double y2) {
    vtg::Box b;
    b.x1 = x1;
    b.y1 = y1;
    b.x2 = x2;
    b.y2 = y2;
    return b;
}

inline vtg::Proposal proposal(const vtg::Box& b, const std::string& label, std::size_t feature_dim,
                              vtg::Rng* rng = nullptr) {
    vtg::Proposal p;
    p.box = b;
    p.label = label;
    p.detector_score = 1.0;
    p.feature.resize(feature_dim);
    for (auto& v : p.feature) v = rng ? static_cast<float>(vtg::gaussian(*rng)) : 0.25f;
    return p;
}

// Sentence whose phrase spans are chosen to tokenize cleanly.
inline vtg::Sentence sentence(const std::vector<std::string>& phrase_texts) {
    vtg::Sentence s;
    for (std::size_t i = 0; i < phrase_texts.size(); ++i) {
        vtg::PhraseRecord q;
        q.first_char = s.text.size();
        if (i) {
            s.text += " and ";
            q.first_char += 5;
        }
        s.text += phrase_texts[i];
        q.last_char = s.text.size();
        q.tokens = vtg::tokenize(phrase_texts[i]);
        s.phrases.push_back(std::move(q));
    }
    return s;
}

// Writes a whitespace embedding file and loads it back.
inline vtg::FixedEmbeddingTable make_table(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                                           const fs::path& dir) {
    const fs::path file = dir / "table.txt";
    std::ofstream out(file);
    out.precision(17);
    for (const auto& [tok, vec] : rows) {
        out << tok;
        for (double v : vec) out << ' ' << v;
        out << '\n';
    }
    out.close();
    return vtg::FixedEmbeddingTable::load(file);
}

// Two-image toy corpus with D-dim features: image A holds a dog (left) and a
// cat (right), image B holds a bird and a table. Every phrase carries its own
// proposal box as ground truth.
inline vtg::Corpus toy_corpus(std::size_t feature_dim, std::uint64_t seed = 11) {
    auto rng = vtg::make_rng(seed);
    vtg::Corpus c;
    c.feature_dim = feature_dim;
    c.split = "toy";

    vtg::ImageExample a;
    a.image_id = "toy-0";
    a.width = 100;
    a.height = 100;
    a.proposals = {proposal(box(5, 20, 35, 60), "dog", feature_dim, &rng),
                   proposal(box(60, 25, 95, 70), "cat", feature_dim, &rng),
                   proposal(box(40, 70, 60, 95), "dog", feature_dim, &rng)};
    a.sentences = {sentence({"the dog on the left", "the cat"})};
    a.sentences[0].phrases[0].gt_boxes = {a.proposals[0].box};
    a.sentences[0].phrases[1].gt_boxes = {a.proposals[1].box};
    c.examples.push_back(std::move(a));

    vtg::ImageExample b;
    b.image_id = "toy-1";
    b.width = 100;
    b.height = 100;
    b.proposals = {proposal(box(10, 10, 45, 55), "bird", feature_dim, &rng),
                   proposal(box(55, 40, 90, 90), "table", feature_dim, &rng)};
    b.sentences = {sentence({"the bird", "the table"})};
    b.sentences[0].phrases[0].gt_boxes = {b.proposals[0].box};
    b.sentences[0].phrases[1].gt_boxes = {b.proposals[1].box};
    c.examples.push_back(std::move(b));
    return c;
}

// Embedding rows covering the toy corpus vocabulary (deterministic, unit-ish).
inline vtg::FixedEmbeddingTable toy_table(const fs::path& dir, std::size_t dim = 8, std::uint64_t seed = 5) {
    auto rng = vtg::make_rng(seed);
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    for (const std::string tok :
         {"the", "dog", "cat", "bird", "table", "on", "left", "right", "and", "top", "bottom"}) {
        std::vector<double> v(dim);
        double norm = 0;
        for (auto& x : v) {
            x = vtg::gaussian(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        rows.emplace_back(tok, v);
    }
    return make_table(rows, dir);
}

// Flat view over every trainable scalar, in canonical block order.
template <typename Real>
std::vector<Real*> flatten(vtg::ModelParams<Real>& params) {
    vtg::ModelGrads<Real> dummy(params);
    std::vector<Real*> out;
    vtg::for_each_block(params, dummy, [&](auto& block, auto&) {
        for (Eigen::Index i = 0; i < block.size(); ++i) out.push_back(block.data() + i);
    });
    return out;
}

template <typename Real>
std::vector<Real> flatten_grads(vtg::ModelParams<Real>& params, vtg::ModelGrads<Real>& grads) {
    std::vector<Real> out;
    vtg::for_each_block(params, grads, [&](auto&, auto& g) {
        for (Eigen::Index i = 0; i < g.size(); ++i) out.push_back(*(g.data() + i));
    });
    return out;
}

// Relative error with a floored denominator: below the floor both values sit
// under the finite-difference noise level and the comparison is meaningless.
inline double rel_err(double analytic, double numeric, double floor = 1e-5) {
    const double denom = std::max(floor, std::abs(analytic) + std::abs(numeric));
    return std::abs(analytic - numeric) / denom;
}

} // namespace testutil
