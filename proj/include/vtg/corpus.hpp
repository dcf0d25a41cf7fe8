#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/errors.hpp"
#include "vtg/phrase.hpp"
#include "vtg/rng.hpp"

namespace vtg {

static_assert(std::endian::native == std::endian::little,
              "feature blobs and checkpoints are little-endian; big-endian hosts are unsupported");

// Corner-format box in pixels. Invariants: x1 < x2, y1 < y2, all >= 0.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x1 + x2); }
    double center_y() const { return 0.5 * (y1 + y2); }

    bool valid() const { return x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2; }

    bool operator==(const Box& o) const { return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2; }
};

struct Proposal {
    Box box;
    std::vector<float> feature; // detector feature, length = Corpus::feature_dim
    std::string label;          // detector class token(s), non-empty
    double detector_score = 0;  // in [0, 1]
};

struct PhraseRecord {
    std::size_t first_char = 0; // byte offsets into the sentence text, [first, last)
    std::size_t last_char = 0;
    std::vector<std::string> tokens; // tokenize(text[first:last]), non-empty
    std::optional<std::string> head; // precomputed head, wins over the heuristic
    std::vector<Box> gt_boxes;       // evaluation only; empty means unscored
};

struct Sentence {
    std::string text;
    std::vector<PhraseRecord> phrases;
};

struct ImageExample {
    std::string image_id;
    int width = 0, height = 0; // pixels
    std::vector<Proposal> proposals;
    std::vector<Sentence> sentences;
};

struct Corpus {
    std::vector<ImageExample> examples;
    int feature_dim = 0;
    std::string split = "unspecified";

    std::size_t sentence_count() const {
        std::size_t n = 0;
        for (const auto& ex : examples) n += ex.sentences.size();
        return n;
    }
    std::size_t phrase_count() const {
        std::size_t n = 0;
        for (const auto& ex : examples)
            for (const auto& s : ex.sentences) n += s.phrases.size();
        return n;
    }
};

struct Manifest {
    std::filesystem::path corpus_jsonl;
    std::filesystem::path feature_blob;
    int feature_dim = 0;
    std::string split = "unspecified";
};

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    try {
        m.corpus_jsonl = doc.at("corpus").get<std::string>();
        m.feature_blob = doc.at("features").get<std::string>();
        m.feature_dim = doc.at("feature_dim").get<int>();
        if (doc.contains("split")) m.split = doc.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("manifest " + path.string() + ": " + e.what());
    }
    if (m.feature_dim <= 0) throw validation_error("manifest " + path.string() + ": feature_dim must be positive");
    // relative paths resolve against the manifest's directory
    const auto base = path.parent_path();
    if (m.corpus_jsonl.is_relative()) m.corpus_jsonl = base / m.corpus_jsonl;
    if (m.feature_blob.is_relative()) m.feature_blob = base / m.feature_blob;
    return m;
}

namespace detail {

inline std::vector<float> read_feature_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open feature blob: " + path.string());
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes % 4 != 0)
        throw validation_error("feature blob " + path.string() + ": size is not a multiple of 4 bytes");
    std::vector<float> blob(static_cast<std::size_t>(bytes) / 4);
    if (!blob.empty()) in.read(reinterpret_cast<char*>(blob.data()), bytes);
    if (!in) throw io_error("short read on feature blob: " + path.string());
    return blob;
}

inline Box parse_box(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array() || arr.size() != 4)
        throw parse_error(where + ": box must be an array of 4 numbers");
    Box b;
    b.x1 = arr[0].get<double>();
    b.y1 = arr[1].get<double>();
    b.x2 = arr[2].get<double>();
    b.y2 = arr[3].get<double>();
    return b;
}

// Detector outputs commonly overflow image bounds by a pixel of rounding;
// clamp within tolerance, reject beyond it.
inline Box clamp_box(Box b, double w, double h, double tolerance, const std::string& where) {
    if (b.x1 < -tolerance || b.y1 < -tolerance || b.x2 > w + tolerance || b.y2 > h + tolerance)
        throw validation_error(where + ": box [" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
                               std::to_string(b.x2) + "," + std::to_string(b.y2) + "] outside image bounds " +
                               std::to_string(w) + "x" + std::to_string(h));
    b.x1 = std::clamp(b.x1, 0.0, w);
    b.y1 = std::clamp(b.y1, 0.0, h);
    b.x2 = std::clamp(b.x2, 0.0, w);
    b.y2 = std::clamp(b.y2, 0.0, h);
    if (!(b.x1 < b.x2) || !(b.y1 < b.y2))
        throw validation_error(where + ": degenerate box after clamping (requires x1 < x2 and y1 < y2)");
    return b;
}

inline ImageExample parse_image_line(const nlohmann::json& doc, const std::vector<float>& blob, int feature_dim,
                                     std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    ImageExample ex;
    ex.image_id = doc.at("image_id").get<std::string>();
    ex.width = doc.at("width").get<int>();
    ex.height = doc.at("height").get<int>();
    if (ex.width <= 0 || ex.height <= 0)
        throw validation_error(where + " (image " + ex.image_id + "): width/height must be positive");
    const std::string img_where = where + " (image " + ex.image_id + ")";

    for (const auto& pj : doc.at("proposals")) {
        Proposal p;
        p.box = clamp_box(parse_box(pj.at("box"), img_where), ex.width, ex.height, 1.0, img_where);
        p.label = pj.at("label").get<std::string>();
        if (p.label.empty()) throw validation_error(img_where + ": proposal label must be non-empty");
        p.detector_score = pj.at("score").get<double>();
        const auto& feat = pj.at("feat");
        const std::size_t offset = feat.at("offset").get<std::size_t>();
        const std::size_t count = feat.at("count").get<std::size_t>();
        if (static_cast<int>(count) != feature_dim)
            throw validation_error(img_where + ": feature count " + std::to_string(count) +
                                   " does not match declared feature_dim " + std::to_string(feature_dim));
        if (offset + count > blob.size())
            throw validation_error(img_where + ": feature range [" + std::to_string(offset) + ", " +
                                   std::to_string(offset + count) + ") exceeds blob of " +
                                   std::to_string(blob.size()) + " floats");
        p.feature.assign(blob.begin() + offset, blob.begin() + offset + count);
        ex.proposals.push_back(std::move(p));
    }
    if (ex.proposals.empty()) throw validation_error(img_where + ": proposals list is empty");

    for (const auto& sj : doc.at("sentences")) {
        Sentence s;
        s.text = sj.at("text").get<std::string>();
        for (const auto& qj : sj.at("phrases")) {
            PhraseRecord q;
            q.first_char = qj.at("first").get<std::size_t>();
            q.last_char = qj.at("last").get<std::size_t>();
            if (!(q.first_char < q.last_char) || q.last_char > s.text.size())
                throw validation_error(img_where + ": phrase span [" + std::to_string(q.first_char) + ", " +
                                       std::to_string(q.last_char) + ") invalid for sentence of length " +
                                       std::to_string(s.text.size()));
            q.tokens = tokenize(std::string_view(s.text).substr(q.first_char, q.last_char - q.first_char));
            if (q.tokens.empty())
                throw validation_error(img_where + ": phrase span yields no tokens");
            if (qj.contains("head") && !qj.at("head").is_null())
                q.head = qj.at("head").get<std::string>();
            if (qj.contains("gt_boxes") && !qj.at("gt_boxes").is_null()) {
                for (const auto& gb : qj.at("gt_boxes"))
                    q.gt_boxes.push_back(clamp_box(parse_box(gb, img_where), ex.width, ex.height, 1.0, img_where));
            }
            s.phrases.push_back(std::move(q));
        }
        ex.sentences.push_back(std::move(s));
    }
    return ex;
}

} // namespace detail

inline Corpus load_corpus(const std::filesystem::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    const std::vector<float> blob = detail::read_feature_blob(m.feature_blob);

    std::ifstream in(m.corpus_jsonl);
    if (!in) throw io_error("cannot open corpus: " + m.corpus_jsonl.string());

    Corpus corpus;
    corpus.feature_dim = m.feature_dim;
    corpus.split = m.split;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("corpus " + m.corpus_jsonl.string() + " line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        try {
            corpus.examples.push_back(detail::parse_image_line(doc, blob, m.feature_dim, line_no));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("corpus " + m.corpus_jsonl.string() + " line " + std::to_string(line_no) + ": " +
                              e.what());
        }
    }
    if (corpus.examples.empty()) throw validation_error("empty corpus: " + m.corpus_jsonl.string());
    return corpus;
}

// Writes the manifest + JSONL + feature blob triple for a corpus. Feature
// vectors round-trip bit-exactly (raw little-endian float32); box
// coordinates round-trip via shortest-representation decimal output.
inline std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                                         const std::string& name) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path jsonl_path = dir / (name + ".jsonl");
    const fs::path blob_path = dir / (name + ".features.bin");
    const fs::path manifest_path = dir / (name + ".manifest.json");

    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw io_error("cannot write feature blob: " + blob_path.string());
    std::ofstream jsonl(jsonl_path);
    if (!jsonl) throw io_error("cannot write corpus: " + jsonl_path.string());

    std::size_t offset = 0;
    for (const auto& ex : corpus.examples) {
        nlohmann::json proposals = nlohmann::json::array();
        for (const auto& p : ex.proposals) {
            blob.write(reinterpret_cast<const char*>(p.feature.data()),
                       static_cast<std::streamsize>(p.feature.size() * sizeof(float)));
            proposals.push_back({{"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}},
                                 {"label", p.label},
                                 {"score", p.detector_score},
                                 {"feat", {{"offset", offset}, {"count", p.feature.size()}}}});
            offset += p.feature.size();
        }
        nlohmann::json sentences = nlohmann::json::array();
        for (const auto& s : ex.sentences) {
            nlohmann::json phrases = nlohmann::json::array();
            for (const auto& q : s.phrases) {
                nlohmann::json qj{{"first", q.first_char}, {"last", q.last_char}};
                qj["head"] = q.head ? nlohmann::json(*q.head) : nlohmann::json(nullptr);
                if (q.gt_boxes.empty()) {
                    qj["gt_boxes"] = nullptr;
                } else {
                    nlohmann::json boxes = nlohmann::json::array();
                    for (const auto& b : q.gt_boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
                    qj["gt_boxes"] = boxes;
                }
                phrases.push_back(std::move(qj));
            }
            sentences.push_back({{"text", s.text}, {"phrases", phrases}});
        }
        jsonl << nlohmann::json{{"image_id", ex.image_id},
                                {"width", ex.width},
                                {"height", ex.height},
                                {"proposals", proposals},
                                {"sentences", sentences}}
                     .dump()
              << '\n';
    }
    jsonl.close();
    blob.close();
    if (!jsonl || !blob) throw io_error("failed writing corpus files under " + dir.string());

    std::ofstream manifest(manifest_path);
    manifest << nlohmann::json{{"corpus", jsonl_path.filename().string()},
                               {"features", blob_path.filename().string()},
                               {"feature_dim", corpus.feature_dim},
                               {"split", corpus.split}}
                    .dump(2)
             << '\n';
    if (!manifest) throw io_error("cannot write manifest: " + manifest_path.string());
    return manifest_path;
}

// Seeded uniform sample of ceil(fraction * n) examples, kept in original
// corpus order. Deterministic for a given (fraction, seed).
inline Corpus subsample_training(const Corpus& corpus, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw argument_error("subsample_training: fraction must lie in (0, 1], got " + std::to_string(fraction));
    const std::size_t n = corpus.examples.size();
    const std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (k >= n) return corpus;

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    Rng rng = make_rng(derive_seed(seed, /*stream=*/0x5u));
    shuffle(indices.begin(), indices.end(), rng);
    indices.resize(k);
    std::sort(indices.begin(), indices.end());

    Corpus out;
    out.feature_dim = corpus.feature_dim;
    out.split = corpus.split;
    out.examples.reserve(k);
    for (auto i : indices) out.examples.push_back(corpus.examples[i]);
    return out;
}

} // namespace vtg
