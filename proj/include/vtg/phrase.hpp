#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/errors.hpp"

namespace vtg {

// Six binary location slots shared by phrases (terms found in the text) and
// proposals (relative position within a same-label group).
struct SpatialVector {
    enum Slot { kLeft = 0, kRight, kTop, kBottom, kHCenter, kVCenter, kSlotCount };

    std::array<std::uint8_t, kSlotCount> slots{};

    bool any() const {
        for (auto s : slots)
            if (s) return true;
        return false;
    }

    int dot(const SpatialVector& other) const {
        int d = 0;
        for (int i = 0; i < kSlotCount; ++i) d += slots[i] * other.slots[i];
        return d;
    }

    bool operator==(const SpatialVector& other) const { return slots == other.slots; }
};

// Locative trigger words per slot plus the head-extraction stoplist. Shipped
// as an editable JSON resource (resources/lexicon.json); the built-in
// defaults below are the same content so no file is needed at runtime.
struct Lexicon {
    std::array<std::vector<std::string>, SpatialVector::kSlotCount> slot_terms;
    std::vector<std::string> head_stoplist;

    bool is_stopword(std::string_view token) const {
        return std::find(head_stoplist.begin(), head_stoplist.end(), token) != head_stoplist.end();
    }

    static const char* slot_name(int slot) {
        static constexpr const char* names[SpatialVector::kSlotCount] = {
            "left", "right", "top", "bottom", "h_center", "v_center"};
        return names[slot];
    }

    static Lexicon defaults() {
        Lexicon lx;
        lx.slot_terms[SpatialVector::kLeft] = {"left", "leftmost"};
        lx.slot_terms[SpatialVector::kRight] = {"right", "rightmost"};
        lx.slot_terms[SpatialVector::kTop] = {"top", "upper", "above"};
        lx.slot_terms[SpatialVector::kBottom] = {"bottom", "lower", "below", "under"};
        // "center"-type words fire both axes so a proposal centered on either
        // axis can match.
        lx.slot_terms[SpatialVector::kHCenter] = {"center", "middle", "central"};
        lx.slot_terms[SpatialVector::kVCenter] = {"center", "middle", "central"};
        lx.head_stoplist = {
            // function words
            "the", "a", "an", "of", "on", "in", "at", "to", "by", "with", "from",
            "for", "and", "or", "is", "are", "was", "were", "his", "her", "its",
            "their", "this", "that", "these", "those", "there",
            // locatives and spatial nouns
            "left", "leftmost", "right", "rightmost", "top", "upper", "above",
            "bottom", "lower", "below", "under", "center", "middle", "central",
            "side", "corner", "front", "back", "near"};
        return lx;
    }

    static Lexicon from_json_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open lexicon file: " + path.string());
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("lexicon " + path.string() + ": " + e.what());
        }
        Lexicon lx;
        if (!doc.contains("slots") || !doc.contains("head_stoplist"))
            throw parse_error("lexicon " + path.string() + ": expected keys 'slots' and 'head_stoplist'");
        for (int s = 0; s < SpatialVector::kSlotCount; ++s) {
            const auto& arr = doc.at("slots").at(slot_name(s));
            lx.slot_terms[s] = arr.get<std::vector<std::string>>();
        }
        lx.head_stoplist = doc.at("head_stoplist").get<std::vector<std::string>>();
        return lx;
    }

    nlohmann::json to_json() const {
        nlohmann::json slots;
        for (int s = 0; s < SpatialVector::kSlotCount; ++s) slots[slot_name(s)] = slot_terms[s];
        return nlohmann::json{{"slots", slots}, {"head_stoplist", head_stoplist}};
    }
};

// Lowercased, punctuation-stripped, whitespace-split tokens. Hyphens are kept
// word-internally ("blue-shirted") and stripped at token edges. Locale-free:
// only ASCII letters and digits are token characters.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && cur[b] == '-') ++b;
        while (e > b && cur[e - 1] == '-') --e;
        if (e > b) out.emplace_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(static_cast<char>(c));
        } else if (c == '-') {
            if (!cur.empty()) cur.push_back('-');
        } else {
            flush();
        }
    }
    flush();
    return out;
}

// Rightmost token not on the stoplist; falls back to the last token when
// every token is stoplisted ("the left").
inline std::string extract_head(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
    if (tokens.empty()) throw argument_error("extract_head: empty token list");
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it)
        if (!lexicon.is_stopword(*it)) return *it;
    return tokens.back();
}

inline SpatialVector extract_spatial_terms(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
    SpatialVector sv;
    for (const auto& tok : tokens) {
        for (int s = 0; s < SpatialVector::kSlotCount; ++s) {
            const auto& terms = lexicon.slot_terms[s];
            if (std::find(terms.begin(), terms.end(), tok) != terms.end()) sv.slots[s] = 1;
        }
    }
    return sv;
}

struct AnalyzedPhrase {
    std::vector<std::string> tokens;
    std::string head;
    SpatialVector spatial;
};

// A head supplied with the phrase (e.g. from an external parser) wins over
// the heuristic.
inline AnalyzedPhrase analyze_phrase(const std::vector<std::string>& tokens,
                                     const std::optional<std::string>& precomputed_head,
                                     const Lexicon& lexicon) {
    AnalyzedPhrase out;
    out.tokens = tokens;
    out.head = precomputed_head ? *precomputed_head : extract_head(tokens, lexicon);
    out.spatial = extract_spatial_terms(tokens, lexicon);
    return out;
}

} // namespace vtg
