#pragma once

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "vtg/corpus.hpp"
#include "vtg/errors.hpp"

namespace vtg {

namespace detail {

inline std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace detail

// Static SVG of one image's proposals with the grounded phrase->box choices
// highlighted: unchosen proposals in light gray, each chosen box in a color
// with its phrase text as a label.
inline std::string svg_overlay(const ImageExample& ex, const std::vector<std::size_t>& chosen,
                               const std::vector<std::string>& phrase_texts) {
    if (chosen.size() != phrase_texts.size()) throw argument_error("svg_overlay: chosen/texts size mismatch");
    static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    constexpr std::size_t palette_size = sizeof(palette) / sizeof(palette[0]);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ex.width << "\" height=\"" << ex.height
        << "\" viewBox=\"0 0 " << ex.width << ' ' << ex.height << "\">\n";
    svg << "  <rect x=\"0\" y=\"0\" width=\"" << ex.width << "\" height=\"" << ex.height
        << "\" fill=\"white\" stroke=\"black\"/>\n";
    for (const auto& p : ex.proposals) {
        svg << "  <rect x=\"" << p.box.x1 << "\" y=\"" << p.box.y1 << "\" width=\"" << p.box.width()
            << "\" height=\"" << p.box.height() << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
    }
    for (std::size_t j = 0; j < chosen.size(); ++j) {
        if (chosen[j] >= ex.proposals.size()) throw argument_error("svg_overlay: chosen index out of range");
        const Box& b = ex.proposals[chosen[j]].box;
        const char* color = palette[j % palette_size];
        svg << "  <rect x=\"" << b.x1 << "\" y=\"" << b.y1 << "\" width=\"" << b.width() << "\" height=\""
            << b.height() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        svg << "  <text x=\"" << b.x1 + 1 << "\" y=\"" << b.y1 + 5 << "\" font-size=\"4\" fill=\"" << color << "\">"
            << detail::escape_xml(phrase_texts[j]) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace vtg
