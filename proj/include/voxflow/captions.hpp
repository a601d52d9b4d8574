#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxflow/shapes.hpp"

namespace voxflow {

// Closed caption/instruction vocabulary. Every template below draws from this
// list, which also defines the token id space (file order = id). The leading
// entry doubles as the vocab-file version marker.
inline const std::vector<std::string>& vocab_words() {
    static const std::vector<std::string> words = {
        "<vocab-v1>", "<pad>", "<bos>", "<eos>", "<threed>", "<query>",
        // articles / glue
        "a", "the", "with", "and", "it", "is", "are", "on", "in", "of", "for", "than", "as",
        "to", "from", "object", "overall", "body", "every", "direction", "whole",
        // categories
        "box", "sphere", "cylinder", "table", "chair",
        // numbers (word forms only; instructions never carry digits)
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        // level hint
        "describe", "level",
        // sizes
        "tiny", "small", "medium", "large", "huge",
        // proportions
        "compact", "elongated", "flattened", "round", "balanced", "square", "proportions",
        "footprint",
        // comparatives
        "tall", "short", "wide", "narrow", "taller", "shorter", "wider", "narrower", "deeper",
        "deep",
        // parts
        "legs", "backrest", "faces", "surface", "profile", "top", "seat", "sides",
        // part adjectives
        "flat", "smooth", "thick", "thin", "curved",
        // style / function
        "plain", "simple", "solid", "sturdy", "sleek", "style", "useful", "suitable",
        "storage", "decorative", "column", "dining", "sitting", "use",
        // instruction verbs and adverbs
        "stretch", "shorten", "shrink", "enlarge", "widen", "move", "remove", "add", "keep",
        "make", "slightly", "moderately", "strongly", "upward", "inward", "outward",
        "unchanged",
    };
    return words;
}

inline const std::string& number_word(int n) {
    static const std::array<std::string, 10> nums = {"one", "two",   "three", "four", "five",
                                                     "six", "seven", "eight", "nine", "ten"};
    if (n < 1 || n > 10) throw NumericError("number_word: " + std::to_string(n));
    return nums[static_cast<std::size_t>(n - 1)];
}

constexpr int kNumCaptionLevels = 10;

// Adjectives that flag a stretched/squashed silhouette; the caption rules
// guarantee one of them appears from level 3 on whenever max/min extent >= 1.5.
inline const std::vector<std::string>& elongation_adjectives() {
    static const std::vector<std::string> adj = {"elongated", "flattened"};
    return adj;
}

namespace caption_detail {

inline std::string size_word(double mean_extent) {
    if (mean_extent < 0.30) return "tiny";
    if (mean_extent < 0.42) return "small";
    if (mean_extent < 0.55) return "medium";
    if (mean_extent < 0.70) return "large";
    return "huge";
}

inline std::string proportion_word(Category cat, const std::array<double, 3>& e) {
    if (cat == Category::kSphere) return "round";
    const double mx = std::max({e[0], e[1], e[2]});
    const double mn = std::min({e[0], e[1], e[2]});
    const double md = e[0] + e[1] + e[2] - mx - mn;
    if (mx / mn < 1.5) return "compact";
    return (mx / md >= md / mn) ? "elongated" : "flattened";
}

inline std::string z_phrase(const std::array<double, 3>& e) {
    const double xy = std::max(e[0], e[1]);
    if (e[2] > 1.15 * xy) return "tall";
    if (e[2] < 0.87 * xy) return "short";
    return "balanced";
}

inline std::string xy_phrase(const std::array<double, 3>& e) {
    if (e[0] > 1.15 * e[1]) return "wider than deep";
    if (e[1] > 1.15 * e[0]) return "deeper than wide";
    return "square in footprint";
}

}  // namespace caption_detail

// Template caption, a pure function of (category, params, level). Levels are
// cumulative: each adds a fragment, so token counts grow with the level.
inline std::string caption_for(Category cat, const ParamMap& params, int level) {
    using namespace caption_detail;
    if (level < 1 || level > kNumCaptionLevels)
        throw NumericError("caption_for: level " + std::to_string(level));
    const auto e = shape_extents(cat, params);
    const double mean_e = (e[0] + e[1] + e[2]) / 3.0;
    const std::string size = size_word(mean_e);
    const std::string prop = proportion_word(cat, e);

    std::string head = "a";
    if (level >= 2) head += " " + size;
    if (level >= 3) head += " " + prop;
    head += std::string(" ") + category_name(cat);
    if (level <= 3) return head;
    std::string out = head;
    if (level >= 4) {
        switch (cat) {
            case Category::kBox: out += " with flat faces"; break;
            case Category::kSphere: out += " with a smooth surface"; break;
            case Category::kCylinder: out += " with a round profile"; break;
            case Category::kTable: out += " with four legs"; break;
            case Category::kChair:
                out += params.at("back_present") > 0.5 ? " with four legs and a backrest"
                                                       : " with four legs";
                break;
        }
    }
    if (level >= 5) out += " it is " + z_phrase(e) + " and " + xy_phrase(e);
    if (level >= 6) {
        if (cat == Category::kTable || cat == Category::kChair) {
            out += params.at("leg_w") >= 0.125 ? " with thick legs" : " with thin legs";
        } else {
            out += " on a " + size_word(std::sqrt(e[0] * e[1])) + " footprint";
        }
    }
    if (level >= 7) {
        switch (cat) {
            case Category::kBox:
                out += e[2] >= 0.55 ? " the sides are tall" : " the sides are short";
                break;
            case Category::kSphere: out += " the surface is curved in every direction"; break;
            case Category::kCylinder:
                out += e[2] >= 2.0 * e[0] ? " the body is tall" : " the body is short";
                break;
            case Category::kTable:
                out += params.at("top_t") >= 0.14 ? " the top is thick" : " the top is thin";
                break;
            case Category::kChair:
                out += params.at("seat_t") >= 0.13 ? " the seat is thick" : " the seat is thin";
                break;
        }
    }
    if (level >= 8) {
        const std::string style =
            mean_e < 0.42 ? "sleek" : (mean_e < 0.55 ? "simple" : "sturdy");
        out += " " + style + " in style";
    }
    if (level >= 9) {
        switch (cat) {
            case Category::kBox: out += " useful for storage"; break;
            case Category::kSphere: out += " suitable as a decorative object"; break;
            case Category::kCylinder: out += " useful as a column"; break;
            case Category::kTable: out += " suitable for dining"; break;
            case Category::kChair: out += " suitable for sitting"; break;
        }
    }
    if (level >= 10)
        out += " overall a " + size + " " + prop + " " + category_name(cat) +
               " with balanced proportions";
    return out;
}

inline std::string caption_for(const VoxelShape& s, int level) {
    return caption_for(s.category, s.params, level);
}

// Three-token prefix that tells the language model which caption granularity
// follows; used in pretraining sequences and at decode time.
inline std::string level_hint(int level) {
    return "describe level " + number_word(level);
}

}  // namespace voxflow
