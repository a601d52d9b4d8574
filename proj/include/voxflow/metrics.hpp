#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "voxflow/common.hpp"

namespace voxflow {

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

// BLEU-1: clipped unigram precision times the brevity penalty. Clipping uses
// the maximum reference count per word; the penalty uses the reference length
// closest to the candidate (shorter wins ties). Empty candidates score 0.
inline double bleu1(const std::string& candidate, const std::vector<std::string>& references) {
    const std::vector<std::string> cand = split_words(candidate);
    if (cand.empty()) return 0.0;
    if (references.empty()) throw NumericError("bleu1: no references");

    std::map<std::string, int> max_ref_counts;
    int closest_len = 0;
    std::size_t best_diff = static_cast<std::size_t>(-1);
    for (const std::string& ref : references) {
        const auto words = split_words(ref);
        std::map<std::string, int> counts;
        for (const auto& w : words) ++counts[w];
        for (const auto& [w, c] : counts) max_ref_counts[w] = std::max(max_ref_counts[w], c);
        const std::size_t diff = words.size() > cand.size() ? words.size() - cand.size()
                                                            : cand.size() - words.size();
        if (diff < best_diff ||
            (diff == best_diff && static_cast<int>(words.size()) < closest_len)) {
            best_diff = diff;
            closest_len = static_cast<int>(words.size());
        }
    }

    std::map<std::string, int> cand_counts;
    for (const auto& w : cand) ++cand_counts[w];
    int clipped = 0;
    for (const auto& [w, c] : cand_counts) {
        auto it = max_ref_counts.find(w);
        if (it != max_ref_counts.end()) clipped += std::min(c, it->second);
    }
    const double precision = static_cast<double>(clipped) / static_cast<double>(cand.size());
    const double bp = cand.size() >= static_cast<std::size_t>(closest_len)
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(closest_len) /
                                               static_cast<double>(cand.size()));
    return precision * bp;
}

}  // namespace voxflow
