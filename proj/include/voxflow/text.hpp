#pragma once

#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxflow/captions.hpp"
#include "voxflow/common.hpp"

namespace voxflow {

// Whitespace word-level vocabulary over the closed caption/instruction word
// list. Ids are dense file order; the first entry is the version marker and
// ids 1..5 are the reserved specials.
class Vocab {
  public:
    static Vocab standard() { return Vocab(vocab_words()); }

    explicit Vocab(std::vector<std::string> words) : words_(std::move(words)) {
        if (words_.empty() || words_[0] != "<vocab-v1>")
            throw IoError("vocab: missing <vocab-v1> version marker");
        for (std::size_t i = 0; i < words_.size(); ++i)
            index_.emplace(words_[i], static_cast<int>(i));
        if (words_.size() > 256) throw NumericError("vocab exceeds 256 entries");
    }

    int size() const { return static_cast<int>(words_.size()); }

    int pad_id() const { return 1; }
    int bos_id() const { return 2; }
    int eos_id() const { return 3; }
    int threed_id() const { return 4; }
    int query_id() const { return 5; }

    int id(const std::string& w) const {
        auto it = index_.find(w);
        if (it == index_.end()) throw UsageError("word not in vocabulary: '" + w + "'");
        return it->second;
    }

    const std::string& word(int id) const {
        if (id < 0 || id >= size())
            throw NumericError("vocab: id " + std::to_string(id) + " out of range");
        return words_[static_cast<std::size_t>(id)];
    }

    std::vector<int> tokenize(const std::string& text) const {
        std::vector<int> ids;
        std::istringstream is(text);
        std::string w;
        while (is >> w) ids.push_back(id(w));
        return ids;
    }

    std::string detokenize(std::span<const int> ids) const {
        std::string out;
        for (int t : ids) {
            if (!out.empty()) out += ' ';
            out += word(t);
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open '" + path + "' for writing");
        for (const auto& w : words_) f << w << '\n';
        if (!f) throw IoError("failed while writing '" + path + "'");
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open '" + path + "' for reading");
        std::vector<std::string> words;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) words.push_back(line);
        }
        return Vocab(std::move(words));
    }

    bool operator==(const Vocab& o) const { return words_ == o.words_; }

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace voxflow
