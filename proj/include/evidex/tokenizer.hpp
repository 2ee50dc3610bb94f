#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "evidex/common.hpp"

namespace evidex {

// Word-level vocabulary with fixed special tokens. Sentence spans stay
// exact under whitespace tokenization, which the attribution and
// regularization paths rely on.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kSep = 2;
    static constexpr int kMask = 3;
    static constexpr int kUnk = 4;

    Vocabulary() {
        for (const char* w : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add(w);
    }

    static std::vector<std::string> split_tokens(const std::string& text) {
        std::vector<std::string> out;
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) out.push_back(text.substr(i, j - i));
            i = j;
        }
        return out;
    }

    // Frequency-built vocabulary: words sorted by (count desc, word asc)
    // so construction is deterministic regardless of map iteration order.
    static Vocabulary build(const std::vector<std::string>& texts, int min_count = 1,
                            int max_size = 0) {
        std::unordered_map<std::string, int64_t> counts;
        for (const auto& t : texts)
            for (auto& w : split_tokens(t)) counts[w] += 1;
        std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocabulary v;
        for (const auto& [word, count] : items) {
            if (count < min_count) break;
            if (max_size > 0 && v.size() >= max_size) break;
            v.add(word);
        }
        return v;
    }

    int add(const std::string& word) {
        auto it = word_to_id_.find(word);
        if (it != word_to_id_.end()) return it->second;
        int id = static_cast<int>(id_to_word_.size());
        id_to_word_.push_back(word);
        word_to_id_.emplace(word, id);
        return id;
    }

    int id(const std::string& word) const {
        auto it = word_to_id_.find(word);
        return it == word_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& word) const {
        return word_to_id_.count(word) != 0;
    }

    const std::string& word(int id) const {
        EVIDEX_REQUIRE(id >= 0 && id < size(), "vocab", "token id out of range");
        return id_to_word_[static_cast<size_t>(id)];
    }

    int size() const { return static_cast<int>(id_to_word_.size()); }

    std::vector<int> encode_words(const std::string& text) const {
        std::vector<int> out;
        for (auto& w : split_tokens(text)) out.push_back(id(w));
        return out;
    }

    const std::vector<std::string>& words() const { return id_to_word_; }

    static Vocabulary from_words(const std::vector<std::string>& words) {
        EVIDEX_REQUIRE(words.size() >= 5 && words[0] == "[PAD]" && words[1] == "[CLS]" &&
                           words[2] == "[SEP]" && words[3] == "[MASK]" && words[4] == "[UNK]",
                       "vocab", "vocabulary list does not start with the special tokens");
        Vocabulary v;
        for (size_t i = 5; i < words.size(); ++i) v.add(words[i]);
        return v;
    }

private:
    std::vector<std::string> id_to_word_;
    std::unordered_map<std::string, int> word_to_id_;
};

}  // namespace evidex
