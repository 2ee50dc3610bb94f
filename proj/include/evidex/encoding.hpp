#pragma once

#include <map>
#include <utility>
#include <vector>

#include "evidex/corpus.hpp"
#include "evidex/tokenizer.hpp"

namespace evidex {

// Token layout: [CLS] <query> [SEP] <doc> [SEP], where <query> is
// "<head> [SEP] <tail>" for entity-pair tasks and the feature name for
// key-feature tasks. Document sentences are appended in original order
// until max_len; the remaining tokens are clipped.
struct EncodedInstance {
    std::vector<int> ids;
    // Original sentence index -> [start, end) token positions. Absent for
    // sentences with no surviving tokens.
    std::map<int, std::pair<int, int>> sentence_spans;
    std::pair<int, int> query_span{0, 0};  // [start, end), includes query separators
    int doc_begin = 0;
    int doc_end = 0;
    // Sentences fully or partially dropped by the length cap.
    std::vector<int> truncated_sentences;

    int length() const { return static_cast<int>(ids.size()); }

    bool fully_truncated(int sentence) const {
        return sentence_spans.find(sentence) == sentence_spans.end();
    }

    bool in_document_region(int pos) const { return pos >= doc_begin && pos < doc_end; }
};

// Encode a subset of sentences (given as sorted original indices) with the
// same layout as the full encoding. Encoding all sentences is identical to
// the full-document encoding, which the sufficiency loop relies on.
inline EncodedInstance encode_subset(const Vocabulary& vocab, const DocumentInstance& inst,
                                     const std::vector<int>& kept, int max_len) {
    std::vector<int> query;
    if (inst.query.kind == QueryKind::entity_pair) {
        EVIDEX_REQUIRE(inst.query.head && inst.query.tail, "encoding",
                       inst.doc_id + ": entity-pair query missing head or tail");
        auto h = vocab.encode_words(inst.query.head->surface);
        auto t = vocab.encode_words(inst.query.tail->surface);
        query.insert(query.end(), h.begin(), h.end());
        query.push_back(Vocabulary::kSep);
        query.insert(query.end(), t.begin(), t.end());
    } else {
        EVIDEX_REQUIRE(inst.query.feature_name.has_value(), "encoding",
                       inst.doc_id + ": key-feature query missing feature_name");
        query = vocab.encode_words(*inst.query.feature_name);
    }

    // [CLS] + query + [SEP] + ... + trailing [SEP]
    int overhead = 1 + static_cast<int>(query.size()) + 2;
    EVIDEX_REQUIRE(overhead <= max_len, "encoding",
                   inst.doc_id + ": query alone exceeds max_len");

    EncodedInstance enc;
    enc.ids.push_back(Vocabulary::kCls);
    enc.ids.insert(enc.ids.end(), query.begin(), query.end());
    enc.ids.push_back(Vocabulary::kSep);
    enc.query_span = {1, static_cast<int>(enc.ids.size())};
    enc.doc_begin = static_cast<int>(enc.ids.size());

    int budget = max_len - overhead;
    int n = static_cast<int>(inst.sentences.size());
    for (int s : kept) {
        EVIDEX_REQUIRE(s >= 0 && s < n, "encoding",
                       inst.doc_id + ": sentence index out of range");
        auto toks = vocab.encode_words(inst.sentences[static_cast<size_t>(s)]);
        int take = std::min<int>(static_cast<int>(toks.size()), budget);
        if (take < static_cast<int>(toks.size())) enc.truncated_sentences.push_back(s);
        if (take > 0) {
            int start = static_cast<int>(enc.ids.size());
            enc.ids.insert(enc.ids.end(), toks.begin(), toks.begin() + take);
            enc.sentence_spans[s] = {start, start + take};
            budget -= take;
        }
    }
    enc.doc_end = static_cast<int>(enc.ids.size());
    enc.ids.push_back(Vocabulary::kSep);
    return enc;
}

inline EncodedInstance encode(const Vocabulary& vocab, const DocumentInstance& inst,
                              int max_len) {
    std::vector<int> all(inst.sentences.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return encode_subset(vocab, inst, all, max_len);
}

// Baseline for attribution methods: document-region tokens replaced with
// [MASK]; query prefix and special tokens kept intact.
inline std::vector<int> mask_baseline_ids(const EncodedInstance& enc) {
    std::vector<int> ids = enc.ids;
    for (int p = enc.doc_begin; p < enc.doc_end; ++p)
        ids[static_cast<size_t>(p)] = Vocabulary::kMask;
    return ids;
}

}  // namespace evidex
