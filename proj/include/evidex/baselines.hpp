#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "evidex/encoding.hpp"
#include "evidex/model.hpp"

namespace evidex {

enum class SelectorKind { direct, fulldoc, ent, first2, first3, bestpair, sufficient };

inline const std::vector<std::string>& selector_names() {
    static const std::vector<std::string> names = {"direct", "fulldoc",  "ent",       "first2",
                                                   "first3", "bestpair", "sufficient"};
    return names;
}

inline std::string selector_name(SelectorKind k) {
    return selector_names()[static_cast<size_t>(k)];
}

inline SelectorKind parse_selector(const std::string& name) {
    const auto& names = selector_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<SelectorKind>(i);
    throw Error("unsupported-method", "unknown evidence selector: " + name);
}

// Evidence-selection baselines. `direct` returns no sentences (query-only
// evaluation), `ent` returns sentences with a mention of either query
// entity, `bestpair` scores each single sentence by the probability of the
// full-document predicted class and keeps the top two (ties by index).
template <class S>
std::vector<int> select_evidence(SelectorKind kind, const DocumentInstance& inst,
                                 const Vocabulary& vocab,
                                 const TransformerClassifier<S>* model, int max_len) {
    const int n = static_cast<int>(inst.sentences.size());
    switch (kind) {
        case SelectorKind::direct:
            return {};
        case SelectorKind::fulldoc: {
            std::vector<int> all(static_cast<size_t>(n));
            std::iota(all.begin(), all.end(), 0);
            return all;
        }
        case SelectorKind::first2:
        case SelectorKind::first3: {
            int k = kind == SelectorKind::first2 ? 2 : 3;
            std::vector<int> out;
            for (int i = 0; i < std::min(k, n); ++i) out.push_back(i);
            return out;
        }
        case SelectorKind::ent: {
            EVIDEX_REQUIRE(inst.query.kind == QueryKind::entity_pair,
                           "unsupported-combination",
                           "ent baseline needs an entity-pair query");
            std::set<int> sents;
            for (const auto& ref : {inst.query.head, inst.query.tail}) {
                if (!ref) continue;
                for (int s : ref->sentences)
                    if (s >= 0 && s < n) sents.insert(s);
            }
            return std::vector<int>(sents.begin(), sents.end());
        }
        case SelectorKind::bestpair: {
            EVIDEX_REQUIRE(model != nullptr, "config", "bestpair needs a model");
            EncodedInstance full = encode(vocab, inst, max_len);
            Vec<S> full_probs = model->predict(full);
            Eigen::Index fp = 0;
            full_probs.maxCoeff(&fp);
            std::vector<std::pair<double, int>> scored;
            for (int s = 0; s < n; ++s) {
                EncodedInstance enc = encode_subset(vocab, inst, {s}, max_len);
                scored.emplace_back(static_cast<double>(model->predict(enc)(fp)), s);
            }
            std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            std::vector<int> out;
            for (size_t i = 0; i < scored.size() && i < 2; ++i) out.push_back(scored[i].second);
            return out;
        }
        case SelectorKind::sufficient:
            throw Error("config", "sufficient is handled by the explain pipeline");
    }
    throw Error("config", "unknown selector");
}

}  // namespace evidex
