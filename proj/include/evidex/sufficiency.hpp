#pragma once

#include <algorithm>
#include <vector>

#include "evidex/encoding.hpp"
#include "evidex/model.hpp"

namespace evidex {

// Result of the predict-select-verify loop.
struct SufficiencyVerdict {
    std::vector<int> selected;  // sentence indices, in ranking order
    bool verified = false;
    int full_prediction = 0;
    double full_confidence = 0.0;
    double subset_confidence = 0.0;
    int steps_taken = 0;
    double lambda = 0.8;

    json to_json() const {
        return json{{"selected", selected},
                    {"verified", verified},
                    {"full_prediction", full_prediction},
                    {"full_confidence", full_confidence},
                    {"subset_confidence", subset_confidence},
                    {"steps_taken", steps_taken},
                    {"lambda", lambda}};
    }
};

struct FaithfulnessCheck {
    bool agrees = false;
    int reduced_prediction = 0;
    double reduced_confidence = 0.0;  // probability of the reduced argmax
};

namespace detail {

template <class S>
inline int argmax(const Vec<S>& v) {
    Eigen::Index idx = 0;
    v.maxCoeff(&idx);
    return static_cast<int>(idx);
}

}  // namespace detail

// Re-encode only the evidence sentences (original order, same query prefix)
// and compare argmax predictions. An empty evidence set evaluates the
// query-only input, matching the Direct baseline's input shape.
template <class S>
FaithfulnessCheck verify_faithfulness(const TransformerClassifier<S>& model,
                                      const Vocabulary& vocab, const DocumentInstance& inst,
                                      std::vector<int> evidence, int max_len) {
    std::sort(evidence.begin(), evidence.end());
    evidence.erase(std::unique(evidence.begin(), evidence.end()), evidence.end());
    EncodedInstance full = encode(vocab, inst, max_len);
    Vec<S> full_probs = model.predict(full);
    int full_pred = detail::argmax(full_probs);

    EncodedInstance reduced = encode_subset(vocab, inst, evidence, max_len);
    Vec<S> probs = model.predict(reduced);
    FaithfulnessCheck check;
    check.reduced_prediction = detail::argmax(probs);
    check.reduced_confidence = static_cast<double>(probs(check.reduced_prediction));
    check.agrees = check.reduced_prediction == full_pred;
    return check;
}

// Grow ranked-prefix subsets until the model reproduces its full-document
// prediction with at least lambda times the full-document confidence. The
// full-document reference is the (possibly truncated) encoding the model
// actually sees, and encoding all sentences reproduces it exactly, so the
// loop always verifies by step n.
template <class S>
SufficiencyVerdict sufficient_subset(const TransformerClassifier<S>& model,
                                     const Vocabulary& vocab, const DocumentInstance& inst,
                                     const std::vector<int>& ranking, int max_len,
                                     double lambda = 0.8) {
    const int n = static_cast<int>(inst.sentences.size());
    EVIDEX_REQUIRE(lambda > 0.0 && lambda <= 1.0, "config", "lambda must be in (0, 1]");
    EVIDEX_REQUIRE(static_cast<int>(ranking.size()) == n, "config",
                   "ranking is not a permutation of the sentences");
    {
        std::vector<bool> seen(static_cast<size_t>(n), false);
        for (int r : ranking) {
            EVIDEX_REQUIRE(r >= 0 && r < n && !seen[static_cast<size_t>(r)], "config",
                           "ranking is not a permutation of the sentences");
            seen[static_cast<size_t>(r)] = true;
        }
    }

    EncodedInstance full = encode(vocab, inst, max_len);
    Vec<S> full_probs = model.predict(full);
    SufficiencyVerdict v;
    v.lambda = lambda;
    v.full_prediction = detail::argmax(full_probs);
    v.full_confidence = static_cast<double>(full_probs(v.full_prediction));

    std::vector<int> kept;
    for (int k = 1; k <= n; ++k) {
        v.selected.assign(ranking.begin(), ranking.begin() + k);
        kept = v.selected;
        std::sort(kept.begin(), kept.end());
        EncodedInstance enc = encode_subset(vocab, inst, kept, max_len);
        Vec<S> probs = model.predict(enc);
        v.subset_confidence = static_cast<double>(probs(v.full_prediction));
        v.steps_taken = k;
        if (detail::argmax(probs) == v.full_prediction &&
            v.subset_confidence >= lambda * v.full_confidence) {
            v.verified = true;
            return v;
        }
    }
    // Unreachable when encode_subset(all) == encode(full): the last step has
    // confidence ratio exactly 1 >= lambda.
    return v;
}

// Exhaustive minimum sufficient-subset size; acceptance-test oracle only.
// Subsets are tried in cardinality order, lexicographic within cardinality.
template <class S>
int minimal_sufficient_oracle(const TransformerClassifier<S>& model, const Vocabulary& vocab,
                              const DocumentInstance& inst, double lambda, int max_len) {
    const int n = static_cast<int>(inst.sentences.size());
    EVIDEX_REQUIRE(n <= 10, "config",
                   "oracle is exhaustive; use documents with at most 10 sentences");
    EncodedInstance full = encode(vocab, inst, max_len);
    Vec<S> full_probs = model.predict(full);
    int full_pred = detail::argmax(full_probs);
    double full_conf = static_cast<double>(full_probs(full_pred));

    std::vector<int> subset;
    // Lexicographic m-subsets of {0..n-1}.
    auto next_combination = [n](std::vector<int>& c) {
        int m = static_cast<int>(c.size());
        int i = m - 1;
        while (i >= 0 && c[static_cast<size_t>(i)] == n - m + i) --i;
        if (i < 0) return false;
        ++c[static_cast<size_t>(i)];
        for (int j = i + 1; j < m; ++j)
            c[static_cast<size_t>(j)] = c[static_cast<size_t>(j - 1)] + 1;
        return true;
    };

    for (int m = 1; m <= n; ++m) {
        subset.resize(static_cast<size_t>(m));
        std::iota(subset.begin(), subset.end(), 0);
        do {
            EncodedInstance enc = encode_subset(vocab, inst, subset, max_len);
            Vec<S> probs = model.predict(enc);
            if (detail::argmax(probs) == full_pred &&
                static_cast<double>(probs(full_pred)) >= lambda * full_conf)
                return m;
        } while (next_combination(subset));
    }
    return n;
}

// Per-prefix verdicts for lambda sweeps: one model call per prefix size,
// reusable across thresholds.
template <class S>
std::vector<std::pair<int, double>> ranked_prefix_confidences(
    const TransformerClassifier<S>& model, const Vocabulary& vocab,
    const DocumentInstance& inst, const std::vector<int>& ranking, int max_len,
    int* full_prediction, double* full_confidence) {
    const int n = static_cast<int>(inst.sentences.size());
    EncodedInstance full = encode(vocab, inst, max_len);
    Vec<S> full_probs = model.predict(full);
    int fp = detail::argmax(full_probs);
    if (full_prediction) *full_prediction = fp;
    if (full_confidence) *full_confidence = static_cast<double>(full_probs(fp));

    std::vector<std::pair<int, double>> out;  // (argmax, P(full class)) per prefix size
    std::vector<int> kept;
    for (int k = 1; k <= n; ++k) {
        kept.assign(ranking.begin(), ranking.begin() + k);
        std::sort(kept.begin(), kept.end());
        EncodedInstance enc = encode_subset(vocab, inst, kept, max_len);
        Vec<S> probs = model.predict(enc);
        out.emplace_back(detail::argmax(probs), static_cast<double>(probs(fp)));
    }
    return out;
}

}  // namespace evidex
