#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evidex/attribution.hpp"
#include "evidex/common.hpp"
#include "evidex/encoding.hpp"
#include "evidex/tokenizer.hpp"

namespace evidex {

struct LabelMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Macro-F1 averages per-class F1 over classes that appear in the gold
// labels or the predictions; classes absent from both are excluded.
inline LabelMetrics evaluate_labels(const std::vector<int>& predictions,
                                    const std::vector<int>& golds, int label_count) {
    EVIDEX_REQUIRE(!predictions.empty(), "config", "no predictions to evaluate");
    EVIDEX_REQUIRE(predictions.size() == golds.size(), "config",
                   "predictions and golds differ in length");
    std::vector<double> tp(static_cast<size_t>(label_count), 0.0);
    std::vector<double> fp(static_cast<size_t>(label_count), 0.0);
    std::vector<double> fn(static_cast<size_t>(label_count), 0.0);
    size_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        int p = predictions[i], g = golds[i];
        EVIDEX_REQUIRE(p >= 0 && p < label_count && g >= 0 && g < label_count, "config",
                       "label outside label space");
        if (p == g) {
            ++correct;
            tp[static_cast<size_t>(p)] += 1;
        } else {
            fp[static_cast<size_t>(p)] += 1;
            fn[static_cast<size_t>(g)] += 1;
        }
    }
    double f1_sum = 0.0;
    int classes = 0;
    for (int c = 0; c < label_count; ++c) {
        auto cc = static_cast<size_t>(c);
        if (tp[cc] + fp[cc] + fn[cc] == 0) continue;  // neither gold nor predicted
        ++classes;
        double denom = 2 * tp[cc] + fp[cc] + fn[cc];
        f1_sum += denom > 0 ? 2 * tp[cc] / denom : 0.0;
    }
    LabelMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
    m.macro_f1 = classes > 0 ? f1_sum / classes : 0.0;
    return m;
}

struct SetPRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline SetPRF evidence_prf(const std::vector<int>& predicted, const std::vector<int>& gold) {
    std::set<int> ps(predicted.begin(), predicted.end());
    std::set<int> gs(gold.begin(), gold.end());
    size_t hit = 0;
    for (int p : ps)
        if (gs.count(p)) ++hit;
    SetPRF r;
    if (!ps.empty()) r.precision = static_cast<double>(hit) / static_cast<double>(ps.size());
    if (!gs.empty()) r.recall = static_cast<double>(hit) / static_cast<double>(gs.size());
    if (r.precision + r.recall > 0)
        r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

struct EvidenceMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mean_length = 0.0;
    size_t instances = 0;  // instances with gold evidence
};

// Instance-macro evidence metrics over instances that carry gold evidence.
// An empty prediction against non-empty gold scores zero.
inline EvidenceMetrics evaluate_evidence(
    const std::vector<std::vector<int>>& predicted,
    const std::vector<std::optional<std::vector<int>>>& gold) {
    EVIDEX_REQUIRE(predicted.size() == gold.size(), "config",
                   "predicted and gold evidence differ in length");
    EvidenceMetrics m;
    double len_sum = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (!gold[i] || gold[i]->empty()) continue;
        SetPRF r = evidence_prf(predicted[i], *gold[i]);
        m.precision += r.precision;
        m.recall += r.recall;
        m.f1 += r.f1;
        len_sum += static_cast<double>(
            std::set<int>(predicted[i].begin(), predicted[i].end()).size());
        ++m.instances;
    }
    if (m.instances > 0) {
        double n = static_cast<double>(m.instances);
        m.precision /= n;
        m.recall /= n;
        m.f1 /= n;
        m.mean_length = len_sum / n;
    }
    return m;
}

// Per-instance evidence F1 scores (NaN-free: instances without gold evidence
// are skipped by the caller), used for significance testing.
inline std::vector<double> per_instance_evidence_f1(
    const std::vector<std::vector<int>>& predicted,
    const std::vector<std::optional<std::vector<int>>>& gold) {
    std::vector<double> out;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (!gold[i] || gold[i]->empty()) continue;
        out.push_back(evidence_prf(predicted[i], *gold[i]).f1);
    }
    return out;
}

struct BootstrapResult {
    double p_value = 1.0;
    bool significant = false;  // at p = 0.05
};

// One-sided paired bootstrap for "B improves on A": resample instances with
// replacement and count resamples where B fails to beat A. Exact ties count
// half, so identical systems land at p = 0.5.
inline BootstrapResult paired_bootstrap(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        int n_resamples = 10000, uint64_t seed = 17) {
    EVIDEX_REQUIRE(a.size() == b.size(), "config", "paired score vectors differ in length");
    EVIDEX_REQUIRE(!a.empty(), "config", "empty score vectors");
    Rng rng(seed);
    const size_t n = a.size();
    double worse = 0.0;
    for (int r = 0; r < n_resamples; ++r) {
        double diff = 0.0;
        for (size_t i = 0; i < n; ++i) {
            auto idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n)));
            diff += b[idx] - a[idx];
        }
        if (diff < 0) worse += 1.0;
        else if (diff == 0) worse += 0.5;
    }
    BootstrapResult res;
    res.p_value = worse / static_cast<double>(n_resamples);
    res.significant = res.p_value < 0.05;
    return res;
}

struct AttributionMassResult {
    double mean_of_average = 0.0;  // percent
    double mean_of_max = 0.0;      // percent
    size_t instances = 0;          // instances containing the token
};

// Table-4-style analysis: normalize absolute token attributions over the
// document region to sum to 1, then report the mean over instances of the
// per-instance average and maximum mass on occurrences of `token`.
inline AttributionMassResult attribution_mass_on_token(
    const std::vector<AttributionResult>& results,
    const std::vector<EncodedInstance>& encodings, const Vocabulary& vocab,
    const std::string& token) {
    EVIDEX_REQUIRE(results.size() == encodings.size(), "config",
                   "attribution results not aligned to encodings");
    EVIDEX_REQUIRE(vocab.contains(token), "undefined-result",
                   "token '" + token + "' is not in the vocabulary");
    const int token_id = vocab.id(token);
    AttributionMassResult out;
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& enc = encodings[i];
        const auto& scores = results[i].token_scores;
        double total = 0.0;
        for (int p = enc.doc_begin; p < enc.doc_end; ++p)
            total += std::abs(scores[static_cast<size_t>(p)]);
        if (total <= 0.0) continue;
        double occ_sum = 0.0, occ_max = 0.0;
        int occ = 0;
        for (int p = enc.doc_begin; p < enc.doc_end; ++p) {
            if (enc.ids[static_cast<size_t>(p)] != token_id) continue;
            double mass = std::abs(scores[static_cast<size_t>(p)]) / total;
            occ_sum += mass;
            occ_max = std::max(occ_max, mass);
            ++occ;
        }
        if (occ == 0) continue;
        out.mean_of_average += occ_sum / occ;
        out.mean_of_max += occ_max;
        ++out.instances;
    }
    EVIDEX_REQUIRE(out.instances > 0, "undefined-result",
                   "token '" + token + "' occurs in no instance");
    out.mean_of_average *= 100.0 / static_cast<double>(out.instances);
    out.mean_of_max *= 100.0 / static_cast<double>(out.instances);
    return out;
}

}  // namespace evidex
