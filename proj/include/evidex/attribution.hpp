#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "evidex/deeplift.hpp"
#include "evidex/encoding.hpp"
#include "evidex/model.hpp"

namespace evidex {

enum class AttributionMethod { input_gradient, integrated_gradients, deeplift, lime };

inline const std::vector<std::string>& attribution_method_names() {
    static const std::vector<std::string> names = {"input-gradient", "integrated-gradients",
                                                   "deeplift", "lime"};
    return names;
}

inline std::string method_name(AttributionMethod m) {
    return attribution_method_names()[static_cast<size_t>(m)];
}

inline AttributionMethod parse_method(const std::string& name) {
    const auto& names = attribution_method_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<AttributionMethod>(i);
    throw Error("unsupported-method", "unknown attribution method: " + name);
}

enum class IgQuadrature { gauss_legendre, midpoint, left };

struct AttributionOptions {
    int ig_steps = 30;
    IgQuadrature ig_quadrature = IgQuadrature::gauss_legendre;
    int lime_samples = 100;
    uint64_t lime_seed = 7;
};

struct AttributionResult {
    AttributionMethod method = AttributionMethod::deeplift;
    int target_class = 0;
    std::vector<double> token_scores;     // signed, one per input position
    std::vector<double> sentence_scores;  // non-negative, one per sentence
    std::vector<int> ranking;             // sentence indices, best first

    json to_json() const {
        return json{{"method", method_name(method)},
                    {"target_class", target_class},
                    {"token_scores", token_scores},
                    {"sentence_scores", sentence_scores},
                    {"ranking", ranking}};
    }
};

namespace detail {

inline void require_document_region(const EncodedInstance& enc) {
    EVIDEX_REQUIRE(enc.doc_end > enc.doc_begin, "encoding",
                   "zero-width document region: nothing to attribute");
}

}  // namespace detail

// Gradient-times-input: per token, the dot product of the gradient of the
// target-class probability with that token's embedding row.
template <class S>
std::vector<double> input_gradient_scores(const TransformerClassifier<S>& model,
                                          const EncodedInstance& enc, int target) {
    detail::require_document_region(enc);
    Mat<S> X = model.embed(enc.ids);
    Mat<S> g = model.probability_gradient(X, target);
    std::vector<double> out(enc.ids.size());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        out[static_cast<size_t>(i)] = static_cast<double>(g.row(i).dot(X.row(i)));
    return out;
}

// Integrated gradients along the straight path from the mask baseline.
// Default quadrature is Gauss-Legendre; midpoint and left Riemann sums are
// available for comparison.
template <class S>
std::vector<double> integrated_gradients_scores(const TransformerClassifier<S>& model,
                                                const EncodedInstance& enc, int target,
                                                int steps = 30,
                                                IgQuadrature quad =
                                                    IgQuadrature::gauss_legendre) {
    detail::require_document_region(enc);
    EVIDEX_REQUIRE(steps >= 1, "config", "integrated gradients needs steps >= 1");
    Mat<S> Xa = model.embed(enc.ids);
    Mat<S> Xr = model.embed(mask_baseline_ids(enc));
    Mat<S> delta = Xa - Xr;

    std::vector<double> nodes, weights;
    switch (quad) {
        case IgQuadrature::gauss_legendre:
            nn::gauss_legendre_01(steps, nodes, weights);
            break;
        case IgQuadrature::midpoint:
            for (int k = 0; k < steps; ++k) {
                nodes.push_back((k + 0.5) / steps);
                weights.push_back(1.0 / steps);
            }
            break;
        case IgQuadrature::left:
            for (int k = 0; k < steps; ++k) {
                nodes.push_back(static_cast<double>(k) / steps);
                weights.push_back(1.0 / steps);
            }
            break;
    }

    Mat<S> avg_grad = Mat<S>::Zero(Xa.rows(), Xa.cols());
    for (int k = 0; k < steps; ++k) {
        Mat<S> Xk = Xr + static_cast<S>(nodes[static_cast<size_t>(k)]) * delta;
        avg_grad += static_cast<S>(weights[static_cast<size_t>(k)]) *
                    model.probability_gradient(Xk, target);
    }
    std::vector<double> out(enc.ids.size());
    for (Eigen::Index i = 0; i < Xa.rows(); ++i)
        out[static_cast<size_t>(i)] =
            static_cast<double>(avg_grad.row(i).dot(delta.row(i)));
    return out;
}

template <class S>
std::vector<double> deeplift_scores(const TransformerClassifier<S>& model,
                                    const EncodedInstance& enc, int target) {
    detail::require_document_region(enc);
    return deeplift_contributions(model, enc.ids, mask_baseline_ids(enc), target)
        .token_scores;
}

// LIME: mask random subsets of document tokens, fit a weighted ridge
// regression from keep-masks to the target-class probability, and read the
// coefficients as token scores. `predict_target_prob` maps token ids to the
// target-class probability.
template <class F>
std::vector<double> lime_scores(F&& predict_target_prob, const EncodedInstance& enc,
                                int n_samples, uint64_t seed, bool* degenerate = nullptr) {
    detail::require_document_region(enc);
    EVIDEX_REQUIRE(n_samples >= 10, "config", "lime needs n_samples >= 10");
    const int m = enc.doc_end - enc.doc_begin;
    using MatD = nn::Mat<double>;
    using VecD = nn::Vec<double>;

    MatD Z(n_samples, m + 1);  // intercept + keep indicators
    VecD y(n_samples), w(n_samples);
    Rng rng(seed);
    std::vector<int> ids = enc.ids;
    const double kernel_width = 0.25;
    for (int s = 0; s < n_samples; ++s) {
        int masked = 0;
        Z(s, 0) = 1.0;
        for (int j = 0; j < m; ++j) {
            bool keep = s == 0 ? true : rng.bernoulli(0.5);
            Z(s, j + 1) = keep ? 1.0 : 0.0;
            ids[static_cast<size_t>(enc.doc_begin + j)] =
                keep ? enc.ids[static_cast<size_t>(enc.doc_begin + j)] : Vocabulary::kMask;
            masked += keep ? 0 : 1;
        }
        y(s) = predict_target_prob(ids);
        double dist = static_cast<double>(masked) / static_cast<double>(m);
        w(s) = std::exp(-(dist * dist) / (kernel_width * kernel_width));
    }

    if (degenerate) *degenerate = false;
    double spread = (y.array() - y(0)).abs().maxCoeff();
    if (spread < 1e-12) {
        if (degenerate) *degenerate = true;
        return std::vector<double>(enc.ids.size(), 0.0);
    }

    MatD Zw = Z.array().colwise() * w.array();
    MatD A = Zw.transpose() * Z;
    VecD b = Zw.transpose() * y;
    for (int j = 1; j <= m; ++j) A(j, j) += 1e-8;  // tiny ridge, intercept unpenalized
    VecD beta = A.ldlt().solve(b);

    std::vector<double> out(enc.ids.size(), 0.0);
    for (int j = 0; j < m; ++j)
        out[static_cast<size_t>(enc.doc_begin + j)] = beta(j + 1);
    return out;
}

// Sentence score: mean absolute token score over the sentence's surviving
// tokens; query prefix and specials are excluded by construction, fully
// truncated sentences score 0.
inline std::vector<double> sentence_scores(const std::vector<double>& token_scores,
                                           const EncodedInstance& enc, int n_sentences) {
    EVIDEX_REQUIRE(token_scores.size() == enc.ids.size(), "shape",
                   "token scores not aligned to encoding");
    std::vector<double> out(static_cast<size_t>(n_sentences), 0.0);
    for (const auto& [sent, span] : enc.sentence_spans) {
        double acc = 0.0;
        for (int p = span.first; p < span.second; ++p)
            acc += std::abs(token_scores[static_cast<size_t>(p)]);
        out[static_cast<size_t>(sent)] = acc / static_cast<double>(span.second - span.first);
    }
    return out;
}

// Descending by score, ties by ascending index; fully truncated sentences
// always rank after all surviving ones.
inline std::vector<int> rank_sentences(const std::vector<double>& scores,
                                       const std::vector<bool>* fully_truncated = nullptr) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    auto trunc = [&](int i) {
        return fully_truncated && (*fully_truncated)[static_cast<size_t>(i)];
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (trunc(a) != trunc(b)) return !trunc(a);
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    return order;
}

template <class S>
AttributionResult attribute(const TransformerClassifier<S>& model, const EncodedInstance& enc,
                            AttributionMethod method, int target, int n_sentences,
                            const AttributionOptions& opts = {}) {
    AttributionResult res;
    res.method = method;
    res.target_class = target;
    switch (method) {
        case AttributionMethod::input_gradient:
            res.token_scores = input_gradient_scores(model, enc, target);
            break;
        case AttributionMethod::integrated_gradients:
            res.token_scores = integrated_gradients_scores(model, enc, target, opts.ig_steps,
                                                           opts.ig_quadrature);
            break;
        case AttributionMethod::deeplift:
            res.token_scores = deeplift_scores(model, enc, target);
            break;
        case AttributionMethod::lime: {
            auto predict_prob = [&](const std::vector<int>& ids) {
                return static_cast<double>(model.predict(ids)(target));
            };
            res.token_scores =
                lime_scores(predict_prob, enc, opts.lime_samples, opts.lime_seed);
            break;
        }
    }
    res.sentence_scores = sentence_scores(res.token_scores, enc, n_sentences);
    std::vector<bool> trunc(static_cast<size_t>(n_sentences), false);
    for (int s = 0; s < n_sentences; ++s)
        trunc[static_cast<size_t>(s)] = enc.fully_truncated(s);
    res.ranking = rank_sentences(res.sentence_scores, &trunc);
    return res;
}

}  // namespace evidex
