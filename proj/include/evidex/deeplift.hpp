#pragma once

#include <vector>

#include "evidex/model.hpp"

namespace evidex {

// DeepLIFT over the transformer graph. The network is decomposed into
// linear maps, elementwise nonlinearities, and products of activations.
// Linear ops propagate multipliers like gradients, elementwise ops use the
// rescale rule, and products use symmetric midpoint multipliers
// m_a = m_z (b + b_ref)/2, m_b = m_z (a + a_ref)/2. Every rule conserves
// sum(m * delta) locally, so summation-to-delta holds for the whole model
// up to floating-point rounding:
//   sum_i contributions_i = p_target(input) - p_target(baseline).
namespace deeplift_detail {

using nn::Mat;
using nn::Vec;

template <class S>
constexpr S rescale_eps() {
    return std::is_same_v<S, float> ? S(1e-4) : S(1e-9);
}

template <class S>
struct Pair {
    Mat<S> a, r;
};

// exp rescale with midpoint-gradient fallback for tiny deltas
template <class S>
inline S exp_rescale(S ua, S ur, S ea, S er) {
    S du = ua - ur;
    if (std::abs(du) > rescale_eps<S>()) return (ea - er) / du;
    return std::exp(S(0.5) * (ua + ur));
}

template <class S>
struct PairSoftmax {
    Mat<S> U_a, U_r, E_a, E_r, A_a, A_r;
    Vec<S> Z_a, Z_r, R_a, R_r;
};

// Row softmax on both passes with a shared per-row shift constant so the
// decomposition sees identical linear offsets in each pass.
template <class S>
inline void paired_softmax_rows(const Mat<S>& Sa, const Mat<S>& Sr, PairSoftmax<S>& c) {
    const Eigen::Index rows = Sa.rows(), cols = Sa.cols();
    c.U_a.resize(rows, cols);
    c.U_r.resize(rows, cols);
    c.Z_a.resize(rows);
    c.Z_r.resize(rows);
    c.R_a.resize(rows);
    c.R_r.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        S kappa = std::max(Sa.row(i).maxCoeff(), Sr.row(i).maxCoeff());
        c.U_a.row(i) = Sa.row(i).array() - kappa;
        c.U_r.row(i) = Sr.row(i).array() - kappa;
    }
    c.E_a = c.U_a.array().exp();
    c.E_r = c.U_r.array().exp();
    for (Eigen::Index i = 0; i < rows; ++i) {
        c.Z_a(i) = c.E_a.row(i).sum();
        c.Z_r(i) = c.E_r.row(i).sum();
        c.R_a(i) = S(1) / c.Z_a(i);
        c.R_r(i) = S(1) / c.Z_r(i);
    }
    c.A_a = c.E_a.array().colwise() * c.R_a.array();
    c.A_r = c.E_r.array().colwise() * c.R_r.array();
}

template <class S>
inline Mat<S> paired_softmax_multipliers(const PairSoftmax<S>& c, const Mat<S>& mA) {
    const Eigen::Index rows = mA.rows(), cols = mA.cols();
    Mat<S> mE(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        S half_r = S(0.5) * (c.R_a(i) + c.R_r(i));
        S mR = S(0);
        for (Eigen::Index j = 0; j < cols; ++j) {
            mE(i, j) = mA(i, j) * half_r;
            mR += mA(i, j) * S(0.5) * (c.E_a(i, j) + c.E_r(i, j));
        }
        // Z -> R is a reciprocal: (R - R_ref)/(Z - Z_ref) = -1/(Z Z_ref), exact.
        S mZ = mR * (-S(1) / (c.Z_a(i) * c.Z_r(i)));
        for (Eigen::Index j = 0; j < cols; ++j) {
            S mEij = mE(i, j) + mZ;
            mE(i, j) = mEij * exp_rescale(c.U_a(i, j), c.U_r(i, j), c.E_a(i, j), c.E_r(i, j));
        }
    }
    return mE;  // multipliers at the pre-shift scores
}

template <class S>
struct PairLn {
    Mat<S> c_a, c_r;       // row-centered inputs
    Vec<S> v_a, v_r;       // biased row variances
    Vec<S> s_a, s_r;       // 1/sqrt(v + eps)
};

template <class S>
inline void paired_layernorm(const Mat<S>& xa, const Mat<S>& xr, const Vec<S>& gamma,
                             const Vec<S>& beta, PairLn<S>& c, Mat<S>& ya, Mat<S>& yr,
                             S eps = S(1e-5)) {
    const Eigen::Index rows = xa.rows(), n = xa.cols();
    c.c_a.resize(rows, n);
    c.c_r.resize(rows, n);
    c.v_a.resize(rows);
    c.v_r.resize(rows);
    c.s_a.resize(rows);
    c.s_r.resize(rows);
    ya.resize(rows, n);
    yr.resize(rows, n);
    for (Eigen::Index i = 0; i < rows; ++i) {
        c.c_a.row(i) = xa.row(i).array() - xa.row(i).mean();
        c.c_r.row(i) = xr.row(i).array() - xr.row(i).mean();
        c.v_a(i) = c.c_a.row(i).squaredNorm() / static_cast<S>(n);
        c.v_r(i) = c.c_r.row(i).squaredNorm() / static_cast<S>(n);
        c.s_a(i) = S(1) / std::sqrt(c.v_a(i) + eps);
        c.s_r(i) = S(1) / std::sqrt(c.v_r(i) + eps);
        ya.row(i) = (c.c_a.row(i) * c.s_a(i)).cwiseProduct(gamma.transpose()) +
                    beta.transpose();
        yr.row(i) = (c.c_r.row(i) * c.s_r(i)).cwiseProduct(gamma.transpose()) +
                    beta.transpose();
    }
}

template <class S>
inline Mat<S> paired_layernorm_multipliers(const PairLn<S>& c, const Vec<S>& gamma,
                                           const Mat<S>& my, S eps = S(1e-5)) {
    const Eigen::Index rows = my.rows(), n = my.cols();
    Mat<S> mx(rows, n);
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> my0 = my.row(i).cwiseProduct(gamma.transpose());
        S half_s = S(0.5) * (c.s_a(i) + c.s_r(i));
        Eigen::Matrix<S, 1, Eigen::Dynamic> half_c =
            S(0.5) * (c.c_a.row(i) + c.c_r.row(i));
        Eigen::Matrix<S, 1, Eigen::Dynamic> mc = my0 * half_s;
        S ms = my0.cwiseProduct(half_c).sum();
        // rsqrt rescale, algebraically exact:
        // (s_a - s_r)/(v_a - v_r) = -1 / (sqrt(A) sqrt(B) (sqrt(A)+sqrt(B)))
        S sqa = std::sqrt(c.v_a(i) + eps), sqb = std::sqrt(c.v_r(i) + eps);
        S mv = ms * (-S(1) / (sqa * sqb * (sqa + sqb)));
        mc += (mv * S(2) / static_cast<S>(n)) * half_c;  // v = mean(c^2)
        mx.row(i) = mc.array() - mc.mean();              // c = x - mean(x)
    }
    return mx;
}

template <class S>
struct PairLayer {
    PairLn<S> ln1;
    Pair<S> Q, K, V;
    std::vector<PairSoftmax<S>> attn;  // per head
    PairLn<S> ln2;
    Pair<S> f1, g;
};

template <class S>
struct PairFwd {
    Pair<S> X;
    std::vector<PairLayer<S>> layers;
    PairLn<S> lnf;
    Pair<S> hf;
    PairSoftmax<S> out;  // softmax over logits (1 x labels)
};

}  // namespace deeplift_detail

template <class S>
struct DeepliftResult {
    std::vector<double> token_scores;  // signed, summed over embedding width
    double prob_input = 0;             // target-class probability, input pass
    double prob_baseline = 0;          // target-class probability, baseline pass
};

template <class S>
DeepliftResult<S> deeplift_contributions(const TransformerClassifier<S>& model,
                                         const std::vector<int>& ids,
                                         const std::vector<int>& baseline_ids,
                                         int target) {
    using namespace deeplift_detail;
    EVIDEX_REQUIRE(ids.size() == baseline_ids.size(), "shape",
                   "baseline length differs from input length");
    EVIDEX_REQUIRE(target >= 0 && target < model.cfg.label_count, "config",
                   "target class out of range");
    const ModelConfig& cfg = model.cfg;
    const auto& p = model.p;
    const int H = cfg.n_heads;
    const int dh = cfg.head_dim();
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const Eigen::Index L = static_cast<Eigen::Index>(ids.size());
    const bool relu = cfg.activation == "relu";

    // ---- paired forward ----
    PairFwd<S> f;
    f.X.a = model.embed(ids);
    f.X.r = model.embed(baseline_ids);
    Pair<S> h = f.X;
    f.layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const auto& W = p.layers[l];
        auto& c = f.layers[l];
        Pair<S> a;
        paired_layernorm(h.a, h.r, W.ln1_g, W.ln1_b, c.ln1, a.a, a.r);
        c.Q.a = (a.a * W.W_q).rowwise() + W.b_q.transpose();
        c.Q.r = (a.r * W.W_q).rowwise() + W.b_q.transpose();
        c.K.a = (a.a * W.W_k).rowwise() + W.b_k.transpose();
        c.K.r = (a.r * W.W_k).rowwise() + W.b_k.transpose();
        c.V.a = (a.a * W.W_v).rowwise() + W.b_v.transpose();
        c.V.r = (a.r * W.W_v).rowwise() + W.b_v.transpose();
        c.attn.resize(static_cast<size_t>(H));
        Pair<S> concat;
        concat.a.resize(L, cfg.d_model);
        concat.r.resize(L, cfg.d_model);
        for (int hd = 0; hd < H; ++hd) {
            Mat<S> Sa = c.Q.a.middleCols(hd * dh, dh) *
                        c.K.a.middleCols(hd * dh, dh).transpose() * scale;
            Mat<S> Sr = c.Q.r.middleCols(hd * dh, dh) *
                        c.K.r.middleCols(hd * dh, dh).transpose() * scale;
            paired_softmax_rows(Sa, Sr, c.attn[static_cast<size_t>(hd)]);
            concat.a.middleCols(hd * dh, dh) =
                c.attn[static_cast<size_t>(hd)].A_a * c.V.a.middleCols(hd * dh, dh);
            concat.r.middleCols(hd * dh, dh) =
                c.attn[static_cast<size_t>(hd)].A_r * c.V.r.middleCols(hd * dh, dh);
        }
        Pair<S> h1;
        h1.a = h.a + ((concat.a * W.W_o).rowwise() + W.b_o.transpose());
        h1.r = h.r + ((concat.r * W.W_o).rowwise() + W.b_o.transpose());
        Pair<S> b;
        paired_layernorm(h1.a, h1.r, W.ln2_g, W.ln2_b, c.ln2, b.a, b.r);
        c.f1.a = (b.a * W.W_ff1).rowwise() + W.b_ff1.transpose();
        c.f1.r = (b.r * W.W_ff1).rowwise() + W.b_ff1.transpose();
        if (relu) {
            c.g.a = c.f1.a.cwiseMax(S(0));
            c.g.r = c.f1.r.cwiseMax(S(0));
        } else {
            c.g.a = nn::gelu_mat(c.f1.a);
            c.g.r = nn::gelu_mat(c.f1.r);
        }
        h.a = h1.a + ((c.g.a * W.W_ff2).rowwise() + W.b_ff2.transpose());
        h.r = h1.r + ((c.g.r * W.W_ff2).rowwise() + W.b_ff2.transpose());
    }
    paired_layernorm(h.a, h.r, p.lnf_g, p.lnf_b, f.lnf, f.hf.a, f.hf.r);
    Mat<S> logits_a = f.hf.a.row(0) * p.W_out + p.b_out.transpose();
    Mat<S> logits_r = f.hf.r.row(0) * p.W_out + p.b_out.transpose();
    paired_softmax_rows(logits_a, logits_r, f.out);

    // ---- multiplier backward ----
    Mat<S> mprobs = Mat<S>::Zero(1, cfg.label_count);
    mprobs(0, target) = S(1);
    Mat<S> mlogits = paired_softmax_multipliers(f.out, mprobs);
    Mat<S> mhf = Mat<S>::Zero(L, cfg.d_model);
    mhf.row(0) = mlogits * p.W_out.transpose();
    Mat<S> mh = paired_layernorm_multipliers(f.lnf, p.lnf_g, mhf);

    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const auto& W = p.layers[static_cast<size_t>(l)];
        const auto& c = f.layers[static_cast<size_t>(l)];
        Mat<S> mh1 = mh;  // residual
        Mat<S> mg = mh * W.W_ff2.transpose();
        Mat<S> mf1(L, cfg.d_ff);
        for (Eigen::Index i = 0; i < L; ++i)
            for (Eigen::Index j = 0; j < cfg.d_ff; ++j) {
                S fa = c.f1.a(i, j), fr = c.f1.r(i, j);
                S df = fa - fr;
                S m;
                if (std::abs(df) > rescale_eps<S>()) {
                    m = (c.g.a(i, j) - c.g.r(i, j)) / df;
                } else {
                    S mid = S(0.5) * (fa + fr);
                    m = relu ? (mid > S(0) ? S(1) : S(0)) : nn::gelu_prime(mid);
                }
                mf1(i, j) = mg(i, j) * m;
            }
        Mat<S> mb = mf1 * W.W_ff1.transpose();
        mh1 += paired_layernorm_multipliers(c.ln2, W.ln2_g, mb);

        Mat<S> min = mh1;  // residual
        Mat<S> mconcat = mh1 * W.W_o.transpose();
        Mat<S> mQ = Mat<S>::Zero(L, cfg.d_model);
        Mat<S> mK = Mat<S>::Zero(L, cfg.d_model);
        Mat<S> mV = Mat<S>::Zero(L, cfg.d_model);
        for (int hd = 0; hd < H; ++hd) {
            const auto& sm = c.attn[static_cast<size_t>(hd)];
            Mat<S> mOh = mconcat.middleCols(hd * dh, dh);
            Mat<S> halfA = S(0.5) * (sm.A_a + sm.A_r);
            Mat<S> halfV = S(0.5) * (c.V.a.middleCols(hd * dh, dh) +
                                     c.V.r.middleCols(hd * dh, dh));
            Mat<S> mA = mOh * halfV.transpose();
            mV.middleCols(hd * dh, dh) = halfA.transpose() * mOh;
            Mat<S> mS = paired_softmax_multipliers(sm, mA) * scale;
            Mat<S> halfQ = S(0.5) * (c.Q.a.middleCols(hd * dh, dh) +
                                     c.Q.r.middleCols(hd * dh, dh));
            Mat<S> halfK = S(0.5) * (c.K.a.middleCols(hd * dh, dh) +
                                     c.K.r.middleCols(hd * dh, dh));
            mQ.middleCols(hd * dh, dh) = mS * halfK;
            mK.middleCols(hd * dh, dh) = mS.transpose() * halfQ;
        }
        Mat<S> ma = mQ * W.W_q.transpose() + mK * W.W_k.transpose() +
                    mV * W.W_v.transpose();
        min += paired_layernorm_multipliers(c.ln1, W.ln1_g, ma);
        mh = min;
    }

    DeepliftResult<S> out;
    out.prob_input = static_cast<double>(f.out.A_a(0, target));
    out.prob_baseline = static_cast<double>(f.out.A_r(0, target));
    Mat<S> delta = f.X.a - f.X.r;
    out.token_scores.resize(static_cast<size_t>(L));
    for (Eigen::Index i = 0; i < L; ++i)
        out.token_scores[static_cast<size_t>(i)] =
            static_cast<double>(mh.row(i).cwiseProduct(delta.row(i)).sum());
    return out;
}

}  // namespace evidex
