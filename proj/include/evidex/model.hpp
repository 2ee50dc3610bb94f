#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "evidex/common.hpp"
#include "evidex/encoding.hpp"
#include "evidex/nn.hpp"

namespace evidex {

using nn::Mat;
using nn::Vec;

// Compact pre-LN transformer encoder trained from random initialization.
// Predictions come from the first position ([CLS]); the final layer's
// attention from that position is exposed for regularization and analysis,
// and the embedding pathway is differentiable for attribution.
struct ModelConfig {
    int vocab_size = 0;
    int label_count = 0;
    int max_len = 128;
    int d_model = 32;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 64;
    double init_scale = 0.1;
    std::string activation = "gelu";

    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        EVIDEX_REQUIRE(vocab_size >= 5, "config", "vocab_size must cover the special tokens");
        EVIDEX_REQUIRE(label_count >= 2, "config", "label_count must be >= 2");
        EVIDEX_REQUIRE(max_len >= 4, "config", "max_len must be >= 4");
        EVIDEX_REQUIRE(n_heads >= 1 && d_model % n_heads == 0, "config",
                       "d_model must be divisible by n_heads");
        EVIDEX_REQUIRE(n_layers >= 1 && d_ff >= 1, "config", "invalid layer dims");
        EVIDEX_REQUIRE(activation == "gelu" || activation == "relu", "unsupported-layer",
                       "activation '" + activation + "' is not supported");
    }

    json to_json() const {
        return json{{"vocab_size", vocab_size}, {"label_count", label_count},
                    {"max_len", max_len},       {"d_model", d_model},
                    {"n_heads", n_heads},       {"n_layers", n_layers},
                    {"d_ff", d_ff},             {"init_scale", init_scale},
                    {"activation", activation}};
    }

    static ModelConfig from_json(const json& j) {
        ModelConfig c;
        c.vocab_size = j.at("vocab_size").get<int>();
        c.label_count = j.at("label_count").get<int>();
        c.max_len = j.at("max_len").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.n_layers = j.at("n_layers").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.init_scale = j.at("init_scale").get<double>();
        c.activation = j.value("activation", "gelu");
        c.validate();
        return c;
    }
};

template <class S>
struct LayerParams {
    Vec<S> ln1_g, ln1_b, ln2_g, ln2_b;
    Mat<S> W_q, W_k, W_v, W_o, W_ff1, W_ff2;
    Vec<S> b_q, b_k, b_v, b_o, b_ff1, b_ff2;
};

template <class S>
struct Params {
    Mat<S> tok_emb;  // vocab x d
    Mat<S> pos_emb;  // max_len x d
    std::vector<LayerParams<S>> layers;
    Vec<S> lnf_g, lnf_b;
    Mat<S> W_out;  // d x labels
    Vec<S> b_out;

    // Visit every tensor with a stable name; vectors are visited as
    // single-column matrices via the second callback.
    template <class FM, class FV>
    void visit(FM&& fm, FV&& fv) {
        fm("tok_emb", tok_emb);
        fm("pos_emb", pos_emb);
        for (size_t l = 0; l < layers.size(); ++l) {
            auto& L = layers[l];
            const std::string p = "layers." + std::to_string(l) + ".";
            fv(p + "ln1_g", L.ln1_g);
            fv(p + "ln1_b", L.ln1_b);
            fm(p + "W_q", L.W_q);
            fv(p + "b_q", L.b_q);
            fm(p + "W_k", L.W_k);
            fv(p + "b_k", L.b_k);
            fm(p + "W_v", L.W_v);
            fv(p + "b_v", L.b_v);
            fm(p + "W_o", L.W_o);
            fv(p + "b_o", L.b_o);
            fv(p + "ln2_g", L.ln2_g);
            fv(p + "ln2_b", L.ln2_b);
            fm(p + "W_ff1", L.W_ff1);
            fv(p + "b_ff1", L.b_ff1);
            fm(p + "W_ff2", L.W_ff2);
            fv(p + "b_ff2", L.b_ff2);
        }
        fv("lnf_g", lnf_g);
        fv("lnf_b", lnf_b);
        fm("W_out", W_out);
        fv("b_out", b_out);
    }
};

namespace detail {

template <class S>
void size_params(const ModelConfig& c, Params<S>& p) {
    p.tok_emb.setZero(c.vocab_size, c.d_model);
    p.pos_emb.setZero(c.max_len, c.d_model);
    p.layers.resize(static_cast<size_t>(c.n_layers));
    for (auto& L : p.layers) {
        L.ln1_g.setZero(c.d_model);
        L.ln1_b.setZero(c.d_model);
        L.ln2_g.setZero(c.d_model);
        L.ln2_b.setZero(c.d_model);
        L.W_q.setZero(c.d_model, c.d_model);
        L.W_k.setZero(c.d_model, c.d_model);
        L.W_v.setZero(c.d_model, c.d_model);
        L.W_o.setZero(c.d_model, c.d_model);
        L.b_q.setZero(c.d_model);
        L.b_k.setZero(c.d_model);
        L.b_v.setZero(c.d_model);
        L.b_o.setZero(c.d_model);
        L.W_ff1.setZero(c.d_model, c.d_ff);
        L.b_ff1.setZero(c.d_ff);
        L.W_ff2.setZero(c.d_ff, c.d_model);
        L.b_ff2.setZero(c.d_model);
    }
    p.lnf_g.setZero(c.d_model);
    p.lnf_b.setZero(c.d_model);
    p.W_out.setZero(c.d_model, c.label_count);
    p.b_out.setZero(c.label_count);
}

}  // namespace detail

// Forward caches, kept per call so inference stays read-only on the model.
template <class S>
struct LayerFwd {
    Mat<S> in;
    nn::LayerNormCache<S> ln1;
    Mat<S> a, Q, K, V;
    std::vector<Mat<S>> A;  // per-head attention probabilities (L x L)
    Mat<S> concat, attn_out, h1;
    nn::LayerNormCache<S> ln2;
    Mat<S> b, f1, g, f2, out;
};

template <class S>
struct Fwd {
    Mat<S> X;
    std::vector<LayerFwd<S>> layers;
    nn::LayerNormCache<S> lnf;
    Mat<S> hf;
    Vec<S> logits, probs;
};

template <class S>
class TransformerClassifier {
public:
    ModelConfig cfg;
    Params<S> p;

    TransformerClassifier() = default;
    explicit TransformerClassifier(const ModelConfig& config) : cfg(config) {
        cfg.validate();
        detail::size_params(cfg, p);
    }

    // Random encoder, zero classification head: an untrained model predicts
    // the uniform distribution.
    void init(uint64_t seed) {
        Rng rng(seed);
        auto fill = [&](Mat<S>& m) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i)
                    m(i, j) = static_cast<S>(rng.gaussian() * cfg.init_scale);
        };
        fill(p.tok_emb);
        fill(p.pos_emb);
        for (auto& L : p.layers) {
            fill(L.W_q);
            fill(L.W_k);
            fill(L.W_v);
            fill(L.W_o);
            fill(L.W_ff1);
            fill(L.W_ff2);
            L.ln1_g.setOnes();
            L.ln2_g.setOnes();
        }
        p.lnf_g.setOnes();
        p.W_out.setZero();
        p.b_out.setZero();
    }

    template <class T>
    TransformerClassifier<T> cast() const {
        TransformerClassifier<T> out(cfg);
        auto src = const_cast<Params<S>&>(p);
        // Walk both parameter sets in lockstep via names.
        std::vector<Mat<S>*> src_m;
        std::vector<Vec<S>*> src_v;
        src.visit([&](const std::string&, Mat<S>& m) { src_m.push_back(&m); },
                  [&](const std::string&, Vec<S>& v) { src_v.push_back(&v); });
        size_t im = 0, iv = 0;
        out.p.visit(
            [&](const std::string&, Mat<T>& m) { m = src_m[im++]->template cast<T>(); },
            [&](const std::string&, Vec<T>& v) { v = src_v[iv++]->template cast<T>(); });
        return out;
    }

    void check_ids(const std::vector<int>& ids) const {
        EVIDEX_REQUIRE(!ids.empty(), "encoding", "empty token sequence");
        EVIDEX_REQUIRE(static_cast<int>(ids.size()) <= cfg.max_len, "length-overflow",
                       "sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                           std::to_string(cfg.max_len));
        for (int id : ids)
            EVIDEX_REQUIRE(id >= 0 && id < cfg.vocab_size, "vocab", "token id out of range");
    }

    Mat<S> embed(const std::vector<int>& ids) const {
        check_ids(ids);
        const Eigen::Index L = static_cast<Eigen::Index>(ids.size());
        Mat<S> X(L, cfg.d_model);
        for (Eigen::Index i = 0; i < L; ++i)
            X.row(i) = p.tok_emb.row(ids[static_cast<size_t>(i)]) + p.pos_emb.row(i);
        return X;
    }

    Fwd<S> forward(const Mat<S>& X) const {
        EVIDEX_REQUIRE(X.cols() == cfg.d_model, "shape", "embedding width mismatch");
        EVIDEX_REQUIRE(X.rows() >= 1, "shape", "empty embedding matrix");
        EVIDEX_REQUIRE(X.rows() <= cfg.max_len, "length-overflow",
                       "embedding rows exceed max_len");
        const int H = cfg.n_heads;
        const int dh = cfg.head_dim();
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));

        Fwd<S> f;
        f.X = X;
        Mat<S> h = X;
        f.layers.resize(p.layers.size());
        for (size_t l = 0; l < p.layers.size(); ++l) {
            const auto& W = p.layers[l];
            auto& c = f.layers[l];
            c.in = h;
            c.a = nn::layernorm_forward(h, W.ln1_g, W.ln1_b, c.ln1);
            c.Q = (c.a * W.W_q).rowwise() + W.b_q.transpose();
            c.K = (c.a * W.W_k).rowwise() + W.b_k.transpose();
            c.V = (c.a * W.W_v).rowwise() + W.b_v.transpose();
            c.A.resize(static_cast<size_t>(H));
            c.concat.resize(h.rows(), cfg.d_model);
            for (int hd = 0; hd < H; ++hd) {
                auto Qh = c.Q.middleCols(hd * dh, dh);
                auto Kh = c.K.middleCols(hd * dh, dh);
                auto Vh = c.V.middleCols(hd * dh, dh);
                Mat<S> scores = Qh * Kh.transpose() * scale;
                c.A[static_cast<size_t>(hd)] = nn::softmax_rows(scores);
                c.concat.middleCols(hd * dh, dh) = c.A[static_cast<size_t>(hd)] * Vh;
            }
            c.attn_out = (c.concat * W.W_o).rowwise() + W.b_o.transpose();
            c.h1 = c.in + c.attn_out;
            c.b = nn::layernorm_forward(c.h1, W.ln2_g, W.ln2_b, c.ln2);
            c.f1 = (c.b * W.W_ff1).rowwise() + W.b_ff1.transpose();
            c.g = activation_forward(c.f1);
            c.f2 = (c.g * W.W_ff2).rowwise() + W.b_ff2.transpose();
            c.out = c.h1 + c.f2;
            h = c.out;
        }
        f.hf = nn::layernorm_forward(h, p.lnf_g, p.lnf_b, f.lnf);
        f.logits = (f.hf.row(0) * p.W_out).transpose() + p.b_out;
        Mat<S> pm = nn::softmax_rows(Mat<S>(f.logits.transpose()));
        f.probs = pm.row(0).transpose();
        return f;
    }

    Vec<S> predict_from_embeddings(const Mat<S>& X) const {
        return forward(X).probs;
    }

    Vec<S> predict(const std::vector<int>& ids) const {
        return predict_from_embeddings(embed(ids));
    }

    Vec<S> predict(const EncodedInstance& enc) const { return predict(enc.ids); }

    // Final-layer attention from position 0, averaged over heads.
    Vec<S> cls_attention(const std::vector<int>& ids) const {
        Fwd<S> f = forward(embed(ids));
        return cls_attention_from(f);
    }

    Vec<S> cls_attention_from(const Fwd<S>& f) const {
        const auto& last = f.layers.back();
        Vec<S> alpha = Vec<S>::Zero(last.A[0].cols());
        for (const auto& A : last.A) alpha += A.row(0).transpose();
        return alpha / static_cast<S>(cfg.n_heads);
    }

    // Backpropagation. `dlogits` is the loss gradient at the logits;
    // `dattn_cls` (optional, length L) is an extra loss gradient on the
    // head-averaged final-layer attention from position 0. Parameter
    // gradients accumulate into `grads`; dX is the gradient at the
    // embedding matrix when requested.
    void backward(const Fwd<S>& f, const std::vector<int>& ids, const Vec<S>& dlogits,
                  const Vec<S>* dattn_cls, Params<S>* grads, Mat<S>* dX_out) const {
        const int H = cfg.n_heads;
        const int dh = cfg.head_dim();
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));
        const Eigen::Index L = f.X.rows();

        Mat<S> dhf = Mat<S>::Zero(L, cfg.d_model);
        dhf.row(0) = (p.W_out * dlogits).transpose();
        if (grads) {
            grads->W_out += f.hf.row(0).transpose() * dlogits.transpose();
            grads->b_out += dlogits;
        }
        Vec<S> dg_sink = Vec<S>::Zero(cfg.d_model), db_sink = Vec<S>::Zero(cfg.d_model);
        Mat<S> dstream = grads
                             ? nn::layernorm_backward(dhf, p.lnf_g, f.lnf, grads->lnf_g,
                                                      grads->lnf_b)
                             : nn::layernorm_backward(dhf, p.lnf_g, f.lnf, dg_sink, db_sink);

        for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
            const auto& W = p.layers[static_cast<size_t>(l)];
            const auto& c = f.layers[static_cast<size_t>(l)];
            LayerParams<S>* G = grads ? &grads->layers[static_cast<size_t>(l)] : nullptr;

            // out = h1 + f2
            Mat<S> df2 = dstream;
            Mat<S> dh1 = dstream;
            // f2 = g W2 + b2
            Mat<S> dg = df2 * W.W_ff2.transpose();
            if (G) {
                G->W_ff2 += c.g.transpose() * df2;
                G->b_ff2 += df2.colwise().sum().transpose();
            }
            Mat<S> df1 = dg.cwiseProduct(activation_prime(c.f1));
            Mat<S> db = df1 * W.W_ff1.transpose();
            if (G) {
                G->W_ff1 += c.b.transpose() * df1;
                G->b_ff1 += df1.colwise().sum().transpose();
            }
            if (G)
                dh1 += nn::layernorm_backward(db, W.ln2_g, c.ln2, G->ln2_g, G->ln2_b);
            else {
                Vec<S> s1 = Vec<S>::Zero(cfg.d_model), s2 = Vec<S>::Zero(cfg.d_model);
                dh1 += nn::layernorm_backward(db, W.ln2_g, c.ln2, s1, s2);
            }

            // h1 = in + attn_out
            Mat<S> dattn = dh1;
            Mat<S> dconcat = dattn * W.W_o.transpose();
            if (G) {
                G->W_o += c.concat.transpose() * dattn;
                G->b_o += dattn.colwise().sum().transpose();
            }
            Mat<S> dQ = Mat<S>::Zero(L, cfg.d_model);
            Mat<S> dK = Mat<S>::Zero(L, cfg.d_model);
            Mat<S> dV = Mat<S>::Zero(L, cfg.d_model);
            const bool inject = dattn_cls && l == static_cast<int>(p.layers.size()) - 1;
            for (int hd = 0; hd < H; ++hd) {
                const Mat<S>& Ah = c.A[static_cast<size_t>(hd)];
                auto Qh = c.Q.middleCols(hd * dh, dh);
                auto Kh = c.K.middleCols(hd * dh, dh);
                auto Vh = c.V.middleCols(hd * dh, dh);
                Mat<S> dOh = dconcat.middleCols(hd * dh, dh);
                Mat<S> dAh = dOh * Vh.transpose();
                if (inject) dAh.row(0) += dattn_cls->transpose() / static_cast<S>(H);
                dV.middleCols(hd * dh, dh) = Ah.transpose() * dOh;
                Mat<S> dSh = nn::softmax_rows_backward(Ah, dAh);
                dQ.middleCols(hd * dh, dh) = dSh * Kh * scale;
                dK.middleCols(hd * dh, dh) = dSh.transpose() * Qh * scale;
            }
            Mat<S> da = dQ * W.W_q.transpose() + dK * W.W_k.transpose() +
                        dV * W.W_v.transpose();
            if (G) {
                G->W_q += c.a.transpose() * dQ;
                G->b_q += dQ.colwise().sum().transpose();
                G->W_k += c.a.transpose() * dK;
                G->b_k += dK.colwise().sum().transpose();
                G->W_v += c.a.transpose() * dV;
                G->b_v += dV.colwise().sum().transpose();
            }
            Mat<S> din;
            if (G)
                din = nn::layernorm_backward(da, W.ln1_g, c.ln1, G->ln1_g, G->ln1_b);
            else {
                Vec<S> s1 = Vec<S>::Zero(cfg.d_model), s2 = Vec<S>::Zero(cfg.d_model);
                din = nn::layernorm_backward(da, W.ln1_g, c.ln1, s1, s2);
            }
            dstream = dh1 + din;
        }

        if (grads) {
            for (Eigen::Index i = 0; i < L; ++i) {
                grads->tok_emb.row(ids[static_cast<size_t>(i)]) += dstream.row(i);
                grads->pos_emb.row(i) += dstream.row(i);
            }
        }
        if (dX_out) *dX_out = dstream;
    }

    // Gradient of the target-class probability with respect to the
    // embedding matrix.
    Mat<S> probability_gradient(const Mat<S>& X, int target) const {
        Fwd<S> f = forward(X);
        EVIDEX_REQUIRE(target >= 0 && target < cfg.label_count, "config",
                       "target class out of range");
        // d p_t / d logits = p_t (e_t - p)
        Vec<S> dlogits = -f.probs * f.probs(target);
        dlogits(target) += f.probs(target);
        Mat<S> dX;
        std::vector<int> dummy_ids;  // unused when grads == nullptr
        backward(f, dummy_ids, dlogits, nullptr, nullptr, &dX);
        return dX;
    }

private:
    Mat<S> activation_forward(const Mat<S>& x) const {
        if (cfg.activation == "relu") return x.cwiseMax(S(0));
        return nn::gelu_mat(x);
    }

    Mat<S> activation_prime(const Mat<S>& x) const {
        if (cfg.activation == "relu")
            return x.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); });
        return x.unaryExpr([](S v) { return nn::gelu_prime(v); });
    }

    template <class T>
    friend class TransformerClassifier;
};

}  // namespace evidex
