#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evidex/corpus.hpp"
#include "evidex/encoding.hpp"
#include "evidex/evaluation.hpp"
#include "evidex/model.hpp"

namespace evidex {

struct TrainingConfig {
    int epochs = 15;               // with early stopping on validation macro-F1
    double learning_rate = 1e-5;   // linear warmup then linear decay
    int batch_size = 0;            // 0 = auto: 16 with both regularizers, else 8
    bool reg_attention = false;
    bool reg_entropy = false;
    double attention_weight = 1.0;
    double entropy_weight = 1.0;
    double warmup_fraction = 0.1;
    int patience = 3;
    double weight_decay = 0.01;
    double grad_clip = 1.0;  // global-norm clip; 0 disables
    uint64_t seed = 13;

    bool attention_active() const { return reg_attention && attention_weight > 0.0; }
    bool entropy_active() const { return reg_entropy && entropy_weight > 0.0; }
    int effective_batch_size() const {
        if (batch_size > 0) return batch_size;
        return attention_active() && entropy_active() ? 16 : 8;
    }

    json to_json() const {
        return json{{"epochs", epochs},
                    {"learning_rate", learning_rate},
                    {"batch_size", batch_size},
                    {"reg_attention", reg_attention},
                    {"reg_entropy", reg_entropy},
                    {"attention_weight", attention_weight},
                    {"entropy_weight", entropy_weight},
                    {"warmup_fraction", warmup_fraction},
                    {"patience", patience},
                    {"weight_decay", weight_decay},
                    {"grad_clip", grad_clip},
                    {"seed", seed}};
    }
};

// Cross-entropy against the gold label; zero iff all mass on gold.
template <class S>
double loss_classification(const Vec<S>& probs, int gold) {
    EVIDEX_REQUIRE(gold >= 0 && gold < probs.size(), "config", "gold label out of range");
    double p = static_cast<double>(probs(gold));
    return -std::log(std::max(p, 1e-300));
}

// Document-region token positions covered by the evidence sentences.
inline std::vector<int> evidence_token_positions(const EncodedInstance& enc,
                                                 const std::vector<int>& evidence) {
    std::vector<int> positions;
    for (int s : evidence) {
        auto it = enc.sentence_spans.find(s);
        if (it == enc.sentence_spans.end()) continue;  // fully truncated
        for (int p = it->second.first; p < it->second.second; ++p) positions.push_back(p);
    }
    return positions;
}

// -log of the attention mass on evidence tokens. `alpha` is the raw
// head-averaged attention from the classification position, so the loss is
// zero only when all attention mass sits on evidence tokens.
template <class S>
double loss_attention_reg(const Vec<S>& alpha, const EncodedInstance& enc,
                          const std::vector<int>& evidence) {
    EVIDEX_REQUIRE(!evidence.empty(), "config", "attention loss needs non-empty evidence");
    std::vector<int> positions = evidence_token_positions(enc, evidence);
    EVIDEX_REQUIRE(!positions.empty(), "truncated-evidence",
                   "evidence entirely truncated away");
    double mass = 0.0;
    for (int p : positions) mass += static_cast<double>(alpha(p));
    return -std::log(std::max(mass, 1e-300));
}

// Shifted negative entropy: zero at the uniform distribution, log d at a
// one-hot; minimizing it maximizes prediction entropy.
template <class S>
double loss_entropy_max(const Vec<S>& probs) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        double p = static_cast<double>(probs(i));
        if (p > 0) acc += p * std::log(p);
    }
    return acc + std::log(static_cast<double>(probs.size()));
}

// Auxiliary D' = D minus evidence example for entropy maximization. None
// when the instance is unsupervised or evidence covers the whole document.
inline std::optional<DocumentInstance> make_entropy_example(const DocumentInstance& inst) {
    if (!inst.gold_evidence || inst.gold_evidence->empty()) return std::nullopt;
    if (inst.gold_evidence->size() >= inst.sentences.size()) return std::nullopt;
    std::set<int> ev(inst.gold_evidence->begin(), inst.gold_evidence->end());
    DocumentInstance aux;
    aux.doc_id = inst.doc_id + "#entropy";
    for (size_t s = 0; s < inst.sentences.size(); ++s)
        if (!ev.count(static_cast<int>(s))) aux.sentences.push_back(inst.sentences[s]);
    if (aux.sentences.empty()) return std::nullopt;
    aux.query = inst.query;
    aux.label = -1;
    aux.split = inst.split;
    aux.entropy_target = true;
    return aux;
}

struct EpochStats {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_attn = 0.0;     // mean over instances where it applied
    double loss_entropy = 0.0;  // mean over auxiliary examples
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    double lr = 0.0;
    int attn_skipped = 0;  // evidence entirely truncated

    json to_json() const {
        return json{{"epoch", epoch},
                    {"loss_total", loss_total},
                    {"loss_ce", loss_ce},
                    {"loss_attn", loss_attn},
                    {"loss_entropy", loss_entropy},
                    {"val_accuracy", val_accuracy},
                    {"val_macro_f1", val_macro_f1},
                    {"lr", lr},
                    {"attn_skipped", attn_skipped}};
    }
};

template <class S>
struct TrainResult {
    TransformerClassifier<S> model;
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
};

namespace detail {

template <class S>
struct TensorRefs {
    std::vector<Mat<S>*> mats;
    std::vector<Vec<S>*> vecs;
};

template <class S>
TensorRefs<S> collect_refs(Params<S>& p) {
    TensorRefs<S> refs;
    p.visit([&](const std::string&, Mat<S>& m) { refs.mats.push_back(&m); },
            [&](const std::string&, Vec<S>& v) { refs.vecs.push_back(&v); });
    return refs;
}

template <class S>
class AdamW {
public:
    AdamW(const ModelConfig& cfg, double weight_decay)
        : weight_decay_(weight_decay) {
        size_params(cfg, m_);
        size_params(cfg, v_);
    }

    void step(Params<S>& params, Params<S>& grads, double lr) {
        ++t_;
        auto pr = collect_refs(params);
        auto gr = collect_refs(grads);
        auto mr = collect_refs(m_);
        auto vr = collect_refs(v_);
        const double bc1 = 1.0 - std::pow(0.9, t_);
        const double bc2 = 1.0 - std::pow(0.999, t_);
        auto update = [&](auto& p, auto& g, auto& m, auto& v, bool decay) {
            m = S(0.9) * m + S(0.1) * g;
            v = S(0.999) * v + S(0.001) * g.cwiseProduct(g);
            auto mhat = (m / S(bc1)).eval();
            auto vhat = (v / S(bc2)).eval();
            auto denom = (vhat.cwiseSqrt().array() + S(1e-8)).matrix().eval();
            p -= S(lr) * mhat.cwiseQuotient(denom);
            if (decay && weight_decay_ > 0) p -= S(lr * weight_decay_) * p;
        };
        for (size_t i = 0; i < pr.mats.size(); ++i)
            update(*pr.mats[i], *gr.mats[i], *mr.mats[i], *vr.mats[i], true);
        for (size_t i = 0; i < pr.vecs.size(); ++i)
            update(*pr.vecs[i], *gr.vecs[i], *mr.vecs[i], *vr.vecs[i], false);
    }

private:
    Params<S> m_, v_;
    double weight_decay_ = 0.0;
    long t_ = 0;
};

template <class S>
void zero_params(Params<S>& p) {
    p.visit([](const std::string&, Mat<S>& m) { m.setZero(); },
            [](const std::string&, Vec<S>& v) { v.setZero(); });
}

template <class S>
double grad_global_norm(Params<S>& g) {
    double acc = 0.0;
    g.visit([&](const std::string&, Mat<S>& m) { acc += static_cast<double>(m.squaredNorm()); },
            [&](const std::string&, Vec<S>& v) { acc += static_cast<double>(v.squaredNorm()); });
    return std::sqrt(acc);
}

template <class S>
void scale_params(Params<S>& g, double f) {
    g.visit([&](const std::string&, Mat<S>& m) { m *= S(f); },
            [&](const std::string&, Vec<S>& v) { v *= S(f); });
}

}  // namespace detail

// Total loss: cross-entropy, plus attention regularization on
// evidence-supervised instances, plus entropy maximization on auxiliary
// D-minus-evidence examples interleaved into the same batches as their
// source instances.
template <class S = float>
TrainResult<S> train(const ModelConfig& model_cfg, const Vocabulary& vocab,
                     const std::vector<DocumentInstance>& train_insts,
                     const std::vector<DocumentInstance>& val_insts,
                     const TrainingConfig& cfg) {
    EVIDEX_REQUIRE(!train_insts.empty(), "config", "empty training set");
    const bool attn_on = cfg.attention_active();
    const bool ent_on = cfg.entropy_active();
    if (attn_on || ent_on) {
        bool any_supervised = false;
        for (const auto& inst : train_insts)
            if (inst.gold_evidence && !inst.gold_evidence->empty()) any_supervised = true;
        EVIDEX_REQUIRE(any_supervised, "config",
                       "regularizers requested but no instance carries gold evidence");
    }

    struct Unit {
        size_t index;                       // into train_insts
        EncodedInstance enc;
        std::vector<int> attn_positions;    // evidence token positions, may be empty
        std::optional<EncodedInstance> aux; // D' encoding for entropy
    };
    std::vector<Unit> units;
    units.reserve(train_insts.size());
    for (size_t i = 0; i < train_insts.size(); ++i) {
        const auto& inst = train_insts[i];
        Unit u;
        u.index = i;
        u.enc = encode(vocab, inst, model_cfg.max_len);
        if (attn_on && inst.gold_evidence && !inst.gold_evidence->empty())
            u.attn_positions = evidence_token_positions(u.enc, *inst.gold_evidence);
        if (ent_on) {
            if (auto aux = make_entropy_example(inst))
                u.aux = encode(vocab, *aux, model_cfg.max_len);
        }
        units.push_back(std::move(u));
    }
    std::vector<EncodedInstance> val_encs;
    val_encs.reserve(val_insts.size());
    for (const auto& inst : val_insts) val_encs.push_back(encode(vocab, inst, model_cfg.max_len));

    TrainResult<S> result;
    result.model = TransformerClassifier<S>(model_cfg);
    result.model.init(cfg.seed);
    auto& model = result.model;

    detail::AdamW<S> opt(model_cfg, cfg.weight_decay);
    Params<S> grads;
    detail::size_params(model_cfg, grads);

    const int bs = cfg.effective_batch_size();
    const long steps_per_epoch =
        (static_cast<long>(units.size()) + bs - 1) / bs;
    const long total_steps = steps_per_epoch * cfg.epochs;
    const long warmup_steps =
        std::max<long>(1, std::lround(cfg.warmup_fraction * static_cast<double>(total_steps)));

    Rng shuffle_rng(cfg.seed + 1);
    Params<S> best_params = model.p;
    long step = 0;
    double lr_now = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(units.size());
        std::iota(order.begin(), order.end(), size_t{0});
        shuffle_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        size_t n_ce = 0, n_attn = 0, n_ent = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(bs)) {
            size_t stop = std::min(order.size(), start + static_cast<size_t>(bs));
            detail::zero_params(grads);
            int primaries = 0;
            for (size_t oi = start; oi < stop; ++oi) {
                const Unit& u = units[order[oi]];
                const auto& inst = train_insts[u.index];
                ++primaries;

                Fwd<S> f = model.forward(model.embed(u.enc.ids));
                // cross-entropy
                Vec<S> dlogits = f.probs;
                dlogits(inst.label) -= S(1);
                stats.loss_ce += loss_classification(f.probs, inst.label);
                ++n_ce;

                Vec<S> dattn;
                const Vec<S>* dattn_ptr = nullptr;
                if (attn_on && inst.gold_evidence && !inst.gold_evidence->empty()) {
                    if (u.attn_positions.empty()) {
                        ++stats.attn_skipped;
                    } else {
                        Vec<S> alpha = model.cls_attention_from(f);
                        double mass = 0.0;
                        for (int p : u.attn_positions)
                            mass += static_cast<double>(alpha(p));
                        mass = std::max(mass, 1e-300);
                        stats.loss_attn += -std::log(mass);
                        ++n_attn;
                        dattn = Vec<S>::Zero(alpha.size());
                        for (int p : u.attn_positions)
                            dattn(p) = static_cast<S>(-cfg.attention_weight / mass);
                        dattn_ptr = &dattn;
                    }
                }
                model.backward(f, u.enc.ids, dlogits, dattn_ptr, &grads, nullptr);

                if (u.aux) {
                    Fwd<S> fa = model.forward(model.embed(u.aux->ids));
                    stats.loss_entropy += loss_entropy_max(fa.probs);
                    ++n_ent;
                    // d/dlogits of sum p log p is p (log p + H)
                    double H = -0.0;
                    for (Eigen::Index c = 0; c < fa.probs.size(); ++c) {
                        double pc = static_cast<double>(fa.probs(c));
                        if (pc > 0) H -= pc * std::log(pc);
                    }
                    Vec<S> dl(fa.probs.size());
                    for (Eigen::Index c = 0; c < fa.probs.size(); ++c) {
                        double pc = static_cast<double>(fa.probs(c));
                        double lg = pc > 0 ? std::log(pc) : 0.0;
                        dl(c) = static_cast<S>(cfg.entropy_weight * pc * (lg + H));
                    }
                    model.backward(fa, u.aux->ids, dl, nullptr, &grads, nullptr);
                }
            }
            detail::scale_params(grads, 1.0 / primaries);
            if (cfg.grad_clip > 0) {
                double norm = detail::grad_global_norm(grads);
                if (norm > cfg.grad_clip) detail::scale_params(grads, cfg.grad_clip / norm);
            }
            lr_now = step < warmup_steps
                         ? cfg.learning_rate * static_cast<double>(step + 1) /
                               static_cast<double>(warmup_steps)
                         : cfg.learning_rate *
                               static_cast<double>(total_steps - step) /
                               static_cast<double>(std::max<long>(1, total_steps - warmup_steps));
            opt.step(model.p, grads, std::max(lr_now, 0.0));
            ++step;
        }

        stats.loss_ce = n_ce ? stats.loss_ce / static_cast<double>(n_ce) : 0.0;
        stats.loss_attn = n_attn ? stats.loss_attn / static_cast<double>(n_attn) : 0.0;
        stats.loss_entropy = n_ent ? stats.loss_entropy / static_cast<double>(n_ent) : 0.0;
        stats.loss_total = stats.loss_ce + cfg.attention_weight * stats.loss_attn +
                           cfg.entropy_weight * stats.loss_entropy;
        stats.lr = lr_now;

        if (!val_insts.empty()) {
            std::vector<int> preds, golds;
            for (size_t i = 0; i < val_insts.size(); ++i) {
                Vec<S> probs = model.predict(val_encs[i]);
                Eigen::Index am = 0;
                probs.maxCoeff(&am);
                preds.push_back(static_cast<int>(am));
                golds.push_back(val_insts[i].label);
            }
            LabelMetrics lm = evaluate_labels(preds, golds, model_cfg.label_count);
            stats.val_accuracy = lm.accuracy;
            stats.val_macro_f1 = lm.macro_f1;
        }
        result.history.push_back(stats);

        if (result.best_epoch < 0 || stats.val_macro_f1 > result.best_val_f1) {
            result.best_epoch = epoch;
            result.best_val_f1 = stats.val_macro_f1;
            best_params = model.p;
        }
        if (!val_insts.empty() && epoch - result.best_epoch >= cfg.patience) break;
    }

    model.p = best_params;
    return result;
}

}  // namespace evidex
