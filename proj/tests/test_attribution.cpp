#include <catch2/catch_amalgamated.hpp>

#include "evidex/attribution.hpp"
#include "evidex/pipeline.hpp"
#include "evidex/synthetic.hpp"

using namespace evidex;

namespace {

struct Bench {
    Vocabulary vocab;
    std::vector<DocumentInstance> docs;
    std::vector<EncodedInstance> encs;
    TransformerClassifier<double> model;
};

Bench make_bench(uint64_t seed = 33) {
    SyntheticConfig cfg;
    cfg.n_labels = 4;
    cfg.n_docs = 40;
    cfg.sentences_min = 4;
    cfg.sentences_max = 6;
    cfg.seed = seed;
    Bench b{Vocabulary{}, generate_synthetic_corpus(cfg), {}, {}};
    b.vocab = build_vocabulary(b.docs);
    ModelConfig mc;
    mc.vocab_size = b.vocab.size();
    mc.label_count = cfg.n_labels;
    mc.max_len = 64;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.n_layers = 2;
    mc.d_ff = 24;
    mc.init_scale = 0.3;
    b.model = TransformerClassifier<double>(mc);
    b.model.init(seed + 1);
    Rng rng(seed + 2);
    for (Eigen::Index i = 0; i < b.model.p.W_out.rows(); ++i)
        for (Eigen::Index j = 0; j < b.model.p.W_out.cols(); ++j)
            b.model.p.W_out(i, j) = rng.gaussian() * 0.3;
    for (const auto& d : b.docs) b.encs.push_back(encode(b.vocab, d, mc.max_len));
    return b;
}

int predicted_class(const TransformerClassifier<double>& model, const EncodedInstance& enc) {
    Vec<double> p = model.predict(enc);
    Eigen::Index am = 0;
    p.maxCoeff(&am);
    return static_cast<int>(am);
}

}  // namespace

TEST_CASE("input gradient is zero for a constant model") {
    Bench b = make_bench();
    b.model.p.W_out.setZero();
    b.model.p.b_out.setZero();  // output no longer depends on the input
    auto scores = input_gradient_scores(b.model, b.encs[0], 1);
    for (double s : scores) REQUIRE(s == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("input gradient matches the finite-difference directional derivative") {
    Bench b = make_bench();
    const double h = 1e-5;
    for (size_t i = 0; i < 5; ++i) {
        const auto& enc = b.encs[i];
        int target = predicted_class(b.model, enc);
        auto scores = input_gradient_scores(b.model, enc, target);
        Mat<double> X = b.model.embed(enc.ids);
        int checked = 0, ok = 0;
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            // Directional derivative along the token's own embedding row.
            Mat<double> Xp = X, Xm = X;
            Xp.row(r) += h * X.row(r);
            Xm.row(r) -= h * X.row(r);
            double fd = (b.model.predict_from_embeddings(Xp)(target) -
                         b.model.predict_from_embeddings(Xm)(target)) /
                        (2 * h);
            if (std::abs(scores[static_cast<size_t>(r)]) <= 1e-8) continue;
            ++checked;
            if (std::abs(fd - scores[static_cast<size_t>(r)]) /
                    std::abs(scores[static_cast<size_t>(r)]) <
                1e-3)
                ++ok;
        }
        REQUIRE(checked > 0);
        REQUIRE(ok == checked);
    }
}

TEST_CASE("integrated gradients: identical baseline gives all-zero scores") {
    Bench b = make_bench();
    DocumentInstance inst;
    inst.doc_id = "masked";
    inst.sentences = {"[MASK] [MASK] [MASK]"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "finding";
    EncodedInstance enc = encode(b.vocab, inst, 32);
    auto scores = integrated_gradients_scores(b.model, enc, 0, 16);
    for (double s : scores) REQUIRE(s == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("integrated gradients satisfies completeness at 64 steps") {
    Bench b = make_bench();
    for (size_t i = 0; i < 20; ++i) {
        const auto& enc = b.encs[i];
        int target = predicted_class(b.model, enc);
        auto scores = integrated_gradients_scores(b.model, enc, target, 64);
        double total = 0;
        for (double s : scores) total += s;
        double fa = b.model.predict(enc)(target);
        double fr = b.model.predict(mask_baseline_ids(enc))(target);
        double delta = fa - fr;
        if (std::abs(delta) < 1e-4) continue;  // relative tolerance is vacuous near zero
        REQUIRE(std::abs(total - delta) < 0.02 * std::abs(delta));
    }
    SECTION("default step count follows the reference setting") {
        REQUIRE(AttributionOptions{}.ig_steps == 30);
    }
}

TEST_CASE("deeplift summation-to-delta holds on random instances") {
    Bench b = make_bench();
    int tested = 0;
    for (size_t i = 0; i < b.encs.size(); ++i) {
        const auto& enc = b.encs[i];
        int target = predicted_class(b.model, enc);
        auto res = deeplift_contributions(b.model, enc.ids, mask_baseline_ids(enc), target);
        double total = 0;
        for (double s : res.token_scores) total += s;
        double delta = res.prob_input - res.prob_baseline;
        REQUIRE(std::abs(total - delta) < 1e-3);
        REQUIRE(std::abs(total - delta) < 1e-9);  // construction is exact to rounding

        // Paired forward agrees with the plain forward pass.
        REQUIRE(res.prob_input ==
                Catch::Approx(static_cast<double>(b.model.predict(enc)(target)))
                    .margin(1e-10));
        ++tested;
    }
    REQUIRE(tested >= 40);
}

TEST_CASE("deeplift multiplier rules conserve locally") {
    using namespace evidex::deeplift_detail;
    Rng rng(5);
    SECTION("rescale collapses to the exact slope for linear functions") {
        // g(x) = 3x: (g(a)-g(r))/(a-r) == 3 == g' everywhere.
        double a = rng.gaussian(), r = rng.gaussian();
        REQUIRE((3 * a - 3 * r) / (a - r) == Catch::Approx(3.0));
    }
    SECTION("softmax decomposition conserves sum(m * delta)") {
        Mat<double> Sa(1, 6), Sr(1, 6), mA(1, 6);
        for (int j = 0; j < 6; ++j) {
            Sa(0, j) = rng.gaussian();
            Sr(0, j) = rng.gaussian();
            mA(0, j) = rng.gaussian();
        }
        PairSoftmax<double> cache;
        paired_softmax_rows(Sa, Sr, cache);
        Mat<double> mS = paired_softmax_multipliers(cache, mA);
        double lhs = (mS.cwiseProduct(Sa - Sr)).sum();
        double rhs = (mA.cwiseProduct(cache.A_a - cache.A_r)).sum();
        REQUIRE(lhs == Catch::Approx(rhs).margin(1e-12));
    }
    SECTION("layernorm decomposition conserves sum(m * delta)") {
        Mat<double> xa(2, 8), xr(2, 8), my(2, 8);
        Vec<double> gamma(8), beta(8);
        for (int j = 0; j < 8; ++j) {
            gamma(j) = 1.0 + 0.1 * rng.gaussian();
            beta(j) = 0.1 * rng.gaussian();
        }
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 8; ++j) {
                xa(i, j) = rng.gaussian();
                xr(i, j) = rng.gaussian();
                my(i, j) = rng.gaussian();
            }
        PairLn<double> cache;
        Mat<double> ya, yr;
        paired_layernorm(xa, xr, gamma, beta, cache, ya, yr);
        Mat<double> mx = paired_layernorm_multipliers(cache, gamma, my);
        double lhs = (mx.cwiseProduct(xa - xr)).sum();
        double rhs = (my.cwiseProduct(ya - yr)).sum();
        REQUIRE(lhs == Catch::Approx(rhs).margin(1e-12));
    }
}

TEST_CASE("lime recovers a linear model's coefficient ordering exactly") {
    Bench b = make_bench();
    DocumentInstance inst;
    inst.doc_id = "linear";
    inst.sentences = {"alpha beta gamma", "delta epsilon zeta"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "finding";
    Vocabulary vocab;
    for (const auto& s : inst.sentences)
        for (const auto& w : Vocabulary::split_tokens(s)) vocab.add(w);
    vocab.add("finding");
    EncodedInstance enc = encode(vocab, inst, 32);
    const int m = enc.doc_end - enc.doc_begin;
    REQUIRE(m == 6);

    std::vector<double> w = {0.05, -0.03, 0.12, 0.01, -0.07, 0.08};
    auto linear_model = [&](const std::vector<int>& ids) {
        double y = 0.3;
        for (int j = 0; j < m; ++j)
            if (ids[static_cast<size_t>(enc.doc_begin + j)] != Vocabulary::kMask)
                y += w[static_cast<size_t>(j)];
        return y;
    };

    auto scores = lime_scores(linear_model, enc, 100, 7);
    std::vector<double> recovered(w.size());
    for (int j = 0; j < m; ++j)
        recovered[static_cast<size_t>(j)] = scores[static_cast<size_t>(enc.doc_begin + j)];

    // Exact coefficient ordering = Spearman correlation 1.
    auto order_of = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int c) { return v[a] > v[c]; });
        return idx;
    };
    REQUIRE(order_of(recovered) == order_of(w));
    for (size_t j = 0; j < w.size(); ++j)
        REQUIRE(recovered[j] == Catch::Approx(w[j]).margin(1e-4));

    SECTION("deterministic under seed") {
        auto again = lime_scores(linear_model, enc, 100, 7);
        REQUIRE(scores == again);
        auto other = lime_scores(linear_model, enc, 100, 8);
        REQUIRE(scores != other);
    }
    SECTION("degenerate constant model yields zeros with a warning flag") {
        auto constant = [](const std::vector<int>&) { return 0.5; };
        bool degenerate = false;
        auto zeros = lime_scores(constant, enc, 50, 7, &degenerate);
        REQUIRE(degenerate);
        for (double s : zeros) REQUIRE(s == 0.0);
    }
    SECTION("default sample count follows the reference setting") {
        REQUIRE(AttributionOptions{}.lime_samples == 100);
    }
}

TEST_CASE("sentence scores aggregate absolute token scores") {
    DocumentInstance inst;
    inst.doc_id = "agg";
    inst.sentences = {"a b", "c d", "e"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "q";
    Vocabulary vocab;
    for (const char* t : {"a", "b", "c", "d", "e", "q"}) vocab.add(t);
    EncodedInstance enc = encode(vocab, inst, 32);

    SECTION("uniform scores pass through as their absolute value") {
        std::vector<double> tok(enc.ids.size(), -0.5);
        auto s = sentence_scores(tok, enc, 3);
        REQUIRE(s == std::vector<double>{0.5, 0.5, 0.5});
    }
    SECTION("signs do not cancel inside a sentence") {
        std::vector<double> tok(enc.ids.size(), 0.0);
        tok[static_cast<size_t>(enc.sentence_spans.at(0).first)] = 2.0;
        tok[static_cast<size_t>(enc.sentence_spans.at(0).first + 1)] = -2.0;
        auto s = sentence_scores(tok, enc, 3);
        REQUIRE(s[0] == Catch::Approx(2.0));
    }
    SECTION("hand-computed three-sentence fixture") {
        std::vector<double> tok(enc.ids.size(), 0.0);
        auto put = [&](int sent, int offset, double v) {
            tok[static_cast<size_t>(enc.sentence_spans.at(sent).first + offset)] = v;
        };
        put(0, 0, 1.0);
        put(0, 1, 3.0);   // mean |.| = 2.0
        put(1, 0, -4.0);
        put(1, 1, 0.0);   // mean = 2.0
        put(2, 0, 0.6);   // mean = 0.6
        auto s = sentence_scores(tok, enc, 3);
        REQUIRE(s[0] == Catch::Approx(2.0));
        REQUIRE(s[1] == Catch::Approx(2.0));
        REQUIRE(s[2] == Catch::Approx(0.6));
    }
    SECTION("fully truncated sentences score zero and rank last") {
        EncodedInstance tight = encode(vocab, inst, 8);  // budget 4: drops sentence 2
        REQUIRE(tight.fully_truncated(2));
        std::vector<double> tok(tight.ids.size(), 1.0);
        auto s = sentence_scores(tok, tight, 3);
        REQUIRE(s[2] == 0.0);
        std::vector<bool> trunc = {false, false, true};
        auto ranking = rank_sentences(std::vector<double>{0.0, 1.0, 0.0}, &trunc);
        REQUIRE(ranking == std::vector<int>{1, 0, 2});
    }
}

TEST_CASE("rank_sentences ordering rules") {
    REQUIRE(rank_sentences({0.1, 0.9, 0.5}) == std::vector<int>{1, 2, 0});
    REQUIRE(rank_sentences({0.3, 0.3, 0.3, 0.3}) == std::vector<int>{0, 1, 2, 3});

    SECTION("property: agrees with an order-relation oracle and is a bijection") {
        Rng rng(9);
        for (int trial = 0; trial < 200; ++trial) {
            int n = 1 + static_cast<int>(rng.uniform_int(12));
            std::vector<double> scores;
            std::vector<bool> trunc;
            for (int i = 0; i < n; ++i) {
                scores.push_back(rng.uniform_int(5) * 0.25);  // force ties
                trunc.push_back(rng.bernoulli(0.2));
            }
            auto ranking = rank_sentences(scores, &trunc);
            std::set<int> seen(ranking.begin(), ranking.end());
            REQUIRE(static_cast<int>(seen.size()) == n);
            auto key = [&](int i) {
                return std::make_tuple(trunc[static_cast<size_t>(i)] ? 1 : 0,
                                       -scores[static_cast<size_t>(i)], i);
            };
            for (size_t j = 0; j + 1 < ranking.size(); ++j)
                REQUIRE(key(ranking[j]) < key(ranking[j + 1]));
        }
    }
}

TEST_CASE("all methods return aligned, finite scores") {
    Bench b = make_bench();
    AttributionOptions opts;
    opts.ig_steps = 8;
    opts.lime_samples = 30;
    for (size_t i = 0; i < 4; ++i) {
        const auto& enc = b.encs[i];
        int target = predicted_class(b.model, enc);
        int n = static_cast<int>(b.docs[i].sentences.size());
        for (auto method :
             {AttributionMethod::input_gradient, AttributionMethod::integrated_gradients,
              AttributionMethod::deeplift, AttributionMethod::lime}) {
            AttributionResult res = attribute(b.model, enc, method, target, n, opts);
            REQUIRE(res.token_scores.size() == enc.ids.size());
            REQUIRE(res.sentence_scores.size() == static_cast<size_t>(n));
            REQUIRE(res.ranking.size() == static_cast<size_t>(n));
            for (double s : res.token_scores) REQUIRE(std::isfinite(s));
            for (double s : res.sentence_scores) {
                REQUIRE(std::isfinite(s));
                REQUIRE(s >= 0.0);
            }
        }
    }
    SECTION("method enum has exactly four values") {
        REQUIRE(attribution_method_names().size() == 4);
        REQUIRE_THROWS_AS(parse_method("occlusion"), Error);
    }
    SECTION("attribution refuses an empty document region") {
        DocumentInstance inst;
        inst.doc_id = "empty";
        inst.sentences = {"x"};
        inst.query.kind = QueryKind::key_feature;
        inst.query.feature_name = "finding";
        EncodedInstance enc = encode_subset(b.vocab, inst, {}, 32);
        REQUIRE_THROWS_AS(input_gradient_scores(b.model, enc, 0), Error);
    }
}
