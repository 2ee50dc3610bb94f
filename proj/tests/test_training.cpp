#include <catch2/catch_amalgamated.hpp>

#include "evidex/pipeline.hpp"
#include "evidex/synthetic.hpp"
#include "evidex/training.hpp"

using namespace evidex;

namespace {

std::vector<DocumentInstance> tiny_corpus(int n_docs = 60, uint64_t seed = 71,
                                          double spurious = 0.0) {
    SyntheticConfig cfg;
    cfg.n_labels = 3;
    cfg.n_docs = n_docs;
    cfg.sentences_min = 4;
    cfg.sentences_max = 6;
    cfg.spurious_correlation_rate = spurious;
    cfg.seed = seed;
    return generate_synthetic_corpus(cfg);
}

ModelConfig tiny_model(const Vocabulary& vocab, int labels) {
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.label_count = labels;
    mc.max_len = 64;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.n_layers = 1;
    mc.d_ff = 24;
    mc.init_scale = 0.1;
    return mc;
}

std::vector<DocumentInstance> split_of(const std::vector<DocumentInstance>& docs, Split s) {
    std::vector<DocumentInstance> out;
    for (const auto& d : docs)
        if (d.split == s) out.push_back(d);
    return out;
}

}  // namespace

TEST_CASE("classification loss fixtures") {
    Vec<double> sure(3);
    sure << 1.0, 0.0, 0.0;
    REQUIRE(loss_classification(sure, 0) == Catch::Approx(0.0).margin(1e-12));

    Vec<double> uniform = Vec<double>::Constant(4, 0.25);
    REQUIRE(loss_classification(uniform, 2) == Catch::Approx(std::log(4.0)));

    Vec<double> p(3);
    p << 0.2, 0.7, 0.1;
    REQUIRE(loss_classification(p, 1) == Catch::Approx(-std::log(0.7)));
}

TEST_CASE("entropy-maximization loss fixtures") {
    Vec<double> uniform = Vec<double>::Constant(3, 1.0 / 3.0);
    REQUIRE(loss_entropy_max(uniform) == Catch::Approx(0.0).margin(1e-12));

    Vec<double> onehot(3);
    onehot << 0.0, 1.0, 0.0;
    REQUIRE(loss_entropy_max(onehot) == Catch::Approx(std::log(3.0)));

    // H(0.5, 0.3, 0.2) = 1.02965...; log 3 - H = 0.0690 (hand computation)
    Vec<double> p(3);
    p << 0.5, 0.3, 0.2;
    double H = -(0.5 * std::log(0.5) + 0.3 * std::log(0.3) + 0.2 * std::log(0.2));
    REQUIRE(loss_entropy_max(p) == Catch::Approx(std::log(3.0) - H).margin(1e-12));
    REQUIRE(loss_entropy_max(p) == Catch::Approx(0.0689).margin(1e-3));

    SECTION("gradient is stationary at the uniform distribution") {
        for (Eigen::Index c = 0; c < 3; ++c) {
            double pc = uniform(c);
            double g = pc * (std::log(pc) + std::log(3.0));
            REQUIRE(g == Catch::Approx(0.0).margin(1e-12));
        }
    }
}

TEST_CASE("attention regularization loss") {
    DocumentInstance inst;
    inst.doc_id = "attn";
    inst.sentences = {"a b", "c d"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "q";
    Vocabulary vocab;
    for (const char* t : {"a", "b", "c", "d", "q"}) vocab.add(t);
    EncodedInstance enc = encode(vocab, inst, 32);

    Vec<double> alpha = Vec<double>::Zero(enc.ids.size());
    auto span0 = enc.sentence_spans.at(0);

    SECTION("all attention on evidence gives zero loss") {
        alpha(span0.first) = 0.6;
        alpha(span0.first + 1) = 0.4;
        REQUIRE(loss_attention_reg(alpha, enc, {0}) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("evidence mass 0.25 costs -log 0.25") {
        alpha(span0.first) = 0.25;
        alpha(0) = 0.75;  // mass parked on [CLS]
        REQUIRE(loss_attention_reg(alpha, enc, {0}) ==
                Catch::Approx(1.3862943611).margin(1e-9));
    }
    SECTION("moving mass onto evidence strictly decreases the loss") {
        alpha.setConstant(1.0 / static_cast<double>(enc.ids.size()));
        double before = loss_attention_reg(alpha, enc, {0});
        double shift = 0.05;
        alpha(span0.first) += shift;
        alpha(enc.sentence_spans.at(1).first) -= shift;
        double after = loss_attention_reg(alpha, enc, {0});
        REQUIRE(after < before);
    }
    SECTION("entirely truncated evidence raises a skip signal") {
        EncodedInstance tight = encode(vocab, inst, 6);  // budget 2: drops sentence 1
        REQUIRE(tight.fully_truncated(1));
        Vec<double> a2 = Vec<double>::Constant(tight.ids.size(),
                                               1.0 / static_cast<double>(tight.ids.size()));
        try {
            loss_attention_reg(a2, tight, {1});
            FAIL("expected truncated-evidence");
        } catch (const Error& e) {
            REQUIRE(e.tag() == "truncated-evidence");
        }
    }
}

TEST_CASE("attention-loss gradient matches finite differences through the softmax") {
    // loss(z) = -log sum_{i in E} softmax(z)_i, the same composition the
    // training loop differentiates via the injected attention gradient.
    const int m = 7;
    std::vector<int> evidence_pos = {1, 4};
    Rng rng(13);
    nn::Mat<double> z(1, m);
    for (int j = 0; j < m; ++j) z(0, j) = rng.gaussian();

    auto loss_of = [&](const nn::Mat<double>& zz) {
        nn::Mat<double> a = nn::softmax_rows(zz);
        double mass = 0;
        for (int p : evidence_pos) mass += a(0, p);
        return -std::log(mass);
    };

    nn::Mat<double> a = nn::softmax_rows(z);
    double mass = 0;
    for (int p : evidence_pos) mass += a(0, p);
    nn::Mat<double> dA = nn::Mat<double>::Zero(1, m);
    for (int p : evidence_pos) dA(0, p) = -1.0 / mass;
    nn::Mat<double> dz = nn::softmax_rows_backward(a, dA);

    const double h = 1e-6;
    for (int j = 0; j < m; ++j) {
        nn::Mat<double> zp = z, zm = z;
        zp(0, j) += h;
        zm(0, j) -= h;
        double fd = (loss_of(zp) - loss_of(zm)) / (2 * h);
        REQUIRE(fd == Catch::Approx(dz(0, j)).margin(1e-6));
    }
}

TEST_CASE("make_entropy_example removes evidence sentences") {
    DocumentInstance inst;
    inst.doc_id = "ent";
    inst.sentences = {"s0", "s1", "s2", "s3", "s4"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "q";
    inst.gold_evidence = std::vector<int>{1, 3};

    auto aux = make_entropy_example(inst);
    REQUIRE(aux.has_value());
    REQUIRE(aux->sentences == std::vector<std::string>{"s0", "s2", "s4"});
    REQUIRE(aux->entropy_target);
    REQUIRE(aux->label == -1);

    SECTION("no evidence, no auxiliary example") {
        DocumentInstance bare = inst;
        bare.gold_evidence.reset();
        REQUIRE_FALSE(make_entropy_example(bare).has_value());
    }
    SECTION("evidence covering the whole document produces nothing") {
        DocumentInstance full = inst;
        full.gold_evidence = std::vector<int>{0, 1, 2, 3, 4};
        REQUIRE_FALSE(make_entropy_example(full).has_value());
    }
    SECTION("round-trip: D' plus evidence restores the document as a multiset") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            int n = 2 + static_cast<int>(rng.uniform_int(6));
            DocumentInstance doc;
            doc.doc_id = "rt";
            doc.query = inst.query;
            for (int s = 0; s < n; ++s)
                doc.sentences.push_back("sentence " + std::to_string(rng.uniform_int(4)));
            int n_ev = 1 + static_cast<int>(rng.uniform_int(n));
            doc.gold_evidence = rng.sample_without_replacement(n, n_ev);
            std::sort(doc.gold_evidence->begin(), doc.gold_evidence->end());
            auto a = make_entropy_example(doc);
            std::multiset<std::string> rebuilt;
            if (a)
                rebuilt.insert(a->sentences.begin(), a->sentences.end());
            else
                REQUIRE(static_cast<size_t>(n_ev) == doc.sentences.size());
            for (int e : *doc.gold_evidence)
                rebuilt.insert(doc.sentences[static_cast<size_t>(e)]);
            std::multiset<std::string> original(doc.sentences.begin(), doc.sentences.end());
            REQUIRE(rebuilt == original);
        }
    }
}

TEST_CASE("training configuration rules") {
    TrainingConfig cfg;
    REQUIRE(cfg.epochs == 15);
    REQUIRE(cfg.learning_rate == Catch::Approx(1e-5));
    REQUIRE(cfg.patience == 3);
    REQUIRE(cfg.attention_weight == 1.0);
    REQUIRE(cfg.entropy_weight == 1.0);

    SECTION("auto batch size: 16 with both regularizers, 8 otherwise") {
        REQUIRE(cfg.effective_batch_size() == 8);
        cfg.reg_attention = true;
        REQUIRE(cfg.effective_batch_size() == 8);
        cfg.reg_entropy = true;
        REQUIRE(cfg.effective_batch_size() == 16);
        cfg.batch_size = 4;
        REQUIRE(cfg.effective_batch_size() == 4);
    }
    SECTION("zero-weight regularizers count as disabled") {
        cfg.reg_attention = true;
        cfg.attention_weight = 0.0;
        REQUIRE_FALSE(cfg.attention_active());
    }
}

TEST_CASE("train smoke run: learns, records history, stays deterministic") {
    auto docs = tiny_corpus();
    auto train_split = split_of(docs, Split::train);
    auto val_split = split_of(docs, Split::val);
    Vocabulary vocab = build_vocabulary(docs);
    ModelConfig mc = tiny_model(vocab, 3);

    TrainingConfig cfg;
    cfg.epochs = 6;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 8;
    cfg.patience = 6;
    cfg.seed = 5;

    auto result = train<float>(mc, vocab, train_split, val_split, cfg);
    REQUIRE(result.history.size() <= 6);
    REQUIRE(result.history.size() >= 1);
    for (size_t e = 0; e < result.history.size(); ++e)
        REQUIRE(result.history[e].epoch == static_cast<int>(e));
    REQUIRE(result.history.back().loss_ce < result.history.front().loss_ce);
    REQUIRE(result.best_epoch >= 0);

    SECTION("same seed reproduces the loss trajectory exactly") {
        auto again = train<float>(mc, vocab, train_split, val_split, cfg);
        REQUIRE(again.history.size() == result.history.size());
        for (size_t e = 0; e < result.history.size(); ++e) {
            REQUIRE(again.history[e].loss_total == result.history[e].loss_total);
            REQUIRE(again.history[e].val_macro_f1 == result.history[e].val_macro_f1);
        }
    }

    SECTION("zero-weight regularizers reproduce the plain trajectory") {
        auto with_evidence = train_split;  // evidence present on all instances
        TrainingConfig zero = cfg;
        zero.reg_attention = true;
        zero.reg_entropy = true;
        zero.attention_weight = 0.0;
        zero.entropy_weight = 0.0;
        auto plain = train<float>(mc, vocab, with_evidence, val_split, cfg);
        auto zeroed = train<float>(mc, vocab, with_evidence, val_split, zero);
        REQUIRE(zeroed.history.size() == plain.history.size());
        for (size_t e = 0; e < plain.history.size(); ++e)
            REQUIRE(zeroed.history[e].loss_total == plain.history[e].loss_total);
    }
}

TEST_CASE("training error paths") {
    auto docs = tiny_corpus(40);
    Vocabulary vocab = build_vocabulary(docs);
    ModelConfig mc = tiny_model(vocab, 3);
    TrainingConfig cfg;
    cfg.epochs = 1;

    SECTION("empty training set") {
        REQUIRE_THROWS_AS(train<float>(mc, vocab, {}, {}, cfg), Error);
    }
    SECTION("regularizer without any supervised instance") {
        auto train_split = split_of(docs, Split::train);
        for (auto& d : train_split) d.gold_evidence.reset();
        cfg.reg_attention = true;
        try {
            train<float>(mc, vocab, train_split, {}, cfg);
            FAIL("expected config error");
        } catch (const Error& e) {
            REQUIRE(e.tag() == "config");
        }
    }
}

TEST_CASE("regularized training moves attention mass toward evidence") {
    auto docs = tiny_corpus(120, 91);
    auto train_split = split_of(docs, Split::train);
    auto val_split = split_of(docs, Split::val);
    Vocabulary vocab = build_vocabulary(docs);
    ModelConfig mc = tiny_model(vocab, 3);

    TrainingConfig plain_cfg;
    plain_cfg.epochs = 5;
    plain_cfg.learning_rate = 3e-3;
    plain_cfg.batch_size = 8;
    plain_cfg.patience = 5;
    plain_cfg.seed = 5;
    TrainingConfig reg_cfg = plain_cfg;
    reg_cfg.reg_attention = true;
    reg_cfg.reg_entropy = true;

    auto plain = train<float>(mc, vocab, train_split, val_split, plain_cfg);
    auto reg = train<float>(mc, vocab, train_split, val_split, reg_cfg);

    auto evidence_mass = [&](const TransformerClassifier<float>& model) {
        double total = 0;
        int count = 0;
        for (const auto& d : docs) {
            if (d.split != Split::test) continue;
            EncodedInstance enc = encode(vocab, d, mc.max_len);
            Vec<float> alpha = model.cls_attention(enc.ids);
            auto positions = evidence_token_positions(enc, *d.gold_evidence);
            double mass = 0;
            for (int p : positions) mass += static_cast<double>(alpha(p));
            total += mass;
            ++count;
        }
        return total / count;
    };
    REQUIRE(evidence_mass(reg.model) > evidence_mass(plain.model));
}
