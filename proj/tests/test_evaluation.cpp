#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "evidex/evaluation.hpp"
#include "evidex/report.hpp"

using namespace evidex;

TEST_CASE("label metrics fixtures") {
    SECTION("perfect predictions") {
        LabelMetrics m = evaluate_labels({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
        REQUIRE(m.accuracy == 1.0);
        REQUIRE(m.macro_f1 == 1.0);
    }
    SECTION("all-one-class predictor on balanced two-class golds") {
        LabelMetrics m = evaluate_labels({0, 0, 0, 0}, {0, 0, 1, 1}, 2);
        REQUIRE(m.accuracy == 0.5);
    }
    SECTION("ten-instance hand-computed confusion matrix") {
        // gold:   0 0 0 0 1 1 1 2 2 2
        // pred:   0 0 1 2 1 1 0 2 2 1
        // class0: tp=2 fp=1 fn=2 -> F1 = 4/7
        // class1: tp=2 fp=2 fn=1 -> F1 = 4/7
        // class2: tp=2 fp=1 fn=1 -> F1 = 2/3
        std::vector<int> gold = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
        std::vector<int> pred = {0, 0, 1, 2, 1, 1, 0, 2, 2, 1};
        LabelMetrics m = evaluate_labels(pred, gold, 3);
        REQUIRE(m.accuracy == Catch::Approx(0.6));
        REQUIRE(m.macro_f1 == Catch::Approx((4.0 / 7 + 4.0 / 7 + 2.0 / 3) / 3));
    }
    SECTION("classes absent from gold and predictions are excluded") {
        LabelMetrics m = evaluate_labels({0, 1}, {0, 1}, 97);
        REQUIRE(m.macro_f1 == 1.0);
    }
    SECTION("empty input is an error") {
        REQUIRE_THROWS_AS(evaluate_labels({}, {}, 2), Error);
    }
}

TEST_CASE("evidence metrics fixtures") {
    using Gold = std::vector<std::optional<std::vector<int>>>;
    SECTION("exact match") {
        EvidenceMetrics m = evaluate_evidence({{1, 2}, {0}}, Gold{{{1, 2}}, {{0}}});
        REQUIRE(m.precision == 1.0);
        REQUIRE(m.recall == 1.0);
        REQUIRE(m.f1 == 1.0);
        REQUIRE(m.mean_length == Catch::Approx(1.5));
        REQUIRE(m.instances == 2);
    }
    SECTION("predicted {0,1} against gold {1}") {
        EvidenceMetrics m = evaluate_evidence({{0, 1}}, Gold{{{1}}});
        REQUIRE(m.precision == Catch::Approx(0.5));
        REQUIRE(m.recall == Catch::Approx(1.0));
        REQUIRE(m.f1 == Catch::Approx(2.0 / 3.0));
    }
    SECTION("empty prediction against non-empty gold scores zero") {
        EvidenceMetrics m = evaluate_evidence({{}}, Gold{{{0, 1}}});
        REQUIRE(m.precision == 0.0);
        REQUIRE(m.recall == 0.0);
        REQUIRE(m.f1 == 0.0);
    }
    SECTION("instances without gold evidence are excluded") {
        EvidenceMetrics m = evaluate_evidence({{0}, {1}}, Gold{std::nullopt, {{1}}});
        REQUIRE(m.instances == 1);
        REQUIRE(m.f1 == 1.0);
    }
    SECTION("full-document selection has recall 1 by the superset property") {
        Rng rng(3);
        for (int t = 0; t < 50; ++t) {
            int n = 2 + static_cast<int>(rng.uniform_int(8));
            std::vector<int> all(static_cast<size_t>(n));
            std::iota(all.begin(), all.end(), 0);
            int n_ev = 1 + static_cast<int>(rng.uniform_int(n));
            auto ev = rng.sample_without_replacement(n, n_ev);
            EvidenceMetrics m = evaluate_evidence({all}, Gold{{ev}});
            REQUIRE(m.recall == 1.0);
            REQUIRE(m.precision <= 1.0);
        }
    }
}

TEST_CASE("paired bootstrap behaviors") {
    SECTION("identical systems sit at p = 0.5") {
        std::vector<double> a(50);
        Rng rng(11);
        for (auto& v : a) v = rng.uniform01();
        BootstrapResult r = paired_bootstrap(a, a, 10000, 17);
        REQUIRE(r.p_value > 0.4);
        REQUIRE(r.p_value < 0.6);
        REQUIRE_FALSE(r.significant);
    }
    SECTION("a dominated comparison is decisively significant") {
        std::vector<double> a(50), b(50);
        Rng rng(12);
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.uniform01();
            b[i] = a[i] + 10.0;
        }
        BootstrapResult r = paired_bootstrap(a, b, 10000, 17);
        REQUIRE(r.p_value < 0.001);
        REQUIRE(r.significant);
    }
    SECTION("deterministic under seed; length mismatch rejected") {
        std::vector<double> a = {0.1, 0.2, 0.3}, b = {0.2, 0.1, 0.4};
        REQUIRE(paired_bootstrap(a, b, 2000, 5).p_value ==
                paired_bootstrap(a, b, 2000, 5).p_value);
        REQUIRE_THROWS_AS(paired_bootstrap(a, {0.1}, 100, 5), Error);
    }
    SECTION("agreement with a permutation-test oracle") {
        // Sign-flip permutation test on the paired differences, the
        // standard independent route for the same null hypothesis.
        auto permutation_p = [](const std::vector<double>& a, const std::vector<double>& b,
                                uint64_t seed) {
            Rng rng(seed);
            std::vector<double> d(a.size());
            double observed = 0;
            for (size_t i = 0; i < a.size(); ++i) {
                d[i] = b[i] - a[i];
                observed += d[i];
            }
            int n_perm = 4000, geq = 0;
            for (int p = 0; p < n_perm; ++p) {
                double s = 0;
                for (double v : d) s += rng.bernoulli(0.5) ? v : -v;
                if (s >= observed) ++geq;
            }
            return static_cast<double>(geq + 1) / static_cast<double>(n_perm + 1);
        };

        Rng rng(23);
        int agree = 0;
        const int trials = 20;
        for (int t = 0; t < trials; ++t) {
            // Mixture of null (no shift) and shifted alternatives.
            double shift = (t % 4 == 0) ? 0.0 : 0.08 * (1 + t % 3);
            std::vector<double> a(60), b(60);
            for (size_t i = 0; i < a.size(); ++i) {
                a[i] = rng.gaussian() * 0.3;
                b[i] = a[i] + shift + rng.gaussian() * 0.05;
            }
            bool boot = paired_bootstrap(a, b, 4000, 100 + t).significant;
            bool perm = permutation_p(a, b, 200 + t) < 0.05;
            if (boot == perm) ++agree;
        }
        REQUIRE(agree >= 19);
    }
    SECTION("null p-values are approximately uniform (KS < 0.1 over 200 trials)") {
        Rng rng(31);
        std::vector<double> pvals;
        for (int t = 0; t < 200; ++t) {
            std::vector<double> a(40), b(40);
            // A and B draw from the same distribution: labels shuffled.
            for (size_t i = 0; i < a.size(); ++i) {
                a[i] = rng.gaussian();
                b[i] = rng.gaussian();
            }
            pvals.push_back(paired_bootstrap(a, b, 600, 500 + t).p_value);
        }
        std::sort(pvals.begin(), pvals.end());
        double ks = 0;
        for (size_t i = 0; i < pvals.size(); ++i) {
            double ecdf_hi = static_cast<double>(i + 1) / pvals.size();
            double ecdf_lo = static_cast<double>(i) / pvals.size();
            ks = std::max(ks, std::max(std::abs(ecdf_hi - pvals[i]),
                                       std::abs(pvals[i] - ecdf_lo)));
        }
        REQUIRE(ks < 0.1);
    }
}

TEST_CASE("attribution mass on a target token") {
    Vocabulary vocab;
    for (const char* t : {"effect", "filler", "noise", "q"}) vocab.add(t);
    DocumentInstance inst;
    inst.doc_id = "mass";
    inst.sentences = {"effect filler noise filler", "noise filler filler filler effect"};
    inst.query.kind = QueryKind::key_feature;
    inst.query.feature_name = "q";
    EncodedInstance enc = encode(vocab, inst, 64);

    SECTION("uniform attribution over 10 tokens, one occurrence -> 10 percent") {
        DocumentInstance one;
        one.doc_id = "uniform";
        one.sentences = {"effect filler noise filler filler",
                         "noise filler filler filler filler"};
        one.query = inst.query;
        EncodedInstance e1 = encode(vocab, one, 64);
        AttributionResult res;
        res.token_scores.assign(e1.ids.size(), 0.0);
        for (int p = e1.doc_begin; p < e1.doc_end; ++p)
            res.token_scores[static_cast<size_t>(p)] = 0.3;
        auto mass = attribution_mass_on_token({res}, {e1}, vocab, "effect");
        REQUIRE(mass.mean_of_average == Catch::Approx(10.0));
        REQUIRE(mass.mean_of_max == Catch::Approx(10.0));
    }

    SECTION("hand-built two-instance fixture matches manual computation") {
        AttributionResult r1;
        r1.token_scores.assign(enc.ids.size(), 0.0);
        // doc region: [effect filler noise filler][noise filler filler filler effect]
        auto set = [&](int offset, double v) {
            r1.token_scores[static_cast<size_t>(enc.doc_begin + offset)] = v;
        };
        set(0, 4.0);   // effect
        set(1, 1.0);
        set(2, 1.0);
        set(3, 1.0);
        set(4, 1.0);
        set(5, 1.0);
        set(6, -1.0);
        set(7, 1.0);
        set(8, 2.0);   // effect (second occurrence), total |.| = 13
        // occurrence masses: 4/13 and 2/13 -> avg 3/13, max 4/13
        auto mass = attribution_mass_on_token({r1}, {enc}, vocab, "effect");
        REQUIRE(mass.mean_of_average == Catch::Approx(100.0 * 3.0 / 13.0));
        REQUIRE(mass.mean_of_max == Catch::Approx(100.0 * 4.0 / 13.0));
    }

    SECTION("unknown or absent tokens raise undefined-result") {
        AttributionResult res;
        res.token_scores.assign(enc.ids.size(), 1.0);
        try {
            attribution_mass_on_token({res}, {enc}, vocab, "absent-token");
            FAIL("expected undefined-result");
        } catch (const Error& e) {
            REQUIRE(e.tag() == "undefined-result");
        }
        vocab.add("orphan");
        REQUIRE_THROWS_AS(attribution_mass_on_token({res}, {enc}, vocab, "orphan"), Error);
    }
}

TEST_CASE("report building and round-trip") {
    auto make_record = [](const std::string& id, int gold, int pred, std::vector<int> ev,
                          std::vector<int> gold_ev, bool agrees) {
        InstanceRecord r;
        r.doc_id = id;
        r.gold_label = gold;
        r.full_prediction = pred;
        r.reduced_prediction = agrees ? pred : (pred + 1) % 2;
        r.evidence = std::move(ev);
        r.gold_evidence = std::move(gold_ev);
        r.agrees = agrees;
        r.system = "sys";
        return r;
    };

    std::map<std::string, std::vector<InstanceRecord>> systems;
    systems["a"] = {make_record("d0", 0, 0, {0}, {0}, true),
                    make_record("d1", 1, 1, {1}, {0, 1}, true),
                    make_record("d2", 0, 1, {2}, {0}, false)};
    systems["b"] = {make_record("d0", 0, 0, {0}, {0}, true),
                    make_record("d1", 1, 1, {0, 1}, {0, 1}, true),
                    make_record("d2", 0, 0, {0}, {0}, true)};

    EvalReport report = build_report(systems, 2, 2000, 9);
    REQUIRE(report.systems.at("b").label_accuracy == 1.0);
    REQUIRE(report.systems.at("b").evidence_f1 == 1.0);
    REQUIRE(report.systems.at("a").faithfulness_agreement == Catch::Approx(2.0 / 3.0));
    REQUIRE(report.significance.count("evidence_f1:b>a") == 1);
    REQUIRE(report.significance.count("label_acc:a>b") == 1);

    SECTION("round-trips through JSON losslessly") {
        json j = report.to_json();
        EvalReport back = EvalReport::from_json(j);
        REQUIRE(back.to_json() == j);
    }
    SECTION("deterministic given the same seed") {
        EvalReport again = build_report(systems, 2, 2000, 9);
        REQUIRE(again.to_json() == report.to_json());
    }
    SECTION("instance-ID mismatch across systems is rejected") {
        systems["b"][2].doc_id = "dX";
        try {
            build_report(systems, 2, 100, 9);
            FAIL("expected instance-mismatch");
        } catch (const Error& e) {
            REQUIRE(e.tag() == "instance-mismatch");
        }
    }
}
