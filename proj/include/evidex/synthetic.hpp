#pragma once

#include <array>
#include <string>
#include <vector>

#include "evidex/corpus.hpp"

namespace evidex {

// Synthetic evidence-grounded corpus. Each document carries 1-2 cue
// sentences that determine the label (explicit cues name the label keyword;
// implicit cues use a two-token phrase from a hidden lexicon where only the
// pair, not either word alone, identifies the label), distractor filler, and
// one distractor sentence holding a spurious marker token whose identity
// correlates with the label on the train split only.
struct SyntheticConfig {
    int n_labels = 5;
    int n_docs = 1000;
    int sentences_min = 6;
    int sentences_max = 10;
    // Fraction of cue sentences that are explicit (keyword) rather than
    // implicit (lexicon phrase).
    double explicit_cue_ratio = 0.5;
    double spurious_correlation_rate = 0.0;
    uint64_t seed = 1;
};

namespace synth {

inline const std::array<const char*, 12>& keyword_bank() {
    static const std::array<const char*, 12> bank = {
        "alpha", "beta",  "gamma", "delta", "epsilon", "zeta",
        "eta",   "theta", "iota",  "kappa", "omega",   "sigma"};
    return bank;
}

inline const std::array<const char*, 8>& phrase_bank() {
    static const std::array<const char*, 8> bank = {"drift", "spike", "ridge", "bloom",
                                                    "crest", "flux",  "grain", "swirl"};
    return bank;
}

inline std::string bank_word(const std::array<const char*, 12>& bank, int index) {
    std::string w = bank[static_cast<size_t>(index % 12)];
    if (index >= 12) w += std::to_string(index / 12);
    return w;
}

}  // namespace synth

// Explicit cue token for a label; the Table-4-style attribution-mass
// analysis targets these.
inline std::string synthetic_label_keyword(int label) {
    return synth::bank_word(synth::keyword_bank(), label);
}

// Implicit phrase for (label, variant in {0,1}): an ordered pair of words
// from one shared bank. Every word occurs in phrases of several labels, so
// only the adjacent ordered pair resolves the label.
inline std::pair<std::string, std::string> synthetic_implicit_phrase(int label, int variant,
                                                                     int /*n_labels*/) {
    const auto& bank = synth::phrase_bank();
    const int B = static_cast<int>(bank.size());        // 8 words
    const int combos = B * (B - 1);                     // 56 ordered pairs
    int idx = ((2 * label + variant) * 9) % combos;     // 9 coprime to 56
    int i = idx % B;
    int j = (i + 1 + idx / B) % B;
    return {bank[static_cast<size_t>(i)], bank[static_cast<size_t>(j)]};
}

inline std::string synthetic_spurious_token(int label) {
    return "stamp" + std::to_string(label);
}

// Hidden-lexicon labeling of a single sentence: the label of an explicit
// keyword or an adjacent implicit phrase, or -1 for lexicon-free sentences.
inline int synthetic_lexicon_label(const std::string& sentence, int n_labels) {
    auto tokens = Vocabulary::split_tokens(sentence);
    for (const auto& t : tokens)
        for (int l = 0; l < n_labels; ++l)
            if (t == synthetic_label_keyword(l)) return l;
    for (size_t i = 0; i + 1 < tokens.size(); ++i)
        for (int l = 0; l < n_labels; ++l)
            for (int v = 0; v < 2; ++v) {
                auto [a, b] = synthetic_implicit_phrase(l, v, n_labels);
                if (tokens[i] == a && tokens[i + 1] == b) return l;
            }
    return -1;
}

namespace synth {

inline std::string explicit_cue_sentence(int label, int template_id) {
    const std::string kw = synthetic_label_keyword(label);
    switch (template_id % 3) {
        case 0: return "the " + kw + " signature is present";
        case 1: return kw + " pattern confirmed here";
        default: return "clear " + kw + " profile noted";
    }
}

inline std::string implicit_cue_sentence(int label, int variant, int template_id,
                                         int n_labels) {
    auto [a, b] = synthetic_implicit_phrase(label, variant, n_labels);
    const std::string phrase = a + " " + b;
    switch (template_id % 3) {
        case 0: return "a " + phrase + " dominates the recorded series";
        case 1: return "readings reveal a " + phrase + " over the sampling window";
        default: return "the trace settled into a " + phrase + " near the end";
    }
}

inline std::string spurious_sentence(const std::string& token, int template_id) {
    switch (template_id % 2) {
        case 0: return "batch " + token + " " + token + " " + token + " filed";
        default: return token + " ledger " + token + " entry " + token;
    }
}

// Weak label correlate present in every split: a redundant echo of the
// label that is predictive but never part of the gold evidence, like
// acausal restatements in real reports.
inline const std::array<const char*, 12>& echo_bank() {
    static const std::array<const char*, 12> bank = {
        "harbor", "meadow", "quarry",  "tundra", "lagoon", "mesa",
        "fjord",  "prairie", "dune",   "atoll",  "cliff",  "marsh"};
    return bank;
}

inline std::string echo_word(int label) {
    return echo_bank()[static_cast<size_t>(label % 12)];
}

inline std::string echo_sentence(const std::string& word, int template_id) {
    switch (template_id % 2) {
        case 0: return "levels drifted toward the " + word + " band near the " + word + " line";
        default: return "instruments logged a " + word + " offset against the " + word + " mark";
    }
}

inline std::string distractor_sentence(int template_id) {
    static const std::array<const char*, 8> bank = {
        "the archive copy was filed without further note",
        "routine checks proceeded on schedule that week",
        "the operator logged ambient temperature and humidity",
        "no changes were made to the standing protocol",
        "supplementary tables appear in the appendix volume",
        "the courier delivered the remaining paperwork late",
        "spare parts for the bench unit are pending review",
        "meeting notes were circulated to the full roster"};
    return bank[static_cast<size_t>(template_id % 8)];
}

}  // namespace synth

inline void validate_synthetic_config(const SyntheticConfig& c) {
    EVIDEX_REQUIRE(c.n_labels >= 2 && c.n_labels <= 12, "config",
                   "n_labels must be in [2, 12]");
    EVIDEX_REQUIRE(c.n_docs >= 1, "config", "n_docs must be >= 1");
    EVIDEX_REQUIRE(c.sentences_min >= 4, "config", "sentences_min must be >= 4");
    EVIDEX_REQUIRE(c.sentences_max >= c.sentences_min, "config",
                   "sentences_max must be >= sentences_min");
    EVIDEX_REQUIRE(c.explicit_cue_ratio >= 0.0 && c.explicit_cue_ratio <= 1.0, "config",
                   "explicit_cue_ratio must be in [0, 1]");
    EVIDEX_REQUIRE(c.spurious_correlation_rate >= 0.0 && c.spurious_correlation_rate <= 1.0,
                   "config", "spurious_correlation_rate must be in [0, 1]");
}

inline std::vector<DocumentInstance> generate_synthetic_corpus(const SyntheticConfig& cfg) {
    validate_synthetic_config(cfg);
    Rng rng(cfg.seed);

    int n_train = static_cast<int>(std::llround(0.7 * cfg.n_docs));
    int n_val = static_cast<int>(std::llround(0.15 * cfg.n_docs));

    std::vector<DocumentInstance> out;
    out.reserve(static_cast<size_t>(cfg.n_docs));
    for (int d = 0; d < cfg.n_docs; ++d) {
        Split split = d < n_train ? Split::train
                                  : (d < n_train + n_val ? Split::val : Split::test);
        int span = cfg.sentences_max - cfg.sentences_min + 1;
        int n_sent = cfg.sentences_min + static_cast<int>(rng.uniform_int(span));
        int label = static_cast<int>(rng.uniform_int(cfg.n_labels));
        int cue_count = rng.bernoulli(0.25) ? 2 : 1;

        // One draw picks cue positions plus the spurious and echo slots.
        std::vector<int> slots = rng.sample_without_replacement(n_sent, cue_count + 2);
        std::vector<int> cues(slots.begin(), slots.begin() + cue_count);
        int spurious_pos = slots[static_cast<size_t>(cue_count)];
        int echo_pos = slots[static_cast<size_t>(cue_count) + 1];

        std::vector<std::string> sentences(static_cast<size_t>(n_sent));
        for (int c : cues) {
            if (rng.bernoulli(cfg.explicit_cue_ratio)) {
                sentences[static_cast<size_t>(c)] =
                    synth::explicit_cue_sentence(label, static_cast<int>(rng.uniform_int(3)));
            } else {
                int variant = static_cast<int>(rng.uniform_int(2));
                sentences[static_cast<size_t>(c)] = synth::implicit_cue_sentence(
                    label, variant, static_cast<int>(rng.uniform_int(3)), cfg.n_labels);
            }
        }

        // Spurious marker: label-matched with the configured rate on train,
        // uniform otherwise (and always uniform on val/test).
        int spur_label;
        if (split == Split::train && rng.bernoulli(cfg.spurious_correlation_rate)) {
            spur_label = label;
        } else {
            spur_label = static_cast<int>(rng.uniform_int(cfg.n_labels));
        }
        sentences[static_cast<size_t>(spurious_pos)] = synth::spurious_sentence(
            synthetic_spurious_token(spur_label), static_cast<int>(rng.uniform_int(2)));

        // Echo channel: identical distribution on every split, 97%
        // label-matched, so models may lean on it without any test-time cost.
        if (rng.bernoulli(0.85)) {
            int echo_label = rng.bernoulli(0.97)
                                 ? label
                                 : static_cast<int>(rng.uniform_int(cfg.n_labels));
            sentences[static_cast<size_t>(echo_pos)] = synth::echo_sentence(
                synth::echo_word(echo_label), static_cast<int>(rng.uniform_int(2)));
        }

        for (int s = 0; s < n_sent; ++s) {
            if (sentences[static_cast<size_t>(s)].empty())
                sentences[static_cast<size_t>(s)] =
                    synth::distractor_sentence(static_cast<int>(rng.uniform_int(8)));
        }

        DocumentInstance inst;
        inst.doc_id = std::string("synth-") + split_name(split) + "-" + std::to_string(d);
        inst.sentences = std::move(sentences);
        inst.query.kind = QueryKind::key_feature;
        inst.query.feature_name = "finding";
        inst.label = label;
        std::sort(cues.begin(), cues.end());
        inst.gold_evidence = cues;
        inst.split = split;
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace evidex
