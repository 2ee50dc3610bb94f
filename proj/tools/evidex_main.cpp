// evidex command-line interface: synthetic data generation, DocRED
// adaptation, training with evidence regularizers, attribution + sufficiency
// explanation, and evaluation/reporting.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "evidex/pipeline.hpp"

namespace fs = std::filesystem;
using namespace evidex;

namespace {

json load_config_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error("parse", "config " + path + ": " + e.what());
    }
}

void check_allowed_keys(const json& j, const std::set<std::string>& allowed,
                        const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        EVIDEX_REQUIRE(allowed.count(key), "config",
                       context + ": unknown field '" + key + "'");
    }
}

template <class T>
T field_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("config", "field '" + key + "' has the wrong type");
    }
}

SyntheticConfig synthetic_config_from_json(const json& j) {
    check_allowed_keys(j,
                       {"n_labels", "n_docs", "sentences_min", "sentences_max",
                        "explicit_cue_ratio", "spurious_correlation_rate", "seed"},
                       "synthetic config");
    SyntheticConfig c;
    c.n_labels = field_or(j, "n_labels", c.n_labels);
    c.n_docs = field_or(j, "n_docs", c.n_docs);
    c.sentences_min = field_or(j, "sentences_min", c.sentences_min);
    c.sentences_max = field_or(j, "sentences_max", c.sentences_max);
    c.explicit_cue_ratio = field_or(j, "explicit_cue_ratio", c.explicit_cue_ratio);
    c.spurious_correlation_rate =
        field_or(j, "spurious_correlation_rate", c.spurious_correlation_rate);
    c.seed = field_or(j, "seed", c.seed);
    validate_synthetic_config(c);
    return c;
}

struct TrainFileConfig {
    TrainingConfig training;
    int d_model = 32, n_heads = 4, n_layers = 2, d_ff = 64, max_len = 128;
    double init_scale = 0.1;
    std::string activation = "gelu";
    int vocab_min_count = 1, vocab_max_size = 0;
    std::string regularizers = "none";
};

TrainFileConfig train_config_from_json(const json& j) {
    check_allowed_keys(j,
                       {"epochs", "learning_rate", "batch_size", "attention_weight",
                        "entropy_weight", "warmup_fraction", "patience", "weight_decay",
                        "grad_clip", "seed", "regularizers", "model"},
                       "training config");
    TrainFileConfig c;
    c.training.epochs = field_or(j, "epochs", c.training.epochs);
    c.training.learning_rate = field_or(j, "learning_rate", c.training.learning_rate);
    c.training.batch_size = field_or(j, "batch_size", c.training.batch_size);
    c.training.attention_weight = field_or(j, "attention_weight", c.training.attention_weight);
    c.training.entropy_weight = field_or(j, "entropy_weight", c.training.entropy_weight);
    c.training.warmup_fraction = field_or(j, "warmup_fraction", c.training.warmup_fraction);
    c.training.patience = field_or(j, "patience", c.training.patience);
    c.training.weight_decay = field_or(j, "weight_decay", c.training.weight_decay);
    c.training.grad_clip = field_or(j, "grad_clip", c.training.grad_clip);
    c.training.seed = field_or(j, "seed", c.training.seed);
    c.regularizers = field_or<std::string>(j, "regularizers", c.regularizers);
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_allowed_keys(m,
                           {"d_model", "n_heads", "n_layers", "d_ff", "max_len", "init_scale",
                            "activation", "vocab_min_count", "vocab_max_size"},
                           "model config");
        c.d_model = field_or(m, "d_model", c.d_model);
        c.n_heads = field_or(m, "n_heads", c.n_heads);
        c.n_layers = field_or(m, "n_layers", c.n_layers);
        c.d_ff = field_or(m, "d_ff", c.d_ff);
        c.max_len = field_or(m, "max_len", c.max_len);
        c.init_scale = field_or(m, "init_scale", c.init_scale);
        c.activation = field_or<std::string>(m, "activation", c.activation);
        c.vocab_min_count = field_or(m, "vocab_min_count", c.vocab_min_count);
        c.vocab_max_size = field_or(m, "vocab_max_size", c.vocab_max_size);
    }
    return c;
}

void apply_regularizer_choice(TrainingConfig& cfg, const std::string& choice) {
    if (choice == "none") {
        cfg.reg_attention = false;
        cfg.reg_entropy = false;
    } else if (choice == "attn") {
        cfg.reg_attention = true;
        cfg.reg_entropy = false;
    } else if (choice == "entropy") {
        cfg.reg_attention = false;
        cfg.reg_entropy = true;
    } else if (choice == "both") {
        cfg.reg_attention = true;
        cfg.reg_entropy = true;
    } else {
        throw Error("config", "unknown regularizer set: " + choice +
                                  " (expected none|attn|entropy|both)");
    }
}

struct CorpusStats {
    size_t docs = 0;
    size_t instances = 0;
    double words_per_inst = 0.0;
    double sents_per_inst = 0.0;
    int label_count = 0;
    double na_percent = -1.0;  // negative: not applicable
};

CorpusStats corpus_stats(const std::vector<DocumentInstance>& instances, int label_count,
                         bool has_na) {
    CorpusStats s;
    std::set<std::string> docs;
    size_t na = 0;
    double words = 0.0, sents = 0.0;
    for (const auto& inst : instances) {
        size_t hash_pos = inst.doc_id.find('#');
        docs.insert(hash_pos == std::string::npos ? inst.doc_id
                                                  : inst.doc_id.substr(0, hash_pos));
        sents += static_cast<double>(inst.sentences.size());
        for (const auto& sent : inst.sentences)
            words += static_cast<double>(Vocabulary::split_tokens(sent).size());
        if (has_na && inst.label == 0) ++na;
    }
    s.docs = docs.size();
    s.instances = instances.size();
    if (!instances.empty()) {
        s.words_per_inst = words / static_cast<double>(instances.size());
        s.sents_per_inst = sents / static_cast<double>(instances.size());
    }
    s.label_count = label_count;
    if (has_na && !instances.empty())
        s.na_percent = 100.0 * static_cast<double>(na) / static_cast<double>(instances.size());
    return s;
}

void print_stats_table(const std::string& name, const CorpusStats& s) {
    std::printf("%-16s %8s %8s %12s %12s %10s %7s\n", "setting", "#doc", "#inst",
                "#word/inst", "#sent/inst", "#labels", "#NA%");
    std::printf("%-16s %8zu %8zu %12.1f %12.1f %10d ", name.c_str(), s.docs, s.instances,
                s.words_per_inst, s.sents_per_inst, s.label_count);
    if (s.na_percent >= 0)
        std::printf("%6.1f\n", s.na_percent);
    else
        std::printf("%6s\n", "-");
}

void write_dataset(const std::string& out_path, const std::vector<DocumentInstance>& insts,
                   const std::vector<std::string>& labels, const json& config_json) {
    write_corpus_jsonl(out_path, insts);
    DatasetMeta meta;
    meta.label_count = static_cast<int>(labels.size());
    meta.labels = labels;
    meta.fingerprint = fingerprint_of(config_json);
    write_text_file(meta_path_for(out_path), meta.to_json().dump(2));
}

int label_count_for(const std::string& data_path,
                    const std::vector<DocumentInstance>& insts,
                    std::vector<std::string>* labels_out = nullptr) {
    std::string mp = meta_path_for(data_path);
    if (fs::exists(mp)) {
        DatasetMeta meta = DatasetMeta::from_json(json::parse(read_text_file(mp)));
        if (labels_out) *labels_out = meta.labels;
        return meta.label_count;
    }
    int max_label = 0;
    for (const auto& inst : insts) max_label = std::max(max_label, inst.label);
    if (labels_out) {
        labels_out->clear();
        for (int i = 0; i <= max_label; ++i) labels_out->push_back("label" + std::to_string(i));
    }
    return max_label + 1;
}

std::vector<DocumentInstance> filter_split(const std::vector<DocumentInstance>& insts,
                                           const std::string& split) {
    if (split == "all") return insts;
    Split want = split_from_name(split);
    std::vector<DocumentInstance> out;
    for (const auto& i : insts)
        if (i.split == want) out.push_back(i);
    return out;
}

std::vector<double> parse_lambda_list(const std::string& text) {
    std::vector<double> out;
    size_t start = 0;
    while (start < text.size()) {
        size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        out.push_back(std::stod(text.substr(start, comma - start)));
        start = comma + 1;
    }
    EVIDEX_REQUIRE(!out.empty(), "config", "empty lambda list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evidex: evidence-faithful document classification toolkit"};
    app.require_subcommand(1);

    // ---- synth-data ----
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic evidence corpus");
    std::string synth_config_path, synth_out;
    synth->add_option("--config", synth_config_path, "synthetic config JSON")->required();
    synth->add_option("--out", synth_out, "output JSONL path")->required();
    synth->callback([&]() {
        json cfg_json = load_config_file(synth_config_path);
        SyntheticConfig cfg = synthetic_config_from_json(cfg_json);
        auto corpus = generate_synthetic_corpus(cfg);
        std::vector<std::string> labels;
        for (int l = 0; l < cfg.n_labels; ++l) labels.push_back(synthetic_label_keyword(l));
        write_dataset(synth_out, corpus, labels, cfg_json);
        print_stats_table("synthetic", corpus_stats(corpus, cfg.n_labels, false));
        std::printf("wrote %zu instances to %s\n", corpus.size(), synth_out.c_str());
    });

    // ---- adapt-docred ----
    auto* adapt = app.add_subcommand("adapt-docred",
                                     "recast DocRED as document-level classification");
    std::string adapt_in, adapt_out, adapt_split = "train";
    double na_fraction = 1.0 / 3.0, evidence_fraction = 1.0;
    uint64_t adapt_seed = 7;
    adapt->add_option("--in", adapt_in, "DocRED JSON file")->required();
    adapt->add_option("--out", adapt_out, "output JSONL path")->required();
    adapt->add_option("--na-fraction", na_fraction, "share of NA instances");
    adapt->add_option("--evidence-fraction", evidence_fraction,
                      "fraction of train instances keeping gold evidence");
    adapt->add_option("--seed", adapt_seed, "sampling seed");
    adapt->add_option("--split", adapt_split, "split tag for the output (train|val|test)");
    adapt->callback([&]() {
        auto raw = load_docred(adapt_in);
        AdaptResult result = adapt_docred(raw, na_fraction, adapt_seed);
        Split split = split_from_name(adapt_split);
        for (auto& inst : result.instances) inst.split = split;
        auto insts =
            subsample_evidence_supervision(std::move(result.instances), evidence_fraction,
                                           adapt_seed + 1);
        json cfg_json{{"in", adapt_in},
                      {"na_fraction", na_fraction},
                      {"evidence_fraction", evidence_fraction},
                      {"seed", adapt_seed},
                      {"split", adapt_split}};
        write_dataset(adapt_out, insts, result.labels, cfg_json);
        print_stats_table("adapted-docred",
                          corpus_stats(insts, static_cast<int>(result.labels.size()), true));
        std::printf("documents: %zu  facts: %zu  na: %zu (target %zu)  skipped-docs: %zu\n",
                    raw.size(), result.stats.fact_instances, result.stats.na_instances,
                    result.stats.na_target, result.stats.docs_without_na_candidates);
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train the classifier");
    std::string train_data, train_config_path, train_out, train_regs;
    tr->add_option("--data", train_data, "dataset JSONL")->required();
    tr->add_option("--config", train_config_path, "training config JSON")->required();
    tr->add_option("--out", train_out, "output directory (default under EVIDEX_HOME)");
    tr->add_option("--regularizers", train_regs,
                   "regularizer set: none|attn|entropy|both (overrides config)");
    tr->callback([&]() {
        json cfg_json = load_config_file(train_config_path);
        TrainFileConfig cfg = train_config_from_json(cfg_json);
        if (!train_regs.empty()) cfg.regularizers = train_regs;
        apply_regularizer_choice(cfg.training, cfg.regularizers);

        auto insts = read_corpus_jsonl(train_data);
        std::vector<std::string> labels;
        int label_count = label_count_for(train_data, insts, &labels);
        for (const auto& inst : insts) validate_instance(inst, label_count);
        auto train_split = filter_split(insts, "train");
        auto val_split = filter_split(insts, "val");

        Vocabulary vocab = build_vocabulary(insts, cfg.vocab_min_count, cfg.vocab_max_size);
        ModelConfig mc;
        mc.vocab_size = vocab.size();
        mc.label_count = label_count;
        mc.max_len = cfg.max_len;
        mc.d_model = cfg.d_model;
        mc.n_heads = cfg.n_heads;
        mc.n_layers = cfg.n_layers;
        mc.d_ff = cfg.d_ff;
        mc.init_scale = cfg.init_scale;
        mc.activation = cfg.activation;
        mc.validate();

        json run_cfg{{"training", cfg.training.to_json()},
                     {"model", mc.to_json()},
                     {"regularizers", cfg.regularizers},
                     {"data", train_data}};
        std::string fp = fingerprint_of(run_cfg);
        if (train_out.empty()) {
            const char* home = std::getenv("EVIDEX_HOME");
            train_out = (home ? std::string(home) : std::string(".")) + "/runs/" + fp;
        }
        fs::path out_dir = fs::path(train_out) / cfg.regularizers;
        fs::create_directories(out_dir);
        fs::path fp_file = out_dir / "fingerprint.json";
        if (fs::exists(fp_file)) {
            json old = json::parse(read_text_file(fp_file.string()));
            EVIDEX_REQUIRE(old.at("fingerprint").get<std::string>() == fp, "config-mismatch",
                           "existing run at " + out_dir.string() +
                               " was produced by a different config");
        }

        TrainResult<float> result =
            train<float>(mc, vocab, train_split, val_split, cfg.training);
        save_checkpoint((out_dir / "model.json").string(), result.model, vocab, labels);
        json hist = json::array();
        for (const auto& e : result.history) hist.push_back(e.to_json());
        write_text_file((out_dir / "history.json").string(),
                        json{{"epochs", hist},
                             {"best_epoch", result.best_epoch},
                             {"best_val_macro_f1", result.best_val_f1}}
                            .dump(2));
        write_text_file(fp_file.string(),
                        json{{"fingerprint", fp}, {"config", run_cfg}}.dump(2));
        std::printf("trained %s: best epoch %d, val macro-F1 %.4f -> %s\n",
                    cfg.regularizers.c_str(), result.best_epoch, result.best_val_f1,
                    out_dir.string().c_str());
    });

    // ---- explain ----
    auto* ex = app.add_subcommand("explain", "attribution + sufficiency per instance");
    std::string ex_checkpoint, ex_data, ex_out, ex_method = "deeplift";
    std::string ex_selector = "sufficient", ex_split = "test", ex_sweep, ex_sweep_out,
                ex_highlight;
    double ex_lambda = 0.8;
    int ex_ig_steps = 30, ex_lime_samples = 100;
    uint64_t ex_seed = 7;
    ex->add_option("--checkpoint", ex_checkpoint, "checkpoint file or run directory")
        ->required();
    ex->add_option("--data", ex_data, "dataset JSONL")->required();
    ex->add_option("--out", ex_out, "output records JSONL")->required();
    ex->add_option("--method", ex_method, "input-gradient|integrated-gradients|deeplift|lime");
    ex->add_option("--selector", ex_selector, "sufficient or a baseline selector");
    ex->add_option("--lambda", ex_lambda, "sufficiency confidence ratio");
    ex->add_option("--split", ex_split, "train|val|test|all");
    ex->add_option("--sweep", ex_sweep, "comma-separated lambda list for a sweep CSV");
    ex->add_option("--sweep-out", ex_sweep_out, "sweep CSV path");
    ex->add_option("--ig-steps", ex_ig_steps, "integrated-gradients steps");
    ex->add_option("--lime-samples", ex_lime_samples, "LIME perturbation samples");
    ex->add_option("--seed", ex_seed, "LIME seed");
    ex->add_option("--highlight", ex_highlight, "highlighted-evidence JSON export path");
    ex->callback([&]() {
        std::string ckpt = ex_checkpoint;
        if (fs::is_directory(ckpt)) ckpt = (fs::path(ckpt) / "model.json").string();
        Vocabulary vocab;
        std::vector<std::string> labels;
        auto model = load_checkpoint<double>(ckpt, &vocab, &labels);
        auto insts = filter_split(read_corpus_jsonl(ex_data), ex_split);
        EVIDEX_REQUIRE(!insts.empty(), "config", "no instances in split " + ex_split);

        AttributionMethod method = parse_method(ex_method);
        SelectorKind selector = parse_selector(ex_selector);
        AttributionOptions opts;
        opts.ig_steps = ex_ig_steps;
        opts.lime_samples = ex_lime_samples;
        opts.lime_seed = ex_seed;

        ExplainOutput out = run_explain(model, vocab, insts, selector, method, ex_lambda, opts);
        write_text_file(ex_out, records_to_jsonl(out.records));
        json run_cfg{{"checkpoint", ckpt}, {"data", ex_data},     {"method", ex_method},
                     {"selector", ex_selector}, {"lambda", ex_lambda}, {"split", ex_split},
                     {"ig_steps", ex_ig_steps}, {"lime_samples", ex_lime_samples},
                     {"seed", ex_seed}};
        write_text_file(ex_out + ".meta.json",
                        json{{"fingerprint", fingerprint_of(run_cfg)}, {"config", run_cfg}}
                            .dump(2));

        if (!ex_highlight.empty())
            write_text_file(ex_highlight, highlight_export(insts, out, labels).dump(2));

        if (!ex_sweep.empty()) {
            auto lambdas = parse_lambda_list(ex_sweep);
            auto rows = lambda_sweep(model, vocab, insts, method, lambdas, opts);
            std::string csv_path = ex_sweep_out.empty() ? ex_out + ".sweep.csv" : ex_sweep_out;
            write_text_file(csv_path, sweep_to_csv(rows));
            std::printf("sweep: %zu rows -> %s\n", rows.size(), csv_path.c_str());
        }
        size_t verified = 0;
        for (const auto& r : out.records) verified += r.verified ? 1 : 0;
        std::printf("explained %zu instances (%zu verified) -> %s\n", out.records.size(),
                    verified, ex_out.c_str());
    });

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "metrics report over explain outputs");
    std::string ev_gold, ev_out;
    std::vector<std::string> ev_preds;
    int ev_resamples = 10000;
    uint64_t ev_seed = 17;
    ev->add_option("--gold", ev_gold, "gold dataset JSONL")->required();
    ev->add_option("--pred", ev_preds, "prediction records (name=path or path)")
        ->required()
        ->expected(-1);
    ev->add_option("--out", ev_out, "report JSON path")->required();
    ev->add_option("--resamples", ev_resamples, "bootstrap resamples");
    ev->add_option("--seed", ev_seed, "bootstrap seed");
    ev->callback([&]() {
        auto gold = read_corpus_jsonl(ev_gold);
        int label_count = label_count_for(ev_gold, gold);
        std::map<std::string, std::vector<InstanceRecord>> systems;
        for (const auto& spec : ev_preds) {
            std::string name, path;
            size_t eq = spec.find('=');
            if (eq != std::string::npos) {
                name = spec.substr(0, eq);
                path = spec.substr(eq + 1);
            } else {
                path = spec;
                name = fs::path(spec).stem().string();
            }
            auto records = records_from_jsonl(read_text_file(path));
            EVIDEX_REQUIRE(!records.empty(), "config", "no records in " + path);
            systems[name] = std::move(records);
        }
        EvalReport report = build_report(systems, label_count, ev_resamples, ev_seed);
        json run_cfg{{"gold", ev_gold},
                     {"resamples", ev_resamples},
                     {"seed", ev_seed}};
        report.fingerprint = fingerprint_of(run_cfg);
        write_text_file(ev_out, report.to_json().dump(2));
        for (const auto& [name, m] : report.systems)
            std::printf("%-24s acc %.4f f1 %.4f | reduced acc %.4f f1 %.4f | evidence "
                        "P %.4f R %.4f F1 %.4f len %.2f | faithful %.4f\n",
                        name.c_str(), m.label_accuracy, m.label_macro_f1,
                        m.reduced_label_accuracy, m.reduced_label_macro_f1,
                        m.evidence_precision, m.evidence_recall, m.evidence_f1,
                        m.mean_evidence_length, m.faithfulness_agreement);
        std::printf("report -> %s\n", ev_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.tag().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
