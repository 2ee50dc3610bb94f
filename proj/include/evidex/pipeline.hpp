#pragma once

#include <map>
#include <string>
#include <vector>

#include "evidex/attribution.hpp"
#include "evidex/baselines.hpp"
#include "evidex/report.hpp"
#include "evidex/sufficiency.hpp"
#include "evidex/synthetic.hpp"
#include "evidex/training.hpp"

namespace evidex {

inline std::string fingerprint_of(const json& j) { return fingerprint_hex(j.dump()); }

// Vocabulary over the train split: sentences plus query surfaces.
inline Vocabulary build_vocabulary(const std::vector<DocumentInstance>& instances,
                                   int min_count = 1, int max_size = 0) {
    std::vector<std::string> texts;
    for (const auto& inst : instances) {
        if (inst.split != Split::train) continue;
        for (const auto& s : inst.sentences) texts.push_back(s);
        if (inst.query.head) texts.push_back(inst.query.head->surface);
        if (inst.query.tail) texts.push_back(inst.query.tail->surface);
        if (inst.query.feature_name) texts.push_back(*inst.query.feature_name);
    }
    return Vocabulary::build(texts, min_count, max_size);
}

// ---------------------------------------------------------------------------
// Checkpoints: model config, vocabulary, label names, and parameters in one
// JSON file so attribution runs are reproducible from disk.
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
json tensor_to_json(const Mat<S>& m) {
    std::vector<double> data;
    data.reserve(static_cast<size_t>(m.rows() * m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            data.push_back(static_cast<double>(m(i, j)));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

template <class S>
json tensor_to_json(const Vec<S>& v) {
    std::vector<double> data(static_cast<size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) data[static_cast<size_t>(i)] = v(i);
    return json{{"rows", v.size()}, {"cols", 1}, {"data", data}};
}

template <class S>
void tensor_from_json(const json& j, Mat<S>& m) {
    auto rows = j.at("rows").get<Eigen::Index>();
    auto cols = j.at("cols").get<Eigen::Index>();
    EVIDEX_REQUIRE(rows == m.rows() && cols == m.cols(), "schema",
                   "checkpoint tensor shape mismatch");
    const auto& data = j.at("data");
    size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index jj = 0; jj < cols; ++jj)
            m(i, jj) = static_cast<S>(data[k++].get<double>());
}

template <class S>
void tensor_from_json(const json& j, Vec<S>& v) {
    auto rows = j.at("rows").get<Eigen::Index>();
    EVIDEX_REQUIRE(rows == v.size() && j.at("cols").get<int>() == 1, "schema",
                   "checkpoint tensor shape mismatch");
    const auto& data = j.at("data");
    for (Eigen::Index i = 0; i < rows; ++i)
        v(i) = static_cast<S>(data[static_cast<size_t>(i)].get<double>());
}

}  // namespace detail

struct Checkpoint {
    ModelConfig config;
    Vocabulary vocab;
    std::vector<std::string> labels;

    template <class S>
    TransformerClassifier<S> instantiate(const json& params_json) const {
        TransformerClassifier<S> model(config);
        model.p.visit(
            [&](const std::string& name, Mat<S>& m) {
                detail::tensor_from_json(params_json.at(name), m);
            },
            [&](const std::string& name, Vec<S>& v) {
                detail::tensor_from_json(params_json.at(name), v);
            });
        return model;
    }
};

template <class S>
json checkpoint_to_json(const TransformerClassifier<S>& model, const Vocabulary& vocab,
                        const std::vector<std::string>& labels) {
    json params = json::object();
    auto& p = const_cast<Params<S>&>(model.p);
    p.visit(
        [&](const std::string& name, Mat<S>& m) { params[name] = detail::tensor_to_json(m); },
        [&](const std::string& name, Vec<S>& v) { params[name] = detail::tensor_to_json(v); });
    return json{{"schema_version", 1},
                {"config", model.cfg.to_json()},
                {"vocab", vocab.words()},
                {"labels", labels},
                {"params", params}};
}

template <class S>
void save_checkpoint(const std::string& path, const TransformerClassifier<S>& model,
                     const Vocabulary& vocab, const std::vector<std::string>& labels) {
    write_text_file(path, checkpoint_to_json(model, vocab, labels).dump());
}

template <class S>
TransformerClassifier<S> load_checkpoint(const std::string& path, Vocabulary* vocab_out,
                                         std::vector<std::string>* labels_out) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error("parse", std::string("checkpoint: ") + e.what());
    }
    Checkpoint ck;
    ck.config = ModelConfig::from_json(j.at("config"));
    ck.vocab = Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>());
    ck.labels = j.at("labels").get<std::vector<std::string>>();
    if (vocab_out) *vocab_out = ck.vocab;
    if (labels_out) *labels_out = ck.labels;
    return ck.instantiate<S>(j.at("params"));
}

// ---------------------------------------------------------------------------
// Explain pipeline: attribution + sufficiency (or a baseline selector) per
// instance, with the reduced-document faithfulness check included so the
// evaluate command needs no model.
// ---------------------------------------------------------------------------

struct ExplainOutput {
    std::vector<InstanceRecord> records;
    std::vector<AttributionResult> attributions;  // empty for baseline selectors
    std::vector<EncodedInstance> encodings;
};

template <class S>
ExplainOutput run_explain(const TransformerClassifier<S>& model, const Vocabulary& vocab,
                          const std::vector<DocumentInstance>& instances,
                          SelectorKind selector, AttributionMethod method, double lambda,
                          const AttributionOptions& opts = {}) {
    ExplainOutput out;
    const int max_len = model.cfg.max_len;
    std::string system = selector == SelectorKind::sufficient
                             ? "sufficient:" + method_name(method)
                             : selector_name(selector);
    for (const auto& inst : instances) {
        EncodedInstance enc = encode(vocab, inst, max_len);
        Vec<S> full_probs = model.predict(enc);
        Eigen::Index fp = 0;
        full_probs.maxCoeff(&fp);

        InstanceRecord rec;
        rec.doc_id = inst.doc_id;
        rec.gold_label = inst.label;
        rec.gold_evidence = inst.gold_evidence;
        rec.full_prediction = static_cast<int>(fp);
        rec.full_confidence = static_cast<double>(full_probs(fp));
        rec.system = system;

        if (selector == SelectorKind::sufficient) {
            AttributionResult attr =
                attribute(model, enc, method, rec.full_prediction,
                          static_cast<int>(inst.sentences.size()), opts);
            SufficiencyVerdict v =
                sufficient_subset(model, vocab, inst, attr.ranking, max_len, lambda);
            rec.evidence = v.selected;
            rec.verified = v.verified;
            rec.subset_confidence = v.subset_confidence;
            rec.steps = v.steps_taken;
            rec.lambda = lambda;
            out.attributions.push_back(std::move(attr));
        } else {
            rec.evidence = select_evidence(selector, inst, vocab, &model, max_len);
        }
        FaithfulnessCheck check =
            verify_faithfulness(model, vocab, inst, rec.evidence, max_len);
        rec.reduced_prediction = check.reduced_prediction;
        rec.reduced_confidence = check.reduced_confidence;
        rec.agrees = check.agrees;
        out.records.push_back(std::move(rec));
        out.encodings.push_back(std::move(enc));
    }
    return out;
}

struct SweepRow {
    double lambda = 0.0;
    double evidence_precision = 0.0;
    double evidence_recall = 0.0;
    double evidence_f1 = 0.0;
    double mean_evidence_length = 0.0;
    double faithfulness_agreement = 0.0;
};

// Evidence quality across lambda thresholds. Rankings and per-prefix model
// calls are computed once per instance and reused for every lambda.
template <class S>
std::vector<SweepRow> lambda_sweep(const TransformerClassifier<S>& model,
                                   const Vocabulary& vocab,
                                   const std::vector<DocumentInstance>& instances,
                                   AttributionMethod method,
                                   const std::vector<double>& lambdas,
                                   const AttributionOptions& opts = {}) {
    const int max_len = model.cfg.max_len;
    struct PerInstance {
        std::vector<std::pair<int, double>> prefix;  // (argmax, P(full class))
        int full_prediction = 0;
        double full_confidence = 0.0;
        std::vector<int> ranking;
    };
    std::vector<PerInstance> cache;
    for (const auto& inst : instances) {
        EncodedInstance enc = encode(vocab, inst, max_len);
        Vec<S> probs = model.predict(enc);
        Eigen::Index fp = 0;
        probs.maxCoeff(&fp);
        PerInstance pi;
        AttributionResult attr = attribute(model, enc, method, static_cast<int>(fp),
                                           static_cast<int>(inst.sentences.size()), opts);
        pi.ranking = attr.ranking;
        pi.prefix = ranked_prefix_confidences(model, vocab, inst, pi.ranking, max_len,
                                              &pi.full_prediction, &pi.full_confidence);
        cache.push_back(std::move(pi));
    }

    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        std::vector<std::vector<int>> selected;
        std::vector<std::optional<std::vector<int>>> gold;
        size_t agree = 0;
        for (size_t i = 0; i < instances.size(); ++i) {
            const auto& pi = cache[i];
            size_t k = pi.prefix.size();
            for (size_t j = 0; j < pi.prefix.size(); ++j) {
                if (pi.prefix[j].first == pi.full_prediction &&
                    pi.prefix[j].second >= lambda * pi.full_confidence) {
                    k = j + 1;
                    break;
                }
            }
            selected.emplace_back(pi.ranking.begin(),
                                  pi.ranking.begin() + static_cast<long>(k));
            gold.push_back(instances[i].gold_evidence);
            if (pi.prefix[k - 1].first == pi.full_prediction) ++agree;
        }
        EvidenceMetrics ev = evaluate_evidence(selected, gold);
        SweepRow row;
        row.lambda = lambda;
        row.evidence_precision = ev.precision;
        row.evidence_recall = ev.recall;
        row.evidence_f1 = ev.f1;
        row.mean_evidence_length = ev.mean_length;
        row.faithfulness_agreement =
            static_cast<double>(agree) / static_cast<double>(instances.size());
        rows.push_back(row);
    }
    return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "lambda,evidence_precision,evidence_recall,evidence_f1,mean_evidence_length,"
        "faithfulness_agreement\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.lambda,
                      r.evidence_precision, r.evidence_recall, r.evidence_f1,
                      r.mean_evidence_length, r.faithfulness_agreement);
        out += buf;
    }
    return out;
}

// Per-instance sentences with scores and selected flags, for offline review.
inline json highlight_export(const std::vector<DocumentInstance>& instances,
                             const ExplainOutput& out,
                             const std::vector<std::string>& labels) {
    json docs = json::array();
    for (size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const auto& rec = out.records[i];
        json sentences = json::array();
        std::set<int> selected(rec.evidence.begin(), rec.evidence.end());
        for (size_t s = 0; s < inst.sentences.size(); ++s) {
            json entry{{"index", s},
                       {"text", inst.sentences[s]},
                       {"selected", selected.count(static_cast<int>(s)) > 0}};
            if (i < out.attributions.size() &&
                s < out.attributions[i].sentence_scores.size())
                entry["score"] = out.attributions[i].sentence_scores[s];
            sentences.push_back(entry);
        }
        json d{{"doc_id", inst.doc_id},
               {"predicted", rec.full_prediction},
               {"confidence", rec.full_confidence},
               {"sentences", sentences}};
        if (!labels.empty() && rec.full_prediction < static_cast<int>(labels.size()))
            d["predicted_label"] = labels[static_cast<size_t>(rec.full_prediction)];
        docs.push_back(d);
    }
    return json{{"schema_version", 1}, {"documents", docs}};
}

}  // namespace evidex
