#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evidex/corpus.hpp"
#include "evidex/evaluation.hpp"

namespace evidex {

// One evaluated instance from one system: full-document prediction,
// selected evidence, and the reduced-document re-prediction.
struct InstanceRecord {
    std::string doc_id;
    int gold_label = 0;
    std::optional<std::vector<int>> gold_evidence;
    int full_prediction = 0;
    double full_confidence = 0.0;
    std::vector<int> evidence;
    bool verified = false;
    double subset_confidence = 0.0;
    int steps = 0;
    double lambda = 0.0;
    int reduced_prediction = 0;
    double reduced_confidence = 0.0;
    bool agrees = false;
    std::string system;  // selector or "sufficient:<method>"

    json to_json() const {
        json j{{"doc_id", doc_id},
               {"gold_label", gold_label},
               {"full_prediction", full_prediction},
               {"full_confidence", full_confidence},
               {"evidence", evidence},
               {"verified", verified},
               {"subset_confidence", subset_confidence},
               {"steps", steps},
               {"lambda", lambda},
               {"reduced_prediction", reduced_prediction},
               {"reduced_confidence", reduced_confidence},
               {"agrees", agrees},
               {"system", system}};
        if (gold_evidence) j["gold_evidence"] = *gold_evidence;
        return j;
    }

    static InstanceRecord from_json(const json& j) {
        InstanceRecord r;
        r.doc_id = j.at("doc_id").get<std::string>();
        r.gold_label = j.at("gold_label").get<int>();
        if (j.contains("gold_evidence"))
            r.gold_evidence = j.at("gold_evidence").get<std::vector<int>>();
        r.full_prediction = j.at("full_prediction").get<int>();
        r.full_confidence = j.at("full_confidence").get<double>();
        r.evidence = j.at("evidence").get<std::vector<int>>();
        r.verified = j.at("verified").get<bool>();
        r.subset_confidence = j.at("subset_confidence").get<double>();
        r.steps = j.at("steps").get<int>();
        r.lambda = j.at("lambda").get<double>();
        r.reduced_prediction = j.at("reduced_prediction").get<int>();
        r.reduced_confidence = j.at("reduced_confidence").get<double>();
        r.agrees = j.at("agrees").get<bool>();
        r.system = j.at("system").get<std::string>();
        return r;
    }
};

inline std::string records_to_jsonl(const std::vector<InstanceRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

inline std::vector<InstanceRecord> records_from_jsonl(const std::string& text) {
    std::vector<InstanceRecord> out;
    size_t start = 0, line_no = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(InstanceRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error("parse", "record line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

struct SystemMetrics {
    double label_accuracy = 0.0;
    double label_macro_f1 = 0.0;
    double reduced_label_accuracy = 0.0;
    double reduced_label_macro_f1 = 0.0;
    double evidence_precision = 0.0;
    double evidence_recall = 0.0;
    double evidence_f1 = 0.0;
    double mean_evidence_length = 0.0;
    double faithfulness_agreement = 0.0;

    json to_json() const {
        return json{{"label_accuracy", label_accuracy},
                    {"label_macro_f1", label_macro_f1},
                    {"reduced_label_accuracy", reduced_label_accuracy},
                    {"reduced_label_macro_f1", reduced_label_macro_f1},
                    {"evidence_precision", evidence_precision},
                    {"evidence_recall", evidence_recall},
                    {"evidence_f1", evidence_f1},
                    {"mean_evidence_length", mean_evidence_length},
                    {"faithfulness_agreement", faithfulness_agreement}};
    }

    static SystemMetrics from_json(const json& j) {
        SystemMetrics m;
        m.label_accuracy = j.at("label_accuracy").get<double>();
        m.label_macro_f1 = j.at("label_macro_f1").get<double>();
        m.reduced_label_accuracy = j.at("reduced_label_accuracy").get<double>();
        m.reduced_label_macro_f1 = j.at("reduced_label_macro_f1").get<double>();
        m.evidence_precision = j.at("evidence_precision").get<double>();
        m.evidence_recall = j.at("evidence_recall").get<double>();
        m.evidence_f1 = j.at("evidence_f1").get<double>();
        m.mean_evidence_length = j.at("mean_evidence_length").get<double>();
        m.faithfulness_agreement = j.at("faithfulness_agreement").get<double>();
        return m;
    }
};

struct SignificanceEntry {
    double p_value = 1.0;
    bool significant = false;
};

struct EvalReport {
    int schema_version = 1;
    std::string fingerprint;
    std::map<std::string, SystemMetrics> systems;
    std::map<std::string, SignificanceEntry> significance;

    json to_json() const {
        json sys = json::object();
        for (const auto& [name, m] : systems) sys[name] = m.to_json();
        json sig = json::object();
        for (const auto& [name, e] : significance)
            sig[name] = json{{"p_value", e.p_value}, {"significant", e.significant}};
        return json{{"schema_version", schema_version},
                    {"fingerprint", fingerprint},
                    {"systems", sys},
                    {"significance", sig}};
    }

    static EvalReport from_json(const json& j) {
        EvalReport r;
        r.schema_version = j.at("schema_version").get<int>();
        r.fingerprint = j.value("fingerprint", "");
        for (const auto& [name, m] : j.at("systems").items())
            r.systems[name] = SystemMetrics::from_json(m);
        for (const auto& [name, e] : j.at("significance").items())
            r.significance[name] = SignificanceEntry{e.at("p_value").get<double>(),
                                                     e.at("significant").get<bool>()};
        return r;
    }
};

inline SystemMetrics system_metrics_from_records(const std::vector<InstanceRecord>& records,
                                                 int label_count) {
    EVIDEX_REQUIRE(!records.empty(), "config", "no records to evaluate");
    std::vector<int> preds, reduced, golds;
    std::vector<std::vector<int>> evidence;
    std::vector<std::optional<std::vector<int>>> gold_ev;
    size_t agree = 0;
    for (const auto& r : records) {
        preds.push_back(r.full_prediction);
        reduced.push_back(r.reduced_prediction);
        golds.push_back(r.gold_label);
        evidence.push_back(r.evidence);
        gold_ev.push_back(r.gold_evidence);
        if (r.agrees) ++agree;
    }
    SystemMetrics m;
    LabelMetrics full = evaluate_labels(preds, golds, label_count);
    LabelMetrics red = evaluate_labels(reduced, golds, label_count);
    m.label_accuracy = full.accuracy;
    m.label_macro_f1 = full.macro_f1;
    m.reduced_label_accuracy = red.accuracy;
    m.reduced_label_macro_f1 = red.macro_f1;
    EvidenceMetrics ev = evaluate_evidence(evidence, gold_ev);
    m.evidence_precision = ev.precision;
    m.evidence_recall = ev.recall;
    m.evidence_f1 = ev.f1;
    m.mean_evidence_length = ev.mean_length;
    m.faithfulness_agreement = static_cast<double>(agree) / static_cast<double>(records.size());
    return m;
}

// Aggregate per-system metrics plus pairwise one-sided significance tests
// on per-instance evidence F1 and label correctness. All systems must cover
// the same instances in the same order.
inline EvalReport build_report(
    const std::map<std::string, std::vector<InstanceRecord>>& systems, int label_count,
    int n_resamples = 10000, uint64_t seed = 17) {
    EVIDEX_REQUIRE(!systems.empty(), "config", "no systems to report");
    EvalReport report;
    const std::vector<InstanceRecord>* reference = nullptr;
    for (const auto& [name, records] : systems) {
        if (!reference) {
            reference = &records;
        } else {
            EVIDEX_REQUIRE(records.size() == reference->size(), "instance-mismatch",
                           "systems cover different instance counts");
            for (size_t i = 0; i < records.size(); ++i)
                EVIDEX_REQUIRE(records[i].doc_id == (*reference)[i].doc_id,
                               "instance-mismatch",
                               "instance-ID mismatch across systems at row " +
                                   std::to_string(i));
        }
        report.systems[name] = system_metrics_from_records(records, label_count);
    }

    auto evidence_scores = [](const std::vector<InstanceRecord>& records) {
        std::vector<std::vector<int>> ev;
        std::vector<std::optional<std::vector<int>>> gold;
        for (const auto& r : records) {
            ev.push_back(r.evidence);
            gold.push_back(r.gold_evidence);
        }
        return per_instance_evidence_f1(ev, gold);
    };
    auto accuracy_scores = [](const std::vector<InstanceRecord>& records) {
        std::vector<double> out;
        for (const auto& r : records)
            out.push_back(r.full_prediction == r.gold_label ? 1.0 : 0.0);
        return out;
    };

    for (const auto& [na, ra] : systems) {
        for (const auto& [nb, rb] : systems) {
            if (na == nb) continue;
            auto ea = evidence_scores(ra), eb = evidence_scores(rb);
            if (!ea.empty() && ea.size() == eb.size()) {
                BootstrapResult r = paired_bootstrap(ea, eb, n_resamples, seed);
                report.significance["evidence_f1:" + nb + ">" + na] =
                    SignificanceEntry{r.p_value, r.significant};
            }
            BootstrapResult r =
                paired_bootstrap(accuracy_scores(ra), accuracy_scores(rb), n_resamples, seed);
            report.significance["label_acc:" + nb + ">" + na] =
                SignificanceEntry{r.p_value, r.significant};
        }
    }
    return report;
}

}  // namespace evidex
