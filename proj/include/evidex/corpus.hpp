#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evidex/common.hpp"
#include "evidex/tokenizer.hpp"

namespace evidex {

using json = nlohmann::json;

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("schema", "unknown split: " + s);
}

enum class QueryKind { entity_pair, key_feature };

struct EntityRef {
    std::string surface;
    std::vector<int> sentences;  // sentence indices of the entity's mentions
};

struct TaskQuery {
    QueryKind kind = QueryKind::key_feature;
    std::optional<EntityRef> head;
    std::optional<EntityRef> tail;
    std::optional<std::string> feature_name;
};

struct DocumentInstance {
    std::string doc_id;
    std::vector<std::string> sentences;
    TaskQuery query;
    int label = 0;
    std::optional<std::vector<int>> gold_evidence;  // sorted, unique
    Split split = Split::train;
    // Training-internal: true for auxiliary D-minus-evidence examples that
    // carry no label and feed the entropy objective. Never serialized.
    bool entropy_target = false;
};

inline void validate_instance(const DocumentInstance& inst, int label_count) {
    EVIDEX_REQUIRE(!inst.sentences.empty(), "schema",
                   inst.doc_id + ": document has no sentences");
    for (const auto& s : inst.sentences) {
        EVIDEX_REQUIRE(!Vocabulary::split_tokens(s).empty(), "schema",
                       inst.doc_id + ": empty sentence");
    }
    if (!inst.entropy_target) {
        EVIDEX_REQUIRE(inst.label >= 0 && (label_count <= 0 || inst.label < label_count),
                       "schema", inst.doc_id + ": label out of range");
    }
    if (inst.gold_evidence) {
        EVIDEX_REQUIRE(!inst.gold_evidence->empty(), "schema",
                       inst.doc_id + ": gold_evidence present but empty");
        int n = static_cast<int>(inst.sentences.size());
        for (int e : *inst.gold_evidence)
            EVIDEX_REQUIRE(e >= 0 && e < n, "schema",
                           inst.doc_id + ": evidence index out of range");
    }
    if (inst.query.kind == QueryKind::entity_pair) {
        EVIDEX_REQUIRE(inst.query.head && inst.query.tail, "schema",
                       inst.doc_id + ": entity-pair query needs head and tail");
    } else {
        EVIDEX_REQUIRE(inst.query.feature_name.has_value(), "schema",
                       inst.doc_id + ": key-feature query needs feature_name");
    }
}

inline json query_to_json(const TaskQuery& q) {
    json out;
    out["kind"] = q.kind == QueryKind::entity_pair ? "entity-pair" : "key-feature";
    auto ent = [](const EntityRef& e) {
        return json{{"surface", e.surface}, {"sentences", e.sentences}};
    };
    if (q.head) out["head"] = ent(*q.head);
    if (q.tail) out["tail"] = ent(*q.tail);
    if (q.feature_name) out["feature_name"] = *q.feature_name;
    return out;
}

inline TaskQuery query_from_json(const json& j) {
    TaskQuery q;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "entity-pair") q.kind = QueryKind::entity_pair;
    else if (kind == "key-feature") q.kind = QueryKind::key_feature;
    else throw Error("schema", "unknown query kind: " + kind);
    auto ent = [](const json& e) {
        EntityRef r;
        r.surface = e.at("surface").get<std::string>();
        r.sentences = e.at("sentences").get<std::vector<int>>();
        return r;
    };
    if (j.contains("head")) q.head = ent(j.at("head"));
    if (j.contains("tail")) q.tail = ent(j.at("tail"));
    if (j.contains("feature_name")) q.feature_name = j.at("feature_name").get<std::string>();
    return q;
}

inline json instance_to_json(const DocumentInstance& inst) {
    json out;
    out["doc_id"] = inst.doc_id;
    out["sentences"] = inst.sentences;
    out["query"] = query_to_json(inst.query);
    out["label"] = inst.label;
    // evidence is omitted entirely (not null) when unsupervised
    if (inst.gold_evidence) out["evidence"] = *inst.gold_evidence;
    out["split"] = split_name(inst.split);
    return out;
}

inline DocumentInstance instance_from_json(const json& j) {
    DocumentInstance inst;
    inst.doc_id = j.at("doc_id").get<std::string>();
    inst.sentences = j.at("sentences").get<std::vector<std::string>>();
    inst.query = query_from_json(j.at("query"));
    inst.label = j.at("label").get<int>();
    if (j.contains("evidence")) inst.gold_evidence = j.at("evidence").get<std::vector<int>>();
    inst.split = split_from_name(j.at("split").get<std::string>());
    return inst;
}

inline std::string corpus_to_jsonl(const std::vector<DocumentInstance>& instances) {
    std::string out;
    for (const auto& inst : instances) {
        out += instance_to_json(inst).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<DocumentInstance> corpus_from_jsonl(const std::string& text) {
    std::vector<DocumentInstance> out;
    size_t start = 0, line_no = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("parse", "line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            out.push_back(instance_from_json(j));
        } catch (const json::exception& e) {
            throw Error("schema", "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_corpus_jsonl(const std::string& path,
                               const std::vector<DocumentInstance>& instances) {
    write_text_file(path, corpus_to_jsonl(instances));
}

inline std::vector<DocumentInstance> read_corpus_jsonl(const std::string& path) {
    return corpus_from_jsonl(read_text_file(path));
}

// Sidecar metadata written next to a dataset file. Carries the label
// vocabulary so integer labels in the JSONL stay interpretable.
struct DatasetMeta {
    int label_count = 0;
    std::vector<std::string> labels;
    std::string fingerprint;

    json to_json() const {
        return json{{"schema_version", 1},
                    {"label_count", label_count},
                    {"labels", labels},
                    {"fingerprint", fingerprint}};
    }

    static DatasetMeta from_json(const json& j) {
        DatasetMeta m;
        m.label_count = j.at("label_count").get<int>();
        m.labels = j.at("labels").get<std::vector<std::string>>();
        if (j.contains("fingerprint")) m.fingerprint = j.at("fingerprint").get<std::string>();
        return m;
    }
};

inline std::string meta_path_for(const std::string& dataset_path) {
    return dataset_path + ".meta.json";
}

// ---------------------------------------------------------------------------
// DocRED: loading the public JSON schema and recasting it as document-level
// relation classification over (head, tail) queries with an NA class.
// ---------------------------------------------------------------------------

struct DocredMention {
    std::string name;
    int sent_id = 0;
};

struct DocredFact {
    int head = 0;
    int tail = 0;
    std::string relation;
    std::vector<int> evidence;
};

struct DocredDoc {
    std::string title;
    std::vector<std::vector<std::string>> sents;       // token lists
    std::vector<std::vector<DocredMention>> vertices;  // entity -> mentions
    std::vector<DocredFact> facts;
};

inline std::vector<DocredDoc> load_docred(const std::string& path) {
    json root;
    try {
        root = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error("parse", std::string("DocRED JSON: ") + e.what());
    }
    EVIDEX_REQUIRE(root.is_array(), "schema", "DocRED root is not an array");
    std::vector<DocredDoc> docs;
    docs.reserve(root.size());
    for (size_t i = 0; i < root.size(); ++i) {
        const json& d = root[i];
        auto fail = [&](const std::string& what) {
            throw Error("schema", "document " + std::to_string(i) + ": " + what);
        };
        if (!d.contains("sents")) fail("missing key 'sents'");
        if (!d.contains("vertexSet")) fail("missing key 'vertexSet'");
        DocredDoc doc;
        doc.title = d.value("title", "doc" + std::to_string(i));
        try {
            doc.sents = d.at("sents").get<std::vector<std::vector<std::string>>>();
            for (const json& vertex : d.at("vertexSet")) {
                std::vector<DocredMention> mentions;
                for (const json& m : vertex) {
                    DocredMention dm;
                    dm.name = m.at("name").get<std::string>();
                    dm.sent_id = m.at("sent_id").get<int>();
                    mentions.push_back(std::move(dm));
                }
                doc.vertices.push_back(std::move(mentions));
            }
            if (d.contains("labels")) {
                for (const json& l : d.at("labels")) {
                    DocredFact f;
                    f.head = l.at("h").get<int>();
                    f.tail = l.at("t").get<int>();
                    f.relation = l.at("r").get<std::string>();
                    if (l.contains("evidence"))
                        f.evidence = l.at("evidence").get<std::vector<int>>();
                    doc.facts.push_back(std::move(f));
                }
            }
        } catch (const json::exception& e) {
            fail(e.what());
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

struct AdaptStats {
    size_t fact_instances = 0;
    size_t na_instances = 0;
    size_t na_target = 0;
    size_t docs_without_na_candidates = 0;  // fewer than 2 entities
};

struct AdaptResult {
    std::vector<DocumentInstance> instances;
    std::vector<std::string> labels;  // index 0 is "NA"
    AdaptStats stats;
};

namespace detail {

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

inline EntityRef entity_ref(const std::vector<DocredMention>& mentions) {
    EntityRef ref;
    ref.surface = mentions.empty() ? std::string("[UNK]") : mentions.front().name;
    std::set<int> sents;
    for (const auto& m : mentions) sents.insert(m.sent_id);
    ref.sentences.assign(sents.begin(), sents.end());
    return ref;
}

}  // namespace detail

// One instance per labeled (head, tail, relation) fact, plus NA instances
// from unlabeled entity pairs so that NA makes up na_fraction of the total.
// NA pairs are drawn round-robin across documents, without replacement
// inside a document, capped at (labeled facts in the document + 2).
inline AdaptResult adapt_docred(const std::vector<DocredDoc>& raw, double na_fraction,
                                uint64_t seed) {
    EVIDEX_REQUIRE(na_fraction >= 0.0 && na_fraction < 1.0, "config",
                   "na_fraction must be in [0, 1)");
    AdaptResult result;

    std::set<std::string> relation_set;
    for (const auto& doc : raw)
        for (const auto& f : doc.facts) relation_set.insert(f.relation);
    result.labels.push_back("NA");
    result.labels.insert(result.labels.end(), relation_set.begin(), relation_set.end());
    auto relation_id = [&](const std::string& r) {
        auto it = std::lower_bound(result.labels.begin() + 1, result.labels.end(), r);
        return static_cast<int>(it - result.labels.begin());
    };

    // Fact instances, in file order.
    for (const auto& doc : raw) {
        std::vector<std::string> sentences;
        for (const auto& s : doc.sents) sentences.push_back(detail::join_tokens(s));
        for (const auto& f : doc.facts) {
            DocumentInstance inst;
            inst.doc_id = doc.title + "#" + std::to_string(f.head) + ":" +
                          std::to_string(f.tail) + ":" + f.relation;
            inst.sentences = sentences;
            inst.query.kind = QueryKind::entity_pair;
            inst.query.head = detail::entity_ref(doc.vertices[static_cast<size_t>(f.head)]);
            inst.query.tail = detail::entity_ref(doc.vertices[static_cast<size_t>(f.tail)]);
            inst.label = relation_id(f.relation);
            if (!f.evidence.empty()) {
                std::set<int> ev(f.evidence.begin(), f.evidence.end());
                inst.gold_evidence = std::vector<int>(ev.begin(), ev.end());
            }
            result.instances.push_back(std::move(inst));
        }
    }
    result.stats.fact_instances = result.instances.size();

    // NA negatives. Candidate pairs per document: ordered (h, t), h != t,
    // with no labeled fact for that exact pair.
    size_t n_facts = result.stats.fact_instances;
    size_t target_na =
        static_cast<size_t>(std::llround(na_fraction / (1.0 - na_fraction) *
                                         static_cast<double>(n_facts)));
    result.stats.na_target = target_na;

    Rng rng(seed);
    struct DocPool {
        size_t doc_index;
        std::vector<std::pair<int, int>> pairs;  // shuffled, capped
        size_t next = 0;
    };
    std::vector<DocPool> pools;
    for (size_t di = 0; di < raw.size(); ++di) {
        const auto& doc = raw[di];
        int n_ent = static_cast<int>(doc.vertices.size());
        if (n_ent < 2) {
            result.stats.docs_without_na_candidates++;
            continue;
        }
        std::set<std::pair<int, int>> labeled;
        for (const auto& f : doc.facts) labeled.insert({f.head, f.tail});
        std::vector<std::pair<int, int>> candidates;
        for (int h = 0; h < n_ent; ++h)
            for (int t = 0; t < n_ent; ++t)
                if (h != t && !labeled.count({h, t})) candidates.emplace_back(h, t);
        if (candidates.empty()) {
            result.stats.docs_without_na_candidates++;
            continue;
        }
        rng.shuffle(candidates);
        size_t cap = doc.facts.size() + 2;
        if (candidates.size() > cap) candidates.resize(cap);
        pools.push_back(DocPool{di, std::move(candidates), 0});
    }

    std::vector<DocumentInstance> na_instances;
    bool progressed = true;
    while (na_instances.size() < target_na && progressed) {
        progressed = false;
        for (auto& pool : pools) {
            if (na_instances.size() >= target_na) break;
            if (pool.next >= pool.pairs.size()) continue;
            const auto& doc = raw[pool.doc_index];
            auto [h, t] = pool.pairs[pool.next++];
            progressed = true;
            DocumentInstance inst;
            inst.doc_id = doc.title + "#" + std::to_string(h) + ":" + std::to_string(t) + ":NA";
            for (const auto& s : doc.sents) inst.sentences.push_back(detail::join_tokens(s));
            inst.query.kind = QueryKind::entity_pair;
            inst.query.head = detail::entity_ref(doc.vertices[static_cast<size_t>(h)]);
            inst.query.tail = detail::entity_ref(doc.vertices[static_cast<size_t>(t)]);
            inst.label = 0;  // NA
            na_instances.push_back(std::move(inst));
        }
    }
    result.stats.na_instances = na_instances.size();
    for (auto& inst : na_instances) result.instances.push_back(std::move(inst));
    return result;
}

// Keep gold evidence on a uniformly random fraction of the evidence-bearing
// train instances; remove it from the rest. Val/test untouched.
inline std::vector<DocumentInstance> subsample_evidence_supervision(
    std::vector<DocumentInstance> instances, double fraction, uint64_t seed) {
    EVIDEX_REQUIRE(fraction >= 0.0 && fraction <= 1.0, "config",
                   "evidence fraction must be in [0, 1]");
    std::vector<size_t> bearing;
    for (size_t i = 0; i < instances.size(); ++i)
        if (instances[i].split == Split::train && instances[i].gold_evidence)
            bearing.push_back(i);
    size_t keep = static_cast<size_t>(
        std::llround(fraction * static_cast<double>(bearing.size())));
    Rng rng(seed);
    std::vector<int> order =
        rng.sample_without_replacement(static_cast<int>(bearing.size()),
                                       static_cast<int>(bearing.size()));
    std::vector<bool> kept(bearing.size(), false);
    for (size_t i = 0; i < keep; ++i) kept[static_cast<size_t>(order[i])] = true;
    for (size_t i = 0; i < bearing.size(); ++i)
        if (!kept[i]) instances[bearing[i]].gold_evidence.reset();
    return instances;
}

}  // namespace evidex
