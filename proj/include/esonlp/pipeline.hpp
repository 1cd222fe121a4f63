#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"
#include "esonlp/eval.hpp"
#include "esonlp/features.hpp"
#include "esonlp/model.hpp"
#include "esonlp/preprocess.hpp"
#include "esonlp/rules_config.hpp"
#include "esonlp/sectionizer.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace esonlp {

/// Masked, sectionized notes aligned with a corpus. Independent of the section policy.
struct PreparedCorpus {
    const Corpus* corpus = nullptr;
    std::vector<SectionedNote> notes;
};

inline PreparedCorpus prepare_corpus(const Corpus& corpus, const PipelineRules& rules) {
    PreparedCorpus p{&corpus, {}};
    p.notes.reserve(corpus.size());
    for (const auto& n : corpus.notes) {
        p.notes.push_back(prepare_note(n, rules));
    }
    return p;
}

struct FeatureSettings {
    SectionPolicy policy = SectionPolicy::ap_ih();
    std::size_t budget = kDefaultTokenBudget;
    VocabConfig vocab;
};

/// Vocabulary and linear model plus the input settings needed to reproduce features.
struct TrainedClassifier {
    Vocabulary vocab;
    LinearModel model;
    FeatureSettings features;
};

inline std::vector<TokenSeq> assemble_all(const PreparedCorpus& prepared, const FeatureSettings& fs) {
    std::vector<TokenSeq> docs;
    docs.reserve(prepared.notes.size());
    for (const auto& sn : prepared.notes) {
        docs.push_back(assemble_prepared(sn, fs.policy, fs.budget));
    }
    return docs;
}

/// Fits the vocabulary on the training notes only and trains on their training labels.
inline TrainedClassifier train_classifier(const PreparedCorpus& train, Task task, const FeatureSettings& fs,
                                          const Hyperparams& hp) {
    std::vector<std::size_t> labels;
    for (const auto& n : train.corpus->notes) {
        const auto g = training_label(n);
        if (!g) {
            throw DataError("training note " + n.note_id + " has no label");
        }
        labels.push_back(map_grade_to_task_label(*g, task));
    }
    const auto docs = assemble_all(train, fs);
    TrainedClassifier c{fit_vocabulary(docs, fs.vocab), {}, fs};
    std::vector<SparseVector> x;
    x.reserve(docs.size());
    for (const auto& d : docs) {
        x.push_back(tfidf_vector(d, c.vocab));
    }
    c.model = train_sgd(x, labels, task, hp, c.vocab.fingerprint());
    return c;
}

using NotePredictions = std::vector<std::pair<std::string, std::vector<double>>>;

inline NotePredictions predict_prepared(const TrainedClassifier& c, const PreparedCorpus& prepared) {
    NotePredictions out;
    out.reserve(prepared.notes.size());
    const auto docs = assemble_all(prepared, c.features);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        out.emplace_back(prepared.corpus->notes[i].note_id, predict_scores(c.model, tfidf_vector(docs[i], c.vocab)));
    }
    return out;
}

inline nlohmann::ordered_json classifier_to_json(const TrainedClassifier& c) {
    nlohmann::ordered_json j;
    j["policy"] = c.features.policy.name();
    j["budget"] = c.features.budget;
    j["vocab"] = c.vocab.to_json();
    j["model"] = c.model.to_json();
    return j;
}

inline TrainedClassifier classifier_from_json(const nlohmann::json& j) {
    try {
        FeatureSettings fs;
        fs.policy = SectionPolicy::parse(j.at("policy").get<std::string>());
        fs.budget = j.at("budget").get<std::size_t>();
        TrainedClassifier c{Vocabulary::from_json(j.at("vocab")), LinearModel::from_json(j.at("model")), fs};
        c.features.vocab = c.vocab.config();
        if (c.model.vocab_fingerprint != c.vocab.fingerprint()) {
            throw DataError("model was trained on a different vocabulary");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed classifier: ") + e.what());
    } catch (const UsageError& e) {
        throw DataError(std::string("malformed classifier: ") + e.what());
    }
}

/// Note- and patient-level evaluation of probability vectors against gold grades.
struct Evaluation {
    EvalReport note;
    EvalReport patient;
};

inline Evaluation evaluate_predictions(const Corpus& corpus, const std::map<std::string, std::vector<double>>& probs,
                                       Task task) {
    std::vector<std::size_t> preds, golds;
    std::vector<double> pos;
    std::map<std::string, std::size_t> classes;
    for (const auto& n : corpus.notes) {
        if (!n.gold_grade) {
            throw DataError("note " + n.note_id + " has no gold grade to evaluate against");
        }
        auto it = probs.find(n.note_id);
        if (it == probs.end()) {
            throw DataError("missing prediction for note " + n.note_id);
        }
        const std::size_t cls = predict_class(it->second);
        preds.push_back(cls);
        golds.push_back(map_grade_to_task_label(*n.gold_grade, task));
        if (is_binary(task)) {
            pos.push_back(it->second[1]);
        }
        classes[n.note_id] = cls;
    }
    Evaluation e;
    e.note = evaluate(preds, golds, task, EvalLevel::Note, pos);
    e.patient = evaluate_patients(aggregate_patient(classes, corpus, task), task);
    return e;
}

inline std::map<std::string, std::vector<double>> to_map(const NotePredictions& p) {
    return {p.begin(), p.end()};
}

inline double macro_f1_of(const TrainedClassifier& c, const PreparedCorpus& eval_set, Task task) {
    return evaluate_predictions(*eval_set.corpus, to_map(predict_prepared(c, eval_set)), task).note.macro_f1;
}

// ---------------------------------------------------------------------------
// Full run

/// Error raised by run_pipeline; names the failing stage.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what, int exit_code)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}

    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const UsageError& e) {
        throw StageError(stage, e.what(), 1);
    } catch (const DataError& e) {
        throw StageError(stage, e.what(), 2);
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), 3);
    }
}

struct RunConfig {
    Task task = Task::Task1;
    FeatureSettings features;
    std::optional<std::string> rules_path;
    Hyperparams hp;
    SplitRatios split;
    std::uint64_t seed = 0;
    std::string gold_path;
    std::optional<std::string> silver_path;
    std::optional<std::string> cross_domain_path;
    std::optional<std::string> eval_predictions_path;
    std::optional<IcdCodeSet> icd;
    std::string out_dir;
};

struct RunResult {
    SplitCorpus split;
    std::optional<TrainedClassifier> classifier;
    std::optional<Evaluation> dev;
    Evaluation test;
    std::optional<Evaluation> cross_domain;
    std::optional<IcdComparison> icd;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << content;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

inline void write_predictions_file(const std::filesystem::path& path, const NotePredictions& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    write_predictions(p, out);
}

inline void write_evaluation(const std::filesystem::path& dir, const std::string& tag, const Evaluation& e,
                             const std::string& model_name) {
    write_json(dir / ("report_note_" + tag + ".json"), report_to_json(e.note));
    write_json(dir / ("report_patient_" + tag + ".json"), report_to_json(e.patient));
    write_text(dir / ("report_" + tag + ".txt"),
               render_report(e.note, model_name) + "\n" + render_report(e.patient, model_name));
}

inline nlohmann::ordered_json split_summary(const SplitCorpus& s) {
    nlohmann::ordered_json j;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
        const std::string key = part == &s.train ? "train" : (part == &s.dev ? "dev" : "test");
        j[key] = {{"patients", part->patient_ids().size()}, {"notes", part->size()}};
    }
    return j;
}

} // namespace detail

/**
 * split -> preprocess -> fit vocabulary (train only) -> train (gold or
 * gold+silver) -> predict dev/test -> note- and patient-level reports ->
 * optional cross-domain evaluation and ICD comparison. Every artifact lands in
 * `out_dir` next to a manifest of the configuration.
 */
inline RunResult run_pipeline(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    RunResult result;
    const fs::path out = cfg.out_dir;
    run_stage("config", [&] {
        cfg.hp.validate();
        if (cfg.features.budget < 1) {
            throw UsageError("budget must be at least 1");
        }
        if (cfg.icd && cfg.task != Task::Task1) {
            throw UsageError("ICD comparison uses Task 1 predictions; run with --task 1");
        }
        fs::create_directories(out);
    });

    const PipelineRules rules =
        run_stage("rules", [&] { return cfg.rules_path ? load_rules_config(*cfg.rules_path) : PipelineRules{}; });
    const Corpus gold = run_stage("load", [&] { return load_corpus(cfg.gold_path); });
    result.split = run_stage("split", [&] {
        for (const auto& n : gold.notes) {
            if (!n.gold_grade) {
                throw DataError("gold corpus note " + n.note_id + " has no gold_grade");
            }
        }
        return split_corpus(gold, cfg.split, cfg.seed);
    });

    nlohmann::ordered_json manifest;
    manifest["task"] = task_number(cfg.task);
    manifest["seed"] = cfg.seed;
    manifest["split_ratios"] = {cfg.split.train, cfg.split.dev, cfg.split.test};
    manifest["policy"] = cfg.features.policy.name();
    manifest["budget"] = cfg.features.budget;
    manifest["rules"] = cfg.rules_path ? *cfg.rules_path : "builtin";
    manifest["vocab_config"] = {{"min_df", cfg.features.vocab.min_df},
                                {"max_features", cfg.features.vocab.max_features
                                                     ? nlohmann::ordered_json(*cfg.features.vocab.max_features)
                                                     : nlohmann::ordered_json(nullptr)},
                                {"ngram_max", cfg.features.vocab.ngram_max}};
    manifest["hyperparams"] = cfg.hp.to_json();
    manifest["inputs"] = {{"gold", cfg.gold_path}};
    manifest["split"] = detail::split_summary(result.split);

    const std::string model_name = cfg.eval_predictions_path ? "external" : "BoW+SGD";
    std::vector<std::string> artifacts;

    if (cfg.eval_predictions_path) {
        manifest["inputs"]["eval_predictions"] = *cfg.eval_predictions_path;
        manifest["predictions_source"] = "external";
        result.test = run_stage("evaluate", [&] {
            const auto external = ingest_predictions(*cfg.eval_predictions_path, gold, cfg.task);
            return evaluate_predictions(result.split.test, external.entries, cfg.task);
        });
        if (cfg.icd) {
            result.icd = run_stage("compare-icd", [&] {
                const auto external = ingest_predictions(*cfg.eval_predictions_path, gold, cfg.task);
                std::map<std::string, std::size_t> classes;
                for (const auto& [id, probs] : external.entries) {
                    classes[id] = predict_class(probs);
                }
                return compare_icd(result.split.test, *cfg.icd, classes);
            });
        }
    } else {
        manifest["predictions_source"] = "internal";
        const Corpus train_corpus = run_stage("merge", [&] {
            if (!cfg.silver_path) {
                return result.split.train;
            }
            return merge_training_data(result.split.train, load_corpus(*cfg.silver_path));
        });
        std::size_t gold_n = 0, silver_n = 0;
        for (const auto& n : train_corpus.notes) {
            (note_tier(n) == LabelTier::Gold ? gold_n : silver_n)++;
        }
        nlohmann::ordered_json training;
        training["tiers"] = cfg.silver_path ? nlohmann::ordered_json::array({"gold", "silver"})
                                            : nlohmann::ordered_json::array({"gold"});
        training["gold_notes"] = gold_n;
        training["silver_notes"] = silver_n;
        training["merged_notes"] = train_corpus.size();
        manifest["training"] = training;
        if (cfg.silver_path) {
            manifest["inputs"]["silver"] = *cfg.silver_path;
        }

        const auto prepared_train = run_stage("preprocess", [&] { return prepare_corpus(train_corpus, rules); });
        const auto prepared_dev = run_stage("preprocess", [&] { return prepare_corpus(result.split.dev, rules); });
        const auto prepared_test = run_stage("preprocess", [&] { return prepare_corpus(result.split.test, rules); });

        result.classifier =
            run_stage("train", [&] { return train_classifier(prepared_train, cfg.task, cfg.features, cfg.hp); });
        const auto& clf = *result.classifier;
        run_stage("write-model", [&] {
            detail::write_json(out / "vocab.json", clf.vocab.to_json());
            detail::write_json(out / "model.json", clf.model.to_json());
        });
        artifacts.insert(artifacts.end(), {"vocab.json", "model.json"});

        const auto dev_preds = run_stage("predict", [&] { return predict_prepared(clf, prepared_dev); });
        const auto test_preds = run_stage("predict", [&] { return predict_prepared(clf, prepared_test); });
        run_stage("write-predictions", [&] {
            detail::write_predictions_file(out / "predictions_dev.jsonl", dev_preds);
            detail::write_predictions_file(out / "predictions_test.jsonl", test_preds);
        });
        artifacts.insert(artifacts.end(), {"predictions_dev.jsonl", "predictions_test.jsonl"});

        result.dev = run_stage("evaluate", [&] {
            return evaluate_predictions(result.split.dev, to_map(dev_preds), cfg.task);
        });
        result.test = run_stage("evaluate", [&] {
            return evaluate_predictions(result.split.test, to_map(test_preds), cfg.task);
        });
        run_stage("write-reports", [&] { detail::write_evaluation(out, "dev", *result.dev, model_name); });
        artifacts.insert(artifacts.end(), {"report_note_dev.json", "report_patient_dev.json", "report_dev.txt"});

        if (cfg.cross_domain_path) {
            manifest["inputs"]["cross_domain"] = *cfg.cross_domain_path;
            result.cross_domain = run_stage("cross-domain", [&] {
                const Corpus cross = load_corpus(*cfg.cross_domain_path);
                const auto preds = predict_prepared(clf, prepare_corpus(cross, rules));
                detail::write_predictions_file(out / "predictions_cross.jsonl", preds);
                return evaluate_predictions(cross, to_map(preds), cfg.task);
            });
            run_stage("write-reports",
                      [&] { detail::write_evaluation(out, "cross", *result.cross_domain, model_name); });
            artifacts.insert(artifacts.end(), {"predictions_cross.jsonl", "report_note_cross.json",
                                               "report_patient_cross.json", "report_cross.txt"});
        }
        if (cfg.icd) {
            result.icd = run_stage("compare-icd", [&] {
                std::map<std::string, std::size_t> classes;
                for (const auto& [id, probs] : test_preds) {
                    classes[id] = predict_class(probs);
                }
                return compare_icd(result.split.test, *cfg.icd, classes);
            });
        }
    }

    run_stage("write-reports", [&] { detail::write_evaluation(out, "test", result.test, model_name); });
    artifacts.insert(artifacts.end(), {"report_note_test.json", "report_patient_test.json", "report_test.txt"});
    if (result.icd) {
        manifest["icd_codeset"] = cfg.icd->name;
        run_stage("write-reports",
                  [&] { detail::write_json(out / "icd_comparison.json", icd_comparison_to_json(*result.icd)); });
        artifacts.push_back("icd_comparison.json");
    }
    artifacts.push_back("manifest.json");
    manifest["artifacts"] = artifacts;
    result.manifest = manifest;
    run_stage("write-manifest", [&] { detail::write_json(out / "manifest.json", manifest); });
    return result;
}

} // namespace esonlp
