#include "esonlp/esonlp.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace esonlp;

// Output to a file, or stdout for "-".
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (path != "-") {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) {
                throw DataError("cannot write " + path);
            }
        }
    }
    std::ostream& get() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

struct ModelFlags {
    int task = 1;
    std::string policy = "ap-ih";
    std::size_t budget = kDefaultTokenBudget;
    std::uint64_t seed = 0;
    std::string rules;
    std::string loss = "logistic";
    double lambda = Hyperparams{}.l2_lambda;
    std::size_t epochs = Hyperparams{}.epochs;
    double eta0 = Hyperparams{}.eta0;
    bool balanced = false;
    std::size_t min_df = 1;
    std::size_t ngram_max = 1;
    std::size_t max_features = 0;

    void add_task(CLI::App* sub) {
        sub->add_option("--task", task, "1: none vs any, 2: grade<=1 vs 2-3, 3: none / 1 / 2-3")
            ->check(CLI::IsMember({1, 2, 3}));
    }
    void add_features(CLI::App* sub) {
        sub->add_option("--policy", policy, "ap-ih, ap-ih-rt-ros, full or a comma list of sections");
        sub->add_option("--budget", budget, "token budget per note")->check(CLI::PositiveNumber);
        sub->add_option("--rules", rules, "section and mask rules file");
        sub->add_option("--min-df", min_df, "minimum document frequency");
        sub->add_option("--ngram-max", ngram_max, "longest n-gram")->check(CLI::Range(1, 3));
        sub->add_option("--max-features", max_features, "keep the most frequent terms (0 = all)");
    }
    void add_training(CLI::App* sub) {
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--loss", loss, "logistic or hinge")->check(CLI::IsMember({"logistic", "hinge"}));
        sub->add_option("--lambda", lambda, "L2 penalty");
        sub->add_option("--epochs", epochs, "passes over the training data");
        sub->add_option("--eta0", eta0, "initial learning rate");
        sub->add_flag("--balanced", balanced, "inverse-frequency class weights");
    }

    Task task_id() const { return task_from_int(task); }

    FeatureSettings features() const {
        FeatureSettings fs;
        fs.policy = SectionPolicy::parse(policy);
        fs.budget = budget;
        fs.vocab.min_df = min_df;
        fs.vocab.ngram_max = ngram_max;
        if (max_features > 0) {
            fs.vocab.max_features = max_features;
        }
        return fs;
    }

    Hyperparams hyperparams() const {
        Hyperparams hp;
        hp.loss = loss == "hinge" ? Loss::Hinge : Loss::Logistic;
        hp.l2_lambda = lambda;
        hp.epochs = epochs;
        hp.eta0 = eta0;
        hp.seed = seed;
        hp.class_weighting = balanced ? ClassWeighting::InverseFrequency : ClassWeighting::None;
        hp.validate();
        return hp;
    }

    PipelineRules pipeline_rules() const { return rules.empty() ? PipelineRules{} : load_rules_config(rules); }
};

SplitRatios parse_split(const std::string& s) {
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::logic_error&) {
            throw UsageError("--split expects three numbers such as 0.8,0.1,0.1");
        }
    }
    if (parts.size() != 3) {
        throw UsageError("--split expects three numbers such as 0.8,0.1,0.1");
    }
    return {parts[0], parts[1], parts[2]};
}

IcdCodeSet parse_icd(const std::string& s) {
    if (s == "narrow") {
        return narrow_icd_codes();
    }
    if (s == "broad") {
        return broad_icd_codes();
    }
    return load_icd_codes(s);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::map<std::string, std::size_t> predicted_classes(const PredictionSet& p) {
    std::map<std::string, std::size_t> out;
    for (const auto& [id, probs] : p.entries) {
        out[id] = predict_class(probs);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Esophagitis grade extraction from clinical notes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "esonlp 1.0.0");

    // synth
    std::string synth_spec, synth_bank, synth_out;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    synth->add_option("--spec", synth_spec, "generator settings (JSON)");
    synth->add_option("--phrase-bank", synth_bank, "phrase bank file");
    synth->add_option("--seed", synth_seed, "override the spec seed");
    synth->add_option("--out", synth_out, "corpus file (JSONL)")->required();

    // sectionize
    std::string sec_notes, sec_rules, sec_out = "-";
    auto* sectionize_cmd = app.add_subcommand("sectionize", "emit section spans for every note");
    sectionize_cmd->add_option("--notes", sec_notes, "corpus file")->required();
    sectionize_cmd->add_option("--rules", sec_rules, "section and mask rules file");
    sectionize_cmd->add_option("--out", sec_out, "output JSONL (- for stdout)");

    // preprocess
    ModelFlags pre_flags;
    std::string pre_notes, pre_out = "-";
    auto* preprocess_cmd = app.add_subcommand("preprocess", "emit the assembled model input for every note");
    preprocess_cmd->add_option("--notes", pre_notes, "corpus file")->required();
    pre_flags.add_features(preprocess_cmd);
    preprocess_cmd->add_option("--out", pre_out, "output JSONL (- for stdout)");

    // train
    ModelFlags train_flags;
    std::string train_corpus, train_silver, train_out;
    auto* train_cmd = app.add_subcommand("train", "fit a classifier on every note of a corpus");
    train_cmd->add_option("--corpus", train_corpus, "labeled training corpus")->required();
    train_cmd->add_option("--silver", train_silver, "silver-labeled corpus merged into training");
    train_flags.add_task(train_cmd);
    train_flags.add_features(train_cmd);
    train_flags.add_training(train_cmd);
    train_cmd->add_option("--out", train_out, "classifier file (JSON)")->required();

    // predict
    std::string pred_model, pred_notes, pred_rules, pred_out = "-";
    auto* predict_cmd = app.add_subcommand("predict", "score notes with a trained classifier");
    predict_cmd->add_option("--model", pred_model, "classifier file from train")->required();
    predict_cmd->add_option("--notes", pred_notes, "corpus file")->required();
    predict_cmd->add_option("--rules", pred_rules, "rules file used at training time");
    predict_cmd->add_option("--out", pred_out, "predictions JSONL (- for stdout)");

    // evaluate
    int eval_task = 1;
    std::string eval_corpus, eval_preds, eval_out, eval_name = "model";
    auto* evaluate_cmd = app.add_subcommand("evaluate", "note- and patient-level reports for a prediction file");
    evaluate_cmd->add_option("--corpus", eval_corpus, "gold-labeled corpus")->required();
    evaluate_cmd->add_option("--predictions", eval_preds, "predictions JSONL")->required();
    evaluate_cmd->add_option("--task", eval_task)->check(CLI::IsMember({1, 2, 3}));
    evaluate_cmd->add_option("--name", eval_name, "model name in the text report");
    evaluate_cmd->add_option("--out", eval_out, "directory for JSON and text reports");

    // ablate
    ModelFlags abl_flags;
    std::string abl_corpus, abl_split = "0.8,0.1,0.1", abl_out = "-";
    std::vector<std::string> abl_sections;
    auto* ablate_cmd = app.add_subcommand("ablate", "dev macro-F1 for every combination of sections");
    ablate_cmd->add_option("--corpus", abl_corpus, "gold-labeled corpus")->required();
    ablate_cmd->add_option("--split", abl_split, "train,dev,test ratios");
    ablate_cmd->add_option("--sections", abl_sections, "candidate sections (default: all five)")->delimiter(',');
    abl_flags.add_task(ablate_cmd);
    abl_flags.add_features(ablate_cmd);
    abl_flags.add_training(ablate_cmd);
    ablate_cmd->add_option("--out", abl_out, "output JSON (- for stdout)");

    // compare-icd
    std::string icd_corpus, icd_preds, icd_codes = "narrow", icd_out = "-";
    auto* icd_cmd = app.add_subcommand("compare-icd", "patient-level NLP vs ICD-10 agreement (Task 1)");
    icd_cmd->add_option("--corpus", icd_corpus, "corpus with ICD-10 codes")->required();
    icd_cmd->add_option("--predictions", icd_preds, "Task 1 predictions JSONL")->required();
    icd_cmd->add_option("--icd-codes", icd_codes, "narrow, broad or a file of code prefixes");
    icd_cmd->add_option("--out", icd_out, "output JSON (- for stdout)");

    // run
    ModelFlags run_flags;
    std::string run_corpus, run_silver, run_cross, run_eval, run_icd, run_split = "0.8,0.1,0.1", run_out;
    auto* run_cmd = app.add_subcommand("run", "split, train, predict and evaluate in one go");
    run_cmd->add_option("--corpus", run_corpus, "gold-labeled corpus")->required();
    run_cmd->add_option("--silver", run_silver, "silver-labeled corpus merged into training");
    run_cmd->add_option("--cross-domain", run_cross, "second gold corpus evaluated without retraining");
    run_cmd->add_option("--eval-predictions", run_eval, "evaluate external predictions instead of training");
    run_cmd->add_option("--icd-codes", run_icd, "narrow, broad or a file of code prefixes (Task 1)");
    run_cmd->add_option("--split", run_split, "train,dev,test ratios");
    run_flags.add_task(run_cmd);
    run_flags.add_features(run_cmd);
    run_flags.add_training(run_cmd);
    run_cmd->add_option("--out", run_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            SynthSpec spec = synth_spec.empty() ? SynthSpec{} : SynthSpec::from_json(read_json_file(synth_spec));
            if (synth_seed) {
                spec.seed = *synth_seed;
            }
            const PhraseBank bank = synth_bank.empty() ? default_phrase_bank() : load_phrase_bank(synth_bank);
            save_corpus(generate_corpus(spec, bank), synth_out);
        } else if (*sectionize_cmd) {
            const auto rules = sec_rules.empty() ? PipelineRules{} : load_rules_config(sec_rules);
            const Corpus corpus = load_corpus(sec_notes);
            Sink sink(sec_out);
            for (const auto& n : corpus.notes) {
                const auto sn = sectionize(n.text, rules.sections, n.note_id);
                auto spans = nlohmann::ordered_json::array();
                for (const auto& s : sn.spans) {
                    spans.push_back({{"label", to_string(s.label)}, {"start", s.start}, {"end", s.end}});
                }
                nlohmann::ordered_json row;
                row["note_id"] = n.note_id;
                row["spans"] = std::move(spans);
                sink.get() << row.dump() << "\n";
            }
        } else if (*preprocess_cmd) {
            const auto rules = pre_flags.pipeline_rules();
            const auto fs = pre_flags.features();
            const Corpus corpus = load_corpus(pre_notes);
            Sink sink(pre_out);
            for (const auto& n : corpus.notes) {
                nlohmann::ordered_json row;
                row["note_id"] = n.note_id;
                row["tokens"] = assemble_input(n, rules, fs.policy, fs.budget).tokens;
                sink.get() << row.dump() << "\n";
            }
        } else if (*train_cmd) {
            const auto rules = train_flags.pipeline_rules();
            const auto fs = train_flags.features();
            const auto hp = train_flags.hyperparams();
            Corpus corpus = load_corpus(train_corpus);
            if (!train_silver.empty()) {
                corpus = merge_training_data(corpus, load_corpus(train_silver));
            }
            const auto clf = train_classifier(prepare_corpus(corpus, rules), train_flags.task_id(), fs, hp);
            Sink sink(train_out);
            sink.get() << classifier_to_json(clf).dump() << "\n";
        } else if (*predict_cmd) {
            const auto clf = classifier_from_json(read_json_file(pred_model));
            const auto rules = pred_rules.empty() ? PipelineRules{} : load_rules_config(pred_rules);
            const Corpus corpus = load_corpus(pred_notes);
            Sink sink(pred_out);
            write_predictions(predict_prepared(clf, prepare_corpus(corpus, rules)), sink.get());
        } else if (*evaluate_cmd) {
            const Task task = task_from_int(eval_task);
            const Corpus corpus = load_corpus(eval_corpus);
            const auto preds = ingest_predictions(eval_preds, corpus, task);
            const auto e = evaluate_predictions(corpus, preds.entries, task);
            const std::string text = render_report(e.note, eval_name) + "\n" + render_report(e.patient, eval_name);
            if (!eval_out.empty()) {
                std::filesystem::create_directories(eval_out);
                detail::write_evaluation(eval_out, "eval", e, eval_name);
            }
            std::cout << text;
        } else if (*ablate_cmd) {
            const auto rules = abl_flags.pipeline_rules();
            const auto base = abl_flags.features();
            const auto hp = abl_flags.hyperparams();
            const Task task = abl_flags.task_id();
            std::vector<SectionLabel> candidates(kSelectableSections.begin(), kSelectableSections.end());
            if (!abl_sections.empty()) {
                candidates.clear();
                for (const auto& s : abl_sections) {
                    candidates.push_back(section_label_from_string(s));
                }
            }
            const Corpus corpus = load_corpus(abl_corpus);
            const auto split = split_corpus(corpus, parse_split(abl_split), abl_flags.seed);
            const auto train_prep = prepare_corpus(split.train, rules);
            const auto dev_prep = prepare_corpus(split.dev, rules);
            const auto results = ablate_sections(
                split, candidates,
                [&](const Corpus&, const SectionPolicy& policy) {
                    FeatureSettings fs = base;
                    fs.policy = policy;
                    return train_classifier(train_prep, task, fs, hp);
                },
                [&](const TrainedClassifier& clf, const Corpus&, const SectionPolicy&) {
                    return macro_f1_of(clf, dev_prep, task);
                });
            auto rows = nlohmann::ordered_json::array();
            for (const auto& r : results) {
                rows.push_back({{"sections", detail::label_names(r.sections)}, {"macro_f1", r.macro_f1}});
            }
            nlohmann::ordered_json j;
            j["task"] = task_number(task);
            j["seed"] = abl_flags.seed;
            j["results"] = std::move(rows);
            Sink sink(abl_out);
            sink.get() << j.dump(2) << "\n";
        } else if (*icd_cmd) {
            const Corpus corpus = load_corpus(icd_corpus);
            const auto preds = ingest_predictions(icd_preds, corpus, Task::Task1);
            const auto cmp = compare_icd(corpus, parse_icd(icd_codes), predicted_classes(preds));
            Sink sink(icd_out);
            sink.get() << icd_comparison_to_json(cmp).dump(2) << "\n";
        } else if (*run_cmd) {
            RunConfig cfg;
            run_stage("config", [&] {
                cfg.task = run_flags.task_id();
                cfg.features = run_flags.features();
                cfg.hp = run_flags.hyperparams();
                cfg.split = parse_split(run_split);
                if (!run_icd.empty()) {
                    cfg.icd = parse_icd(run_icd);
                }
            });
            cfg.seed = run_flags.seed;
            cfg.gold_path = run_corpus;
            cfg.out_dir = run_out;
            if (!run_flags.rules.empty()) {
                cfg.rules_path = run_flags.rules;
            }
            if (!run_silver.empty()) {
                cfg.silver_path = run_silver;
            }
            if (!run_cross.empty()) {
                cfg.cross_domain_path = run_cross;
            }
            if (!run_eval.empty()) {
                cfg.eval_predictions_path = run_eval;
            }
            const auto result = run_pipeline(cfg);
            std::cout << render_report(result.test.note, run_eval.empty() ? "BoW+SGD" : "external");
        }
    } catch (const StageError& e) {
        std::cerr << "esonlp: " << e.what() << "\n";
        return e.exit_code();
    } catch (const UsageError& e) {
        std::cerr << "esonlp: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "esonlp: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "esonlp: internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
