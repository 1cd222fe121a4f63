#include "support.hpp"

#include <fstream>

using namespace esonlp;
using esonlp::testing::note;

namespace {

using Idx = std::vector<std::size_t>;

double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& l) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[i] == 1 && l[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

ConfusionMatrix matrix_1120() { return confusion_matrix(Idx{0, 1, 1, 1}, Idx{0, 0, 1, 1}, 2); }

} // namespace

TEST(ConfusionMatrix, Examples) {
    const auto m = matrix_1120();
    EXPECT_EQ(m.counts, (std::vector<Idx>{{1, 1}, {0, 2}}));
    EXPECT_EQ(m.total(), 4u);
    const auto perfect = confusion_matrix(Idx{0, 1, 2, 2}, Idx{0, 1, 2, 2}, 3);
    EXPECT_EQ(perfect.counts, (std::vector<Idx>{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}}));
    try {
        confusion_matrix(Idx{}, Idx{}, 2);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("no observations"), std::string::npos);
    }
    EXPECT_THROW(confusion_matrix(Idx{0}, Idx{0, 1}, 2), UsageError);
    EXPECT_THROW(confusion_matrix(Idx{2}, Idx{0}, 2), UsageError);
}

TEST(ClassPrf1, Examples) {
    const auto c1 = class_prf1(matrix_1120(), 1);
    EXPECT_DOUBLE_EQ(c1.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(c1.recall, 1.0);
    EXPECT_NEAR(c1.f1, 0.8, 1e-12);
    const auto c0 = class_prf1(matrix_1120(), 0);
    EXPECT_DOUBLE_EQ(c0.precision, 1.0);
    EXPECT_DOUBLE_EQ(c0.recall, 0.5);
    EXPECT_NEAR(c0.f1, 2.0 / 3.0, 1e-12);
    const auto absent = class_prf1(confusion_matrix(Idx{0, 1}, Idx{0, 1}, 3), 2);
    EXPECT_EQ(absent.precision, 0.0);
    EXPECT_EQ(absent.recall, 0.0);
    EXPECT_EQ(absent.f1, 0.0);
}

TEST(Aggregate, MacroAndWeighted) {
    const auto macro = aggregate_metrics(matrix_1120(), Averaging::Macro);
    EXPECT_NEAR(macro.f1, (2.0 / 3.0 + 0.8) / 2.0, 1e-12);
    EXPECT_NEAR(macro.f1, 0.7333, 1e-4);
    // equal supports (2 and 2): weighted equals macro
    const auto weighted = aggregate_metrics(matrix_1120(), Averaging::Weighted);
    EXPECT_DOUBLE_EQ(weighted.f1, macro.f1);
    EXPECT_DOUBLE_EQ(weighted.precision, macro.precision);
    // unequal supports: weighted by gold counts 3 and 1
    const auto m = confusion_matrix(Idx{0, 0, 0, 0}, Idx{0, 0, 0, 1}, 2);
    EXPECT_NEAR(aggregate_metrics(m, Averaging::Weighted).f1, 0.75 * (2 * 0.75 / 1.75), 1e-12);
    EXPECT_DOUBLE_EQ(aggregate_metrics(confusion_matrix(Idx{0, 1}, Idx{0, 1}, 2), Averaging::Macro).f1, 1.0);
}

TEST(Aggregate, MacroOneIffDiagonalWithAllClasses) {
    Rng rng(10);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = rng.bernoulli(0.5) ? 2 : 3;
        const auto n = static_cast<std::size_t>(rng.between(1, 8));
        Idx p(n), g(n);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = rng.below(k);
            p[i] = rng.bernoulli(0.7) ? g[i] : rng.below(k);
        }
        const auto m = confusion_matrix(p, g, k);
        bool diagonal = true, all_present = true;
        for (std::size_t c = 0; c < k; ++c) {
            all_present = all_present && m.support(c) > 0;
            for (std::size_t d = 0; d < k; ++d) {
                diagonal = diagonal && (c == d || m.at(c, d) == 0);
            }
        }
        const auto r = evaluate(p, g, k == 2 ? Task::Task1 : Task::Task3, EvalLevel::Note);
        EXPECT_EQ(r.macro_f1 == 1.0, diagonal && all_present);
        for (double v : {r.macro.precision, r.macro.recall, r.macro_f1, r.weighted.f1, r.weighted.precision}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Auroc, Examples) {
    EXPECT_DOUBLE_EQ(auroc(std::vector{0.9, 0.8, 0.2, 0.1}, std::vector{1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auroc(std::vector{0.9, 0.4, 0.35, 0.8}, std::vector{1, 0, 1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(auroc(std::vector{0.3, 0.3, 0.3}, std::vector{1, 0, 1}), 0.5);
    try {
        auroc(std::vector{0.1, 0.2}, std::vector{1, 1});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("AUROC undefined"), std::string::npos);
    }
}

TEST(Auroc, EqualsPairwiseOracle) {
    Rng rng(1234);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.between(2, 12));
        std::vector<double> s(n);
        std::vector<int> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(6)) / 5.0; // coarse grid forces ties
            l[i] = static_cast<int>(rng.below(2));
        }
        l[0] = 1;
        l[1] = 0;
        EXPECT_EQ(auroc(s, l), pairwise_auroc(s, l));
    }
}

TEST(Auprc, Examples) {
    EXPECT_DOUBLE_EQ(auprc(std::vector{0.9, 0.8, 0.2, 0.1}, std::vector{1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auprc(std::vector{0.9, 0.8, 0.7, 0.1}, std::vector{0, 0, 0, 1}), 0.25);
    EXPECT_DOUBLE_EQ(auprc(std::vector{0.1, 0.5, 0.3}, std::vector{1, 1, 1}), 1.0);
    // ranks 1 and 3 positive: AP = 0.5 * 1 + 0.5 * 2/3
    EXPECT_DOUBLE_EQ(auprc(std::vector{0.9, 0.5, 0.4}, std::vector{1, 0, 1}), 0.5 + 1.0 / 3.0);
    // a tie group is one threshold: both items at 0.5 enter together, precision 1/2
    EXPECT_DOUBLE_EQ(auprc(std::vector{0.5, 0.5}, std::vector{1, 0}), 0.5);
    EXPECT_THROW(auprc(std::vector{0.5, 0.4}, std::vector{0, 0}), DataError);
}

TEST(Evaluate, AucOnlyForBinaryTasks) {
    const Idx g{0, 1, 1, 0}, p{0, 1, 0, 0};
    const std::vector<double> s{0.1, 0.9, 0.4, 0.3};
    const auto r = evaluate(p, g, Task::Task1, EvalLevel::Note, s);
    ASSERT_TRUE(r.auroc && r.auprc);
    EXPECT_DOUBLE_EQ(*r.auroc, 1.0);
    EXPECT_FALSE(evaluate(p, g, Task::Task3, EvalLevel::Note).auroc);
    const auto j = report_to_json(r);
    EXPECT_EQ(j["task"], 1);
    EXPECT_TRUE(j.contains("auroc"));
    const auto text = render_report(r, "BoW+SGD");
    EXPECT_NE(text.find("Macro-F1"), std::string::npos);
    EXPECT_NE(text.find("AUCROC"), std::string::npos);
}

TEST(PatientAggregation, MaxOfPredictionsAndGold) {
    const auto c = make_corpus("c", {note("a1", "A", "t", Grade::None), note("a2", "A", "t", Grade::G1),
                                     note("a3", "A", "t", Grade::G3), note("a4", "A", "t", Grade::G1),
                                     note("b1", "B", "t", Grade::G1)});
    const std::map<std::string, std::size_t> preds{{"a1", 0}, {"a2", 1}, {"a3", 2}, {"a4", 1}, {"b1", 1}};
    const auto out = aggregate_patient(preds, c, Task::Task3);
    EXPECT_EQ(out.at("A"), (PatientOutcome{2, 2}));
    EXPECT_EQ(out.at("B"), (PatientOutcome{1, 1}));
    auto missing = preds;
    missing.erase("a4");
    EXPECT_THROW(aggregate_patient(missing, c, Task::Task3), DataError);
}

TEST(PatientAggregation, NoteOrderDoesNotMatter) {
    SynthSpec spec;
    spec.n_patients = 12;
    spec.seed = 8;
    Corpus c = generate_corpus(spec);
    Rng rng(3);
    std::map<std::string, std::size_t> preds;
    for (const auto& n : c.notes) {
        preds[n.note_id] = rng.below(3);
    }
    const auto before = aggregate_patient(preds, c, Task::Task3);
    rng.shuffle(c.notes);
    EXPECT_EQ(aggregate_patient(preds, c, Task::Task3), before);
}

TEST(PatientAggregation, MapOfMaxEqualsMaxOfMap) {
    // every grade multiset of size 1..4
    std::size_t checked = 0;
    for (auto t : kAllTasks) {
        for (std::size_t size = 1; size <= 4; ++size) {
            std::vector<int> g(size, 0);
            while (true) {
                int max_grade = 0;
                std::size_t max_label = 0;
                for (int v : g) {
                    max_grade = std::max(max_grade, v);
                    max_label = std::max(max_label, map_grade_to_task_label(grade_from_int(v), t));
                }
                EXPECT_EQ(map_grade_to_task_label(grade_from_int(max_grade), t), max_label);
                ++checked;
                // next non-decreasing sequence
                std::size_t i = size;
                while (i > 0 && g[i - 1] == 3) {
                    --i;
                }
                if (i == 0) {
                    break;
                }
                ++g[i - 1];
                std::fill(g.begin() + static_cast<std::ptrdiff_t>(i), g.end(), g[i - 1]);
            }
        }
    }
    // C(4,1)+C(5,2)+C(6,3)+C(7,4) = 4+10+20+35 multisets per task
    EXPECT_EQ(checked, 3u * 69u);
}

TEST(Icd, PrefixMatching) {
    EXPECT_TRUE(icd_matches(narrow_icd_codes(), "K20.9"));
    EXPECT_TRUE(icd_matches(narrow_icd_codes(), "k209"));
    EXPECT_FALSE(icd_matches(narrow_icd_codes(), "K21.0"));
    EXPECT_TRUE(icd_matches(broad_icd_codes(), "K21.0"));
    EXPECT_FALSE(icd_matches(broad_icd_codes(), "C34.90"));
    EXPECT_TRUE(icd_subset(narrow_icd_codes(), broad_icd_codes()));
    EXPECT_FALSE(icd_subset(broad_icd_codes(), narrow_icd_codes()));
}

TEST(Icd, ShippedCodeFilesMatchBuiltins) {
    EXPECT_EQ(load_icd_codes(esonlp::testing::data_file("icd_narrow.txt")).prefixes, narrow_icd_codes().prefixes);
    EXPECT_EQ(load_icd_codes(esonlp::testing::data_file("icd_broad.txt")).prefixes, broad_icd_codes().prefixes);
    EXPECT_THROW(load_icd_codes("/nonexistent/codes.txt"), DataError);
}

TEST(Icd, CompareTabulates) {
    auto a = note("a", "A", "t", Grade::G1);
    auto b = note("b", "B", "t", Grade::None);
    b.icd10_codes = {"K20.9"};
    auto c = note("c", "C", "t", Grade::G2);
    c.icd10_codes = {"K20.8"};
    auto d = note("d", "D", "t", Grade::None);
    const auto corpus = make_corpus("x", {a, b, c, d});
    const auto r = compare_icd(corpus, narrow_icd_codes(), {{"a", 1}, {"b", 0}, {"c", 1}, {"d", 0}});
    EXPECT_EQ(r.nlp_only, 1u);
    EXPECT_EQ(r.icd_only, 1u);
    EXPECT_EQ(r.agreement, 1u);
    EXPECT_EQ(r.neither, 1u);
    EXPECT_EQ(r.nlp_positive, 2u);
    EXPECT_EQ(icd_comparison_to_json(r)["patients_total"], 4);
}
