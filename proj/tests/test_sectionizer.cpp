#include "support.hpp"

#include <functional>

using namespace esonlp;

namespace {

const auto& rules() {
    static const auto r = default_section_rules();
    return r;
}

std::vector<SectionLabel> labels_of(const SectionedNote& n) {
    std::vector<SectionLabel> out;
    for (const auto& s : n.spans) {
        out.push_back(s.label);
    }
    return out;
}

void expect_partition(const SectionedNote& n) {
    ASSERT_FALSE(n.spans.empty());
    EXPECT_EQ(n.spans.front().start, 0u);
    EXPECT_EQ(n.spans.back().end, n.text.size());
    for (std::size_t i = 0; i < n.spans.size(); ++i) {
        EXPECT_LT(n.spans[i].start, n.spans[i].end);
        if (i > 0) {
            EXPECT_EQ(n.spans[i - 1].end, n.spans[i].start);
        }
    }
}

} // namespace

TEST(Sectionize, OneHeaderGivesOtherThenAssessment) {
    const auto n = sectionize("HPI...\nASSESSMENT AND PLAN: odynophagia improving", rules());
    EXPECT_EQ(labels_of(n), (std::vector{SectionLabel::Other, SectionLabel::AssessmentAndPlan}));
    EXPECT_EQ(n.span_text(n.spans[1]), "ASSESSMENT AND PLAN: odynophagia improving");
}

TEST(Sectionize, NoHeaderGivesFullNote) {
    const auto n = sectionize("No recognizable headers here.", rules());
    ASSERT_EQ(n.spans.size(), 1u);
    EXPECT_EQ(n.spans[0].label, SectionLabel::FullNote);
    EXPECT_EQ(n.spans[0].end, n.text.size());
}

TEST(Sectionize, OffsetsMatchCharacterCount) {
    // built piecewise so each offset is a running character count
    const std::vector<std::pair<std::string, std::optional<SectionLabel>>> pieces{
        {"Weekly visit for lung RT.\nTolerating well.\n", std::nullopt},
        {"Interval History:\nMild odynophagia since Monday.\n", SectionLabel::IntervalHistory},
        {"  Review of Systems:  \nDenies fevers.\n", SectionLabel::ReviewOfSystems},
    };
    std::string text;
    std::vector<std::size_t> starts;
    for (const auto& [piece, _] : pieces) {
        starts.push_back(text.size());
        text += piece;
    }
    const auto n = sectionize(text, rules(), "n1");
    EXPECT_EQ(n.note_id, "n1");
    ASSERT_EQ(n.spans.size(), 3u);
    EXPECT_EQ(n.spans[0].label, SectionLabel::Other);
    for (std::size_t i = 0; i < 3; ++i) {
        if (pieces[i].second) {
            EXPECT_EQ(n.spans[i].label, *pieces[i].second);
        }
        EXPECT_EQ(n.spans[i].start, starts[i]);
        EXPECT_EQ(n.span_text(n.spans[i]), pieces[i].first);
    }
}

TEST(Sectionize, HeaderMustStartTheLine) {
    const auto n = sectionize("Discussed the assessment and plan with family.\nNo change.", rules());
    ASSERT_EQ(n.spans.size(), 1u);
    EXPECT_EQ(n.spans[0].label, SectionLabel::FullNote);
}

TEST(Sectionize, HeaderAcceptsColonOrLineEndOnly) {
    EXPECT_TRUE(detail::header_matches("Interval History:", "interval history"));
    EXPECT_TRUE(detail::header_matches("interval history", "interval history"));
    EXPECT_TRUE(detail::header_matches("INTERVAL HISTORY : doing ok", "interval history"));
    EXPECT_FALSE(detail::header_matches("interval history reviewed", "interval history"));
    EXPECT_TRUE(detail::header_matches("Exam: lungs clear", "exam:"));
    EXPECT_TRUE(detail::header_matches("A/P:", "a/p"));
    EXPECT_FALSE(detail::header_matches("A/Plan", "a/p"));
}

TEST(Sectionize, RepeatedHeadersKeepBothSpans) {
    const auto n = sectionize("A/P:\nfirst\nROS:\nnone\nA/P:\nsecond\n", rules());
    EXPECT_EQ(labels_of(n), (std::vector{SectionLabel::AssessmentAndPlan, SectionLabel::ReviewOfSystems,
                                         SectionLabel::AssessmentAndPlan}));
    EXPECT_EQ(select_sections(n, SectionPolicy::ap_ih()), "A/P:\nfirst\nA/P:\nsecond");
}

TEST(Sectionize, PriorityBreaksTies) {
    std::vector<SectionRule> r{{SectionLabel::PhysicalExam, {"exam"}, 1},
                               {SectionLabel::ReviewOfSystems, {"exam"}, 5}};
    EXPECT_EQ(sectionize("x\nexam\ny", r).spans[1].label, SectionLabel::ReviewOfSystems);
    r[0].priority = 9;
    EXPECT_EQ(sectionize("x\nexam\ny", r).spans[1].label, SectionLabel::PhysicalExam);
}

TEST(Sectionize, EmptyRulesAreRejected) { EXPECT_THROW(sectionize("x", {}), UsageError); }

TEST(Sectionize, FuzzSpansPartitionText) {
    Rng rng(5);
    const std::vector<std::string> parts{"Assessment and Plan:", "interval hx", "ROS:", "RT Technical", "exam:",
                                         "physical examination", "words here", "", "  ", "\r", "\xC3\xA9t\xC3\xA9",
                                         "a/p", "Impression and Plan: ok", "treatment technique:\t"};
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        const auto lines = rng.between(1, 12);
        for (std::int64_t i = 0; i < lines; ++i) {
            text += rng.pick(parts);
            if (rng.bernoulli(0.3)) {
                text += static_cast<char>(rng.between(32, 126));
            }
            text += '\n';
        }
        if (rng.bernoulli(0.5)) {
            text.pop_back();
        }
        expect_partition(sectionize(text, rules()));
    }
}

TEST(Sectionize, RerunningOnASpanKeepsItsLabel) {
    SynthSpec spec;
    spec.n_patients = 15;
    spec.seed = 11;
    for (const auto& note : generate_corpus(spec).notes) {
        const auto sn = sectionize(note.text, rules());
        for (const auto& span : sn.spans) {
            if (span.label == SectionLabel::Other || span.label == SectionLabel::FullNote) {
                continue;
            }
            const auto again = sectionize(std::string(sn.span_text(span)), rules());
            EXPECT_EQ(again.spans.front().label, span.label);
            EXPECT_EQ(again.spans.front().start, 0u);
        }
    }
}

TEST(SelectSections, ApIhDropsReviewOfSystems) {
    const auto n = sectionize("ROS:\nDenies pain.\nAssessment and Plan:\nMild esophagitis.\n", rules());
    EXPECT_EQ(select_sections(n, SectionPolicy::ap_ih()), "Assessment and Plan:\nMild esophagitis.");
}

TEST(SelectSections, WithoutGateSectionsUsesFullText) {
    const std::string text = "Nursing call.\nROS:\nOdynophagia.\n";
    const auto n = sectionize(text, rules());
    EXPECT_EQ(select_sections(n, SectionPolicy::ap_ih()), text);
    EXPECT_EQ(select_sections(n, SectionPolicy::ap_ih_rt_ros()), text);
}

TEST(SelectSections, FourSectionsInDocumentOrder) {
    const auto n = sectionize(
        "Lead in.\nRT Technical:\n60 Gy.\nInterval History:\nsore throat\nPhysical Exam:\nok\nROS:\nneg\nA/P:\nplan\n",
        rules());
    EXPECT_EQ(select_sections(n, SectionPolicy::ap_ih_rt_ros()),
              "RT Technical:\n60 Gy.\nInterval History:\nsore throat\nROS:\nneg\nA/P:\nplan");
}

TEST(SelectSections, FullIsVerbatim) {
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        std::string text = "x\n";
        for (int j = 0; j < 5; ++j) {
            text += rng.bernoulli(0.5) ? "A/P:\n" : "foo bar\n";
        }
        EXPECT_EQ(select_sections(sectionize(text, rules()), SectionPolicy::full()), text);
    }
}

TEST(SectionPolicy, ParseAndSubset) {
    EXPECT_EQ(SectionPolicy::parse("ap-ih").labels(),
              (std::vector{SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory}));
    EXPECT_TRUE(SectionPolicy::parse("full").is_full());
    const auto p = SectionPolicy::parse("review_of_systems, assessment_and_plan");
    EXPECT_EQ(p.name(), "assessment_and_plan,review_of_systems");
    EXPECT_EQ(SectionPolicy::parse(p.name()).labels(), p.labels());
    EXPECT_THROW(SectionPolicy::subset({}), UsageError);
    EXPECT_THROW(SectionPolicy::parse(""), UsageError);
    EXPECT_THROW(SectionPolicy::parse("other"), UsageError);
    EXPECT_THROW(SectionPolicy::parse("nonsense"), UsageError);
}

TEST(SectionLabels, NamesRoundTrip) {
    for (auto l : {SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory, SectionLabel::PhysicalExam,
                   SectionLabel::RtTechnical, SectionLabel::ReviewOfSystems, SectionLabel::Other,
                   SectionLabel::FullNote}) {
        EXPECT_EQ(section_label_from_string(to_string(l)), l);
    }
    EXPECT_EQ(kSelectableSections.size(), 5u);
}

TEST(Ablation, FiveCandidatesGiveThirtyOneSubsets) {
    SplitCorpus split;
    std::size_t calls = 0;
    const auto results = ablate_sections(
        split, {kSelectableSections.begin(), kSelectableSections.end()},
        [&](const Corpus&, const SectionPolicy&) { return ++calls; },
        [](std::size_t, const Corpus&, const SectionPolicy& p) { return 1.0 / static_cast<double>(p.labels().size()); });
    EXPECT_EQ(results.size(), 31u);
    EXPECT_EQ(calls, 31u);
    EXPECT_EQ(results.front().sections.size(), 1u);
    EXPECT_EQ(results.back().sections.size(), 5u);
}

TEST(Ablation, TiesGoToLexicographicallySmallerSubset) {
    SplitCorpus split;
    const auto results = ablate_sections(
        split, {SectionLabel::ReviewOfSystems, SectionLabel::AssessmentAndPlan, SectionLabel::PhysicalExam},
        [](const Corpus&, const SectionPolicy&) { return 0; },
        [](int, const Corpus&, const SectionPolicy&) { return 0.5; });
    ASSERT_EQ(results.size(), 7u);
    std::vector<std::vector<std::string>> names;
    for (const auto& r : results) {
        names.push_back(detail::label_names(r.sections));
    }
    EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
    EXPECT_EQ(names.front(), (std::vector<std::string>{"assessment_and_plan"}));
    EXPECT_THROW(ablate_sections(
                     split, {}, [](const Corpus&, const SectionPolicy&) { return 0; },
                     [](int, const Corpus&, const SectionPolicy&) { return 0.0; }),
                 UsageError);
}

TEST(Ablation, AssessmentOnlyCorpusRanksAssessmentFirst) {
    // grade text only in A&P; every other section carries the same label-free filler
    Rng rng(21);
    const std::vector<std::string> pos{"odynophagia requiring analgesics", "painful swallowing esophagitis",
                                       "esophagitis with odynophagia"};
    const std::vector<std::string> neg{"no esophageal toxicity", "tolerating treatment well",
                                       "eating a regular diet"};
    const std::vector<std::string> noise{"cough", "fatigue", "skin intact", "stable weight", "walking daily"};
    std::vector<ClinicalNote> notes;
    for (int p = 0; p < 60; ++p) {
        for (int k = 0; k < 5; ++k) {
            const bool positive = rng.bernoulli(0.5);
            std::string text = "Interval History:\n" + rng.pick(noise) + "\n";
            text += "Review of Systems:\n" + rng.pick(noise) + " " + rng.pick(noise) + "\n";
            text += "Physical Exam:\n" + rng.pick(noise) + "\n";
            text += "RT Technical:\n" + rng.pick(noise) + "\n";
            text += "Assessment and Plan:\n" + rng.pick(positive ? pos : neg) + "\n";
            notes.push_back(esonlp::testing::note("n" + std::to_string(p) + "_" + std::to_string(k),
                                                  "p" + std::to_string(p), text,
                                                  positive ? Grade::G1 : Grade::None));
        }
    }
    const auto split = split_corpus(make_corpus("a", notes), {}, 1);
    const PipelineRules pr;
    const auto train_prep = prepare_corpus(split.train, pr);
    const auto dev_prep = prepare_corpus(split.dev, pr);
    const auto results = ablate_sections(
        split, {kSelectableSections.begin(), kSelectableSections.end()},
        [&](const Corpus&, const SectionPolicy& policy) {
            FeatureSettings fs;
            fs.policy = policy;
            return train_classifier(train_prep, Task::Task1, fs, Hyperparams{});
        },
        [&](const TrainedClassifier& c, const Corpus&, const SectionPolicy&) {
            return macro_f1_of(c, dev_prep, Task::Task1);
        });
    // exhaustive oracle: the best score is attained by {A&P} and every subset lacking A&P scores lower
    const auto ap_only = std::find_if(results.begin(), results.end(), [](const AblationResult& r) {
        return r.sections == std::vector{SectionLabel::AssessmentAndPlan};
    });
    ASSERT_NE(ap_only, results.end());
    for (const auto& r : results) {
        EXPECT_LE(r.macro_f1, ap_only->macro_f1);
        const bool has_ap = std::find(r.sections.begin(), r.sections.end(), SectionLabel::AssessmentAndPlan) !=
                            r.sections.end();
        if (!has_ap) {
            EXPECT_LT(r.macro_f1, ap_only->macro_f1);
        }
    }
    EXPECT_EQ(results.front().sections, std::vector{SectionLabel::AssessmentAndPlan});
}
