#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"
#include "esonlp/rng.hpp"
#include "esonlp/task.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace esonlp {

// ---------------------------------------------------------------------------
// Phrase bank

/**
 * Sentence pools keyed by category. Grade pools are split into patient-reported
 * history (`grade<g>_history`) and clinician assessment (`grade<g>_plan`).
 * Distractor pools mention dysphagia, negated or past esophagitis, and never
 * odynophagia.
 */
struct PhraseBank {
    std::map<std::string, std::vector<std::string>> pools;

    const std::vector<std::string>& pool(const std::string& key) const {
        auto it = pools.find(key);
        if (it == pools.end() || it->second.empty()) {
            throw DataError("phrase bank has no entries for '" + key + "'");
        }
        return it->second;
    }

    static const std::vector<std::string>& required_keys() {
        static const std::vector<std::string> keys{
            "grade0_history", "grade0_plan", "grade1_history", "grade1_plan", "grade2_history", "grade2_plan",
            "grade3_history", "grade3_plan", "grade_positive_generic", "distractor_dysphagia", "distractor_negated", "distractor_historical",
            "filler_hpi", "filler_history", "filler_ros", "filler_exam", "filler_rt", "filler_plan", "filler_nursing"};
        return keys;
    }

    void validate() const {
        for (const auto& k : required_keys()) {
            pool(k);
        }
    }
};

inline PhraseBank default_phrase_bank() {
    PhraseBank b;
    b.pools["grade0_history"] = {
        "Patient is tolerating treatment well and is eating a regular diet.",
        "Swallowing without difficulty, appetite is good.",
        "No new complaints this week, weight is stable.",
        "Denies any throat discomfort with meals.",
        "Energy is fair, continues to work part time.",
    };
    b.pools["grade0_plan"] = {
        "No esophageal toxicity at this time.",
        "Tolerating radiation without acute toxicity.",
        "Doing well without treatment related complaints; continue current plan.",
        "No signs of radiation esophagitis on today's evaluation.",
    };
    b.pools["grade1_history"] = {
        "Reports mild odynophagia with solid foods, still eating normally.",
        "Notes slight pain with swallowing toward the end of the day.",
        "Has a mild burning sensation when swallowing but no change in intake.",
    };
    b.pools["grade1_plan"] = {
        "Mild esophagitis, asymptomatic to mildly symptomatic; observation only, no intervention indicated.",
        "Early odynophagia, mild; monitor and continue regular diet without medication.",
        "Mild radiation esophagitis, conservative measures only, will reassess next week.",
    };
    b.pools["grade2_history"] = {
        "Odynophagia has worsened and she has switched to a soft diet.",
        "Painful swallowing limiting intake; using magic mouthwash before meals.",
        "Requires analgesics to swallow, now taking mostly liquids and purees.",
    };
    b.pools["grade2_plan"] = {
        "Moderate esophagitis with altered eating; prescribed magic mouthwash and sucralfate.",
        "Odynophagia requiring viscous lidocaine and oxycodone; dietary modification to soft foods.",
        "Symptomatic esophagitis requiring medical intervention with analgesics; nutrition consult for soft diet.",
    };
    b.pools["grade3_history"] = {
        "Severe odynophagia, unable to tolerate oral intake for several days.",
        "Cannot swallow pills or liquids due to pain, significant weight loss.",
        "Presented to the emergency department with dehydration from inability to swallow.",
    };
    b.pools["grade3_plan"] = {
        "Severe esophagitis with severely altered intake; admitted for IV fluids and tube feeding.",
        "Severe odynophagia precluding oral intake; PEG tube placement arranged, hospitalization required.",
        "Severe radiation esophagitis, started on tube feeds via feeding tube and IV hydration.",
    };
    b.pools["grade_positive_generic"] = {
        "Odynophagia noted, discussed supportive care.",
        "Esophagitis symptoms present this week.",
        "Reports pain with swallowing.",
        "Radiation esophagitis as expected at this point in treatment.",
    };
    b.pools["distractor_dysphagia"] = {
        "Reports some dysphagia to dry solids, attributed to the tumor, without pain.",
        "Longstanding dysphagia unchanged from baseline.",
        "Dysphagia with large pills only; swallow evaluation unremarkable.",
    };
    b.pools["distractor_negated"] = {
        "No evidence of esophagitis at this time.",
        "Denies symptoms of esophagitis.",
        "Esophagitis was discussed as a possible side effect; none currently.",
    };
    b.pools["distractor_historical"] = {
        "History of esophagitis during a prior course of treatment years ago, resolved.",
        "Prior episode of reflux esophagitis in the remote past.",
    };
    b.pools["filler_hpi"] = {
        "Patient with stage III non-small cell lung cancer receiving concurrent chemoradiation.",
        "Here for weekly on-treatment visit.",
        "Oncologic history reviewed and unchanged since last visit.",
        "Chemotherapy is given weekly by medical oncology.",
        "Past medical history notable for hypertension and COPD.",
        "Social history: former smoker, quit five years ago.",
        "Medications reviewed and reconciled today.",
        "Lives with spouse who accompanies patient today.",
    };
    b.pools["filler_history"] = {
        "Mild fatigue, still walking daily.",
        "Skin in the treatment field is intact.",
        "Occasional cough, productive of clear sputum.",
        "Sleeping reasonably well.",
        "No fevers or chills.",
    };
    b.pools["filler_ros"] = {
        "Positive for fatigue.",
        "Positive for cough.",
        "Positive for dysphagia.",
        "Denies odynophagia.",
        "Denies chest pain or palpitations.",
        "Denies fevers, chills or night sweats.",
        "Denies nausea or vomiting.",
        "Negative for shortness of breath at rest.",
    };
    b.pools["filler_exam"] = {
        "General: alert, no acute distress.",
        "Oropharynx clear without thrush.",
        "Lungs with scattered rhonchi bilaterally.",
        "Heart regular rate and rhythm.",
        "Skin with faint erythema in the treatment field.",
        "Extremities without edema.",
    };
    b.pools["filler_rt"] = {
        "Prescription 60 Gy in 30 fractions using IMRT.",
        "Current dose 30 Gy of 60 Gy planned.",
        "Treatment delivered with daily cone beam CT guidance.",
        "Mean esophageal dose within planning constraints.",
    };
    b.pools["filler_plan"] = {
        "Continue radiation as planned.",
        "Follow up at next weekly visit.",
        "Continue concurrent chemotherapy per medical oncology.",
        "Reviewed skin care instructions.",
        "Encouraged hydration and activity as tolerated.",
    };
    b.pools["filler_nursing"] = {
        "Nursing check in during radiation treatment.",
        "Vital signs obtained and reviewed.",
        "Patient education provided regarding side effects.",
        "Call placed to patient to review upcoming appointments.",
    };
    return b;
}

/// Reads `[key]` blocks of one sentence per line; '#' starts a comment line.
inline PhraseBank parse_phrase_bank(std::istream& in) {
    PhraseBank b;
    std::string line;
    std::string current;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            current = line.substr(1, line.size() - 2);
            b.pools[current];
            continue;
        }
        if (current.empty()) {
            throw DataError("phrase bank line " + std::to_string(lineno) + ": sentence outside of a [section]");
        }
        b.pools[current].push_back(line);
    }
    b.validate();
    return b;
}

inline PhraseBank load_phrase_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open phrase bank " + path);
    }
    return parse_phrase_bank(in);
}

inline void write_phrase_bank(const PhraseBank& b, std::ostream& out) {
    for (const auto& key : PhraseBank::required_keys()) {
        out << "[" << key << "]\n";
        for (const auto& s : b.pool(key)) {
            out << s << "\n";
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Generator

struct CountRange {
    std::size_t min = 0;
    std::size_t max = 0;
};

struct SynthSpec {
    std::size_t n_patients = 150;
    CountRange notes_per_patient{6, 14};
    // note-level grade counts of the lung cancer cohort (1030/207/187/100 of 1524 notes)
    std::array<double, 4> grade_distribution{1030.0 / 1524.0, 207.0 / 1524.0, 187.0 / 1524.0, 100.0 / 1524.0};
    double distractor_rate = 0.15;
    double flowsheet_rate = 0.30;
    std::uint64_t seed = 0;

    double physician_fraction = 0.75;
    double header_rate = 0.95;          // physician notes carrying A&P and/or IH
    CountRange filler_sentences{1, 3};  // per non-graded section
    CountRange hpi_sentences{2, 4};     // leading text ahead of the first header
    double ambiguity_rate = 0.25;       // graded notes phrased with a severity-neutral sentence
    double copy_forward_rate = 0.20;    // notes repeating the previous visit's assessment
    double icd_rate = 0.33;             // esophagitis patients who receive a K20 code
    LabelTier label_tier = LabelTier::Gold;
    std::string id_prefix = "P";
    std::string start_date = "2019-01-07";

    void validate() const {
        double sum = 0.0;
        for (double p : grade_distribution) {
            if (!(p >= 0.0)) {
                throw UsageError("grade probabilities must be non-negative");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw UsageError("invalid grade distribution: probabilities sum to " + std::to_string(sum));
        }
        for (double r : {distractor_rate, flowsheet_rate, physician_fraction, header_rate, ambiguity_rate,
                         copy_forward_rate, icd_rate}) {
            if (!(r >= 0.0 && r <= 1.0)) {
                throw UsageError("rates must lie in [0, 1]");
            }
        }
        if (n_patients == 0) {
            throw UsageError("n_patients must be positive");
        }
        if (notes_per_patient.min < 1 || notes_per_patient.max < notes_per_patient.min) {
            throw UsageError("notes_per_patient must be a range with min >= 1");
        }
        if (filler_sentences.max < filler_sentences.min || hpi_sentences.max < hpi_sentences.min) {
            throw UsageError("sentence ranges must have min <= max");
        }
        if (label_tier != LabelTier::Gold && label_tier != LabelTier::Silver) {
            throw UsageError("synthetic corpora are gold or silver labeled");
        }
        if (!detail::valid_iso_date(start_date)) {
            throw UsageError("start_date must be YYYY-MM-DD");
        }
    }

    static SynthSpec from_json(const nlohmann::json& j) {
        SynthSpec s;
        try {
            const auto range = [](const nlohmann::json& r) {
                return CountRange{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()};
            };
            s.n_patients = j.value("n_patients", s.n_patients);
            if (j.contains("notes_per_patient")) {
                s.notes_per_patient = range(j["notes_per_patient"]);
            }
            if (j.contains("grade_distribution")) {
                const auto v = j["grade_distribution"].get<std::vector<double>>();
                if (v.size() != 4) {
                    throw UsageError("grade_distribution needs 4 probabilities");
                }
                std::copy(v.begin(), v.end(), s.grade_distribution.begin());
            }
            s.distractor_rate = j.value("distractor_rate", s.distractor_rate);
            s.flowsheet_rate = j.value("flowsheet_rate", s.flowsheet_rate);
            s.seed = j.value("seed", s.seed);
            s.physician_fraction = j.value("physician_fraction", s.physician_fraction);
            s.header_rate = j.value("header_rate", s.header_rate);
            if (j.contains("filler_sentences")) {
                s.filler_sentences = range(j["filler_sentences"]);
            }
            if (j.contains("hpi_sentences")) {
                s.hpi_sentences = range(j["hpi_sentences"]);
            }
            s.ambiguity_rate = j.value("ambiguity_rate", s.ambiguity_rate);
            s.copy_forward_rate = j.value("copy_forward_rate", s.copy_forward_rate);
            s.icd_rate = j.value("icd_rate", s.icd_rate);
            const auto tier = j.value("label_tier", std::string("gold"));
            if (tier != "gold" && tier != "silver") {
                throw UsageError("label_tier must be gold or silver");
            }
            s.label_tier = tier == "gold" ? LabelTier::Gold : LabelTier::Silver;
            s.id_prefix = j.value("id_prefix", s.id_prefix);
            s.start_date = j.value("start_date", s.start_date);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("malformed synth spec: ") + e.what());
        }
        s.validate();
        return s;
    }
};

/// Generated corpus plus the structured-toxicity lines injected into each note.
struct GeneratedCorpus {
    Corpus corpus;
    std::map<std::string, std::vector<std::string>> injected_toxicity_lines;
};

namespace detail {

// days since 1970-01-01 <-> civil date
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::string civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(y + (m <= 2)), m, d);
    return buf;
}

inline std::string add_days(const std::string& iso, std::int64_t days) {
    const int y = std::stoi(iso.substr(0, 4));
    const auto m = static_cast<unsigned>(std::stoi(iso.substr(5, 2)));
    const auto d = static_cast<unsigned>(std::stoi(iso.substr(8, 2)));
    return civil_from_days(days_from_civil(y, m, d) + days);
}

inline Grade grade_at_quantile(double u, const std::array<double, 4>& dist) {
    double cum = 0.0;
    for (std::size_t g = 0; g < 3; ++g) {
        cum += dist[g];
        if (u < cum) {
            return static_cast<Grade>(g);
        }
    }
    return Grade::G3;
}

inline std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

class NoteWriter {
public:
    NoteWriter(Rng& rng, const PhraseBank& bank) : rng_(rng), bank_(bank) {}

    void line(const std::string& s) { lines_.push_back(s); }

    void sentences(const std::string& pool, CountRange range) {
        const auto n = static_cast<std::size_t>(rng_.between(static_cast<std::int64_t>(range.min),
                                                             static_cast<std::int64_t>(range.max)));
        for (std::size_t i = 0; i < n; ++i) {
            line(rng_.pick(bank_.pool(pool)));
        }
    }

    void one(const std::string& pool) { line(rng_.pick(bank_.pool(pool))); }

    std::string text() const {
        std::string out;
        for (const auto& l : lines_) {
            out += l;
            out += '\n';
        }
        return out;
    }

private:
    Rng& rng_;
    const PhraseBank& bank_;
    std::vector<std::string> lines_;
};

inline std::string grade_key(Grade g, const char* kind) { return "grade" + std::to_string(to_int(g)) + "_" + kind; }

inline const std::vector<std::string>& distractor_pools() {
    static const std::vector<std::string> pools{"distractor_dysphagia", "distractor_negated",
                                                "distractor_historical"};
    return pools;
}

} // namespace detail

/**
 * Seeded synthetic corpus.
 *
 * Note quantiles are stratified over the whole corpus and dealt out to
 * patients at random. Each patient's share is sorted and mapped through the
 * grade distribution, so grades rise over the course of treatment and plateau
 * while the note-level shares match the requested distribution to within one
 * note per grade boundary.
 * Grade-bearing sentences appear only in Interval History / Assessment and
 * Plan (or in the body of headerless notes).
 */
inline GeneratedCorpus generate_corpus_annotated(const SynthSpec& spec,
                                                 const PhraseBank& bank = default_phrase_bank()) {
    spec.validate();
    bank.validate();
    Rng rng(spec.seed);
    GeneratedCorpus out;
    std::vector<ClinicalNote> notes;
    const int pid_width = spec.n_patients >= 10000 ? 6 : 4;

    // stratified quantiles over the whole corpus, dealt out to patients
    std::vector<std::size_t> note_counts(spec.n_patients);
    std::size_t total_notes = 0;
    for (auto& n : note_counts) {
        n = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.notes_per_patient.min),
                                                 static_cast<std::int64_t>(spec.notes_per_patient.max)));
        total_notes += n;
    }
    std::vector<double> strata(total_notes);
    for (std::size_t i = 0; i < total_notes; ++i) {
        strata[i] = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(total_notes);
    }
    rng.shuffle(strata);
    std::size_t next_stratum = 0;

    for (std::size_t p = 0; p < spec.n_patients; ++p) {
        const std::string patient_id = spec.id_prefix + detail::zero_pad(p + 1, pid_width);
        const std::size_t n_notes = note_counts[p];
        std::vector<double> u(strata.begin() + static_cast<std::ptrdiff_t>(next_stratum),
                              strata.begin() + static_cast<std::ptrdiff_t>(next_stratum + n_notes));
        next_stratum += n_notes;
        std::sort(u.begin(), u.end());
        const std::string first_day = detail::add_days(spec.start_date, static_cast<std::int64_t>(p % 365) * 3);
        const bool gets_code = rng.bernoulli(spec.icd_rate);
        bool coded = false;
        std::string previous_plan;

        for (std::size_t k = 0; k < n_notes; ++k) {
            const Grade grade = detail::grade_at_quantile(u[k], spec.grade_distribution);
            ClinicalNote note;
            note.patient_id = patient_id;
            note.note_id = patient_id + "-N" + detail::zero_pad(k + 1, 2);
            note.date = detail::add_days(first_day, static_cast<std::int64_t>(k) * 7);

            const double who = rng.uniform();
            if (spec.label_tier == LabelTier::Silver || who < spec.physician_fraction) {
                note.author_type = AuthorType::Physician;
            } else {
                note.author_type = who < spec.physician_fraction + (1.0 - spec.physician_fraction) * 0.7
                                       ? AuthorType::Nurse
                                       : AuthorType::Other;
            }
            note.note_kind = (spec.label_tier == LabelTier::Silver ||
                              (note.author_type == AuthorType::Physician && rng.bernoulli(0.8)))
                                 ? NoteKind::OnTreatmentVisit
                                 : NoteKind::Other;

            const bool distractor = rng.bernoulli(spec.distractor_rate);
            const bool flowsheet = rng.bernoulli(spec.flowsheet_rate);
            std::vector<std::string> injected;
            const auto flowsheet_block = [&](detail::NoteWriter& w) {
                const std::vector<std::string> tox{
                    "Esophagitis: Grade " + std::to_string(to_int(grade)),
                    "Fatigue: Grade " + std::to_string(rng.between(0, 2)),
                    "Radiation Dermatitis: Grade " + std::to_string(rng.between(0, 1)),
                };
                const std::string banner = "Toxicity Flowsheet (CTCAE v5.0)";
                w.line(banner);
                injected.push_back(banner);
                for (const auto& t : tox) {
                    w.line(t);
                    injected.push_back(t);
                }
                w.line("Weight: " + std::to_string(rng.between(48, 95)) + " kg");
                w.line("BP: " + std::to_string(rng.between(105, 150)) + "/" + std::to_string(rng.between(60, 95)));
                w.line("Pulse: " + std::to_string(rng.between(60, 105)));
            };

            // grade-bearing sentences; severity-neutral wording for a share of graded notes
            const auto graded = [&](const char* kind) {
                if (grade != Grade::None && rng.bernoulli(spec.ambiguity_rate)) {
                    return rng.pick(bank.pool("grade_positive_generic"));
                }
                return rng.pick(bank.pool(detail::grade_key(grade, kind)));
            };
            const std::string plan_sentence = graded("plan");
            const bool copy_forward = !previous_plan.empty() && rng.bernoulli(spec.copy_forward_rate);

            detail::NoteWriter w(rng, bank);
            const bool physician = note.author_type == AuthorType::Physician;
            if (physician && rng.bernoulli(spec.header_rate)) {
                w.line("Radiation Oncology Clinic Note");
                w.sentences("filler_hpi", spec.hpi_sentences);
                const bool both = rng.below(4) != 0;
                const bool has_ih = both || rng.bernoulli(0.5);
                const bool has_ap = both || !has_ih;
                if (has_ih) {
                    w.line(rng.bernoulli(0.7) ? "INTERVAL HISTORY:" : "Interval Hx:");
                    if (!has_ap || rng.bernoulli(0.6)) {
                        w.line(graded("history"));
                    }
                    if (copy_forward) {
                        w.line(previous_plan);
                    }
                    w.sentences("filler_history", spec.filler_sentences);
                    if (distractor && !has_ap) {
                        w.one(rng.pick(detail::distractor_pools()));
                    }
                }
                w.line("REVIEW OF SYSTEMS:");
                w.sentences("filler_ros", spec.filler_sentences);
                w.line("PHYSICAL EXAM:");
                w.sentences("filler_exam", spec.filler_sentences);
                if (rng.bernoulli(0.5)) {
                    w.line("RT TECHNICAL:");
                    w.sentences("filler_rt", spec.filler_sentences);
                }
                if (flowsheet) {
                    flowsheet_block(w);
                }
                if (has_ap) {
                    w.line(rng.bernoulli(0.8) ? "ASSESSMENT AND PLAN:" : "A/P:");
                    w.line(plan_sentence);
                    if (copy_forward && !has_ih) {
                        w.line(previous_plan);
                    }
                    if (distractor) {
                        w.one(rng.pick(detail::distractor_pools()));
                    }
                    w.sentences("filler_plan", spec.filler_sentences);
                }
                w.line("Electronically signed by Radiation Oncology Attending");
            } else {
                // short headerless note: nursing check-ins, phone calls, brief physician addenda
                w.sentences(physician ? "filler_hpi" : "filler_nursing", CountRange{1, 2});
                w.line(rng.bernoulli(0.5) ? graded("history") : plan_sentence);
                if (copy_forward) {
                    w.line(previous_plan);
                }
                if (distractor) {
                    w.one(rng.pick(detail::distractor_pools()));
                }
                if (flowsheet) {
                    flowsheet_block(w);
                }
                w.sentences("filler_nursing", CountRange{0, 1});
            }
            previous_plan = plan_sentence;
            w.line("Page 1 of 1");
            note.text = w.text();

            if (spec.label_tier == LabelTier::Gold) {
                note.gold_grade = grade;
            } else {
                note.silver_grade = grade;
            }
            note.icd10_codes.push_back("C34.90");
            if (gets_code && !coded && grade != Grade::None) {
                note.icd10_codes.push_back("K20.9");
                std::sort(note.icd10_codes.begin(), note.icd10_codes.end());
                coded = true;
            }
            if (!injected.empty()) {
                out.injected_toxicity_lines[note.note_id] = injected;
            }
            notes.push_back(std::move(note));
        }
    }
    out.corpus = make_corpus("synthetic-" + std::to_string(spec.seed), std::move(notes));
    return out;
}

inline Corpus generate_corpus(const SynthSpec& spec, const PhraseBank& bank = default_phrase_bank()) {
    return generate_corpus_annotated(spec, bank).corpus;
}

} // namespace esonlp
