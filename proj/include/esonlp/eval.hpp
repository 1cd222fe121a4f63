#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"
#include "esonlp/task.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace esonlp {

/// Rows are gold classes, columns are predicted classes.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t at(std::size_t gold, std::size_t pred) const { return counts[gold][pred]; }

    std::size_t support(std::size_t c) const {
        return std::accumulate(counts[c].begin(), counts[c].end(), std::size_t{0});
    }

    std::size_t predicted(std::size_t c) const {
        std::size_t s = 0;
        for (const auto& row : counts) {
            s += row[c];
        }
        return s;
    }

    std::size_t total() const {
        std::size_t s = 0;
        for (std::size_t c = 0; c < k; ++c) {
            s += support(c);
        }
        return s;
    }

    std::size_t correct() const {
        std::size_t s = 0;
        for (std::size_t c = 0; c < k; ++c) {
            s += counts[c][c];
        }
        return s;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                                        std::size_t k) {
    if (preds.size() != golds.size()) {
        throw UsageError("confusion_matrix: predictions and gold labels differ in length");
    }
    if (preds.empty()) {
        throw DataError("no observations");
    }
    ConfusionMatrix m{k, std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= k || golds[i] >= k) {
            throw UsageError("confusion_matrix: class index out of range");
        }
        ++m.counts[golds[i]][preds[i]];
    }
    return m;
}

struct PRF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision, recall and F1 of one class. Any zero denominator yields 0.
inline PRF1 class_prf1(const ConfusionMatrix& m, std::size_t c) {
    const double tp = static_cast<double>(m.at(c, c));
    const double pred = static_cast<double>(m.predicted(c));
    const double gold = static_cast<double>(m.support(c));
    PRF1 r;
    r.precision = pred > 0 ? tp / pred : 0.0;
    r.recall = gold > 0 ? tp / gold : 0.0;
    r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

enum class Averaging { Macro, Weighted };

/// Macro: unweighted mean over classes. Weighted: mean weighted by gold support.
inline PRF1 aggregate_metrics(const ConfusionMatrix& m, Averaging scheme) {
    PRF1 out;
    double total_weight = 0.0;
    for (std::size_t c = 0; c < m.k; ++c) {
        const PRF1 r = class_prf1(m, c);
        const double w = scheme == Averaging::Macro ? 1.0 : static_cast<double>(m.support(c));
        out.precision += w * r.precision;
        out.recall += w * r.recall;
        out.f1 += w * r.f1;
        total_weight += w;
    }
    if (total_weight > 0) {
        out.precision /= total_weight;
        out.recall /= total_weight;
        out.f1 /= total_weight;
    }
    return out;
}

namespace detail {

inline void check_binary_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw UsageError("scores and labels differ in length");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw UsageError("binary labels must be 0 or 1");
        }
    }
}

/// Indices sorted by descending score.
inline std::vector<std::size_t> descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

} // namespace detail

/**
 * Area under the ROC curve as the Mann-Whitney statistic: the probability that
 * a random positive outscores a random negative, ties counting one half.
 */
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    detail::check_binary_inputs(scores, labels);
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("AUROC undefined: both classes must be present");
    }
    // sweep groups of tied scores from high to low
    const auto idx = detail::descending(scores);
    double wins = 0.0;
    std::size_t neg_above = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::size_t pos = 0, neg = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] == 1 ? pos : neg)++;
            ++j;
        }
        const std::size_t neg_below = n_neg - neg_above - neg;
        wins += static_cast<double>(pos * neg_below) + 0.5 * static_cast<double>(pos * neg);
        neg_above += neg;
        i = j;
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Average precision, sum over thresholds of (R_n - R_{n-1}) * P_n. Tied scores form one threshold.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
    detail::check_binary_inputs(scores, labels);
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (n_pos == 0) {
        throw DataError("AUPRC undefined: no positive labels");
    }
    const auto idx = detail::descending(scores);
    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] == 1 ? tp : fp)++;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

// ---------------------------------------------------------------------------
// Reports

enum class EvalLevel { Note, Patient };

struct EvalReport {
    EvalLevel level = EvalLevel::Note;
    Task task = Task::Task1;
    ConfusionMatrix matrix;
    std::vector<PRF1> per_class;
    double macro_f1 = 0.0;
    PRF1 macro;
    PRF1 weighted;
    std::optional<double> auroc;
    std::optional<double> auprc;

    /// Correct / gold support for class c, the "TP (n)/(TP+TN (n))" column.
    std::pair<std::size_t, std::size_t> class_counts(std::size_t c) const { return {matrix.at(c, c), matrix.support(c)}; }
    std::pair<std::size_t, std::size_t> overall_counts() const { return {matrix.correct(), matrix.total()}; }
};

/**
 * Builds a report from predicted and gold class indices. `positive_scores`
 * (probability of class 1) enables AUROC/AUPRC for binary tasks when both gold
 * classes occur; they are never reported for Task 3.
 */
inline EvalReport evaluate(std::span<const std::size_t> preds, std::span<const std::size_t> golds, Task task,
                           EvalLevel level, std::span<const double> positive_scores = {}) {
    EvalReport r;
    r.level = level;
    r.task = task;
    r.matrix = confusion_matrix(preds, golds, class_count(task));
    for (std::size_t c = 0; c < r.matrix.k; ++c) {
        r.per_class.push_back(class_prf1(r.matrix, c));
    }
    r.macro = aggregate_metrics(r.matrix, Averaging::Macro);
    r.macro_f1 = r.macro.f1;
    r.weighted = aggregate_metrics(r.matrix, Averaging::Weighted);
    if (is_binary(task) && !positive_scores.empty()) {
        if (positive_scores.size() != golds.size()) {
            throw UsageError("positive scores and gold labels differ in length");
        }
        std::vector<int> labels(golds.begin(), golds.end());
        const auto n_pos = std::count(labels.begin(), labels.end(), 1);
        if (n_pos > 0 && static_cast<std::size_t>(n_pos) < labels.size()) {
            r.auroc = auroc(positive_scores, labels);
            r.auprc = auprc(positive_scores, labels);
        }
    }
    return r;
}

inline std::string to_string(EvalLevel l) { return l == EvalLevel::Note ? "note" : "patient"; }

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    const auto names = class_names(r.task);
    nlohmann::ordered_json j;
    j["level"] = to_string(r.level);
    j["task"] = task_number(r.task);
    j["n"] = r.matrix.total();
    j["confusion_matrix"] = r.matrix.counts;
    auto classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        nlohmann::ordered_json cls;
        cls["class"] = names[c];
        cls["precision"] = r.per_class[c].precision;
        cls["recall"] = r.per_class[c].recall;
        cls["f1"] = r.per_class[c].f1;
        cls["tp"] = r.class_counts(c).first;
        cls["support"] = r.class_counts(c).second;
        classes.push_back(std::move(cls));
    }
    j["per_class"] = std::move(classes);
    j["macro_f1"] = r.macro_f1;
    j["macro"] = {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}};
    j["weighted"] = {{"precision", r.weighted.precision}, {"recall", r.weighted.recall}, {"f1", r.weighted.f1}};
    j["correct"] = r.overall_counts().first;
    j["auroc"] = r.auroc ? nlohmann::ordered_json(*r.auroc) : nullptr;
    j["auprc"] = r.auprc ? nlohmann::ordered_json(*r.auprc) : nullptr;
    return j;
}

namespace detail {

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) {
        s.append(width - s.size(), ' ');
    }
    return s;
}

inline std::string task_title(Task t) {
    switch (t) {
    case Task::Task1: return "Task 1: None vs. CTCAE grade 1-3 esophagitis";
    case Task::Task2: return "Task 2: CTCAE grade <= 1 vs. CTCAE grade 2-3 esophagitis";
    case Task::Task3: return "Task 3: None vs. CTCAE grade 1 vs. CTCAE grade 2-3 esophagitis";
    }
    return {};
}

} // namespace detail

/**
 * Text table. Note level: one row with per-class F1, macro-F1, weighted
 * precision/recall and (binary tasks) AUROC/AUPRC. Patient level: one row per
 * class plus a weighted overall row with correct/total patient counts.
 */
inline std::string render_report(const EvalReport& r, const std::string& model_name = "model") {
    using detail::fmt2;
    using detail::pad;
    const auto names = class_names(r.task);
    std::ostringstream out;
    out << detail::task_title(r.task) << " (" << to_string(r.level) << " level, n=" << r.matrix.total() << ")\n";
    if (r.level == EvalLevel::Note) {
        std::vector<std::string> header{"Model/F1"};
        std::vector<std::string> row{model_name};
        for (std::size_t c = 0; c < names.size(); ++c) {
            header.push_back(names[c] + " F1");
            row.push_back(fmt2(r.per_class[c].f1));
        }
        header.insert(header.end(), {"Macro-F1", "Precision", "Recall"});
        row.insert(row.end(), {fmt2(r.macro_f1), fmt2(r.weighted.precision), fmt2(r.weighted.recall)});
        if (is_binary(r.task)) {
            header.insert(header.end(), {"AUCROC", "AUPRC"});
            row.push_back(r.auroc ? fmt2(*r.auroc) : "NA");
            row.push_back(r.auprc ? fmt2(*r.auprc) : "NA");
        }
        std::vector<std::size_t> widths;
        for (std::size_t i = 0; i < header.size(); ++i) {
            widths.push_back(std::max(header[i].size(), row[i].size()) + 2);
        }
        for (std::size_t i = 0; i < header.size(); ++i) {
            out << pad(header[i], widths[i]);
        }
        out << "\n";
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << pad(row[i], widths[i]);
        }
        out << "\n";
        return out.str();
    }
    const std::vector<std::string> header{"Maximum esophagitis", "Precision", "Recall", "F1", "Macro-F1",
                                          "Patient counts TP (n)/(TP+TN (n))"};
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto [tp, n] = r.class_counts(c);
        rows.push_back({names[c], fmt2(r.per_class[c].precision), fmt2(r.per_class[c].recall),
                        fmt2(r.per_class[c].f1), "NA", std::to_string(tp) + "/" + std::to_string(n)});
    }
    const auto [correct, total] = r.overall_counts();
    rows.push_back({"Weighted overall", fmt2(r.weighted.precision), fmt2(r.weighted.recall), fmt2(r.weighted.f1),
                    fmt2(r.macro_f1), std::to_string(correct) + "/" + std::to_string(total)});
    std::vector<std::size_t> widths(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        widths[i] = header[i].size();
        for (const auto& row : rows) {
            widths[i] = std::max(widths[i], row[i].size());
        }
        widths[i] += 2;
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << pad(header[i], widths[i]);
    }
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << pad(row[i], widths[i]);
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Patient-level aggregation

struct PatientOutcome {
    std::size_t pred = 0;
    std::size_t gold = 0;
    bool operator==(const PatientOutcome&) const = default;
};

/**
 * Per patient: the maximum predicted class over the patient's notes against
 * the task mapping of the patient's maximum gold grade.
 */
inline std::map<std::string, PatientOutcome> aggregate_patient(const std::map<std::string, std::size_t>& note_preds,
                                                               const Corpus& corpus, Task task) {
    std::map<std::string, PatientOutcome> out;
    std::map<std::string, Grade> max_grade;
    for (const auto& n : corpus.notes) {
        auto it = note_preds.find(n.note_id);
        if (it == note_preds.end()) {
            throw DataError("missing prediction for note " + n.note_id);
        }
        if (!n.gold_grade) {
            throw DataError("note " + n.note_id + " has no gold grade");
        }
        auto [slot, inserted] = out.try_emplace(n.patient_id, PatientOutcome{it->second, 0});
        if (!inserted) {
            slot->second.pred = std::max(slot->second.pred, it->second);
        }
        auto [g, fresh] = max_grade.try_emplace(n.patient_id, *n.gold_grade);
        if (!fresh && g->second < *n.gold_grade) {
            g->second = *n.gold_grade;
        }
    }
    for (auto& [pid, outcome] : out) {
        outcome.gold = map_grade_to_task_label(max_grade.at(pid), task);
    }
    return out;
}

inline EvalReport evaluate_patients(const std::map<std::string, PatientOutcome>& outcomes, Task task) {
    std::vector<std::size_t> preds, golds;
    for (const auto& [_, o] : outcomes) {
        preds.push_back(o.pred);
        golds.push_back(o.gold);
    }
    return evaluate(preds, golds, task, EvalLevel::Patient);
}

// ---------------------------------------------------------------------------
// Structured-data comparison

/// ICD-10 code prefixes. Matching ignores case and dots.
struct IcdCodeSet {
    std::string name;
    std::vector<std::string> prefixes;
};

namespace detail {

inline std::string normalize_icd(std::string_view code) {
    std::string out;
    for (char c : code) {
        if (c == '.' || c == ' ') {
            continue;
        }
        out += (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
    }
    return out;
}

} // namespace detail

/// Placeholder list: esophagitis codes (K20.x).
inline IcdCodeSet narrow_icd_codes() { return {"narrow", {"K20"}}; }

/// Placeholder list: K20 plus reflux esophagitis (K21) and other esophageal disorders (K22).
inline IcdCodeSet broad_icd_codes() { return {"broad", {"K20", "K21", "K22"}}; }

inline bool icd_matches(const IcdCodeSet& set, std::string_view code) {
    const auto c = detail::normalize_icd(code);
    for (const auto& p : set.prefixes) {
        const auto np = detail::normalize_icd(p);
        if (!np.empty() && c.rfind(np, 0) == 0) {
            return true;
        }
    }
    return false;
}

/// True when every code matched by `narrow` is also matched by `broad`.
inline bool icd_subset(const IcdCodeSet& narrow, const IcdCodeSet& broad) {
    return std::all_of(narrow.prefixes.begin(), narrow.prefixes.end(),
                       [&](const std::string& p) { return icd_matches(broad, p); });
}

/// One prefix per line; blank lines and '#' comments ignored.
inline IcdCodeSet load_icd_codes(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open ICD code file " + path);
    }
    IcdCodeSet set{path, {}};
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        const auto code = detail::normalize_icd(line);
        if (!code.empty()) {
            set.prefixes.push_back(code);
        }
    }
    if (set.prefixes.empty()) {
        throw DataError("ICD code file " + path + " lists no codes");
    }
    return set;
}

struct PatientIcd {
    std::string patient_id;
    bool nlp_positive = false;
    bool icd_positive = false;
};

struct IcdComparison {
    std::string codeset;
    std::vector<PatientIcd> patients;
    std::size_t nlp_positive = 0;
    std::size_t icd_positive = 0;
    std::size_t agreement = 0; // both positive
    std::size_t nlp_only = 0;
    std::size_t icd_only = 0;
    std::size_t neither = 0;
};

/**
 * A patient is NLP-positive when any of their notes is predicted class 1 for
 * Task 1, and ICD-positive when any note carries a code in the set. Notes
 * without a prediction do not count toward NLP positivity.
 */
inline IcdComparison compare_icd(const Corpus& corpus, const IcdCodeSet& codeset,
                                 const std::map<std::string, std::size_t>& note_preds) {
    std::map<std::string, PatientIcd> by_patient;
    for (const auto& n : corpus.notes) {
        auto& p = by_patient[n.patient_id];
        p.patient_id = n.patient_id;
        if (auto it = note_preds.find(n.note_id); it != note_preds.end() && it->second == 1) {
            p.nlp_positive = true;
        }
        for (const auto& code : n.icd10_codes) {
            if (icd_matches(codeset, code)) {
                p.icd_positive = true;
            }
        }
    }
    IcdComparison out;
    out.codeset = codeset.name;
    for (auto& [_, p] : by_patient) {
        out.nlp_positive += p.nlp_positive;
        out.icd_positive += p.icd_positive;
        out.agreement += p.nlp_positive && p.icd_positive;
        out.nlp_only += p.nlp_positive && !p.icd_positive;
        out.icd_only += !p.nlp_positive && p.icd_positive;
        out.neither += !p.nlp_positive && !p.icd_positive;
        out.patients.push_back(std::move(p));
    }
    return out;
}

inline nlohmann::ordered_json icd_comparison_to_json(const IcdComparison& c) {
    nlohmann::ordered_json j;
    j["codeset"] = c.codeset;
    j["patients_total"] = c.patients.size();
    j["nlp_positive"] = c.nlp_positive;
    j["icd_positive"] = c.icd_positive;
    j["agreement"] = c.agreement;
    j["nlp_only"] = c.nlp_only;
    j["icd_only"] = c.icd_only;
    j["neither"] = c.neither;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& p : c.patients) {
        rows.push_back({{"patient_id", p.patient_id}, {"nlp_positive", p.nlp_positive}, {"icd_positive", p.icd_positive}});
    }
    j["patients"] = std::move(rows);
    return j;
}

} // namespace esonlp
