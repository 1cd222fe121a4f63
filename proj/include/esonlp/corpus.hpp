#pragma once

#include "esonlp/error.hpp"
#include "esonlp/rng.hpp"
#include "esonlp/task.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace esonlp {

enum class AuthorType { Physician, Nurse, Other };
enum class NoteKind { OnTreatmentVisit, Other };
enum class LabelTier { Gold, Silver, Unlabeled, Mixed };

inline std::string to_string(AuthorType a) {
    switch (a) {
    case AuthorType::Physician: return "physician";
    case AuthorType::Nurse: return "nurse";
    case AuthorType::Other: return "other";
    }
    return "other";
}

inline std::string to_string(NoteKind k) {
    return k == NoteKind::OnTreatmentVisit ? "on_treatment_visit" : "other";
}

inline std::string to_string(LabelTier t) {
    switch (t) {
    case LabelTier::Gold: return "gold";
    case LabelTier::Silver: return "silver";
    case LabelTier::Unlabeled: return "unlabeled";
    case LabelTier::Mixed: return "mixed";
    }
    return "mixed";
}

struct ClinicalNote {
    std::string note_id;
    std::string patient_id;
    std::string date; // YYYY-MM-DD
    AuthorType author_type = AuthorType::Other;
    NoteKind note_kind = NoteKind::Other;
    std::string text;
    std::optional<Grade> gold_grade;
    std::optional<Grade> silver_grade;
    std::vector<std::string> icd10_codes; // sorted, unique

    bool operator==(const ClinicalNote&) const = default;
};

/// Tier a single note contributes to training: gold wins when both labels are present.
inline LabelTier note_tier(const ClinicalNote& n) {
    if (n.gold_grade) {
        return LabelTier::Gold;
    }
    return n.silver_grade ? LabelTier::Silver : LabelTier::Unlabeled;
}

/// The label used for training. Gold if present, otherwise silver.
inline std::optional<Grade> training_label(const ClinicalNote& n) {
    return n.gold_grade ? n.gold_grade : n.silver_grade;
}

struct Corpus {
    std::string name;
    std::vector<ClinicalNote> notes;
    LabelTier label_tier = LabelTier::Unlabeled;

    std::size_t size() const { return notes.size(); }
    bool empty() const { return notes.empty(); }

    /// Distinct patient ids in sorted order.
    std::vector<std::string> patient_ids() const {
        std::set<std::string> ids;
        for (const auto& n : notes) {
            ids.insert(n.patient_id);
        }
        return {ids.begin(), ids.end()};
    }

    const ClinicalNote* find(const std::string& note_id) const {
        for (const auto& n : notes) {
            if (n.note_id == note_id) {
                return &n;
            }
        }
        return nullptr;
    }
};

inline LabelTier infer_label_tier(const std::vector<ClinicalNote>& notes) {
    if (notes.empty()) {
        return LabelTier::Unlabeled;
    }
    const LabelTier first = note_tier(notes.front());
    for (const auto& n : notes) {
        if (note_tier(n) != first) {
            return LabelTier::Mixed;
        }
    }
    return first;
}

/// Builds a corpus after checking the note-level invariants.
inline Corpus make_corpus(std::string name, std::vector<ClinicalNote> notes) {
    std::unordered_set<std::string> seen;
    for (const auto& n : notes) {
        if (n.note_id.empty()) {
            throw DataError("note with empty note_id");
        }
        if (!seen.insert(n.note_id).second) {
            throw DataError("duplicate note_id: " + n.note_id);
        }
        if (n.patient_id.empty()) {
            throw DataError("note " + n.note_id + " has no patient_id");
        }
        if (n.text.empty()) {
            throw DataError("note " + n.note_id + " has empty text");
        }
    }
    Corpus c;
    c.name = std::move(name);
    c.label_tier = infer_label_tier(notes);
    c.notes = std::move(notes);
    return c;
}

namespace detail {

inline bool valid_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
        return false;
    }
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[i] < '0' || s[i] > '9') {
            return false;
        }
    }
    const int year = std::stoi(s.substr(0, 4));
    const int month = std::stoi(s.substr(5, 2));
    const int day = std::stoi(s.substr(8, 2));
    if (month < 1 || month > 12 || day < 1) {
        return false;
    }
    static constexpr std::array<int, 12> days{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    const int max_day = days[static_cast<std::size_t>(month - 1)] + (month == 2 && leap ? 1 : 0);
    return day <= max_day;
}

inline Grade grade_from_json(const nlohmann::json& v, const char* field) {
    if (!v.is_number_integer()) {
        throw DataError(std::string(field) + " must be an integer");
    }
    return grade_from_int(v.get<long long>());
}

inline const std::string& required_string(const nlohmann::json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) {
        throw DataError(std::string("missing or non-string field '") + field + "'");
    }
    return it->get_ref<const std::string&>();
}

} // namespace detail

inline nlohmann::ordered_json note_to_json(const ClinicalNote& n) {
    nlohmann::ordered_json j;
    j["note_id"] = n.note_id;
    j["patient_id"] = n.patient_id;
    j["date"] = n.date;
    j["author_type"] = to_string(n.author_type);
    j["note_kind"] = to_string(n.note_kind);
    j["text"] = n.text;
    if (n.gold_grade) {
        j["gold_grade"] = to_int(*n.gold_grade);
    }
    if (n.silver_grade) {
        j["silver_grade"] = to_int(*n.silver_grade);
    }
    j["icd10_codes"] = n.icd10_codes;
    return j;
}

inline ClinicalNote note_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"note_id", "patient_id", "date", "author_type", "note_kind",
                                             "text", "gold_grade", "silver_grade", "icd10_codes"};
    if (!j.is_object()) {
        throw DataError("expected a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw DataError("unknown field '" + key + "'");
        }
    }
    ClinicalNote n;
    n.note_id = detail::required_string(j, "note_id");
    n.patient_id = detail::required_string(j, "patient_id");
    n.date = detail::required_string(j, "date");
    if (!detail::valid_iso_date(n.date)) {
        throw DataError("invalid date '" + n.date + "' (expected YYYY-MM-DD)");
    }
    const auto& author = detail::required_string(j, "author_type");
    if (author == "physician") {
        n.author_type = AuthorType::Physician;
    } else if (author == "nurse") {
        n.author_type = AuthorType::Nurse;
    } else if (author == "other") {
        n.author_type = AuthorType::Other;
    } else {
        throw DataError("unknown author_type '" + author + "'");
    }
    const auto& kind = detail::required_string(j, "note_kind");
    if (kind == "on_treatment_visit") {
        n.note_kind = NoteKind::OnTreatmentVisit;
    } else if (kind == "other") {
        n.note_kind = NoteKind::Other;
    } else {
        throw DataError("unknown note_kind '" + kind + "'");
    }
    n.text = detail::required_string(j, "text");
    if (auto it = j.find("gold_grade"); it != j.end()) {
        n.gold_grade = detail::grade_from_json(*it, "gold_grade");
    }
    if (auto it = j.find("silver_grade"); it != j.end()) {
        n.silver_grade = detail::grade_from_json(*it, "silver_grade");
    }
    if (auto it = j.find("icd10_codes"); it != j.end()) {
        if (!it->is_array()) {
            throw DataError("icd10_codes must be an array of strings");
        }
        std::set<std::string> codes;
        for (const auto& c : *it) {
            if (!c.is_string()) {
                throw DataError("icd10_codes must be an array of strings");
            }
            codes.insert(c.get<std::string>());
        }
        n.icd10_codes.assign(codes.begin(), codes.end());
    }
    return n;
}

/// Parses a JSON Lines corpus. Blank lines are skipped; any other bad line is reported by number.
inline Corpus parse_corpus(std::istream& in, std::string name) {
    std::vector<ClinicalNote> notes;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        ClinicalNote note;
        try {
            note = note_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (note.note_id.empty() || note.patient_id.empty() || note.text.empty()) {
            throw DataError(where + "note_id, patient_id and text must be non-empty");
        }
        if (!ids.insert(note.note_id).second) {
            throw DataError(where + "duplicate note_id " + note.note_id);
        }
        notes.push_back(std::move(note));
    }
    return make_corpus(std::move(name), std::move(notes));
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open corpus file " + path);
    }
    return parse_corpus(in, path);
}

inline void write_corpus(const Corpus& c, std::ostream& out) {
    for (const auto& n : c.notes) {
        out << note_to_json(n).dump() << '\n';
    }
}

inline void save_corpus(const Corpus& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write corpus file " + path);
    }
    write_corpus(c, out);
}

// ---------------------------------------------------------------------------
// Splitting and merging

struct SplitRatios {
    double train = 0.8;
    double dev = 0.1;
    double test = 0.1;
};

struct SplitCorpus {
    Corpus train;
    Corpus dev;
    Corpus test;
    std::uint64_t seed = 0;
};

namespace detail {

/// Largest-remainder apportionment of n items over the given weights.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = ratios[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) {
        ++counts[order[k]];
    }
    // every partition receives at least one patient
    for (std::size_t i = 0; i < 3; ++i) {
        if (counts[i] == 0) {
            auto largest = std::max_element(counts.begin(), counts.end());
            --*largest;
            counts[i] = 1;
        }
    }
    return counts;
}

} // namespace detail

/**
 * Patient-disjoint split. Patients are sorted, shuffled with the seeded
 * generator, then apportioned by largest remainder; notes follow their patient
 * and keep corpus order within each partition.
 */
inline SplitCorpus split_corpus(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed) {
    const std::array<double, 3> r{ratios.train, ratios.dev, ratios.test};
    for (double x : r) {
        if (!(x > 0.0)) {
            throw UsageError("split ratios must be positive");
        }
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
        throw UsageError("split ratios must sum to 1");
    }
    if (corpus.empty()) {
        throw UsageError("cannot split an empty corpus");
    }
    auto patients = corpus.patient_ids();
    if (patients.size() < 3) {
        throw DataError("insufficient patients: " + std::to_string(patients.size()) +
                        " (need at least 3 to split)");
    }
    Rng rng(seed);
    rng.shuffle(patients);
    const auto counts = detail::apportion(patients.size(), r);

    std::unordered_map<std::string, int> part_of;
    for (std::size_t i = 0; i < patients.size(); ++i) {
        part_of[patients[i]] = i < counts[0] ? 0 : (i < counts[0] + counts[1] ? 1 : 2);
    }
    std::array<std::vector<ClinicalNote>, 3> parts;
    for (const auto& n : corpus.notes) {
        parts[static_cast<std::size_t>(part_of.at(n.patient_id))].push_back(n);
    }
    SplitCorpus out;
    out.seed = seed;
    out.train = make_corpus(corpus.name + ":train", std::move(parts[0]));
    out.dev = make_corpus(corpus.name + ":dev", std::move(parts[1]));
    out.test = make_corpus(corpus.name + ":test", std::move(parts[2]));
    return out;
}

/// Union of gold training notes and silver-labeled notes for augmentation.
inline Corpus merge_training_data(const Corpus& gold_train, const Corpus& silver) {
    std::vector<ClinicalNote> notes;
    notes.reserve(gold_train.size() + silver.size());
    std::unordered_set<std::string> ids;
    for (const auto& n : gold_train.notes) {
        if (!n.gold_grade) {
            throw DataError("gold training note " + n.note_id + " has no gold_grade");
        }
        ids.insert(n.note_id);
        notes.push_back(n);
    }
    for (const auto& n : silver.notes) {
        if (!n.silver_grade) {
            throw DataError("silver note " + n.note_id + " has no silver_grade");
        }
        if (ids.count(n.note_id)) {
            throw DataError("note_id collision between gold and silver data: " + n.note_id);
        }
        notes.push_back(n);
    }
    return make_corpus(gold_train.name + "+" + silver.name, std::move(notes));
}

// ---------------------------------------------------------------------------
// External predictions

struct PredictionSet {
    Task task = Task::Task1;
    std::map<std::string, std::vector<double>> entries;
};

inline void check_distribution(const std::vector<double>& probs, std::size_t k) {
    if (probs.size() != k) {
        throw DataError("arity mismatch: expected " + std::to_string(k) + " probabilities, got " +
                        std::to_string(probs.size()));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) {
            throw DataError("not a distribution: negative or non-finite probability");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw DataError("not a distribution: probabilities sum to " + std::to_string(sum));
    }
}

inline PredictionSet parse_predictions(std::istream& in, const Corpus& corpus, Task task) {
    std::unordered_set<std::string> known;
    for (const auto& n : corpus.notes) {
        known.insert(n.note_id);
    }
    PredictionSet out;
    out.task = task;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const std::string where = "predictions line " + std::to_string(lineno) + ": ";
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + "malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("note_id") || !j["note_id"].is_string() || !j.contains("probs") ||
            !j["probs"].is_array()) {
            throw DataError(where + "expected {\"note_id\": str, \"probs\": [float,...]}");
        }
        const auto id = j["note_id"].get<std::string>();
        if (!known.count(id)) {
            throw DataError(where + "unknown note_id " + id);
        }
        std::vector<double> probs;
        for (const auto& p : j["probs"]) {
            if (!p.is_number()) {
                throw DataError(where + "probs must be numbers");
            }
            probs.push_back(p.get<double>());
        }
        try {
            check_distribution(probs, class_count(task));
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        if (!out.entries.emplace(id, std::move(probs)).second) {
            throw DataError(where + "duplicate note_id " + id);
        }
    }
    return out;
}

inline PredictionSet ingest_predictions(const std::string& path, const Corpus& corpus, Task task) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open predictions file " + path);
    }
    return parse_predictions(in, corpus, task);
}

/// Writes rows in the given note order.
inline void write_predictions(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                              std::ostream& out) {
    for (const auto& [id, probs] : rows) {
        nlohmann::ordered_json j;
        j["note_id"] = id;
        j["probs"] = probs;
        out << j.dump() << '\n';
    }
}

} // namespace esonlp
