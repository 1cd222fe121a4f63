#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace esonlp {

enum class SectionLabel {
    AssessmentAndPlan,
    IntervalHistory,
    PhysicalExam,
    RtTechnical,
    ReviewOfSystems,
    Other,
    FullNote,
};

/// The five sections that can be selected as model input.
inline constexpr std::array<SectionLabel, 5> kSelectableSections{
    SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory, SectionLabel::PhysicalExam,
    SectionLabel::RtTechnical, SectionLabel::ReviewOfSystems};

inline std::string to_string(SectionLabel l) {
    switch (l) {
    case SectionLabel::AssessmentAndPlan: return "assessment_and_plan";
    case SectionLabel::IntervalHistory: return "interval_history";
    case SectionLabel::PhysicalExam: return "physical_exam";
    case SectionLabel::RtTechnical: return "rt_technical";
    case SectionLabel::ReviewOfSystems: return "review_of_systems";
    case SectionLabel::Other: return "other";
    case SectionLabel::FullNote: return "full_note";
    }
    return "other";
}

inline SectionLabel section_label_from_string(std::string_view s) {
    for (auto l : {SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory, SectionLabel::PhysicalExam,
                   SectionLabel::RtTechnical, SectionLabel::ReviewOfSystems, SectionLabel::Other,
                   SectionLabel::FullNote}) {
        if (to_string(l) == s) {
            return l;
        }
    }
    throw UsageError("unknown section label '" + std::string(s) + "'");
}

inline bool is_selectable(SectionLabel l) {
    return std::find(kSelectableSections.begin(), kSelectableSections.end(), l) != kSelectableSections.end();
}

/**
 * Header rule. Each pattern is a literal phrase compared case-insensitively
 * against the start of a trimmed line. The phrase must be followed by the end
 * of the line or a colon, unless the phrase itself ends in a colon.
 */
struct SectionRule {
    SectionLabel label = SectionLabel::Other;
    std::vector<std::string> header_patterns;
    int priority = 0;
};

inline std::vector<SectionRule> default_section_rules() {
    return {
        {SectionLabel::AssessmentAndPlan,
         {"assessment and plan", "assessment/plan", "a/p", "impression and plan"},
         10},
        {SectionLabel::IntervalHistory, {"interval history", "interval hx"}, 10},
        {SectionLabel::PhysicalExam, {"physical exam", "physical examination", "exam:"}, 10},
        {SectionLabel::RtTechnical, {"rt technical", "radiation treatment summary", "treatment technique"}, 10},
        {SectionLabel::ReviewOfSystems, {"review of systems", "ros:"}, 10},
    };
}

struct SectionSpan {
    SectionLabel label;
    std::size_t start;
    std::size_t end;

    bool operator==(const SectionSpan&) const = default;
};

struct SectionedNote {
    std::string note_id;
    std::string text;
    std::vector<SectionSpan> spans;

    std::string_view span_text(const SectionSpan& s) const {
        return std::string_view(text).substr(s.start, s.end - s.start);
    }

    bool has(SectionLabel l) const {
        return std::any_of(spans.begin(), spans.end(), [l](const SectionSpan& s) { return s.label == l; });
    }
};

namespace detail {

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

inline bool header_matches(std::string_view line, std::string_view pattern) {
    if (pattern.empty() || line.size() < pattern.size()) {
        return false;
    }
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (ascii_lower(line[i]) != ascii_lower(pattern[i])) {
            return false;
        }
    }
    if (pattern.back() == ':') {
        return true;
    }
    std::string_view rest = line.substr(pattern.size());
    while (!rest.empty() && is_space(rest.front())) {
        rest.remove_prefix(1);
    }
    return rest.empty() || rest.front() == ':';
}

/// Label of the best rule matching this line, if any.
inline std::optional<SectionLabel> match_header(std::string_view raw_line, const std::vector<SectionRule>& rules) {
    const std::string_view line = trim(raw_line);
    if (line.empty()) {
        return std::nullopt;
    }
    const SectionRule* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& rule : rules) {
        for (const auto& p : rule.header_patterns) {
            if (!header_matches(line, p)) {
                continue;
            }
            // priority first, then the longer (more specific) pattern, then rule order
            if (!best || rule.priority > best->priority ||
                (rule.priority == best->priority && p.size() > best_len)) {
                best = &rule;
                best_len = p.size();
            }
        }
    }
    if (!best) {
        return std::nullopt;
    }
    return best->label;
}

} // namespace detail

/**
 * Splits a note into labeled spans.
 *
 * A matched header line opens a span that runs to the next matched header or
 * the end of the text. Text ahead of the first header is `other`; a note
 * without any header is a single `full_note` span. Spans always partition the
 * text.
 */
inline SectionedNote sectionize(std::string text, const std::vector<SectionRule>& rules,
                                std::string note_id = {}) {
    if (rules.empty()) {
        throw UsageError("sectionize requires at least one section rule");
    }
    SectionedNote out;
    out.note_id = std::move(note_id);
    out.text = std::move(text);
    const std::string_view t = out.text;

    std::vector<std::pair<std::size_t, SectionLabel>> headers;
    std::size_t pos = 0;
    while (pos < t.size()) {
        std::size_t nl = t.find('\n', pos);
        const std::size_t line_end = nl == std::string_view::npos ? t.size() : nl;
        if (auto label = detail::match_header(t.substr(pos, line_end - pos), rules)) {
            headers.emplace_back(pos, *label);
        }
        pos = nl == std::string_view::npos ? t.size() : nl + 1;
    }

    if (headers.empty()) {
        out.spans.push_back({SectionLabel::FullNote, 0, t.size()});
        return out;
    }
    if (headers.front().first > 0) {
        out.spans.push_back({SectionLabel::Other, 0, headers.front().first});
    }
    for (std::size_t i = 0; i < headers.size(); ++i) {
        const std::size_t end = i + 1 < headers.size() ? headers[i + 1].first : t.size();
        out.spans.push_back({headers[i].second, headers[i].first, end});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Section selection

/// Which sections become model input. FULL always uses the whole note.
class SectionPolicy {
public:
    static SectionPolicy full() { return SectionPolicy("full", {}, true); }

    /// Assessment and Plan + Interval History.
    static SectionPolicy ap_ih() {
        return SectionPolicy("ap-ih", {SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory}, false);
    }

    /// Assessment and Plan + Interval History + RT Technical + Review of Systems.
    static SectionPolicy ap_ih_rt_ros() {
        return SectionPolicy("ap-ih-rt-ros",
                             {SectionLabel::AssessmentAndPlan, SectionLabel::IntervalHistory,
                              SectionLabel::RtTechnical, SectionLabel::ReviewOfSystems},
                             false);
    }

    static SectionPolicy subset(std::vector<SectionLabel> labels) {
        if (labels.empty()) {
            throw UsageError("section policy needs at least one label");
        }
        for (auto l : labels) {
            if (!is_selectable(l)) {
                throw UsageError("section '" + to_string(l) + "' cannot be selected");
            }
        }
        std::sort(labels.begin(), labels.end(),
                  [](SectionLabel a, SectionLabel b) { return to_string(a) < to_string(b); });
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        std::string name;
        for (auto l : labels) {
            name += (name.empty() ? "" : ",") + to_string(l);
        }
        return SectionPolicy(std::move(name), std::move(labels), false);
    }

    /// Accepts "ap-ih", "ap-ih-rt-ros", "full" or a comma-separated list of section labels.
    static SectionPolicy parse(std::string_view s) {
        if (s == "full") {
            return full();
        }
        if (s == "ap-ih") {
            return ap_ih();
        }
        if (s == "ap-ih-rt-ros") {
            return ap_ih_rt_ros();
        }
        std::vector<SectionLabel> labels;
        std::size_t start = 0;
        while (start <= s.size()) {
            const std::size_t comma = s.find(',', start);
            const auto part = detail::trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
            if (!part.empty()) {
                labels.push_back(section_label_from_string(part));
            }
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        return subset(std::move(labels));
    }

    bool is_full() const { return full_; }
    const std::vector<SectionLabel>& labels() const { return labels_; }
    const std::string& name() const { return name_; }

    bool includes(SectionLabel l) const {
        return std::find(labels_.begin(), labels_.end(), l) != labels_.end();
    }

private:
    SectionPolicy(std::string name, std::vector<SectionLabel> labels, bool full)
        : name_(std::move(name)), labels_(std::move(labels)), full_(full) {}

    std::string name_;
    std::vector<SectionLabel> labels_;
    bool full_;
};

/**
 * Text handed to the model under a policy. When the note has an Assessment and
 * Plan or Interval History section, the policy's sections are joined in
 * document order with single newlines; otherwise the whole note is returned.
 */
inline std::string select_sections(const SectionedNote& note, const SectionPolicy& policy) {
    if (policy.is_full()) {
        return note.text;
    }
    const bool gated = note.has(SectionLabel::AssessmentAndPlan) || note.has(SectionLabel::IntervalHistory);
    if (!gated) {
        return note.text;
    }
    std::string out;
    bool first = true;
    for (const auto& span : note.spans) {
        if (!policy.includes(span.label)) {
            continue;
        }
        std::string_view body = note.span_text(span);
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) {
            body.remove_suffix(1);
        }
        if (!first) {
            out += '\n';
        }
        out += body;
        first = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation over section combinations

struct AblationResult {
    std::vector<SectionLabel> sections; // sorted by label name
    double macro_f1 = 0.0;
};

namespace detail {

inline std::vector<std::string> label_names(const std::vector<SectionLabel>& labels) {
    std::vector<std::string> names;
    for (auto l : labels) {
        names.push_back(to_string(l));
    }
    return names;
}

} // namespace detail

/**
 * Trains and scores every non-empty combination of candidate sections.
 *
 * `train(train_corpus, policy)` returns a model of any type and
 * `score(model, dev_corpus, policy)` returns its dev macro-F1. Results are
 * ordered by descending macro-F1; ties go to the lexicographically smaller
 * list of section names.
 */
template <typename TrainFn, typename ScoreFn>
std::vector<AblationResult> ablate_sections(const SplitCorpus& split, std::vector<SectionLabel> candidates,
                                            TrainFn&& train, ScoreFn&& score) {
    if (candidates.empty()) {
        throw UsageError("ablation needs at least one candidate section");
    }
    for (auto l : candidates) {
        if (!is_selectable(l)) {
            throw UsageError("section '" + to_string(l) + "' is not an ablation candidate");
        }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](SectionLabel a, SectionLabel b) { return to_string(a) < to_string(b); });
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<AblationResult> results;
    const std::size_t n = candidates.size();
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        std::vector<SectionLabel> subset;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) {
                subset.push_back(candidates[i]);
            }
        }
        const auto policy = SectionPolicy::subset(subset);
        auto model = train(split.train, policy);
        const double f1 = score(model, split.dev, policy);
        results.push_back({policy.labels(), f1});
    }
    std::sort(results.begin(), results.end(), [](const AblationResult& a, const AblationResult& b) {
        if (a.macro_f1 != b.macro_f1) {
            return a.macro_f1 > b.macro_f1;
        }
        return detail::label_names(a.sections) < detail::label_names(b.sections);
    });
    return results;
}

} // namespace esonlp
