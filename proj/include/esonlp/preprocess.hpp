#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"
#include "esonlp/sectionizer.hpp"

#include <cstddef>
#include <memory>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace esonlp {

inline constexpr std::size_t kDefaultTokenBudget = 512;
inline constexpr std::string_view kMaskToken = "[MASKED]";

enum class MaskKind {
    Line,  ///< every matching line
    Block, ///< runs of at least `min_run` consecutive matching lines
};

enum class MaskAction { Remove, ReplaceWithMaskToken };

/**
 * Template-masking rule. Patterns are ECMAScript regexes matched against the
 * ASCII-lowercased line, so they should be written in lowercase.
 */
class MaskRule {
public:
    MaskRule(std::string name, MaskKind kind, std::string pattern, MaskAction action = MaskAction::Remove,
             std::size_t min_run = 3)
        : name_(std::move(name)), kind_(kind), pattern_(std::move(pattern)), action_(action), min_run_(min_run) {
        if (kind_ == MaskKind::Block && min_run_ < 1) {
            throw UsageError("mask rule '" + name_ + "': min_run must be at least 1");
        }
        try {
            regex_ = std::make_shared<const std::regex>(pattern_, std::regex::ECMAScript | std::regex::optimize);
        } catch (const std::regex_error& e) {
            throw UsageError("mask rule '" + name_ + "': invalid pattern: " + e.what());
        }
    }

    const std::string& name() const { return name_; }
    MaskKind kind() const { return kind_; }
    const std::string& pattern() const { return pattern_; }
    MaskAction action() const { return action_; }
    std::size_t min_run() const { return min_run_; }

    MaskRule with_action(MaskAction a) const {
        MaskRule copy = *this;
        copy.action_ = a;
        return copy;
    }

    bool matches(std::string_view lowered_line) const {
        return std::regex_search(lowered_line.begin(), lowered_line.end(), *regex_);
    }

private:
    std::string name_;
    MaskKind kind_;
    std::string pattern_;
    MaskAction action_;
    std::size_t min_run_;
    std::shared_ptr<const std::regex> regex_; // compiled once, shared by copies
};

/// Toxicity terms that appear in structured flowsheet rows.
inline constexpr std::string_view kToxicityTerms =
    "esophagitis|dysphagia|odynophagia|mucositis|radiation dermatitis|dermatitis|fatigue|nausea|vomiting|"
    "pneumonitis|cough|dyspnea|anorexia|weight loss|pain";

inline std::vector<MaskRule> default_mask_rules() {
    const std::string terms(kToxicityTerms);
    return {
        MaskRule("structured_toxicity", MaskKind::Line,
                 "^\\s*[-*]?\\s*(" + terms + ")\\s*(\\([^)]*\\))?\\s*[:=-]\\s*(grade\\s*)?[0-5]\\b"),
        MaskRule("toxicity_banner", MaskKind::Line,
                 "^\\s*(toxicity (flowsheet|assessment|scores?)|ctcae (v\\S+ )?toxicit(y|ies))\\b"),
        MaskRule("flowsheet_block", MaskKind::Block,
                 "^\\s*[a-z][a-z0-9 ()/%#.,+-]{0,40}:\\s*[^\\s:][^:]{0,30}$", MaskAction::Remove, 3),
        MaskRule("page_counter", MaskKind::Line, "^\\s*page\\s+\\d+\\s+(of|/)\\s+\\d+\\s*$"),
        MaskRule("signature_footer", MaskKind::Line,
                 "^\\s*(electronically signed by|this note was (generated|dictated)|confidential)\\b"),
        MaskRule("institution_banner", MaskKind::Line,
                 "^\\s*(department of radiation oncology|radiation oncology clinic note)\\s*$"),
    };
}

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (true) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(pos));
            break;
        }
        lines.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

inline std::string lowered(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = ascii_lower(c);
    }
    return out;
}

} // namespace detail

/**
 * Removes (or replaces with `[MASKED]`) templated lines and blocks: structured
 * toxicity scores, flowsheets, headers and footers. Rules apply in order, each
 * to the output of the previous one. A masked block collapses to one token line.
 */
inline std::string mask_templates(std::string_view text, const std::vector<MaskRule>& rules) {
    if (rules.empty()) {
        throw UsageError("mask_templates requires at least one rule");
    }
    auto lines = detail::split_lines(text);
    for (const auto& rule : rules) {
        std::vector<char> hit(lines.size(), 0);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            hit[i] = rule.matches(detail::lowered(lines[i])) ? 1 : 0;
        }
        if (rule.kind() == MaskKind::Block) {
            for (std::size_t i = 0; i < lines.size();) {
                if (!hit[i]) {
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < lines.size() && hit[j]) {
                    ++j;
                }
                if (j - i < rule.min_run()) {
                    std::fill(hit.begin() + static_cast<std::ptrdiff_t>(i), hit.begin() + static_cast<std::ptrdiff_t>(j), 0);
                }
                i = j;
            }
        }
        std::vector<std::string> kept;
        kept.reserve(lines.size());
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (!hit[i]) {
                kept.push_back(std::move(lines[i]));
                continue;
            }
            const bool run_start = i == 0 || !hit[i - 1];
            if (rule.action() == MaskAction::ReplaceWithMaskToken && (rule.kind() == MaskKind::Line || run_start)) {
                kept.emplace_back(kMaskToken);
            }
        }
        lines = std::move(kept);
    }
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) {
            out += '\n';
        }
        out += lines[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tokenization

struct TokenSeq {
    std::vector<std::string> tokens;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
    bool operator==(const TokenSeq&) const = default;
};

namespace detail {

/// Byte length of the whitespace code point starting at `pos`, or 0.
inline std::size_t whitespace_len(std::string_view s, std::size_t pos) {
    const auto b = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    const unsigned char c = b(pos);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
        return 1;
    }
    const std::size_t left = s.size() - pos;
    if (c == 0xC2 && left >= 2 && (b(pos + 1) == 0x85 || b(pos + 1) == 0xA0)) {
        return 2; // NEL, NBSP
    }
    if (left >= 3) {
        const unsigned char c1 = b(pos + 1), c2 = b(pos + 2);
        if (c == 0xE1 && c1 == 0x9A && c2 == 0x80) {
            return 3; // ogham space mark
        }
        if (c == 0xE2 && c1 == 0x80 && (c2 <= 0x8A || c2 == 0xA8 || c2 == 0xA9 || c2 == 0xAF)) {
            return 3; // en quad .. hair space, line/paragraph separator, narrow nbsp
        }
        if (c == 0xE2 && c1 == 0x81 && c2 == 0x9F) {
            return 3; // medium mathematical space
        }
        if (c == 0xE3 && c1 == 0x80 && c2 == 0x80) {
            return 3; // ideographic space
        }
    }
    return 0;
}

inline bool is_ascii_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}

inline void emit_token(std::string_view raw, std::vector<std::string>& out) {
    while (!raw.empty() && is_ascii_punct(raw.front())) {
        raw.remove_prefix(1);
    }
    while (!raw.empty() && is_ascii_punct(raw.back())) {
        raw.remove_suffix(1);
    }
    if (!raw.empty()) {
        out.push_back(lowered(raw));
    }
}

} // namespace detail

/// Lowercases, splits on whitespace and strips surrounding punctuation. Digits are kept.
inline TokenSeq tokenize(std::string_view text) {
    TokenSeq seq;
    std::size_t start = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t ws = detail::whitespace_len(text, pos);
        if (ws == 0) {
            ++pos;
            continue;
        }
        if (pos > start) {
            detail::emit_token(text.substr(start, pos - start), seq.tokens);
        }
        pos += ws;
        start = pos;
    }
    if (pos > start) {
        detail::emit_token(text.substr(start, pos - start), seq.tokens);
    }
    return seq;
}

/// Keeps the first `budget` tokens.
inline TokenSeq truncate(TokenSeq tokens, std::size_t budget = kDefaultTokenBudget) {
    if (budget < 1) {
        throw UsageError("token budget must be at least 1");
    }
    if (tokens.tokens.size() > budget) {
        tokens.tokens.resize(budget);
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// Input assembly

struct PipelineRules {
    std::vector<SectionRule> sections = default_section_rules();
    std::vector<MaskRule> masks = default_mask_rules();
};

/// Masked and sectionized note; independent of the selection policy.
inline SectionedNote prepare_note(const ClinicalNote& note, const PipelineRules& rules) {
    return sectionize(mask_templates(note.text, rules.masks), rules.sections, note.note_id);
}

inline TokenSeq assemble_prepared(const SectionedNote& prepared, const SectionPolicy& policy, std::size_t budget) {
    return truncate(tokenize(select_sections(prepared, policy)), budget);
}

/// mask_templates -> sectionize -> select_sections -> tokenize -> truncate.
inline TokenSeq assemble_input(const ClinicalNote& note, const PipelineRules& rules, const SectionPolicy& policy,
                               std::size_t budget = kDefaultTokenBudget) {
    return assemble_prepared(prepare_note(note, rules), policy, budget);
}

} // namespace esonlp
