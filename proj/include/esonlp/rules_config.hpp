#pragma once

// Plain-text rule configuration shared by the sectionizer and the masker.
//
//   # comment
//   [section assessment_and_plan]
//   priority = 10
//   pattern = assessment and plan
//   pattern = a/p
//
//   [mask structured_toxicity]
//   kind = line            # line | block
//   action = remove        # remove | mask
//   min_run = 3            # block rules only
//   pattern = ^\s*esophagitis\s*:\s*grade\s*[0-5]
//
// Section patterns are literal header phrases; mask patterns are lowercase
// ECMAScript regexes. A file without any [section] block keeps the built-in
// section rules, and likewise for [mask].

#include "esonlp/error.hpp"
#include "esonlp/preprocess.hpp"
#include "esonlp/sectionizer.hpp"

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace esonlp {

namespace detail {

struct PendingMask {
    std::string name;
    std::optional<MaskKind> kind;
    std::optional<std::string> pattern;
    MaskAction action = MaskAction::Remove;
    std::size_t min_run = 3;
};

inline MaskRule finish_mask(const PendingMask& m) {
    if (!m.pattern) {
        throw DataError("mask rule '" + m.name + "' has no pattern");
    }
    return MaskRule(m.name, m.kind.value_or(MaskKind::Line), *m.pattern, m.action, m.min_run);
}

} // namespace detail

inline PipelineRules parse_rules_config(std::istream& in) {
    std::vector<SectionRule> sections;
    std::vector<MaskRule> masks;
    std::optional<SectionRule> section;
    std::optional<detail::PendingMask> mask;

    const auto flush = [&] {
        if (section) {
            if (section->header_patterns.empty()) {
                throw DataError("section rule '" + to_string(section->label) + "' has no pattern");
            }
            sections.push_back(std::move(*section));
            section.reset();
        }
        if (mask) {
            masks.push_back(detail::finish_mask(*mask));
            mask.reset();
        }
    };

    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string where = "rules line " + std::to_string(lineno) + ": ";
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw DataError(where + "unterminated block header");
            }
            flush();
            const auto inner = detail::trim(line.substr(1, line.size() - 2));
            const auto space = inner.find(' ');
            const auto kind = inner.substr(0, space);
            const auto name = space == std::string_view::npos ? std::string_view{} : detail::trim(inner.substr(space));
            if (name.empty()) {
                throw DataError(where + "block header needs a name");
            }
            if (kind == "section") {
                try {
                    section = SectionRule{section_label_from_string(name), {}, 0};
                } catch (const UsageError& e) {
                    throw DataError(where + e.what());
                }
            } else if (kind == "mask") {
                mask.emplace();
                mask->name = std::string(name);
            } else {
                throw DataError(where + "unknown block type '" + std::string(kind) + "'");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw DataError(where + "expected key = value");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        try {
            if (section) {
                if (key == "pattern") {
                    section->header_patterns.push_back(value);
                } else if (key == "priority") {
                    section->priority = std::stoi(value);
                } else {
                    throw DataError("unknown section key '" + key + "'");
                }
            } else if (mask) {
                if (key == "pattern") {
                    if (mask->pattern) {
                        throw DataError("mask rule '" + mask->name + "' has more than one pattern");
                    }
                    try {
                        std::regex probe(value, std::regex::ECMAScript);
                    } catch (const std::regex_error& e) {
                        throw DataError("invalid pattern: " + std::string(e.what()));
                    }
                    mask->pattern = value;
                } else if (key == "kind") {
                    if (value != "line" && value != "block") {
                        throw DataError("mask kind must be line or block");
                    }
                    mask->kind = value == "line" ? MaskKind::Line : MaskKind::Block;
                } else if (key == "action") {
                    if (value != "remove" && value != "mask") {
                        throw DataError("mask action must be remove or mask");
                    }
                    mask->action = value == "remove" ? MaskAction::Remove : MaskAction::ReplaceWithMaskToken;
                } else if (key == "min_run") {
                    mask->min_run = static_cast<std::size_t>(std::stoul(value));
                } else {
                    throw DataError("unknown mask key '" + key + "'");
                }
            } else {
                throw DataError("key outside of a [section] or [mask] block");
            }
        } catch (const std::logic_error& e) {
            // std::stoi failures and UsageError from rule validation
            throw DataError(where + e.what());
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
    }
    try {
        flush();
    } catch (const std::logic_error& e) {
        throw DataError(std::string("rules: ") + e.what());
    }

    PipelineRules rules;
    if (!sections.empty()) {
        rules.sections = std::move(sections);
    }
    if (!masks.empty()) {
        rules.masks = std::move(masks);
    }
    return rules;
}

inline PipelineRules load_rules_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open rules file " + path);
    }
    return parse_rules_config(in);
}

inline void write_rules_config(const PipelineRules& rules, std::ostream& out) {
    for (const auto& r : rules.sections) {
        out << "[section " << to_string(r.label) << "]\n";
        out << "priority = " << r.priority << "\n";
        for (const auto& p : r.header_patterns) {
            out << "pattern = " << p << "\n";
        }
        out << "\n";
    }
    for (const auto& m : rules.masks) {
        out << "[mask " << m.name() << "]\n";
        out << "kind = " << (m.kind() == MaskKind::Line ? "line" : "block") << "\n";
        out << "action = " << (m.action() == MaskAction::Remove ? "remove" : "mask") << "\n";
        if (m.kind() == MaskKind::Block) {
            out << "min_run = " << m.min_run() << "\n";
        }
        out << "pattern = " << m.pattern() << "\n\n";
    }
}

} // namespace esonlp
