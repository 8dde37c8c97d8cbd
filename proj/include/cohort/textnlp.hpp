#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "tokenize.hpp"
#include "vocabulary.hpp"

namespace cohort {

struct SectionText {
    std::string section_id;
    std::string heading;
    std::string body;
    std::size_t char_offset = 0; ///< offset of `body` within the document text

    bool operator==(const SectionText&) const = default;
};

enum class Experiencer : std::uint8_t { Patient, Family };
enum class Status : std::uint8_t { Current, Historical };
enum class Certainty : std::uint8_t { Certain, Uncertain };

struct TermModifiers {
    bool negated = false;
    Experiencer experiencer = Experiencer::Patient;
    Status status = Status::Current;
    Certainty certainty = Certainty::Certain;

    /// Counts toward relevance: not negated and about the patient.
    bool affirmed() const { return !negated && experiencer == Experiencer::Patient; }

    std::uint8_t bits() const {
        return static_cast<std::uint8_t>((negated ? 1 : 0) | (experiencer == Experiencer::Family ? 2 : 0) |
                                         (status == Status::Historical ? 4 : 0) |
                                         (certainty == Certainty::Uncertain ? 8 : 0));
    }

    static TermModifiers from_bits(std::uint8_t b) {
        TermModifiers m;
        m.negated = b & 1;
        m.experiencer = (b & 2) ? Experiencer::Family : Experiencer::Patient;
        m.status = (b & 4) ? Status::Historical : Status::Current;
        m.certainty = (b & 8) ? Certainty::Uncertain : Certainty::Certain;
        return m;
    }

    bool operator==(const TermModifiers&) const = default;
};

inline std::string_view to_string(Experiencer e) { return e == Experiencer::Patient ? "Patient" : "Family"; }
inline std::string_view to_string(Status s) { return s == Status::Current ? "Current" : "Historical"; }
inline std::string_view to_string(Certainty c) { return c == Certainty::Certain ? "Certain" : "Uncertain"; }

struct ConceptMention {
    std::string concept_id;
    std::string matched_text;
    std::size_t start = 0; ///< byte span within the section body, end exclusive
    std::size_t end = 0;
    TermModifiers modifiers;
    MentionType mention_type = MentionType::DiseaseDisorder;

    bool operator==(const ConceptMention&) const = default;
};

enum class TriggerCategory : std::uint8_t { Negation, Family, History, Uncertainty };

inline std::string_view to_string(TriggerCategory c) {
    switch (c) {
    case TriggerCategory::Negation:
        return "negation";
    case TriggerCategory::Family:
        return "family";
    case TriggerCategory::History:
        return "history";
    case TriggerCategory::Uncertainty:
        return "uncertainty";
    }
    return "?";
}

/// Pre-mention trigger phrases, stored tokenized.
class TriggerLexicon {
public:
    struct Trigger {
        TriggerCategory category;
        std::vector<std::string> tokens;
    };

    static constexpr std::size_t kWindow = 6;

    void add(TriggerCategory category, std::string_view phrase) {
        auto tokens = token_strings(phrase);
        if (!tokens.empty())
            triggers_.push_back({category, std::move(tokens)});
    }

    const std::vector<Trigger>& triggers() const { return triggers_; }

    static const TriggerLexicon& defaults() {
        static const TriggerLexicon lex = [] {
            TriggerLexicon l;
            for (auto p : {"no", "not", "denies", "without", "negative for", "no evidence of", "never had",
                           "has not had"})
                l.add(TriggerCategory::Negation, p);
            for (auto p : {"mother", "father", "brother", "sister", "family history of"})
                l.add(TriggerCategory::Family, p);
            for (auto p : {"history of", "prior", "past"})
                l.add(TriggerCategory::History, p);
            for (auto p : {"possible", "probable", "suspected", "rule out"})
                l.add(TriggerCategory::Uncertainty, p);
            return l;
        }();
        return lex;
    }

    /// TSV with header `category<TAB>trigger_phrase`; replaces the defaults.
    static TriggerLexicon load_tsv(const std::filesystem::path& path) {
        TriggerLexicon l;
        detail::read_tsv(path, 2, "category", [&](std::size_t line, std::vector<std::string> f) {
            TriggerCategory c;
            if (f[0] == "negation")
                c = TriggerCategory::Negation;
            else if (f[0] == "family")
                c = TriggerCategory::Family;
            else if (f[0] == "history")
                c = TriggerCategory::History;
            else if (f[0] == "uncertainty")
                c = TriggerCategory::Uncertainty;
            else
                throw ParseError("unknown trigger category '" + f[0] + "'", line);
            l.add(c, f[1]);
        });
        return l;
    }

private:
    std::vector<Trigger> triggers_;
};

/// Modifiers for a mention whose first token is `tokens[mention_first]`.
/// Looks at up to six tokens before the mention, within its sentence.
inline TermModifiers apply_context_rules(std::span<const Token> tokens, std::size_t mention_first,
                                         const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    TermModifiers m;
    if (mention_first == 0 || mention_first > tokens.size())
        return m;
    auto sentence = mention_first < tokens.size() ? tokens[mention_first].sentence
                                                  : tokens[mention_first - 1].sentence;
    std::size_t lo = mention_first > TriggerLexicon::kWindow ? mention_first - TriggerLexicon::kWindow : 0;
    while (lo < mention_first && tokens[lo].sentence != sentence)
        ++lo;
    for (std::size_t p = lo; p < mention_first; ++p) {
        for (const auto& t : lexicon.triggers()) {
            if (p + t.tokens.size() > mention_first)
                continue;
            bool hit = true;
            for (std::size_t k = 0; k < t.tokens.size() && hit; ++k)
                hit = tokens[p + k].text == t.tokens[k];
            if (!hit)
                continue;
            switch (t.category) {
            case TriggerCategory::Negation:
                m.negated = true;
                break;
            case TriggerCategory::Family:
                m.experiencer = Experiencer::Family;
                break;
            case TriggerCategory::History:
                m.status = Status::Historical;
                break;
            case TriggerCategory::Uncertainty:
                m.certainty = Certainty::Uncertain;
                break;
            }
        }
    }
    return m;
}

/// Leftmost-longest dictionary matching over `body`; output ordered by start.
inline std::vector<ConceptMention> extract_mentions(std::string_view body, const Vocabulary& vocab,
                                                    const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    std::vector<ConceptMention> out;
    auto tokens = tokenize(body);
    std::size_t i = 0;
    std::string phrase;
    while (i < tokens.size()) {
        std::size_t longest = std::min(vocab.max_phrase_tokens(), tokens.size() - i);
        const std::string* hit = nullptr;
        std::size_t len = longest;
        for (; len >= 1; --len) {
            if (tokens[i + len - 1].sentence != tokens[i].sentence)
                continue;
            phrase.clear();
            for (std::size_t k = i; k < i + len; ++k) {
                if (k > i)
                    phrase.push_back(' ');
                phrase += tokens[k].text;
            }
            if ((hit = vocab.match_phrase(phrase)))
                break;
        }
        if (!hit) {
            ++i;
            continue;
        }
        ConceptMention m;
        m.concept_id = *hit;
        m.start = tokens[i].start;
        m.end = tokens[i + len - 1].end;
        m.matched_text = std::string(body.substr(m.start, m.end - m.start));
        m.modifiers = apply_context_rules(tokens, i, lexicon);
        m.mention_type = mention_type_for(vocab.at(*hit).domain).value_or(MentionType::DiseaseDisorder);
        out.push_back(std::move(m));
        i += len;
    }
    return out;
}

inline std::vector<ConceptMention> extract_mentions(const SectionText& section, const Vocabulary& vocab,
                                                    const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    return extract_mentions(section.body, vocab, lexicon);
}

namespace detail {

inline bool is_heading_word(std::string_view w) {
    if (w.empty() || w[0] < 'A' || w[0] > 'Z')
        return false;
    bool all_upper = true, rest_lower = true;
    for (std::size_t i = 1; i < w.size(); ++i) {
        char c = w[i];
        bool digit = c >= '0' && c <= '9';
        if (!(c >= 'A' && c <= 'Z') && !digit)
            all_upper = false;
        if (!(c >= 'a' && c <= 'z') && !digit)
            rest_lower = false;
    }
    return all_upper || rest_lower;
}

/// Length of the heading prefix (excluding ':') if `line` starts with one.
inline std::size_t heading_length(std::string_view line) {
    constexpr std::size_t kMaxWords = 8;
    auto colon = line.find(':');
    if (colon == 0 || colon == std::string_view::npos)
        return 0;
    auto head = line.substr(0, colon);
    std::size_t words = 0, i = 0;
    while (i < head.size()) {
        auto j = i;
        while (j < head.size() && head[j] != ' ' && head[j] != '/' && head[j] != '&' && head[j] != '-')
            ++j;
        if (!is_heading_word(head.substr(i, j - i)) || ++words > kMaxWords)
            return 0;
        if (j == head.size())
            break;
        i = j;
        while (i < head.size() && (head[i] == ' ' || head[i] == '/' || head[i] == '&' || head[i] == '-'))
            ++i;
        if (i == head.size())
            return 0;
    }
    return colon;
}

inline bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

} // namespace detail

inline constexpr std::string_view kPreambleHeading = "PREAMBLE";

/// Splits a note on heading lines ("SOCIAL HISTORY:", "Assessment:").
/// Text before the first heading becomes a PREAMBLE section.
inline std::vector<SectionText> split_sections(std::string_view text) {
    struct Heading {
        std::size_t line_start;
        std::size_t length;
    };
    std::vector<Heading> headings;
    for (std::size_t pos = 0; pos < text.size();) {
        auto eol = text.find('\n', pos);
        auto line_end = eol == std::string_view::npos ? text.size() : eol;
        if (auto n = detail::heading_length(text.substr(pos, line_end - pos)))
            headings.push_back({pos, n});
        pos = line_end + 1;
    }

    std::vector<SectionText> out;
    auto emit = [&](std::string heading, std::size_t begin, std::size_t end) {
        while (begin < end && detail::is_blank(text[begin]))
            ++begin;
        while (end > begin && detail::is_blank(text[end - 1]))
            --end;
        if (heading.empty() && begin == end)
            return;
        SectionText s;
        s.section_id = "s" + std::to_string(out.size());
        s.heading = heading.empty() ? std::string(kPreambleHeading) : std::move(heading);
        s.body = std::string(text.substr(begin, end - begin));
        s.char_offset = begin;
        out.push_back(std::move(s));
    };

    emit({}, 0, headings.empty() ? text.size() : headings.front().line_start);
    for (std::size_t h = 0; h < headings.size(); ++h) {
        auto begin = headings[h].line_start + headings[h].length + 1;
        auto end = h + 1 < headings.size() ? headings[h + 1].line_start : text.size();
        emit(std::string(text.substr(headings[h].line_start, headings[h].length)), begin, end);
    }
    return out;
}

} // namespace cohort
