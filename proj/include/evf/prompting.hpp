#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "evf/event_store.hpp"
#include "evf/history.hpp"

namespace evf {

enum class Target { Object, Relation };

Target target_from_string(std::string_view s);
std::string_view to_string(Target t);

/// Five labelled choices A-E with exactly one gold.
class OptionSet {
public:
    static constexpr std::size_t size = 5;

    OptionSet(std::array<std::string, size> texts, std::size_t gold_index);

    const std::string& text(std::size_t i) const { return texts_.at(i); }
    const std::array<std::string, size>& texts() const noexcept { return texts_; }
    std::size_t gold_index() const noexcept { return gold_; }
    char gold_letter() const noexcept { return letter(gold_); }

    static char letter(std::size_t i) { return static_cast<char>('A' + i); }

    friend bool operator==(const OptionSet&, const OptionSet&) = default;

private:
    std::array<std::string, size> texts_;
    std::size_t gold_;
};

/// A forecasting question: (s, r, ?) for Object, (s, ?, o) for Relation.
/// `known_slot` holds the relation or the object respectively.
struct QuerySpec {
    std::string uid;
    EntityId subject;
    std::string known_slot;
    Target target = Target::Object;
    Timestamp timestamp;
    ComplexEventId complex_event;
    Timestamp window_start;
    OptionSet options;
};

/// "(subject, known_slot, T)", T = days from the window start.
std::string render_query(const QuerySpec& query);

/// "[Options]: A.xxx B.xxx C.xxx D.xxx E.xxx"
std::string render_options(const OptionSet& options);

struct PromptPackage {
    std::string system;
    std::string user;
};

class PromptBudgetError : public std::runtime_error {
public:
    PromptBudgetError(std::size_t size, std::size_t budget);
    std::size_t overflow() const noexcept { return overflow_; }

private:
    std::size_t overflow_;
};

/// User prompt layout, one item per line under each block; empty blocks
/// read "None.". Complementary items follow remaining items under
/// [Related Events]. Throws PromptBudgetError when system + user exceed
/// `char_budget` (0 = unlimited).
PromptPackage render_forecast_prompt(const QuerySpec& query, const HistoryBundle& bundle, std::size_t char_budget = 0);

/// SHA-256 over every shipped prompt template.
std::string template_checksum();

/// Gold plus four distractors: the most frequent non-gold entities (objects
/// before `before`) or relations, ties by name, topped up from the
/// vocabulary in name order; positions shuffled with `seed`.
OptionSet build_options(const std::string& gold, Target target, const EventStore& store, Timestamp before,
                        std::uint64_t seed);

/// Dataset-supplied options take precedence; `gold` must be one of them.
OptionSet options_from_list(const std::vector<std::string>& texts, const std::string& gold);

enum class ParseMethod { LetterMatch, TextMatch };

struct ParsedAnswer {
    char letter = 'A';
    ParseMethod method = ParseMethod::LetterMatch;
};

class UnparseableResponse : public std::runtime_error {
public:
    UnparseableResponse() : std::runtime_error("unparseable response") {}
};

/// Rule 1: the first standalone capital A-E. Rule 2: the option whose text is
/// the longest case-insensitive substring of the response. Otherwise throws
/// UnparseableResponse.
ParsedAnswer parse_answer(std::string_view raw, const OptionSet& options);

}  // namespace evf
