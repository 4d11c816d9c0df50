#include "evf/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>
#include <set>

#include "evf/llm_gateway.hpp"
#include "evf/prompt_assets.hpp"

namespace evf {

Target target_from_string(std::string_view s)
{
    if (s == "object") return Target::Object;
    if (s == "relation") return Target::Relation;
    throw std::invalid_argument("unknown target '" + std::string(s) + "'");
}

std::string_view to_string(Target t) { return t == Target::Object ? "object" : "relation"; }

OptionSet::OptionSet(std::array<std::string, size> texts, std::size_t gold_index)
    : texts_(std::move(texts)), gold_(gold_index)
{
    if (gold_ >= size) throw std::invalid_argument("gold index out of range");
    std::set<std::string> distinct(texts_.begin(), texts_.end());
    if (distinct.size() != size) throw std::invalid_argument("options must be pairwise distinct");
}

std::string render_query(const QuerySpec& query)
{
    return "(" + query.subject.str() + ", " + query.known_slot + ", " +
           std::to_string(query.timestamp.day - query.window_start.day) + ")";
}

std::string render_options(const OptionSet& options)
{
    std::string out = "[Options]:";
    for (std::size_t i = 0; i < OptionSet::size; ++i) {
        out += ' ';
        out += OptionSet::letter(i);
        out += '.';
        out += options.text(i);
    }
    return out;
}

PromptBudgetError::PromptBudgetError(std::size_t size, std::size_t budget)
    : std::runtime_error("prompt of " + std::to_string(size) + " chars exceeds budget " + std::to_string(budget) +
                         " by " + std::to_string(size - budget)),
      overflow_(size - budget)
{}

namespace {

void append_block(std::string& out, std::string_view label, std::initializer_list<const std::vector<HistoryItem>*> parts)
{
    std::size_t n = 0;
    for (const auto* p : parts) n += p->size();
    out += label;
    if (n == 0) {
        out += ": None.\n";
        return;
    }
    out += ":\n";
    for (const auto* p : parts) {
        for (const auto& item : *p) {
            out += item.rendering;
            out += '\n';
        }
    }
}

}  // namespace

PromptPackage render_forecast_prompt(const QuerySpec& query, const HistoryBundle& bundle, std::size_t char_budget)
{
    PromptPackage p;
    p.system = std::string(assets::k_forecast_system);
    p.user = "[Query]: " + render_query(query) + "\n";
    append_block(p.user, "[Key Events]", {&bundle.key_events});
    append_block(p.user, "[Related Events]", {&bundle.remaining_events, &bundle.complementary_events});
    p.user += render_options(query.options);

    const auto total = p.system.size() + p.user.size();
    if (char_budget != 0 && total > char_budget) throw PromptBudgetError(total, char_budget);
    return p;
}

std::string template_checksum()
{
    std::string all;
    for (auto t : {assets::k_forecast_system, assets::k_image_identification, assets::k_image_highlighting,
                   assets::k_image_complementary}) {
        all += t;
        all += '\0';
    }
    return sha256_hex(all);
}

// ---------------------------------------------------------------------------
// Options

namespace {

void seeded_shuffle(std::array<std::string, OptionSet::size>& items, std::uint64_t seed)
{
    // Explicit Fisher-Yates: std::shuffle's draw sequence differs between standard libraries.
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(items[i], items[j]);
    }
}

}  // namespace

OptionSet build_options(const std::string& gold, Target target, const EventStore& store, Timestamp before,
                        std::uint64_t seed)
{
    std::map<std::string, std::size_t> frequency;
    std::set<std::string> vocabulary;
    const auto& manifest = store.manifest();
    const auto& declared = target == Target::Object ? manifest.entities : manifest.relations;
    vocabulary.insert(declared.begin(), declared.end());

    for (const auto& e : store.events()) {
        const auto& value = target == Target::Object ? e.object.str() : e.relation.str();
        if (declared.empty()) {
            vocabulary.insert(value);
            if (target == Target::Object) vocabulary.insert(e.subject.str());
        }
        if (e.timestamp < before) ++frequency[value];
    }
    vocabulary.insert(gold);
    if (vocabulary.size() < OptionSet::size) {
        throw std::invalid_argument("vocabulary has " + std::to_string(vocabulary.size()) +
                                    " members; five options need at least 5");
    }

    std::vector<std::pair<std::string, std::size_t>> ranked(frequency.begin(), frequency.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::array<std::string, OptionSet::size> texts;
    texts[0] = gold;
    std::size_t filled = 1;
    std::set<std::string> used{gold};
    for (const auto& [name, count] : ranked) {
        if (filled == OptionSet::size) break;
        if (used.insert(name).second) texts[filled++] = name;
    }
    for (const auto& name : vocabulary) {
        if (filled == OptionSet::size) break;
        if (used.insert(name).second) texts[filled++] = name;
    }

    seeded_shuffle(texts, seed);
    const auto gold_at = static_cast<std::size_t>(std::find(texts.begin(), texts.end(), gold) - texts.begin());
    return OptionSet(std::move(texts), gold_at);
}

OptionSet options_from_list(const std::vector<std::string>& texts, const std::string& gold)
{
    if (texts.size() != OptionSet::size) {
        throw std::invalid_argument("expected 5 options, got " + std::to_string(texts.size()));
    }
    std::array<std::string, OptionSet::size> arr;
    std::copy(texts.begin(), texts.end(), arr.begin());
    const auto it = std::find(arr.begin(), arr.end(), gold);
    if (it == arr.end()) throw std::invalid_argument("gold '" + gold + "' is not among the options");
    return OptionSet(std::move(arr), static_cast<std::size_t>(it - arr.begin()));
}

// ---------------------------------------------------------------------------
// Answer parsing

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::optional<char> first_standalone_letter(std::string_view raw)
{
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        if (c < 'A' || c > 'E') continue;
        if (i > 0 && is_alnum(raw[i - 1])) continue;
        if (i + 1 < raw.size() && is_alnum(raw[i + 1])) continue;
        // "E.g." and similar dotted abbreviations are not answers.
        if (i + 3 < raw.size() && raw[i + 1] == '.' && std::isalpha(static_cast<unsigned char>(raw[i + 2])) &&
            raw[i + 3] == '.') {
            continue;
        }
        return c;
    }
    return std::nullopt;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); });
    return out;
}

}  // namespace

ParsedAnswer parse_answer(std::string_view raw, const OptionSet& options)
{
    if (auto letter = first_standalone_letter(raw)) return ParsedAnswer{*letter, ParseMethod::LetterMatch};

    const auto haystack = lower(raw);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < OptionSet::size; ++i) {
        const auto needle = lower(options.text(i));
        if (needle.empty() || haystack.find(needle) == std::string::npos) continue;
        if (!best || needle.size() > options.text(*best).size()) best = i;
    }
    if (best) return ParsedAnswer{OptionSet::letter(*best), ParseMethod::TextMatch};
    throw UnparseableResponse();
}

}  // namespace evf
