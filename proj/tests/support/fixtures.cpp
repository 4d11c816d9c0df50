#include "support/fixtures.hpp"

#include "support/temp_dir.hpp"

namespace evf::oracle {

namespace {

QuerySpec query(std::string subject, std::string slot, Target target, std::int64_t day, std::int64_t start,
                OptionSet options)
{
    return QuerySpec{"q", EntityId(std::move(subject)), std::move(slot), target, Timestamp{day}, ComplexEventId("C0"),
                     Timestamp{start}, std::move(options)};
}

HistoryItem item(std::string text, std::int64_t day = 1) { return {std::move(text), Timestamp{day}, "u"}; }

OptionSet gulf() { return options_from_list({"Oman", "Qatar", "Iraq", "Kuwait", "Turkey"}, "Qatar"); }

}  // namespace

std::vector<PromptFixture> prompt_fixtures()
{
    std::vector<PromptFixture> out;
    {
        HistoryBundle b;
        b.key_events = {item("(Iran, Make statement, Qatar, 20)")};
        b.remaining_events = {item("(Iran, Consult, Oman, 3)"), item("(Qatar, Host visit, Iran, 25)")};
        b.complementary_events = {item("Iranian envoys arrived at the Doha summit venue.")};
        out.push_back({"forecast_1.txt", query("Iran", "Consult", Target::Object, 57, 30, gulf()), b});
    }
    // Window clamped at day 0: the query day itself renders as 0.
    out.push_back({"forecast_2.txt", query("Iran", "Consult", Target::Object, 0, 0, gulf()), {}});
    {
        HistoryBundle b;
        b.key_events = {item("(Israel, Threaten, Hamas, 28)")};
        const auto opts =
            options_from_list({"Consult", "Threaten", "Protest", "Provide aid", "Make statement"}, "Threaten");
        out.push_back({"forecast_3.txt", query("Israel", "Hamas", Target::Relation, 129, 100, opts), b});
    }
    {
        HistoryBundle b;
        b.complementary_events = {item("Crowds gathered outside the Rafah crossing."),
                                  item("Aid trucks queued at the border gate.")};
        const auto opts = options_from_list({"Israel", "Hamas", "Qatar", "Jordan", "Egypt Army"}, "Hamas");
        out.push_back({"forecast_4.txt", query("Egypt", "Mediate", Target::Object, 12, 0, opts), b});
    }
    {
        HistoryBundle b;
        b.key_events = {item("Turkey and Iraq agreed on water sharing.")};
        b.remaining_events = {item("Turkish officials visited Baghdad on Monday.")};
        const auto opts = options_from_list({"Iraq", "Syria", "Iran", "Greece", "Armenia"}, "Iraq");
        out.push_back({"forecast_5.txt", query("Turkey", "Sign agreement", Target::Object, 80, 50, opts), b});
    }
    return out;
}

OptionSet parser_options()
{
    return options_from_list({"Oman", "Saudi Arabia", "Consult Sudan", "Kuwait", "Saudi"}, "Oman");
}

const std::vector<ParserCase>& parser_cases()
{
    static const std::vector<ParserCase> cases{
        {"A", 'A'},
        {"B.", 'B'},
        {"C)", 'C'},
        {"D:", 'D'},
        {"(E)", 'E'},
        {"The answer is B.", 'B'},
        {"Answer: C", 'C'},
        {"answer: D.", 'D'},
        {"**E**", 'E'},
        {"[A]", 'A'},
        {"A.Oman", 'A'},
        {"Option B: Saudi Arabia", 'B'},
        {"B. Saudi Arabia is most likely.", 'B'},
        {"\n\n  D\n", 'D'},
        {"My prediction: E) Saudi", 'E'},
        {"The missing object is C, Consult Sudan.", 'C'},
        {"Based on the key events, the answer is (A) Oman.", 'A'},
        {"Correct option -> D", 'D'},
        {"E.g. the events suggest Kuwait, so D.", 'D'},
        {"Kuwait", 'D'},
        {"I think it will be Oman.", 'A'},
        {"saudi arabia", 'B'},
        {"The answer is Saudi Arabia.", 'B'},
        {"Egypt will consult Sudan", 'C'},
        {"Probably Saudi.", 'E'},
        {"KUWAIT!", 'D'},
        {"Answer:B", 'B'},
        {"Option 'C'", 'C'},
        {"\"D\"", 'D'},
        {"Both A and B seem plausible, but A.", 'A'},
        {"A good guess is C.", 'A'},  // rule 1 takes the first standalone capital, even an article
        {"The answer is E\xe3\x80\x82", 'E'},
        {"I cannot determine this.", 0},
        {"", 0},
        {"Sorry, I can't help with that.", 0},
        {"None of the options.", 0},
        {"Insufficient information to decide.", 0},
        {"As an AI model, I refuse.", 0},
        {"ABC", 0},
        {"answer b", 0},  // lowercase letters are not answers; "a" is too common a word
    };
    return cases;
}

std::string read_golden(const std::filesystem::path& dir, const std::string& name) { return slurp(dir / name); }

}  // namespace evf::oracle
