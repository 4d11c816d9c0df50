#include "evf/synth.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "evf/eval.hpp"
#include "evf/event_store.hpp"
#include "evf/history.hpp"
#include "evf/prompting.hpp"

namespace evf {

using nlohmann::json;

void SynthSpec::validate() const
{
    if (entities < 6) throw std::invalid_argument("synth needs at least 6 entities");
    if (relations < 5) throw std::invalid_argument("synth needs at least 5 relations");
    if (complex_events < 1 || days < 1 || articles_per_day < 1 || queries < 1) {
        throw std::invalid_argument("synth sizes must be >= 1");
    }
    if (window_days < 1 || window_days >= days + 1) throw std::invalid_argument("window_days must be in [1, days]");
    if (planted_fraction < 0.0 || planted_fraction > 1.0) throw std::invalid_argument("planted_fraction in [0, 1]");
    if (complementary_share < 0.0 || complementary_share > 1.0) {
        throw std::invalid_argument("complementary_share in [0, 1]");
    }
}

json SynthSpec::to_json() const
{
    return json{{"entities", entities},
                {"relations", relations},
                {"complex_events", complex_events},
                {"days", days},
                {"articles_per_day", articles_per_day},
                {"queries", queries},
                {"planted_fraction", planted_fraction},
                {"complementary_share", complementary_share},
                {"annotations", annotations},
                {"window_days", window_days},
                {"seed", seed}};
}

namespace {

constexpr std::array<std::string_view, 16> k_relations = {
    "Consult",         "Make statement",  "Express intent to cooperate", "Engage in negotiation",
    "Provide aid",     "Threaten",        "Protest",                     "Demand",
    "Accuse",          "Sign agreement",  "Impose sanctions",            "Host visit",
    "Reduce relations", "Mediate",        "Appeal",                      "Investigate",
};

constexpr std::array<std::string_view, 12> k_topics = {
    "border dispute", "water rights",  "trade corridor", "refugee crisis", "energy pipeline", "ceasefire talks",
    "port access",    "election row",  "grain exports",  "airspace ban",   "dam project",     "prisoner swap",
};

constexpr std::array<std::string_view, 20> k_onsets = {"Ar", "Bel", "Cor", "Dav", "El",  "Fen", "Gal",
                                                       "Hal", "Ist", "Jor", "Kel", "Lum", "Mor", "Nor",
                                                       "Os",  "Pra", "Quel", "Ros", "Sal", "Tor"};
constexpr std::array<std::string_view, 8> k_codas = {"avia", "ond", "esh", "aria", "enia", "ul", "ora", "istan"};

// 1x1 transparent PNG.
constexpr unsigned char k_png[] = {0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49,
                                   0x48, 0x44, 0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06,
                                   0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x44,
                                   0x41, 0x54, 0x78, 0x9c, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0d,
                                   0x0a, 0x2d, 0xb4, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42,
                                   0x60, 0x82};

/// Bounded draws with an explicit reduction so output is identical across
/// standard libraries (std::uniform_int_distribution is not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
    std::int64_t between(std::int64_t lo, std::int64_t hi) { return lo + static_cast<std::int64_t>(below(hi - lo + 1)); }
    bool chance(double p) { return static_cast<double>(gen_() >> 11) * 0x1.0p-53 < p; }

private:
    std::mt19937_64 gen_;
};

std::string lower_all(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Planted {
    bool complementary = false;
    AtomicEvent support;
    std::string support_text;
    std::string comp_text;
};

class Generator {
public:
    Generator(const SynthSpec& spec, std::filesystem::path out) : spec_(spec), out_(std::move(out)), rng_(spec.seed) {}

    json generate();

private:
    std::string entity() { return entities_[rng_.below(entities_.size())]; }
    std::string other_entity(const std::string& not_this)
    {
        for (;;) {
            auto e = entity();
            if (e != not_this) return e;
        }
    }
    std::string relation() { return relations_[rng_.below(relations_.size())]; }
    std::string topic_of(std::size_t ce) const { return std::string(k_topics[ce % k_topics.size()]); }

    AtomicEvent make_event(std::string s, std::string r, std::string o, std::int64_t day, std::size_t ce)
    {
        return AtomicEvent{EntityId(std::move(s)), RelationId(std::move(r)), EntityId(std::move(o)), Timestamp{day},
                           ComplexEventId(ce_ids_[ce]), "ev" + std::to_string(events_.size())};
    }

    std::string event_text(const AtomicEvent& e, std::size_t ce) const
    {
        return e.subject.str() + " moved to " + lower_all(e.relation.str()) + " " + e.object.str() + " over the " +
               topic_of(ce) + ".";
    }

    void add_image(const std::string& article_uid, const std::string& image_uid, std::optional<ImageAnnotation> a);
    void background_articles();
    void plant(const QueryRecord& q, std::size_t ce, std::size_t index, Planted& out);
    std::vector<std::string> options_for(const std::string& gold, const std::vector<std::string>& pool);

    const SynthSpec& spec_;
    std::filesystem::path out_;
    Rng rng_;

    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::vector<std::string> ce_ids_;

    std::vector<AtomicEvent> events_;
    std::vector<NewsArticle> articles_;
    std::vector<TextualSubEvent> subevents_;
    std::vector<ImageAnnotation> annotations_;
    std::vector<json> mock_entries_;
};

void Generator::add_image(const std::string& article_uid, const std::string& image_uid,
                          std::optional<ImageAnnotation> a)
{
    auto& article = *std::find_if(articles_.begin(), articles_.end(), [&](const auto& x) { return x.uid == article_uid; });
    article.image_uids.push_back(image_uid);
    {
        std::ofstream img(out_ / "images" / (image_uid + ".png"), std::ios::binary);
        img.write(reinterpret_cast<const char*>(k_png), sizeof(k_png));
    }

    const auto label = a ? a->function : ImageFunction::Irrelevant;
    mock_entries_.push_back(json{{"attachment", image_uid},
                                 {"contains", "Please judge the relationship between images and news"},
                                 {"response", "The relationship is " + std::string(to_string(label)) + "."}});
    if (a && a->key_subevent_ordinal) {
        mock_entries_.push_back(json{{"attachment", image_uid},
                                     {"contains", "Please determine which sub-event"},
                                     {"response", "The number of the sub-event most relevant to the image is " +
                                                      std::to_string(*a->key_subevent_ordinal) + "."}});
    }
    if (a && a->complementary_text) {
        mock_entries_.push_back(json{{"attachment", image_uid},
                                     {"contains", "Please extract the image information"},
                                     {"response", "The image shows " + *a->complementary_text}});
    }
    if (a && spec_.annotations) annotations_.push_back(std::move(*a));
}

void Generator::background_articles()
{
    for (std::int64_t day = 0; day < spec_.days; ++day) {
        for (std::size_t k = 0; k < spec_.articles_per_day; ++k) {
            const auto ce = rng_.below(ce_ids_.size());
            NewsArticle article{"art" + std::to_string(articles_.size()), "", "", Timestamp{day}, {}};
            const auto count = static_cast<int>(rng_.between(2, 4));
            std::string body;
            std::vector<TextualSubEvent> subs;
            for (int i = 1; i <= count; ++i) {
                const auto s = entity();
                auto e = make_event(s, relation(), other_entity(s), day, ce);
                const auto text = event_text(e, ce);
                subs.push_back({"sub" + std::to_string(subevents_.size() + subs.size()), text, Timestamp{day},
                                article.uid, {e.uid}, i});
                events_.push_back(std::move(e));
                body += text + " ";
            }
            if (rng_.chance(0.15)) {
                const auto text = "Analysts expect further developments on the " + topic_of(ce) + ".";
                subs.push_back({"sub" + std::to_string(subevents_.size() + subs.size()), text, Timestamp{day},
                                article.uid, {}, count + 1});
                body += text;
            }
            article.title = "Update on the " + topic_of(ce);
            article.body = body;
            articles_.push_back(article);
            const auto sub_count = static_cast<int>(subs.size());
            const auto first_subject = events_[events_.size() - static_cast<std::size_t>(count)].subject.str();
            subevents_.insert(subevents_.end(), subs.begin(), subs.end());

            if (!rng_.chance(0.6)) continue;
            const auto image_uid = "img_" + article.uid;
            std::optional<ImageAnnotation> a;
            const auto roll = rng_.below(100);
            if (roll < 40) {
                a = ImageAnnotation{image_uid, article.uid, ImageFunction::Highlighting,
                                    static_cast<int>(rng_.between(1, sub_count)), std::nullopt, Provenance::Ingested};
            } else if (roll < 48) {
                a = ImageAnnotation{image_uid, article.uid, ImageFunction::Complementary, std::nullopt,
                                    "Crowds gathered as " + first_subject + " delegates arrived for the " +
                                        topic_of(ce) + " meeting.",
                                    Provenance::Ingested};
            } else {
                a = ImageAnnotation{image_uid, article.uid, ImageFunction::Irrelevant, std::nullopt, std::nullopt,
                                    Provenance::Ingested};
            }
            add_image(article.uid, image_uid, std::move(a));
        }
    }
}

void Generator::plant(const QueryRecord& q, std::size_t ce, std::size_t index, Planted& out)
{
    const auto day = q.day - rng_.between(1, std::min<std::int64_t>(10, spec_.window_days));
    NewsArticle article{"art" + std::to_string(articles_.size()), "Developments on the " + topic_of(ce), "",
                        Timestamp{day}, {}};
    articles_.push_back(article);

    const auto count = static_cast<int>(rng_.between(3, 5));
    const int support_at = out.complementary ? 0 : static_cast<int>(rng_.between(1, count));
    std::string body;
    for (int i = 1; i <= count; ++i) {
        AtomicEvent e = [&] {
            if (i == support_at) return make_event(q.subject, q.relation, q.object, day, ce);
            std::string r;
            do {
                r = relation();
            } while (r == q.relation);
            std::string o;
            do {
                o = other_entity(q.subject);
            } while (o == q.object);
            return make_event(q.subject, r, o, day, ce);
        }();
        const auto text = event_text(e, ce);
        subevents_.push_back(
            {"sub" + std::to_string(subevents_.size()), text, Timestamp{day}, article.uid, {e.uid}, i});
        if (i == support_at) {
            out.support = e;
            out.support_text = text;
        }
        events_.push_back(std::move(e));
        body += text + " ";
    }
    articles_.back().body = body;

    const auto image_uid = "img_q" + std::to_string(index);
    if (out.complementary) {
        out.comp_text = q.subject + " delegates prepared to " + lower_all(q.relation) + " " + q.object +
                        " at the " + topic_of(ce) + " venue.";
        add_image(article.uid, image_uid,
                  ImageAnnotation{image_uid, article.uid, ImageFunction::Complementary, std::nullopt, out.comp_text,
                                  Provenance::Ingested});
    } else {
        add_image(article.uid, image_uid,
                  ImageAnnotation{image_uid, article.uid, ImageFunction::Highlighting, support_at, std::nullopt,
                                  Provenance::Ingested});
    }
}

std::vector<std::string> Generator::options_for(const std::string& gold, const std::vector<std::string>& pool)
{
    std::vector<std::string> opts{gold};
    while (opts.size() < OptionSet::size) {
        const auto& c = pool[rng_.below(pool.size())];
        if (std::find(opts.begin(), opts.end(), c) == opts.end()) opts.push_back(c);
    }
    for (std::size_t i = opts.size() - 1; i > 0; --i) std::swap(opts[i], opts[rng_.below(i + 1)]);
    return opts;
}

json Generator::generate()
{
    std::filesystem::create_directories(out_ / "images");

    for (std::size_t i = 0; entities_.size() < spec_.entities; ++i) {
        const auto onset = k_onsets[i % k_onsets.size()];
        const auto coda = k_codas[(i / k_onsets.size()) % k_codas.size()];
        auto name = std::string(onset) + std::string(coda);
        if (i >= k_onsets.size() * k_codas.size()) name += std::to_string(i);
        entities_.push_back(std::move(name));
    }
    for (std::size_t i = 0; i < spec_.relations; ++i) {
        relations_.push_back(i < k_relations.size() ? std::string(k_relations[i]) : "Relation" + std::to_string(i));
    }
    for (std::size_t i = 0; i < spec_.complex_events; ++i) ce_ids_.push_back("ce" + std::to_string(i));

    background_articles();

    // Queries with unique (subject, relation) and (subject, object) pairs so each
    // rendered query line is unambiguous for the scripted mock.
    std::set<std::pair<std::string, std::string>> used_sr;
    std::set<std::pair<std::string, std::string>> used_so;
    std::vector<QueryRecord> queries;
    std::vector<std::size_t> query_ce;
    const auto first_day = std::min<std::int64_t>(spec_.window_days + 5, spec_.days);
    for (std::size_t attempts = 0; queries.size() < spec_.queries; ++attempts) {
        if (attempts > spec_.queries * 1000) throw std::invalid_argument("synth: too few entities for unique queries");
        QueryRecord q;
        q.subject = entity();
        q.relation = relation();
        q.object = other_entity(q.subject);
        if (used_sr.contains({q.subject, q.relation}) || used_so.contains({q.subject, q.object})) continue;
        used_sr.insert({q.subject, q.relation});
        used_so.insert({q.subject, q.object});
        const auto ce = rng_.below(ce_ids_.size());
        q.uid = "q" + std::to_string(queries.size());
        q.day = rng_.between(first_day, spec_.days);
        q.complex_event = ce_ids_[ce];
        q.object_options = options_for(q.object, entities_);
        q.relation_options = options_for(q.relation, relations_);
        queries.push_back(std::move(q));
        query_ce.push_back(ce);
    }

    const auto planted_count =
        static_cast<std::size_t>(std::llround(spec_.planted_fraction * static_cast<double>(queries.size())));
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng_.below(i + 1)]);
    std::vector<std::optional<Planted>> planted(queries.size());
    std::size_t planted_comp = 0;
    for (std::size_t k = 0; k < planted_count; ++k) {
        const auto i = order[k];
        Planted p;
        p.complementary = rng_.chance(spec_.complementary_share);
        plant(queries[i], query_ce[i], i, p);
        planted_comp += p.complementary ? 1 : 0;
        planted[i] = std::move(p);
    }

    // Forecast rules for both targets.
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        const auto window = TimeWindow::before(Timestamp{q.day}, spec_.window_days);
        json key_support = json::array();
        json comp_support = json::array();
        if (planted[i]) {
            if (planted[i]->complementary) {
                comp_support.push_back(planted[i]->comp_text);
            } else {
                key_support.push_back(render_event(planted[i]->support, window));
                key_support.push_back(planted[i]->support_text);
            }
        }
        for (const auto target : {Target::Object, Target::Relation}) {
            const bool object = target == Target::Object;
            const auto options = options_from_list(object ? *q.object_options : *q.relation_options,
                                                   object ? q.object : q.relation);
            const QuerySpec spec{q.uid,
                                 EntityId(q.subject),
                                 object ? q.relation : q.object,
                                 target,
                                 Timestamp{q.day},
                                 ComplexEventId(q.complex_event),
                                 window.start,
                                 options};
            const char gold = options.gold_letter();
            mock_entries_.push_back(json{{"forecast",
                                          {{"query_line", "[Query]: " + render_query(spec)},
                                           {"options_line", render_options(options)},
                                           {"gold", std::string(1, gold)},
                                           {"fallback", std::string(1, gold == 'A' ? 'B' : 'A')},
                                           {"key_support", key_support},
                                           {"complementary_support", comp_support}}}});
        }
    }

    // Files.
    {
        json manifest{{"epoch", "2015-01-01"}, {"entities", entities_}, {"relations", relations_}, {"image_dir", "images"}};
        std::ofstream(out_ / "manifest.json") << manifest.dump(2) << '\n';
    }
    {
        std::ofstream f(out_ / "events.jsonl");
        for (const auto& e : events_) {
            f << json{{"subject", e.subject.str()},      {"relation", e.relation.str()}, {"object", e.object.str()},
                      {"day", e.timestamp.day},          {"complex_event", e.complex_event.str()},
                      {"uid", e.uid}}
                     .dump()
              << '\n';
        }
    }
    {
        std::ofstream f(out_ / "articles.jsonl");
        for (const auto& a : articles_) {
            f << json{{"uid", a.uid}, {"title", a.title}, {"body", a.body}, {"day", a.timestamp.day},
                      {"image_uids", a.image_uids}}
                     .dump()
              << '\n';
        }
    }
    {
        std::ofstream f(out_ / "subevents.jsonl");
        for (const auto& s : subevents_) {
            f << json{{"uid", s.uid},
                      {"text", s.text},
                      {"day", s.timestamp.day},
                      {"article_uid", s.article_uid},
                      {"linked_event_uids", s.linked_event_uids},
                      {"ordinal", s.ordinal}}
                     .dump()
              << '\n';
        }
    }
    {
        std::ofstream f(out_ / "annotations.jsonl");
        for (const auto& a : annotations_) write_annotation_line(f, a);
    }
    {
        std::ofstream f(out_ / "queries.jsonl");
        for (const auto& q : queries) write_query_line(f, q);
    }
    {
        std::ofstream f(out_ / "mock_script.jsonl");
        for (const auto& m : mock_entries_) f << m.dump() << '\n';
    }

    std::size_t usable = 0;
    for (const auto& a : annotations_) usable += a.usable() ? 1 : 0;
    json synth{{"spec", spec_.to_json()},
               {"events", events_.size()},
               {"articles", articles_.size()},
               {"subevents", subevents_.size()},
               {"annotations", annotations_.size()},
               {"usable_annotations", usable},
               {"queries", queries.size()},
               {"planted_queries", planted_count},
               {"planted_highlighting", planted_count - planted_comp},
               {"planted_complementary", planted_comp}};
    std::ofstream(out_ / "synth_manifest.json") << synth.dump(2) << '\n';
    return synth;
}

}  // namespace

json generate_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir)
{
    spec.validate();
    Generator g(spec, out_dir);
    return g.generate();
}

}  // namespace evf
