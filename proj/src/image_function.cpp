#include "evf/image_function.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

#include <spdlog/spdlog.h>

#include "evf/prompt_assets.hpp"

namespace evf {

namespace {

std::string news_block(const NewsArticle& article)
{
    return "\n[News Title]: " + article.title + "\n[News]: " + article.body;
}

void require_body(const NewsArticle& article)
{
    if (article.body.empty()) {
        throw std::invalid_argument("article '" + article.uid + "' has an empty body");
    }
}

char ascii_lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool is_word_char(char c)
{
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || u >= 0x80;
}

bool istarts_with(std::string_view s, std::string_view prefix)
{
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (ascii_lower(s[i]) != ascii_lower(prefix[i])) return false;
    }
    return true;
}

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

constexpr std::array<std::string_view, 10> k_lead_ins = {
    "In the image", "The image shows", "In the picture", "The image is",    "In the photo",
    "The picture shows", "The photo shows", "In this image", "In this picture", "In this photo",
};

std::vector<ChatMessage> user_with_image(std::string text, const ImageRef& image)
{
    return {ChatMessage{Role::User, std::move(text), {image}}};
}

}  // namespace

std::string render_identification_prompt(const NewsArticle& article)
{
    return std::string(assets::k_image_identification) + news_block(article);
}

std::string render_highlighting_prompt(const NewsArticle& article, std::span<const TextualSubEvent* const> subevents)
{
    std::string out = std::string(assets::k_image_highlighting) + news_block(article) + "\n[Sub-events]:";
    for (const auto* s : subevents) {
        out += "\n" + std::to_string(s->ordinal) + ". " + s->text;
    }
    return out;
}

std::string render_complementary_prompt(const NewsArticle& article)
{
    return std::string(assets::k_image_complementary) + news_block(article);
}

ImageFunction parse_image_function(std::string_view response, bool* matched)
{
    std::string lower(response);
    std::transform(lower.begin(), lower.end(), lower.begin(), ascii_lower);
    ImageFunction result = ImageFunction::Irrelevant;
    bool found = true;
    if (lower.find("highlighting") != std::string::npos) {
        result = ImageFunction::Highlighting;
    } else if (lower.find("complementary") != std::string::npos) {
        result = ImageFunction::Complementary;
    } else if (lower.find("irrelevant") == std::string::npos) {
        found = false;
    }
    if (matched != nullptr) *matched = found;
    return result;
}

int parse_subevent_ordinal(std::string_view response, int subevent_count)
{
    std::size_t i = 0;
    while (i < response.size()) {
        if (!std::isdigit(static_cast<unsigned char>(response[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        long long value = 0;
        while (j < response.size() && std::isdigit(static_cast<unsigned char>(response[j]))) {
            if (value < 1'000'000) value = value * 10 + (response[j] - '0');
            ++j;
        }
        if (value >= 1 && value <= subevent_count) return static_cast<int>(value);
        i = j;
    }
    throw AnnotationError("unresolvable key event");
}

std::span<const std::string_view> forbidden_lead_ins() { return k_lead_ins; }

std::string sanitize_complementary(std::string_view text)
{
    std::string_view s = trim(text);
    for (bool stripped = true; stripped;) {
        stripped = false;
        for (auto phrase : k_lead_ins) {
            if (!istarts_with(s, phrase)) continue;
            if (s.size() > phrase.size() && is_word_char(s[phrase.size()])) continue;
            s.remove_prefix(phrase.size());
            const auto next = s.find_first_not_of(" \t\r\n,:;-");
            s = next == std::string_view::npos ? std::string_view{} : s.substr(next);
            stripped = true;
            break;
        }
    }
    s = trim(s);
    if (std::none_of(s.begin(), s.end(), is_word_char)) {
        throw AnnotationError("complementary text is empty after removing lead-in phrases");
    }
    std::string out(s);
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

bool is_sanitized(std::string_view text)
{
    try {
        return sanitize_complementary(text) == text;
    } catch (const AnnotationError&) {
        return false;
    }
}

ImageFunction classify_image_function(const NewsArticle& article, const ImageRef& image, LlmGateway& gateway)
{
    require_body(article);
    const auto response = gateway.complete(user_with_image(render_identification_prompt(article), image));
    bool matched = false;
    const auto label = parse_image_function(response, &matched);
    if (!matched) {
        spdlog::warn("image '{}': no label in response '{}', treating as irrelevant", image.uid,
                     response.substr(0, 80));
    }
    return label;
}

int locate_highlighted_subevent(const NewsArticle& article, std::span<const TextualSubEvent* const> subevents,
                                const ImageRef& image, LlmGateway& gateway)
{
    if (subevents.empty()) throw AnnotationError("article '" + article.uid + "' has no sub-events");
    const auto response = gateway.complete(user_with_image(render_highlighting_prompt(article, subevents), image));
    int max_ordinal = 0;
    for (const auto* s : subevents) max_ordinal = std::max(max_ordinal, s->ordinal);
    return parse_subevent_ordinal(response, max_ordinal);
}

std::string extract_complementary_subevent(const NewsArticle& article, const ImageRef& image, LlmGateway& gateway)
{
    require_body(article);
    const auto prompt = render_complementary_prompt(article);
    const auto response = gateway.complete(user_with_image(prompt, image));
    if (trim(response).empty()) throw AnnotationError("empty complementary response for image '" + image.uid + "'");
    try {
        return sanitize_complementary(response);
    } catch (const AnnotationError&) {
        spdlog::info("image '{}': complementary answer failed sanitizing, asking for a rewrite", image.uid);
    }
    const auto rewrite = gateway.complete(user_with_image(
        prompt + "\n[Previous answer]: " + response +
            "\nRewrite the previous answer as one sub-event without the phrases listed in rule 2.",
        image));
    return sanitize_complementary(rewrite);
}

// ---------------------------------------------------------------------------

AnnotationCache::AnnotationCache(const std::filesystem::path& path)
{
    if (std::filesystem::exists(path)) {
        for (auto& a : read_annotations(path)) entries_[a.image_uid] = std::move(a);
    }
    out_.open(path, std::ios::app);
    if (!out_) throw std::invalid_argument("cannot open annotation cache '" + path.string() + "'");
}

const ImageAnnotation* AnnotationCache::find(const std::string& image_uid) const
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(image_uid);
    return it == entries_.end() ? nullptr : &it->second;
}

void AnnotationCache::put(const ImageAnnotation& a)
{
    std::lock_guard lock(mu_);
    entries_[a.image_uid] = a;
    if (out_.is_open()) {
        write_annotation_line(out_, a);
        out_.flush();
    }
}

std::size_t AnnotationCache::size() const
{
    std::lock_guard lock(mu_);
    return entries_.size();
}

ImageRef resolve_image(const std::filesystem::path& image_dir, const std::string& image_uid)
{
    for (const char* ext : {"", ".jpg", ".jpeg", ".png", ".webp", ".gif"}) {
        auto p = image_dir / (image_uid + ext);
        if (std::filesystem::is_regular_file(p)) return ImageRef{image_uid, p};
    }
    throw AnnotationError("image '" + image_uid + "' not found under '" + image_dir.string() + "'");
}

namespace {

ImageAnnotation annotate_one(const EventStore& store, const NewsArticle& article, const std::string& image_uid,
                             const std::filesystem::path& image_dir, LlmGateway& gateway)
{
    const auto image = resolve_image(image_dir, image_uid);
    ImageAnnotation a;
    a.image_uid = image_uid;
    a.article_uid = article.uid;
    a.provenance = Provenance::ModelGenerated;
    a.function = classify_image_function(article, image, gateway);
    switch (a.function) {
    case ImageFunction::Highlighting: {
        const auto subs = store.article_subevents(article.uid);
        a.key_subevent_ordinal = locate_highlighted_subevent(article, subs, image, gateway);
        break;
    }
    case ImageFunction::Complementary:
        a.complementary_text = extract_complementary_subevent(article, image, gateway);
        break;
    case ImageFunction::Irrelevant: break;
    }
    return a;
}

}  // namespace

std::vector<ImageAnnotation> annotate_corpus(const EventStore& store, const std::filesystem::path& image_dir,
                                             LlmGateway& gateway, AnnotationCache& cache)
{
    struct Task {
        const NewsArticle* article;
        std::string image_uid;
    };
    std::vector<Task> tasks;
    for (const auto& article : store.articles()) {
        for (const auto& uid : article.image_uids) tasks.push_back({&article, uid});
    }

    std::vector<std::optional<ImageAnnotation>> results(tasks.size());
    const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        if (const auto* cached = cache.find(task.image_uid)) {
            results[static_cast<std::size_t>(i)] = *cached;
            continue;
        }
        try {
            auto a = annotate_one(store, *task.article, task.image_uid, image_dir, gateway);
            cache.put(a);
            results[static_cast<std::size_t>(i)] = std::move(a);
        } catch (const std::exception& e) {
            spdlog::warn("image '{}' of article '{}' skipped: {}", task.image_uid, task.article->uid, e.what());
        }
    }

    std::vector<ImageAnnotation> out;
    for (auto& r : results) {
        if (r) out.push_back(std::move(*r));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_uid < b.image_uid; });
    return out;
}

}  // namespace evf
