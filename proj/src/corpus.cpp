// SPDX-License-Identifier: Apache-2.0

#include "citegauge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "citegauge/error.hpp"

namespace citegauge::corpus {

using nlohmann::json;

namespace {

constexpr std::string_view kEscOpen = "⟦";   // ⟦
constexpr std::string_view kEscClose = "⟧";  // ⟧
constexpr std::string_view kPhOpen = "⟪";    // ⟪
constexpr std::string_view kPhClose = "⟫";   // ⟫
constexpr std::string_view kQueryPrefix = "Query: ";
constexpr std::string_view kKnowledgeHeader = "\nKnowledge:\n";

bool is_ascii_digit(char c) noexcept { return c >= '0' && c <= '9'; }

/// Finds "<open><digits><close>" starting at `pos`; returns the end offset
/// of the match or npos.
std::size_t match_bracketed(std::string_view text, std::size_t pos, std::string_view open,
                            std::string_view close) {
    if (text.substr(pos, open.size()) != open) return std::string_view::npos;
    std::size_t j = pos + open.size();
    const std::size_t digits_begin = j;
    while (j < text.size() && is_ascii_digit(text[j])) ++j;
    if (j == digits_begin || text.substr(j, close.size()) != close) return std::string_view::npos;
    return j + close.size();
}

}  // namespace

std::string escape_markers(std::string_view text) {
    const auto cites = cite::parse_citations(text);
    std::string out;
    out.reserve(text.size() + 4 * cites.size());
    std::size_t pos = 0;
    for (const auto& span : cites.spans) {
        out.append(text.substr(pos, span.begin - pos));
        out.append(kEscOpen);
        out.append(text.substr(span.begin + 1, span.end - span.begin - 2));
        out.append(kEscClose);
        pos = span.end;
    }
    out.append(text.substr(pos));
    return out;
}

std::string unescape_markers(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t end = match_bracketed(text, i, kEscOpen, kEscClose);
        if (end == std::string_view::npos) {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        out.push_back('[');
        out.append(text.substr(i + kEscOpen.size(), end - kEscClose.size() - i - kEscOpen.size()));
        out.push_back(']');
        i = end;
    }
    return out;
}

KnowledgeSet make_knowledge(std::span<const std::string> texts) {
    KnowledgeSet out;
    out.reserve(texts.size());
    int index = 1;
    for (const auto& t : texts) out.push_back({index++, escape_markers(t)});
    return out;
}

void validate_knowledge(const KnowledgeSet& knowledge, std::string_view example_id) {
    if (knowledge.empty()) {
        throw Error(Errc::EmptyKnowledge, "example has no knowledge passages",
                    {{"id", std::string(example_id)}});
    }
    for (std::size_t i = 0; i < knowledge.size(); ++i) {
        if (knowledge[i].index != static_cast<int>(i) + 1) {
            throw Error(Errc::IndexGap, "knowledge indices are not contiguous from 1",
                        {{"id", std::string(example_id)}, {"position", i}, {"index", knowledge[i].index}});
        }
    }
}

KnowledgeSet without_passage(const KnowledgeSet& knowledge, int index) {
    KnowledgeSet out;
    for (const auto& p : knowledge) {
        if (p.index == index) continue;
        out.push_back({static_cast<int>(out.size()) + 1, p.text});
    }
    return out;
}

std::string_view to_string(Source source) noexcept {
    switch (source) {
        case Source::dstc9: return "dstc9";
        case Source::faithdial: return "faithdial";
        case Source::wow: return "wow";
        case Source::other: return "other";
    }
    return "other";
}

Source source_from_string(std::string_view name) noexcept {
    if (name == "dstc9") return Source::dstc9;
    if (name == "faithdial") return Source::faithdial;
    if (name == "wow") return Source::wow;
    return Source::other;
}

ValidationFlags validate_example(const DialogueExample& example) {
    ValidationFlags flags;
    const auto gold = cite::parse_citations(example.reference);
    flags.fabricated_reference =
        !cite::fabricated_citations(gold, static_cast<std::int64_t>(example.knowledge.size())).empty();
    if (!trim(example.query).empty()) {
        flags.language_mismatch = detect_language(example.query) != example.language;
    }
    return flags;
}

// Prompt -------------------------------------------------------------------

namespace {

std::string build_prompt_impl(std::string_view query, const KnowledgeSet& knowledge,
                              std::vector<cite::Span>* spans, bool allow_empty = false) {
    if (!(allow_empty && knowledge.empty())) validate_knowledge(knowledge);
    std::string out;
    out.append(kQueryPrefix);
    out.append(query);
    out.append(kKnowledgeHeader);
    for (const auto& p : knowledge) {
        out.append(cite::render_marker(p.index));
        out.push_back(' ');
        if (spans) spans->push_back({out.size(), out.size() + p.text.size()});
        out.append(p.text);
        out.push_back('\n');
    }
    out.append(kPromptInstruction);
    return out;
}

}  // namespace

std::string build_prompt(std::string_view query, const KnowledgeSet& knowledge) {
    return build_prompt_impl(query, knowledge, nullptr);
}

std::string build_prompt(const DialogueExample& example) {
    if (example.knowledge.empty()) {
        throw Error(Errc::EmptyKnowledge, "example has no knowledge passages", {{"id", example.id}});
    }
    return build_prompt_impl(example.query, example.knowledge, nullptr);
}

std::string build_prompt_allow_empty(std::string_view query, const KnowledgeSet& knowledge) {
    return build_prompt_impl(query, knowledge, nullptr, true);
}

std::vector<cite::Span> prompt_passage_spans(std::string_view query, const KnowledgeSet& knowledge) {
    std::vector<cite::Span> spans;
    build_prompt_impl(query, knowledge, &spans);
    return spans;
}

std::optional<ParsedPrompt> parse_prompt(std::string_view prompt) {
    const std::string suffix = "\n" + std::string(kPromptInstruction);
    if (prompt.size() < kQueryPrefix.size() + suffix.size()) return std::nullopt;
    if (prompt.substr(0, kQueryPrefix.size()) != kQueryPrefix) return std::nullopt;
    if (prompt.substr(prompt.size() - suffix.size()) != suffix) return std::nullopt;

    // body = query + header + ("[i] " + k_i + "\n")*
    const auto body = prompt.substr(kQueryPrefix.size(),
                                    prompt.size() - kQueryPrefix.size() - suffix.size() + 1);
    const auto without_passages = [&]() -> std::optional<ParsedPrompt> {
        if (body.size() < kKnowledgeHeader.size() ||
            body.substr(body.size() - kKnowledgeHeader.size()) != kKnowledgeHeader) {
            return std::nullopt;
        }
        return ParsedPrompt{std::string(body.substr(0, body.size() - kKnowledgeHeader.size())), {}};
    };
    const auto marks = cite::parse_citations(body);
    if (marks.empty()) return without_passages();
    const auto n = marks.indices.back();
    if (n < 1 || static_cast<std::size_t>(n) > marks.size()) return without_passages();

    const std::size_t first = marks.size() - static_cast<std::size_t>(n);
    ParsedPrompt parsed;
    for (std::size_t k = first; k < marks.size(); ++k) {
        const auto expected = static_cast<cite::Index>(k - first + 1);
        const auto& span = marks.spans[k];
        if (marks.indices[k] != expected) return std::nullopt;
        if (span.begin == 0 || body[span.begin - 1] != '\n') return std::nullopt;
        if (span.end >= body.size() || body[span.end] != ' ') return std::nullopt;
        const std::size_t text_begin = span.end + 1;
        const std::size_t text_end = (k + 1 < marks.size() ? marks.spans[k + 1].begin : body.size()) - 1;
        if (text_end <= text_begin || body[text_end] != '\n') return std::nullopt;
        parsed.knowledge.push_back(
            {static_cast<int>(expected), std::string(body.substr(text_begin, text_end - text_begin))});
    }
    const std::size_t header_end = marks.spans[first].begin;
    if (header_end < kKnowledgeHeader.size() ||
        body.substr(header_end - kKnowledgeHeader.size(), kKnowledgeHeader.size()) != kKnowledgeHeader) {
        return std::nullopt;
    }
    parsed.query = std::string(body.substr(0, header_end - kKnowledgeHeader.size()));
    return parsed;
}

// JSONL --------------------------------------------------------------------

namespace {

[[noreturn]] void malformed(std::size_t line_no, const std::string& why, const json& record) {
    throw Error(Errc::MalformedRecord, why + " (line " + std::to_string(line_no) + ")",
                {{"line_no", line_no}, {"line", record.dump()}});
}

std::string string_field(const json& record, const char* name, std::size_t line_no, bool required) {
    if (!record.contains(name)) {
        if (required) malformed(line_no, std::string("missing field '") + name + "'", record);
        return {};
    }
    const auto& v = record.at(name);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() && std::string_view(name) == "id") return v.dump();
    malformed(line_no, std::string("field '") + name + "' must be a string", record);
}

const std::set<std::string>& known_fields() {
    static const std::set<std::string> fields = {"id", "query", "knowledge", "reference", "language", "source"};
    return fields;
}

}  // namespace

DialogueExample example_from_json(const json& record, std::size_t line_no) {
    if (!record.is_object()) malformed(line_no, "record is not a JSON object", record);

    DialogueExample ex;
    ex.id = string_field(record, "id", line_no, true);
    ex.query = string_field(record, "query", line_no, true);
    ex.reference = string_field(record, "reference", line_no, false);

    if (!record.contains("knowledge") || !record.at("knowledge").is_array()) {
        malformed(line_no, "field 'knowledge' must be an array", record);
    }
    const auto& items = record.at("knowledge");
    bool explicit_index = false;
    json original_ids = json::array();
    bool has_ids = false;
    std::vector<std::pair<int, std::string>> passages;
    for (std::size_t pos = 0; pos < items.size(); ++pos) {
        const auto& item = items[pos];
        std::string text;
        int index = static_cast<int>(pos) + 1;
        if (item.is_string()) {
            text = item.get<std::string>();
            original_ids.push_back(nullptr);
        } else if (item.is_object() && item.contains("text") && item.at("text").is_string()) {
            text = item.at("text").get<std::string>();
            if (item.contains("index")) {
                if (!item.at("index").is_number_integer()) {
                    malformed(line_no, "passage index must be an integer", record);
                }
                explicit_index = true;
                index = item.at("index").get<int>();
            }
            if (item.contains("id")) {
                original_ids.push_back(item.at("id"));
                has_ids = true;
            } else {
                original_ids.push_back(nullptr);
            }
        } else {
            malformed(line_no, "knowledge entries must be strings or {text} objects", record);
        }
        if (text.empty()) malformed(line_no, "knowledge passage text is empty", record);
        passages.emplace_back(index, std::move(text));
    }
    if (explicit_index) {
        std::vector<std::size_t> order(passages.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return passages[a].first < passages[b].first; });
        std::vector<std::pair<int, std::string>> sorted;
        json sorted_ids = json::array();
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (passages[order[i]].first != static_cast<int>(i) + 1) {
                throw Error(Errc::IndexGap, "knowledge indices are not contiguous from 1 (line " +
                                                std::to_string(line_no) + ")",
                            {{"id", ex.id}, {"line_no", line_no}});
            }
            sorted.push_back(std::move(passages[order[i]]));
            sorted_ids.push_back(original_ids[order[i]]);
        }
        passages = std::move(sorted);
        original_ids = std::move(sorted_ids);
    }
    for (auto& [index, text] : passages) ex.knowledge.push_back({index, escape_markers(text)});

    if (record.contains("language")) {
        const auto lang = string_field(record, "language", line_no, true);
        if (lang != "en" && lang != "hi") malformed(line_no, "language must be 'en' or 'hi'", record);
        ex.language = lang == "hi" ? Language::hi : Language::en;
    } else if (!trim(ex.query).empty()) {
        ex.language = detect_language(ex.query);
    }
    if (record.contains("source")) {
        const auto src = string_field(record, "source", line_no, true);
        ex.source = source_from_string(src);
        if (ex.source == Source::other && src != "other") ex.metadata["source_original"] = src;
    }

    for (const auto& [key, value] : record.items()) {
        if (!known_fields().contains(key)) ex.metadata[key] = value;
    }
    if (has_ids) ex.metadata["knowledge_ids"] = original_ids;

    ex.flags = validate_example(ex);
    return ex;
}

json example_to_json(const DialogueExample& example) {
    // nlohmann::json keeps keys sorted, so output is stable.
    json out = example.metadata.is_object() ? example.metadata : json::object();
    out["id"] = example.id;
    out["query"] = example.query;
    json knowledge = json::array();
    for (const auto& p : example.knowledge) knowledge.push_back(p.display_text());
    out["knowledge"] = std::move(knowledge);
    out["reference"] = example.reference;
    out["language"] = std::string(to_string(example.language));
    out["source"] = std::string(to_string(example.source));
    return out;
}

std::vector<DialogueExample> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});

    std::vector<DialogueExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Errc::MalformedRecord, "invalid JSON (line " + std::to_string(line_no) + "): " + e.what(),
                        {{"line_no", line_no}, {"line", line}, {"path", path.string()}});
        }
        out.push_back(example_from_json(record, line_no));
    }
    return out;
}

void write_jsonl(std::span<const DialogueExample> examples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string(), {{"path", path.string()}});
    for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string(), {{"path", path.string()}});
}

// Language -----------------------------------------------------------------

Language detect_language(std::string_view text) {
    if (trim(text).empty()) throw Error(Errc::EmptyText, "cannot detect the language of blank text");
    std::size_t alpha = 0;
    std::size_t devanagari = 0;
    for (const auto& cp : utf8::decode(text)) {
        if (!utf8::is_alpha(cp.value)) continue;
        ++alpha;
        if (utf8::is_devanagari(cp.value)) ++devanagari;
    }
    if (alpha == 0) return Language::en;
    const double fraction = static_cast<double>(devanagari) / static_cast<double>(alpha);
    return fraction >= kDevanagariThreshold ? Language::hi : Language::en;
}

// Translation --------------------------------------------------------------

std::string guard_translate(const std::string& text, backends::TranslatorBackend& translator,
                            Language source, Language target) {
    const auto cites = cite::parse_citations(text);

    std::string masked;
    masked.reserve(text.size() + 8 * cites.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < cites.size(); ++k) {
        masked.append(text, pos, cites.spans[k].begin - pos);
        masked.append(kPhOpen);
        masked.append(std::to_string(k));
        masked.append(kPhClose);
        pos = cites.spans[k].end;
    }
    masked.append(text, pos);

    const std::string translated =
        translator.translate(masked, std::string(to_string(source)), std::string(to_string(target)));

    std::vector<int> seen(cites.size(), 0);
    std::string restored;
    restored.reserve(translated.size());
    std::size_t i = 0;
    while (i < translated.size()) {
        const std::size_t end = match_bracketed(translated, i, kPhOpen, kPhClose);
        if (end == std::string::npos) {
            restored.push_back(translated[i]);
            ++i;
            continue;
        }
        const auto digits = std::string_view(translated).substr(
            i + kPhOpen.size(), end - kPhClose.size() - i - kPhOpen.size());
        std::size_t k = 0;
        bool in_range = digits.size() < 10;
        if (in_range) {
            k = std::stoul(std::string(digits));
            in_range = k < cites.size();
        }
        if (in_range) {
            ++seen[k];
            restored.append(cite::render_marker(cites.indices[k]));
        } else {
            restored.append(translated, i, end - i);
        }
        i = end;
    }

    json missing = json::array();
    json duplicated = json::array();
    for (std::size_t k = 0; k < cites.size(); ++k) {
        if (seen[k] == 0) missing.push_back(cites.indices[k]);
        if (seen[k] > 1) duplicated.push_back(cites.indices[k]);
    }
    if (!missing.empty() || !duplicated.empty()) {
        throw Error(Errc::MarkerLoss, "citation markers were not preserved by translation",
                    {{"indices", missing}, {"duplicated", duplicated}});
    }

    // The translator may also have invented markers of its own.
    auto expected = cites.indices;
    auto got = cite::parse_citations(restored).indices;
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    if (expected != got) {
        throw Error(Errc::MarkerLoss, "translated text has a different marker multiset",
                    {{"indices", json::array()}, {"expected", expected}, {"got", got}});
    }
    return restored;
}

DialogueExample translate_example(const DialogueExample& example,
                                  backends::TranslatorBackend& translator, Language source,
                                  Language target) {
    DialogueExample out = example;
    out.query = guard_translate(example.query, translator, source, target);
    for (auto& p : out.knowledge) {
        p.text = escape_markers(guard_translate(p.display_text(), translator, source, target));
    }
    out.reference = guard_translate(example.reference, translator, source, target);
    out.language = target;
    out.metadata["translated_from"] = std::string(to_string(source));
    out.flags = validate_example(out);
    return out;
}

// Mixture ------------------------------------------------------------------

std::vector<DialogueExample> sample_mixture(std::span<const DialogueExample> en_pool,
                                            std::span<const DialogueExample> hi_pool,
                                            const MixtureSpec& spec, std::size_t count) {
    if (!(spec.alpha_en >= 0.0 && spec.alpha_en <= 1.0)) {
        throw Error(Errc::InvalidConfig, "alpha_en must lie in [0,1]", {{"alpha_en", spec.alpha_en}});
    }
    if (count == 0) throw Error(Errc::InvalidConfig, "mixture count must be >= 1");
    if (en_pool.empty()) throw Error(Errc::EmptyPool, "English pool is empty", {{"language", "en"}});
    if (hi_pool.empty()) throw Error(Errc::EmptyPool, "Hindi pool is empty", {{"language", "hi"}});

    Rng rng(spec.seed);
    std::vector<DialogueExample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const bool english = rng.uniform() < spec.alpha_en;
        const auto pool = english ? en_pool : hi_pool;
        out.push_back(pool[rng.below(pool.size())]);
    }
    return out;
}

}  // namespace citegauge::corpus
