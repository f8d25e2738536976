// SPDX-License-Identifier: Apache-2.0

#include "citegauge/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_set>

#include "citegauge/citations.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/text_metrics.hpp"
#include "citegauge/util.hpp"
#include "citegauge/xai.hpp"

namespace citegauge::backends::mock {

namespace {

struct Word {
    std::string text;
    cite::Span span;
};

std::vector<Word> split_words(std::string_view text) {
    std::vector<Word> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r')) ++i;
        const std::size_t begin = i;
        while (i < text.size() && !(text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r')) ++i;
        if (i > begin) out.push_back({std::string(text.substr(begin, i - begin)), {begin, i}});
    }
    return out;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "what", "which", "where", "when", "about", "does", "with", "from", "that", "this",
        "there", "have", "been", "were", "they", "their", "your", "into", "tell",
        "क्या", "कौन", "किस", "किसने", "कहाँ", "कब", "है", "हैं", "था", "थे", "की", "का", "के", "में", "ने", "को"};
    return words;
}

std::set<std::string> content_words(std::string_view text) {
    std::set<std::string> out;
    for (auto& tok : text::tokenize(text, Language::en).tokens) {
        if (stopwords().contains(tok)) continue;
        const auto cps = utf8::decode(tok);
        const bool devanagari = !cps.empty() && utf8::is_devanagari(cps.front().value);
        const bool wordlike = std::any_of(cps.begin(), cps.end(), [](const auto& c) { return utf8::is_alpha(c.value); });
        if (!wordlike) continue;
        if (devanagari ? cps.size() >= 2 : tok.size() >= 4) out.insert(std::move(tok));
    }
    return out;
}

std::string sentence_of(const std::string& passage) {
    std::string s = trim(passage);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    if (s.size() >= 3 && s.compare(s.size() - 3, 3, "\xE0\xA5\xA4") == 0) s.resize(s.size() - 3);  // danda
    return s;
}

std::string grounded_answer(const corpus::ParsedPrompt& parsed) {
    const auto query_words = content_words(parsed.query);
    std::vector<std::string> parts;
    for (const auto& p : parsed.knowledge) {
        const auto words = content_words(p.display_text());
        const bool shares = std::any_of(words.begin(), words.end(), [&](const auto& w) { return query_words.contains(w); });
        if (shares) parts.push_back(sentence_of(p.text) + " " + cite::render_marker(p.index) + ".");
    }
    return parts.empty() ? std::string("I do not know.") : join(parts);
}

double unit_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<double> synthetic_logprobs(std::string_view prompt, std::string_view text, std::uint64_t salt) {
    std::vector<double> out;
    const std::uint64_t base = mix64(fnv1a(prompt) ^ mix64(salt));
    std::size_t position = 0;
    for (const auto& w : split_words(text)) {
        const std::uint64_t h = mix64(base ^ fnv1a(w.text) ^ mix64(++position));
        out.push_back(-0.05 - 2.95 * unit_hash(h));
    }
    return out;
}

std::string truncate_tokens(std::string_view text, int max_tokens) {
    const auto words = split_words(text);
    if (max_tokens < 0 || words.size() <= static_cast<std::size_t>(max_tokens)) return std::string(text);
    if (max_tokens == 0) return {};
    return std::string(text.substr(0, words[static_cast<std::size_t>(max_tokens) - 1].span.end));
}

GenerationResponse TextGenerator::generate(const GenerationRequest& request) {
    GenerationResponse response;
    response.text = request.continuation ? *request.continuation
                                         : truncate_tokens(respond(request), request.max_new_tokens);
    if (request.want_logprobs) response.token_logprobs = synthetic_logprobs(request.prompt, response.text, salt_);
    return response;
}

std::string EchoGenerator::respond(const GenerationRequest& request) {
    const auto parsed = corpus::parse_prompt(request.prompt);
    return parsed ? parsed->query : request.prompt;
}

std::string AlwaysCiteGenerator::respond(const GenerationRequest&) { return "Answer [1]."; }

std::string GroundedGenerator::respond(const GenerationRequest& request) {
    const auto parsed = corpus::parse_prompt(request.prompt);
    return parsed ? grounded_answer(*parsed) : std::string("I do not know.");
}

std::string SamplingGenerator::respond(const GenerationRequest& request) {
    const auto parsed = corpus::parse_prompt(request.prompt);
    if (!parsed) return "I do not know.";
    if (request.temperature <= 0.0 || parsed->knowledge.empty()) return grounded_answer(*parsed);

    Rng rng(mix64(request.seed.value_or(0) ^ fnv1a(request.prompt)));
    const auto n = parsed->knowledge.size();
    const auto sentences = 1 + rng.below(std::min<std::uint64_t>(n, 3));
    std::vector<std::string> parts;
    for (std::uint64_t s = 0; s < sentences; ++s) {
        const auto k = rng.below(n);
        auto words = split_words(sentence_of(parsed->knowledge[k].text));
        std::vector<std::string> kept;
        const auto m = words.empty() ? 0 : 1 + rng.below(words.size());
        for (std::size_t w = 0; w < m; ++w) kept.push_back(std::move(words[w].text));
        const double u = rng.uniform();
        std::string sentence = join(kept);
        if (u < 0.1 * request.temperature) {
            sentence += " " + cite::render_marker(static_cast<cite::Index>(n + 1));
        } else if (u < 0.25) {
            // uncited
        } else {
            sentence += " " + cite::render_marker(static_cast<cite::Index>(k + 1));
        }
        parts.push_back(sentence + ".");
    }
    return join(parts);
}

ScriptedGenerator::ScriptedGenerator(std::map<std::string, std::string> by_prompt, Fallback fallback,
                                     std::uint64_t salt)
    : TextGenerator(salt), by_prompt_(std::move(by_prompt)), fallback_(std::move(fallback)) {}

std::string ScriptedGenerator::respond(const GenerationRequest& request) {
    if (const auto it = by_prompt_.find(request.prompt); it != by_prompt_.end()) return it->second;
    if (fallback_) return fallback_(request);
    throw Error(Errc::BackendError, "no scripted response for prompt", {{"prompt", request.prompt}});
}

FailingGenerator::FailingGenerator(std::shared_ptr<GenerationBackend> inner, Errc code, std::string needle)
    : inner_(std::move(inner)), code_(code), needle_(std::move(needle)) {}

GenerationResponse FailingGenerator::generate(const GenerationRequest& request) {
    if (request.prompt.find(needle_) != std::string::npos) {
        throw Error(code_, "injected failure", {{"status", 503}});
    }
    return inner_->generate(request);
}

AttentionDumpGenerator::AttentionDumpGenerator(std::shared_ptr<GenerationBackend> inner,
                                               std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

GenerationResponse AttentionDumpGenerator::generate(const GenerationRequest& request) {
    auto response = inner_->generate(request);
    if (!request.want_attentions) return response;

    const auto inputs = split_words(request.prompt);
    const auto outputs = split_words(response.text);
    std::set<std::size_t> favoured;
    if (const auto parsed = corpus::parse_prompt(request.prompt)) {
        std::vector<cite::Span> token_spans;
        for (const auto& w : inputs) token_spans.push_back(w.span);
        const auto passages = corpus::prompt_passage_spans(parsed->query, parsed->knowledge);
        favoured = xai::cited_token_indices(token_spans, passages, cite::parse_citations(response.text).distinct());
    }

    xai::AttentionDump dump;
    dump.layers = 2;
    dump.heads = 2;
    dump.out_len = std::max<std::size_t>(outputs.size(), 1);
    dump.in_len = inputs.size();
    for (const auto& w : inputs) dump.input_token_spans.push_back(w.span);
    const std::uint64_t base = fnv1a(request.prompt) ^ mix64(fnv1a(response.text));
    std::vector<double> row(dump.in_len);
    for (std::size_t cell = 0; cell < dump.layers * dump.heads * dump.out_len; ++cell) {
        double total = 0.0;
        for (std::size_t i = 0; i < dump.in_len; ++i) {
            const double logit = unit_hash(mix64(base ^ mix64(cell * 1000003 + i))) + (favoured.contains(i) ? 3.0 : 0.0);
            row[i] = std::exp(logit);
            total += row[i];
        }
        for (std::size_t i = 0; i < dump.in_len; ++i) dump.weights.push_back(static_cast<float>(row[i] / total));
    }

    char name[32];
    std::snprintf(name, sizeof name, "%016llx.tdmp", static_cast<unsigned long long>(base));
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / name;
    xai::write_tensor_dump(path, dump);
    response.attention_dump_ref = path.string();
    return response;
}

EntailmentJudgment FixedNli::nli(const std::string& premise, const std::string& hypothesis) {
    return {premise, hypothesis, p_entail_, p_contradict_, p_neutral_};
}

EntailmentJudgment ScriptedNli::nli(const std::string& premise, const std::string& hypothesis) {
    const double p = std::clamp(fn_(premise, hypothesis), 0.0, 1.0);
    return {premise, hypothesis, p, 0.0, 1.0 - p};
}

EntailmentJudgment OverlapNli::nli(const std::string& premise, const std::string& hypothesis) {
    const auto premise_tokens = text::tokenize(premise, Language::en).tokens;
    const std::unordered_set<std::string> known(premise_tokens.begin(), premise_tokens.end());
    std::size_t words = 0;
    std::size_t found = 0;
    for (const auto& tok : text::tokenize(hypothesis, Language::en).tokens) {
        const auto cps = utf8::decode(tok);
        if (cps.size() == 1 && utf8::is_punct(cps.front().value)) continue;
        if (!cite::parse_citations(tok).indices.empty()) continue;
        ++words;
        found += known.contains(tok) ? 1 : 0;
    }
    const double p = words == 0 ? 1.0 : static_cast<double>(found) / static_cast<double>(words);
    return {premise, hypothesis, p, 0.0, 1.0 - p};
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(Errc::InvalidConfig, "embedding dim must be positive");
}

std::vector<TokenEmbeddings> HashEmbedder::embed(std::span<const std::string> texts) {
    std::vector<TokenEmbeddings> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        const auto tokens = text::tokenize(t, Language::en).tokens;
        TokenEmbeddings e;
        e.rows = tokens.size();
        e.dim = dim_;
        e.values.assign(e.rows * dim_, 0.0);
        for (std::size_t r = 0; r < tokens.size(); ++r) e.values[r * dim_ + fnv1a(tokens[r]) % dim_] = 1.0;
        out.push_back(std::move(e));
    }
    return out;
}

std::string ReverseTranslator::translate(const std::string& text, const std::string&, const std::string&) {
    std::vector<std::string> words;
    for (auto& w : split_words(text)) words.push_back(std::move(w.text));
    std::reverse(words.begin(), words.end());
    return join(words);
}

std::string ShuffleTranslator::translate(const std::string& text, const std::string&, const std::string&) {
    std::vector<std::string> words;
    for (auto& w : split_words(text)) words.push_back(std::move(w.text));
    Rng rng(mix64(seed_ ^ fnv1a(text)));
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.below(i)]);
    return join(words);
}

std::string DevanagariTranslator::translate(const std::string& text, const std::string&, const std::string&) {
    // a..z onto a fixed run of independent vowels and consonants.
    static constexpr char32_t kMap[26] = {0x0905, 0x092C, 0x0915, 0x0926, 0x090F, 0x092B, 0x0917, 0x0939, 0x0907,
                                          0x091C, 0x0916, 0x0932, 0x092E, 0x0928, 0x0913, 0x092A, 0x0915, 0x0930,
                                          0x0938, 0x0924, 0x0909, 0x0935, 0x0935, 0x0915, 0x092F, 0x091D};
    std::string out;
    for (const auto& cp : utf8::decode(text)) {
        char32_t c = cp.value;
        if (c >= 'A' && c <= 'Z') c = c - 'A' + 'a';
        if (c >= 'a' && c <= 'z') {
            utf8::append(out, kMap[c - 'a']);
        } else {
            out.append(text, cp.offset, cp.length);
        }
    }
    return out;
}

std::string DroppingTranslator::translate(const std::string& text, const std::string&, const std::string&) {
    std::vector<std::string> words;
    for (auto& w : split_words(text)) {
        if (w.text.find(needle_) == std::string::npos) words.push_back(std::move(w.text));
    }
    return join(words);
}

}  // namespace citegauge::backends::mock
