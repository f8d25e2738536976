// SPDX-License-Identifier: Apache-2.0

#include "citegauge/text_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "citegauge/error.hpp"

namespace citegauge::text {

TokenSequence tokenize(std::string_view text, Language language) {
    TokenSequence seq;
    seq.language = language;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) seq.tokens.push_back(std::move(current));
        current.clear();
    };

    const auto cps = utf8::decode(text);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const char32_t c = cps[i].value;
        if (utf8::is_space(c)) {
            flush();
            continue;
        }
        if (c == '[') {
            std::size_t j = i + 1;
            while (j < cps.size() && cps[j].value >= '0' && cps[j].value <= '9') ++j;
            if (j > i + 1 && j < cps.size() && cps[j].value == ']') {
                flush();
                seq.tokens.emplace_back(text.substr(cps[i].offset, cps[j].offset + 1 - cps[i].offset));
                i = j;
                continue;
            }
        }
        if (utf8::is_punct(c)) {
            flush();
            seq.tokens.emplace_back(text.substr(cps[i].offset, cps[i].length));
            continue;
        }
        if (language == Language::en && c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            current.append(text.substr(cps[i].offset, cps[i].length));
        }
    }
    flush();
    return seq;
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) {
            key.append(tokens[i + k]);
            key.push_back('\x1f');
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

double bleu(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
            int max_n) {
    if (candidates.size() != references.size()) {
        throw Error(Errc::LengthMismatch, "BLEU needs one reference per candidate",
                    {{"candidates", candidates.size()}, {"references", references.size()}});
    }
    if (max_n < 1) throw Error(Errc::InvalidConfig, "BLEU order must be >= 1", {{"max_n", max_n}});

    const auto orders = static_cast<std::size_t>(max_n);
    std::vector<std::size_t> matched(orders, 0);
    std::vector<std::size_t> total(orders, 0);
    std::size_t cand_len = 0;
    std::size_t ref_len = 0;

    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s].tokens;
        const auto& ref = references[s].tokens;
        cand_len += cand.size();
        ref_len += ref.size();
        for (std::size_t n = 1; n <= orders; ++n) {
            const auto cand_counts = count_ngrams(cand, n);
            const auto ref_counts = count_ngrams(ref, n);
            for (const auto& [gram, count] : cand_counts) {
                const auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
            }
            if (cand.size() >= n) total[n - 1] += cand.size() - n + 1;
        }
    }
    if (cand_len == 0) return 0.0;

    double log_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t n = 0; n < orders; ++n) {
        if (total[n] == 0) continue;
        if (matched[n] == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
        ++used;
    }
    const double precision = std::exp(log_sum / static_cast<double>(used));
    const double bp = cand_len < ref_len
                          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                          : 1.0;
    return std::clamp(bp * precision, 0.0, 1.0);
}

double sentence_bleu(const TokenSequence& candidate, const TokenSequence& reference, int max_n) {
    return bleu(std::span(&candidate, 1), std::span(&reference, 1), max_n);
}

namespace {

double overlap_score(std::size_t hits, std::size_t cand_len, std::size_t ref_len, RougeVariant variant) {
    if (cand_len == 0 && ref_len == 0) return 1.0;
    if (cand_len == 0 || ref_len == 0) return 0.0;
    const double recall = static_cast<double>(hits) / static_cast<double>(ref_len);
    if (variant == RougeVariant::recall) return recall;
    const double precision = static_cast<double>(hits) / static_cast<double>(cand_len);
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double rouge1(const TokenSequence& candidate, const TokenSequence& reference, RougeVariant variant) {
    std::unordered_map<std::string_view, std::size_t> ref_counts;
    for (const auto& t : reference.tokens) ++ref_counts[t];
    std::size_t hits = 0;
    for (const auto& t : candidate.tokens) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++hits;
        }
    }
    return overlap_score(hits, candidate.size(), reference.size(), variant);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rougeL(const TokenSequence& candidate, const TokenSequence& reference, RougeVariant variant) {
    const auto lcs = lcs_length(candidate.tokens, reference.tokens);
    return overlap_score(lcs, candidate.size(), reference.size(), variant);
}

LexicalScore lexical_score(const TokenSequence& candidate, const TokenSequence& reference) {
    return {sentence_bleu(candidate, reference), rouge1(candidate, reference), rougeL(candidate, reference)};
}

}  // namespace citegauge::text
