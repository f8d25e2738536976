// SPDX-License-Identifier: Apache-2.0
//
// Tokenization and lexical-overlap metrics (BLEU, ROUGE-1, ROUGE-L).

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citegauge/util.hpp"

namespace citegauge::text {

struct TokenSequence {
    std::vector<std::string> tokens;
    Language language = Language::en;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    bool operator==(const TokenSequence&) const = default;
};

/// Whitespace split with punctuation (including the danda) detached into
/// single-character tokens. English is ASCII-lowercased. Citation markers
/// "[i]" stay whole.
TokenSequence tokenize(std::string_view text, Language language);

inline constexpr int kDefaultBleuOrder = 4;

/// Corpus BLEU: summed clipped n-gram counts, uniform weights, brevity
/// penalty exp(1 - r/c) when c < r, and no smoothing. Orders for which the
/// candidates contain no n-grams at all are left out of the geometric mean.
/// Throws Error(LengthMismatch) when the lists differ in length.
double bleu(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
            int max_n = kDefaultBleuOrder);

/// Single-pair convenience wrapper around corpus BLEU.
double sentence_bleu(const TokenSequence& candidate, const TokenSequence& reference,
                     int max_n = kDefaultBleuOrder);

enum class RougeVariant { f1, recall };

double rouge1(const TokenSequence& candidate, const TokenSequence& reference,
              RougeVariant variant = RougeVariant::f1);
double rougeL(const TokenSequence& candidate, const TokenSequence& reference,
              RougeVariant variant = RougeVariant::f1);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct LexicalScore {
    double bleu = 0.0;
    double rouge1_f = 0.0;
    double rougeL_f = 0.0;
};

LexicalScore lexical_score(const TokenSequence& candidate, const TokenSequence& reference);

}  // namespace citegauge::text
