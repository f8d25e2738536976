// SPDX-License-Identifier: Apache-2.0
//
// Small text and determinism helpers used across modules.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace citegauge {

enum class Language { en, hi };

std::string_view to_string(Language lang) noexcept;
/// Throws Error(InvalidConfig) on anything but "en"/"hi".
Language language_from_string(std::string_view name);

namespace utf8 {

/// One decoded code point and the byte range it occupied.
struct CodePoint {
    char32_t value;
    std::size_t offset;
    std::size_t length;
};

/// Decodes leniently: invalid bytes come back as U+FFFD of length 1.
std::vector<CodePoint> decode(std::string_view text);

void append(std::string& out, char32_t cp);

constexpr bool is_devanagari(char32_t cp) noexcept { return cp >= 0x0900 && cp <= 0x097F; }

/// Danda and double danda.
constexpr bool is_danda(char32_t cp) noexcept { return cp == 0x0964 || cp == 0x0965; }

bool is_space(char32_t cp) noexcept;

/// Punctuation the tokenizer detaches: ASCII punctuation, dandas, and the
/// common typographic quotes, dashes and ellipsis.
bool is_punct(char32_t cp) noexcept;

/// Letters and combining marks of Latin and Devanagari script, plus any
/// other non-ASCII code point that is neither space, punctuation nor a digit.
bool is_alpha(char32_t cp) noexcept;

bool is_digit(char32_t cp) noexcept;

}  // namespace utf8

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

/// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// mt19937_64 with hand-written draws; the std distributions are not
/// bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    /// Uniform in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

std::string trim(std::string_view s);

}  // namespace citegauge
