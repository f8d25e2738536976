// SPDX-License-Identifier: Apache-2.0
//
// Dataset model: knowledge-grounded dialogue examples, their JSONL form,
// the structured prompt, citation-safe translation, language
// identification, and bilingual mixture sampling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citegauge/backends.hpp"
#include "citegauge/citations.hpp"
#include "citegauge/util.hpp"

namespace citegauge::corpus {

/// Instruction line closing every prompt.
inline constexpr std::string_view kPromptInstruction =
    "Respond using the knowledge above with citations [1], [2], etc.";

/// Replaces "[<digits>]" with "⟦<digits>⟧" so passage text never parses as
/// a citation marker.
std::string escape_markers(std::string_view text);
std::string unescape_markers(std::string_view text);

struct KnowledgePassage {
    int index = 0;      // 1-based
    std::string text;   // escaped form

    std::string display_text() const { return unescape_markers(text); }
    bool operator==(const KnowledgePassage&) const = default;
};

using KnowledgeSet = std::vector<KnowledgePassage>;

/// Builds a contiguous 1..n set from raw passage texts (escaping them).
KnowledgeSet make_knowledge(std::span<const std::string> texts);

/// Throws Error(EmptyKnowledge) or Error(IndexGap) when violated.
void validate_knowledge(const KnowledgeSet& knowledge, std::string_view example_id = {});

/// Passage i removed and the rest renumbered contiguously.
KnowledgeSet without_passage(const KnowledgeSet& knowledge, int index);

enum class Source { dstc9, faithdial, wow, other };

std::string_view to_string(Source source) noexcept;
Source source_from_string(std::string_view name) noexcept;

struct ValidationFlags {
    bool fabricated_reference = false;  // reference cites beyond |knowledge|
    bool language_mismatch = false;     // language tag disagrees with script detection

    bool operator==(const ValidationFlags&) const = default;
};

struct DialogueExample {
    std::string id;
    std::string query;
    KnowledgeSet knowledge;
    std::string reference;
    Language language = Language::en;
    Source source = Source::other;
    /// Unknown JSON fields, and the original passage identifiers under
    /// "knowledge_ids" when the source record carried them.
    nlohmann::json metadata = nlohmann::json::object();
    ValidationFlags flags;

    bool operator==(const DialogueExample&) const = default;
};

/// Recomputes `flags` from the current content.
ValidationFlags validate_example(const DialogueExample& example);

// Prompt -------------------------------------------------------------------

std::string build_prompt(std::string_view query, const KnowledgeSet& knowledge);
std::string build_prompt(const DialogueExample& example);

/// Like build_prompt but accepts an empty knowledge set (the Knowledge
/// section is then left empty). Used when occluding the only passage.
std::string build_prompt_allow_empty(std::string_view query, const KnowledgeSet& knowledge);

/// Byte range of each passage's text inside build_prompt(query, knowledge).
std::vector<cite::Span> prompt_passage_spans(std::string_view query, const KnowledgeSet& knowledge);

struct ParsedPrompt {
    std::string query;
    KnowledgeSet knowledge;
};

/// Inverse of build_prompt; nullopt for text that is not a prompt.
std::optional<ParsedPrompt> parse_prompt(std::string_view prompt);

// JSONL --------------------------------------------------------------------

/// Decodes one record. `line_no` is used for error context only.
DialogueExample example_from_json(const nlohmann::json& record, std::size_t line_no = 0);
nlohmann::json example_to_json(const DialogueExample& example);

/// Throws MalformedRecord(line_no) and IndexGap(id); IoError if unreadable.
std::vector<DialogueExample> read_jsonl(const std::filesystem::path& path);
void write_jsonl(std::span<const DialogueExample> examples, const std::filesystem::path& path);

// Language -----------------------------------------------------------------

inline constexpr double kDevanagariThreshold = 0.3;

/// hi iff Devanagari code points make up at least 30% of the alphabetic
/// ones. Throws Error(EmptyText) on blank input.
Language detect_language(std::string_view text);

// Translation --------------------------------------------------------------

/// Translates with every citation marker swapped for an opaque placeholder
/// for the duration of the backend call. Throws Error(MarkerLoss) when the
/// output's marker multiset differs from the input's.
std::string guard_translate(const std::string& text, backends::TranslatorBackend& translator,
                            Language source = Language::en, Language target = Language::hi);

/// Query, passages and reference translated; language set to target.
DialogueExample translate_example(const DialogueExample& example,
                                  backends::TranslatorBackend& translator,
                                  Language source = Language::en, Language target = Language::hi);

// Mixture ------------------------------------------------------------------

struct MixtureSpec {
    double alpha_en = 0.4;
    std::uint64_t seed = 0;
};

/// Each draw is English with probability alpha_en, otherwise Hindi; the
/// example within a pool is uniform. Throws EmptyPool / InvalidConfig.
std::vector<DialogueExample> sample_mixture(std::span<const DialogueExample> en_pool,
                                            std::span<const DialogueExample> hi_pool,
                                            const MixtureSpec& spec, std::size_t count);

}  // namespace citegauge::corpus
