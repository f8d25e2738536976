// SPDX-License-Identifier: Apache-2.0
//
// Semantic similarity (greedy token matching over backend embeddings),
// NLI-based FactScore, and hallucination flagging.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "citegauge/backends.hpp"
#include "citegauge/citations.hpp"
#include "citegauge/corpus.hpp"

namespace citegauge::semqual {

/// Entailment probability below which a response counts as unsupported.
inline constexpr double kDefaultTau = 0.5;

/// Greedy cosine matching F1 between the two texts' token embeddings,
/// clipped to [0,1]. Both empty -> 1, one empty -> 0.
/// Throws Error(DimensionMismatch) when the matrices disagree on width.
double semantic_score(const std::string& candidate, const std::string& reference,
                      backends::EmbeddingBackend& embedder);

/// Same computation on already-fetched embeddings.
double greedy_match_f1(const backends::TokenEmbeddings& candidate,
                       const backends::TokenEmbeddings& reference);

/// Splits after ".", "?", "!", "।" or "॥" when followed by whitespace or the
/// end of text. Markers that open the next chunk stay with the sentence they
/// follow. Returned sentences are trimmed and non-empty.
std::vector<std::string> split_sentences(std::string_view text);

/// Text with citation markers removed and whitespace runs collapsed.
std::string strip_markers(std::string_view text);

enum class FactGranularity { sentence, response };
enum class PremiseMode { per_passage, concatenated };

struct FactOptions {
    FactGranularity granularity = FactGranularity::sentence;
    PremiseMode premise = PremiseMode::per_passage;
};

/// Mean over response sentences of the best entailment probability any
/// passage gives that sentence. Empty response -> 0.
/// Throws Error(EmptyKnowledge) when the knowledge set is empty.
double fact_score(std::string_view response, const corpus::KnowledgeSet& knowledge,
                  backends::NliBackend& nli, const FactOptions& options = {});

struct HallucinationCheck {
    bool fabricated = false;   // a marker points outside the knowledge set
    bool unsupported = false;  // fact_score < tau
    bool flagged = false;      // fabricated || unsupported
    double fact_score = 0.0;
};

/// Empty responses without markers are never flagged (and skip the NLI call).
HallucinationCheck check_hallucination(std::string_view response, const corpus::KnowledgeSet& knowledge,
                                       const cite::CitationSet& predicted, backends::NliBackend& nli,
                                       double tau = kDefaultTau, const FactOptions& options = {});

bool hallucination_flag(std::string_view response, const corpus::KnowledgeSet& knowledge,
                        const cite::CitationSet& predicted, backends::NliBackend& nli,
                        double tau = kDefaultTau);

struct ExampleFactuality {
    std::string id;
    HallucinationCheck check;
};

struct FactualReport {
    double fact_score = 0.0;
    double halluc_rate = 0.0;
    double fabrication_rate = 0.0;
    double unsupported_rate = 0.0;
    std::vector<std::string> flagged_ids;
};

/// Throws Error(EmptyCorpus) on empty input. flagged_ids keep input order.
FactualReport aggregate_factuality(const std::vector<ExampleFactuality>& examples);

}  // namespace citegauge::semqual
