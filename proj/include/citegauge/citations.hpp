// SPDX-License-Identifier: Apache-2.0
//
// Citation markers and citation-quality metrics.
//
// A marker is exactly "[" + one or more ASCII digits + "]". Scoring works on
// de-duplicated index sets; repeated citation of one passage neither helps
// nor hurts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace citegauge::cite {

using Index = std::int64_t;

struct Span {
    std::size_t begin;
    std::size_t end;  // exclusive

    bool operator==(const Span&) const = default;
};

/// Every marker occurrence of a text, in document order.
struct CitationSet {
    std::vector<Index> indices;
    std::vector<Span> spans;

    bool empty() const noexcept { return indices.empty(); }
    std::size_t size() const noexcept { return indices.size(); }
    std::set<Index> distinct() const { return {indices.begin(), indices.end()}; }

    bool operator==(const CitationSet&) const = default;
};

/// All maximal marker matches. Indices with more than 18 digits saturate.
CitationSet parse_citations(std::string_view text);

/// Canonical rendering "[i]" of a single index.
std::string render_marker(Index index);

/// How a pair with an empty predicted and empty gold set is scored.
enum class EmptyConvention {
    vacuous_one,  // both empty -> P = R = F1 = 1
    zero,         // both empty -> 0
};

struct CitationScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool has_citation = false;
};

double harmonic_f1(double precision, double recall) noexcept;

CitationScore citation_score(const CitationSet& predicted, const CitationSet& gold,
                             EmptyConvention convention = EmptyConvention::vacuous_one);

/// Predicted indices that are zero or exceed the passage count.
std::set<Index> fabricated_citations(const CitationSet& predicted, std::int64_t n_passages);

struct CitationPair {
    CitationSet predicted;
    CitationSet gold;
    std::int64_t n_passages = 0;
};

struct CorpusCitationScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double has_citation_rate = 0.0;
    double fabrication_rate = 0.0;
    std::size_t count = 0;
};

/// Macro average over pairs. Throws Error(EmptyCorpus) on an empty input.
CorpusCitationScore corpus_citation_f1(std::span<const CitationPair> pairs,
                                       EmptyConvention convention = EmptyConvention::vacuous_one);

}  // namespace citegauge::cite
