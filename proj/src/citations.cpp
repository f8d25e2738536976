// SPDX-License-Identifier: Apache-2.0

#include "citegauge/citations.hpp"

#include <algorithm>
#include <iterator>

#include "citegauge/error.hpp"

namespace citegauge::cite {

namespace {

constexpr Index kSaturated = 999'999'999'999'999'999;

bool is_ascii_digit(char c) noexcept { return c >= '0' && c <= '9'; }

}  // namespace

CitationSet parse_citations(std::string_view text) {
    CitationSet out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '[') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        Index value = 0;
        while (j < text.size() && is_ascii_digit(text[j])) {
            if (value < kSaturated / 10) {
                value = value * 10 + (text[j] - '0');
            } else {
                value = kSaturated;
            }
            ++j;
        }
        if (j > i + 1 && j < text.size() && text[j] == ']') {
            out.indices.push_back(value);
            out.spans.push_back({i, j + 1});
            i = j + 1;
        } else {
            // The scan can restart at j: nothing in (i, j) is a '['.
            i = j > i + 1 ? j : i + 1;
        }
    }
    return out;
}

std::string render_marker(Index index) {
    return "[" + std::to_string(index) + "]";
}

double harmonic_f1(double precision, double recall) noexcept {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

CitationScore citation_score(const CitationSet& predicted, const CitationSet& gold,
                             EmptyConvention convention) {
    const auto pred = predicted.distinct();
    const auto ref = gold.distinct();

    CitationScore score;
    score.has_citation = !pred.empty();

    if (pred.empty() && ref.empty()) {
        const double v = convention == EmptyConvention::vacuous_one ? 1.0 : 0.0;
        score.precision = score.recall = score.f1 = v;
        return score;
    }
    if (pred.empty() || ref.empty()) return score;

    std::vector<Index> common;
    std::set_intersection(pred.begin(), pred.end(), ref.begin(), ref.end(),
                          std::back_inserter(common));
    const auto hits = static_cast<double>(common.size());
    score.precision = hits / static_cast<double>(pred.size());
    score.recall = hits / static_cast<double>(ref.size());
    score.f1 = harmonic_f1(score.precision, score.recall);
    return score;
}

std::set<Index> fabricated_citations(const CitationSet& predicted, std::int64_t n_passages) {
    std::set<Index> out;
    for (const Index i : predicted.indices) {
        if (i == 0 || i > n_passages) out.insert(i);
    }
    return out;
}

CorpusCitationScore corpus_citation_f1(std::span<const CitationPair> pairs,
                                       EmptyConvention convention) {
    if (pairs.empty()) throw Error(Errc::EmptyCorpus, "no citation pairs to score");

    CorpusCitationScore total;
    std::size_t fabricated = 0;
    std::size_t citing = 0;
    for (const auto& pair : pairs) {
        const auto s = citation_score(pair.predicted, pair.gold, convention);
        total.precision += s.precision;
        total.recall += s.recall;
        total.f1 += s.f1;
        citing += s.has_citation ? 1 : 0;
        fabricated += fabricated_citations(pair.predicted, pair.n_passages).empty() ? 0 : 1;
    }
    const auto n = static_cast<double>(pairs.size());
    total.precision /= n;
    total.recall /= n;
    total.f1 /= n;
    total.has_citation_rate = static_cast<double>(citing) / n;
    total.fabrication_rate = static_cast<double>(fabricated) / n;
    total.count = pairs.size();
    return total;
}

}  // namespace citegauge::cite
