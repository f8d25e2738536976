// SPDX-License-Identifier: Apache-2.0

#include "citegauge/semqual.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "citegauge/error.hpp"

namespace citegauge::semqual {

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double mean_best_match(const backends::TokenEmbeddings& from, const backends::TokenEmbeddings& to) {
    double sum = 0.0;
    for (std::size_t i = 0; i < from.rows; ++i) {
        double best = -1.0;
        for (std::size_t j = 0; j < to.rows; ++j) best = std::max(best, cosine(from.row(i), to.row(j)));
        sum += best;
    }
    return sum / static_cast<double>(from.rows);
}

bool is_terminator(char32_t c) noexcept {
    return c == '.' || c == '?' || c == '!' || utf8::is_danda(c);
}

}  // namespace

double greedy_match_f1(const backends::TokenEmbeddings& candidate, const backends::TokenEmbeddings& reference) {
    if (candidate.rows == 0 && reference.rows == 0) return 1.0;
    if (candidate.rows == 0 || reference.rows == 0) return 0.0;
    if (candidate.dim != reference.dim) {
        throw Error(Errc::DimensionMismatch, "candidate and reference embeddings differ in width",
                    {{"candidate", candidate.dim}, {"reference", reference.dim}});
    }
    const double precision = mean_best_match(candidate, reference);
    const double recall = mean_best_match(reference, candidate);
    if (precision + recall <= 0.0) return 0.0;
    return std::clamp(2.0 * precision * recall / (precision + recall), 0.0, 1.0);
}

double semantic_score(const std::string& candidate, const std::string& reference,
                      backends::EmbeddingBackend& embedder) {
    const std::array<std::string, 2> texts{candidate, reference};
    const auto matrices = embedder.embed(texts);
    if (matrices.size() != 2) {
        throw Error(Errc::BackendError, "embedder returned the wrong number of matrices",
                    {{"expected", 2}, {"got", matrices.size()}});
    }
    return greedy_match_f1(matrices[0], matrices[1]);
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    const auto cps = utf8::decode(text);
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!is_terminator(cps[i].value)) {
            ++i;
            continue;
        }
        // A run like "?!" or "..." ends together.
        std::size_t j = i;
        while (j + 1 < cps.size() && is_terminator(cps[j + 1].value)) ++j;
        const bool at_end = j + 1 == cps.size();
        if (!at_end && !utf8::is_space(cps[j + 1].value)) {
            i = j + 1;
            continue;
        }
        std::size_t end = at_end ? text.size() : cps[j + 1].offset;
        // Pull markers that trail the boundary into this sentence.
        std::size_t k = j + 1;
        while (true) {
            std::size_t m = k;
            while (m < cps.size() && utf8::is_space(cps[m].value)) ++m;
            if (m >= cps.size()) break;
            const auto rest = text.substr(cps[m].offset);
            const auto marks = cite::parse_citations(rest.substr(0, std::min<std::size_t>(rest.size(), 24)));
            if (marks.empty() || marks.spans.front().begin != 0) break;
            end = cps[m].offset + marks.spans.front().end;
            k = m;
            while (k < cps.size() && cps[k].offset < end) ++k;
        }
        auto sentence = trim(text.substr(start, end - start));
        if (!sentence.empty()) out.push_back(std::move(sentence));
        start = end;
        i = k;
    }
    if (start < text.size()) {
        auto sentence = trim(text.substr(start));
        if (!sentence.empty()) out.push_back(std::move(sentence));
    }
    return out;
}

std::string strip_markers(std::string_view text) {
    const auto marks = cite::parse_citations(text);
    std::string without;
    std::size_t pos = 0;
    for (const auto& span : marks.spans) {
        without.append(text.substr(pos, span.begin - pos));
        pos = span.end;
    }
    without.append(text.substr(pos));

    std::string out;
    bool pending_space = false;
    for (const char c : without) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            pending_space = !out.empty();
            continue;
        }
        // No space before punctuation left behind by a removed marker.
        const bool punct = c == '.' || c == ',' || c == ';' || c == ':' || c == '?' || c == '!';
        if (pending_space && !punct) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

double fact_score(std::string_view response, const corpus::KnowledgeSet& knowledge,
                  backends::NliBackend& nli, const FactOptions& options) {
    if (knowledge.empty()) throw Error(Errc::EmptyKnowledge, "FactScore needs knowledge passages");

    std::vector<std::string> hypotheses;
    if (options.granularity == FactGranularity::sentence) {
        for (const auto& s : split_sentences(response)) {
            auto h = strip_markers(s);
            if (!h.empty()) hypotheses.push_back(std::move(h));
        }
    } else {
        auto h = strip_markers(response);
        if (!h.empty()) hypotheses.push_back(std::move(h));
    }
    if (hypotheses.empty()) return 0.0;

    std::vector<std::string> premises;
    if (options.premise == PremiseMode::per_passage) {
        for (const auto& p : knowledge) premises.push_back(p.display_text());
    } else {
        std::string joined;
        for (const auto& p : knowledge) {
            if (!joined.empty()) joined.push_back(' ');
            joined.append(p.display_text());
        }
        premises.push_back(std::move(joined));
    }

    double sum = 0.0;
    for (const auto& h : hypotheses) {
        double best = 0.0;
        for (const auto& premise : premises) {
            const auto j = nli.nli(premise, h);
            backends::validate_judgment(j);
            best = std::max(best, j.p_entail);
        }
        sum += best;
    }
    return sum / static_cast<double>(hypotheses.size());
}

HallucinationCheck check_hallucination(std::string_view response, const corpus::KnowledgeSet& knowledge,
                                       const cite::CitationSet& predicted, backends::NliBackend& nli,
                                       double tau, const FactOptions& options) {
    HallucinationCheck check;
    if (trim(response).empty() && predicted.empty()) return check;
    check.fabricated =
        !cite::fabricated_citations(predicted, static_cast<std::int64_t>(knowledge.size())).empty();
    check.fact_score = fact_score(response, knowledge, nli, options);
    check.unsupported = check.fact_score < tau;
    check.flagged = check.fabricated || check.unsupported;
    return check;
}

bool hallucination_flag(std::string_view response, const corpus::KnowledgeSet& knowledge,
                        const cite::CitationSet& predicted, backends::NliBackend& nli, double tau) {
    return check_hallucination(response, knowledge, predicted, nli, tau).flagged;
}

FactualReport aggregate_factuality(const std::vector<ExampleFactuality>& examples) {
    if (examples.empty()) throw Error(Errc::EmptyCorpus, "no examples to aggregate");
    FactualReport report;
    std::size_t fabricated = 0;
    std::size_t unsupported = 0;
    for (const auto& e : examples) {
        report.fact_score += e.check.fact_score;
        fabricated += e.check.fabricated ? 1 : 0;
        unsupported += e.check.unsupported ? 1 : 0;
        if (e.check.flagged) report.flagged_ids.push_back(e.id);
    }
    const auto n = static_cast<double>(examples.size());
    report.fact_score /= n;
    report.halluc_rate = static_cast<double>(report.flagged_ids.size()) / n;
    report.fabrication_rate = static_cast<double>(fabricated) / n;
    report.unsupported_rate = static_cast<double>(unsupported) / n;
    return report;
}

}  // namespace citegauge::semqual
