// SPDX-License-Identifier: Apache-2.0
//
// Per-example scoring of predictions and their aggregation into stage
// results (overall and per language).

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "citegauge/backends.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/report.hpp"
#include "citegauge/semqual.hpp"
#include "citegauge/text_metrics.hpp"

namespace citegauge::eval {

struct EvalOptions {
    double tau = semqual::kDefaultTau;
    semqual::FactOptions fact;
    text::RougeVariant rouge = text::RougeVariant::f1;
    cite::EmptyConvention empty_citations = cite::EmptyConvention::vacuous_one;
};

struct ExampleMetrics {
    std::string id;
    Language language = Language::en;  // split the example is reported under
    std::string prediction;
    std::string reference;
    double bleu = 0.0;  // sentence level; the stage value is corpus BLEU
    double rouge1 = 0.0;
    double rougeL = 0.0;
    double citation_precision = 0.0;
    double citation_recall = 0.0;
    double citation_f1 = 0.0;
    std::vector<cite::Index> fabricated;
    semqual::HallucinationCheck check;
    std::optional<double> semantic;
    std::size_t n_passages = 0;
};

nlohmann::json to_json(const ExampleMetrics& m);

/// Script-based language of the example (Devanagari share of the query and
/// reference); falls back to the tagged language for text with no letters.
Language split_language(const corpus::DialogueExample& example);

/// `embedder` may be null, in which case no semantic score is computed.
ExampleMetrics evaluate_example(const corpus::DialogueExample& example, const std::string& prediction,
                                backends::NliBackend& nli, backends::EmbeddingBackend* embedder,
                                const EvalOptions& options = {});

/// Overall row first, then en and hi rows for the languages present.
/// Throws Error(EmptyCorpus) on empty input.
std::vector<report::StageResult> aggregate(std::span<const ExampleMetrics> metrics, const std::string& model,
                                           report::Stage stage);

struct FailedExample {
    std::string id;
    nlohmann::json error;
};

struct EvalRun {
    std::vector<ExampleMetrics> completed;  // dataset order
    std::vector<FailedExample> failed;      // dataset order
};

using Predictor = std::function<std::string(const corpus::DialogueExample&)>;

/// Predicts and scores every example, up to `workers` at a time. Examples
/// whose backend calls fail are recorded in `failed` and skipped; any other
/// error propagates.
EvalRun evaluate_all(std::span<const corpus::DialogueExample> examples, const Predictor& predict,
                     backends::NliBackend& nli, backends::EmbeddingBackend* embedder, const EvalOptions& options,
                     std::size_t workers = 1);

}  // namespace citegauge::eval
