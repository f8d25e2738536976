// SPDX-License-Identifier: Apache-2.0

#include "citegauge/evaluation.hpp"

#include <mutex>

#include "citegauge/citations.hpp"
#include "citegauge/error.hpp"
#include "citegauge/parallel.hpp"
#include "citegauge/text_metrics.hpp"

namespace citegauge::eval {

using nlohmann::json;

json to_json(const ExampleMetrics& m) {
    json j = {{"id", m.id},
              {"language", to_string(m.language)},
              {"prediction", m.prediction},
              {"bleu", m.bleu},
              {"rouge1", m.rouge1},
              {"rougeL", m.rougeL},
              {"citation_precision", m.citation_precision},
              {"citation_recall", m.citation_recall},
              {"citation_f1", m.citation_f1},
              {"fabricated", m.fabricated},
              {"factscore", m.check.fact_score},
              {"unsupported", m.check.unsupported},
              {"hallucinated", m.check.flagged}};
    j["semantic"] = m.semantic ? json(*m.semantic) : json(nullptr);
    return j;
}

Language split_language(const corpus::DialogueExample& example) {
    const std::string text = example.query + " " + example.reference;
    if (trim(text).empty()) return example.language;
    return corpus::detect_language(text);
}

ExampleMetrics evaluate_example(const corpus::DialogueExample& example, const std::string& prediction,
                                backends::NliBackend& nli, backends::EmbeddingBackend* embedder,
                                const EvalOptions& options) {
    corpus::validate_knowledge(example.knowledge, example.id);
    ExampleMetrics m;
    m.id = example.id;
    m.language = split_language(example);
    m.prediction = prediction;
    m.reference = example.reference;
    m.n_passages = example.knowledge.size();

    const auto cand = text::tokenize(prediction, example.language);
    const auto ref = text::tokenize(example.reference, example.language);
    const auto lex = text::lexical_score(cand, ref);
    m.bleu = lex.bleu;
    m.rouge1 = lex.rouge1_f;
    m.rougeL = lex.rougeL_f;
    if (options.rouge == text::RougeVariant::recall) {
        m.rouge1 = text::rouge1(cand, ref, text::RougeVariant::recall);
        m.rougeL = text::rougeL(cand, ref, text::RougeVariant::recall);
    }

    const auto predicted = cite::parse_citations(prediction);
    const auto gold = cite::parse_citations(example.reference);
    const auto score = cite::citation_score(predicted, gold, options.empty_citations);
    m.citation_precision = score.precision;
    m.citation_recall = score.recall;
    m.citation_f1 = score.f1;
    const auto fabricated = cite::fabricated_citations(predicted, static_cast<std::int64_t>(m.n_passages));
    m.fabricated.assign(fabricated.begin(), fabricated.end());

    m.check = semqual::check_hallucination(prediction, example.knowledge, predicted, nli, options.tau, options.fact);
    if (embedder) m.semantic = semqual::semantic_score(prediction, example.reference, *embedder);
    return m;
}

namespace {

report::StageResult aggregate_split(std::span<const ExampleMetrics* const> rows, const std::string& model,
                                    report::Stage stage, report::Split split) {
    std::vector<text::TokenSequence> cands;
    std::vector<text::TokenSequence> refs;
    std::vector<semqual::ExampleFactuality> facts;
    double rouge1 = 0.0;
    double rougeL = 0.0;
    double citation_f1 = 0.0;
    double semantic = 0.0;
    bool all_semantic = true;
    for (const auto* m : rows) {
        cands.push_back(text::tokenize(m->prediction, m->language));
        refs.push_back(text::tokenize(m->reference, m->language));
        citation_f1 += m->citation_f1;
        facts.push_back({m->id, m->check});
        rouge1 += m->rouge1;
        rougeL += m->rougeL;
        if (m->semantic) {
            semantic += *m->semantic;
        } else {
            all_semantic = false;
        }
    }
    const auto n = static_cast<double>(rows.size());
    const auto factual = semqual::aggregate_factuality(facts);

    report::StageResult r{model, stage, split, {}};
    r.metrics["bleu"] = text::bleu(cands, refs);
    r.metrics["rouge1"] = rouge1 / n;
    r.metrics["rougeL"] = rougeL / n;
    r.metrics["factscore"] = factual.fact_score;
    r.metrics["citation_f1"] = citation_f1 / n;
    r.metrics["halluc_rate"] = factual.halluc_rate;
    if (all_semantic) r.metrics["semantic"] = semantic / n;
    return r;
}

}  // namespace

std::vector<report::StageResult> aggregate(std::span<const ExampleMetrics> metrics, const std::string& model,
                                           report::Stage stage) {
    if (metrics.empty()) throw Error(Errc::EmptyCorpus, "no evaluated examples to aggregate");
    std::vector<const ExampleMetrics*> all;
    std::vector<const ExampleMetrics*> en;
    std::vector<const ExampleMetrics*> hi;
    for (const auto& m : metrics) {
        all.push_back(&m);
        (m.language == Language::hi ? hi : en).push_back(&m);
    }
    std::vector<report::StageResult> out;
    out.push_back(aggregate_split(all, model, stage, report::Split::overall));
    if (!en.empty()) out.push_back(aggregate_split(en, model, stage, report::Split::en));
    if (!hi.empty()) out.push_back(aggregate_split(hi, model, stage, report::Split::hi));
    return out;
}

EvalRun evaluate_all(std::span<const corpus::DialogueExample> examples, const Predictor& predict,
                     backends::NliBackend& nli, backends::EmbeddingBackend* embedder, const EvalOptions& options,
                     std::size_t workers) {
    std::vector<std::optional<ExampleMetrics>> done(examples.size());
    std::vector<std::optional<json>> errors(examples.size());
    parallel_for(examples.size(), workers, [&](std::size_t i) {
        try {
            done[i] = evaluate_example(examples[i], predict(examples[i]), nli, embedder, options);
        } catch (const Error& e) {
            if (!is_backend_error(e.code())) throw;
            errors[i] = e.to_json();
        }
    });
    EvalRun run;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (done[i]) run.completed.push_back(std::move(*done[i]));
        if (errors[i]) run.failed.push_back({examples[i].id, std::move(*errors[i])});
    }
    return run;
}

}  // namespace citegauge::eval
