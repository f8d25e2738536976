// SPDX-License-Identifier: Apache-2.0

#include "citegauge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "citegauge/citations.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/evaluation.hpp"
#include "citegauge/http_backend.hpp"
#include "citegauge/parallel.hpp"
#include "citegauge/report.hpp"
#include "citegauge/reward.hpp"
#include "citegauge/xai.hpp"

namespace citegauge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

// Options ------------------------------------------------------------------

struct EndpointOptions {
    std::string backend_url;
    std::string ref_backend_url;
    std::string nli_url;
    std::string embed_url;
    std::string translate_url;
    int timeout_ms = 60000;
    int max_in_flight = 4;
    int retries = 3;
    int backoff_ms = 200;

    backends::BackendEndpoint base() const {
        backends::BackendEndpoint ep;
        ep.timeout = std::chrono::milliseconds(timeout_ms);
        ep.max_in_flight = max_in_flight;
        ep.retry.attempts = retries;
        ep.retry.backoff = std::chrono::milliseconds(backoff_ms);
        return ep;
    }
    std::string generation_url() const {
        return backend_url.empty() ? backends::default_backend_url() : backend_url;
    }
    /// A role URL, or the shared backend when that is an HTTP server.
    std::string role_url(const std::string& explicit_url) const {
        if (!explicit_url.empty()) return explicit_url;
        const auto shared = generation_url();
        return shared.rfind("http://", 0) == 0 ? shared : std::string();
    }
};

void add_endpoint_options(CLI::App& app, EndpointOptions& o, bool with_ref, bool with_embed) {
    app.add_option("--backend-url", o.backend_url, "Generation backend (default $CITEGAUGE_BACKEND_URL)");
    if (with_ref) app.add_option("--ref-backend-url", o.ref_backend_url, "Frozen reference policy backend");
    app.add_option("--nli-url", o.nli_url, "NLI backend (default: the HTTP backend)");
    if (with_embed) app.add_option("--embed-url", o.embed_url, "Embedding backend (default: the HTTP backend)");
    app.add_option("--timeout-ms", o.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);
    app.add_option("--max-in-flight", o.max_in_flight, "Concurrent requests per backend")->check(CLI::PositiveNumber);
    app.add_option("--retries", o.retries, "Attempts per request")->check(CLI::PositiveNumber);
    app.add_option("--backoff-ms", o.backoff_ms, "Initial retry backoff")->check(CLI::NonNegativeNumber);
}

std::shared_ptr<backends::GenerationBackend> need_generation(const std::string& url, const EndpointOptions& o,
                                                             const char* flag) {
    if (url.empty()) {
        throw Error(Errc::UsageError, std::string("no generation backend: pass ") + flag + " or set " +
                                          backends::kBackendUrlEnv);
    }
    return backends::make_generation_backend(url, o.base());
}

std::shared_ptr<backends::NliBackend> need_nli(const EndpointOptions& o) {
    const auto url = o.role_url(o.nli_url);
    if (url.empty()) throw Error(Errc::UsageError, "no NLI backend: pass --nli-url");
    return backends::make_nli_backend(url, o.base());
}

// Files --------------------------------------------------------------------

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + dir.string(), {{"path", dir.string()}});
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string(), {{"path", path.string()}});
    out << text;
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string(), {{"path", path.string()}});
}

/// Write-then-rename so readers never see a torn file.
void write_atomic(const fs::path& path, const std::string& text) {
    const auto tmp = fs::path(path.string() + ".tmp");
    write_text(tmp, text);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoError, "cannot replace " + path.string(), {{"path", path.string()}});
}

void write_json_lines(const fs::path& path, const std::vector<json>& rows) {
    std::string text;
    for (const auto& r : rows) text += r.dump() + "\n";
    write_text(path, text);
}

std::vector<corpus::DialogueExample> load_dataset(const std::string& path) {
    if (!fs::exists(path)) throw Error(Errc::IoError, "dataset not found: " + path, {{"path", path}});
    return corpus::read_jsonl(path);
}

std::map<std::string, std::string> load_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path, {{"path", path}});
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            out[j.at("id").get<std::string>()] = j.at("prediction").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, std::string("bad prediction record: ") + e.what(),
                        {{"path", path}, {"line", line_no}});
        }
    }
    return out;
}

// format -------------------------------------------------------------------

struct FormatOptions {
    std::string dataset;
    std::string out;
    std::string translate_url;
    std::string source = "en";
    std::string target = "hi";
    std::optional<double> mix;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    bool prompts = false;
};

int cmd_format(const FormatOptions& o, std::ostream& out) {
    auto examples = load_dataset(o.dataset);

    if (!o.translate_url.empty()) {
        const auto translator = backends::make_translator_backend(o.translate_url);
        const auto src = language_from_string(o.source);
        const auto tgt = language_from_string(o.target);
        for (auto& ex : examples) ex = corpus::translate_example(ex, *translator, src, tgt);
    }

    if (o.mix) {
        std::vector<corpus::DialogueExample> en;
        std::vector<corpus::DialogueExample> hi;
        for (const auto& ex : examples) (ex.language == Language::hi ? hi : en).push_back(ex);
        const std::size_t count = o.count ? o.count : examples.size();
        examples = corpus::sample_mixture(en, hi, {*o.mix, o.seed}, count);
    }

    if (o.prompts) {
        std::vector<json> rows;
        for (const auto& ex : examples) {
            rows.push_back({{"id", ex.id}, {"language", to_string(ex.language)}, {"prompt", corpus::build_prompt(ex)}});
        }
        write_json_lines(o.out, rows);
    } else {
        corpus::write_jsonl(examples, o.out);
    }
    out << json{{"written", examples.size()}, {"out", o.out}}.dump() << '\n';
    return kExitOk;
}

// eval ---------------------------------------------------------------------

struct FactFlags {
    std::string granularity = "sentence";
    std::string premise = "per-passage";

    semqual::FactOptions resolve() const {
        semqual::FactOptions f;
        f.granularity = granularity == "response" ? semqual::FactGranularity::response : semqual::FactGranularity::sentence;
        f.premise = premise == "concatenated" ? semqual::PremiseMode::concatenated : semqual::PremiseMode::per_passage;
        return f;
    }
};

void add_fact_options(CLI::App& app, FactFlags& f) {
    app.add_option("--fact-granularity", f.granularity, "FactScore unit")
        ->check(CLI::IsMember({"sentence", "response"}));
    app.add_option("--premise", f.premise, "NLI premise per passage or all passages joined")
        ->check(CLI::IsMember({"per-passage", "concatenated"}));
}

struct EvalOptions {
    std::string dataset;
    std::string out;
    std::string predictions;
    std::string model = "model";
    std::string stage = "baseline";
    std::string format = "jsonl";
    double tau = semqual::kDefaultTau;
    std::string rouge = "f1";
    std::string empty_citations = "one";
    FactFlags fact;
    int max_new_tokens = backends::kDefaultMaxNewTokens;
    EndpointOptions endpoints;
};

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
    const auto stage = report::stage_from_string(o.stage);
    const auto format = report::series_format_from_string(o.format);
    const auto examples = load_dataset(o.dataset);
    if (examples.empty()) throw Error(Errc::EmptyCorpus, "dataset has no examples", {{"path", o.dataset}});

    eval::Predictor predict;
    std::shared_ptr<backends::GenerationBackend> gen;
    if (!o.predictions.empty()) {
        auto table = std::make_shared<std::map<std::string, std::string>>(load_predictions(o.predictions));
        for (const auto& ex : examples) {
            if (!table->contains(ex.id)) {
                throw Error(Errc::MalformedRecord, "no prediction for example " + ex.id, {{"id", ex.id}});
            }
        }
        predict = [table](const corpus::DialogueExample& ex) { return table->at(ex.id); };
    } else {
        gen = need_generation(o.endpoints.generation_url(), o.endpoints, "--backend-url or --predictions");
        predict = [gen, max = o.max_new_tokens](const corpus::DialogueExample& ex) {
            backends::GenerationRequest req;
            req.prompt = corpus::build_prompt(ex);
            req.temperature = 0.0;
            req.max_new_tokens = max;
            return gen->generate(req).text;
        };
    }
    const auto nli = need_nli(o.endpoints);
    std::shared_ptr<backends::EmbeddingBackend> embedder;
    if (const auto url = o.endpoints.role_url(o.endpoints.embed_url); !url.empty()) {
        embedder = backends::make_embedding_backend(url, o.endpoints.base());
    }

    eval::EvalOptions options;
    options.tau = o.tau;
    options.fact = o.fact.resolve();
    options.rouge = o.rouge == "recall" ? text::RougeVariant::recall : text::RougeVariant::f1;
    options.empty_citations = o.empty_citations == "zero" ? cite::EmptyConvention::zero : cite::EmptyConvention::vacuous_one;
    const auto run = eval::evaluate_all(examples, predict, *nli, embedder.get(), options,
                                        static_cast<std::size_t>(o.endpoints.max_in_flight));

    ensure_dir(o.out);
    const fs::path dir(o.out);
    std::vector<json> per_example;
    for (const auto& m : run.completed) per_example.push_back(eval::to_json(m));
    write_json_lines(dir / "per_example.jsonl", per_example);

    json manifest = {{"dataset", o.dataset}, {"model", o.model}, {"stage", o.stage},
                     {"total", examples.size()}, {"completed", json::array()}, {"failed", json::array()}};
    for (const auto& m : run.completed) manifest["completed"].push_back(m.id);
    for (const auto& f : run.failed) manifest["failed"].push_back({{"id", f.id}, {"error", f.error}});
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    if (!run.completed.empty()) {
        const auto results = eval::aggregate(run.completed, o.model, stage);
        report::emit_series(results, format, dir / (format == report::SeriesFormat::csv ? "stage_results.csv"
                                                                                          : "stage_results.jsonl"));
        const auto table = report::bold_best(report::make_table(results));
        const auto text = report::render_text(table);
        write_text(dir / "report.txt", text);
        out << text;
    }
    if (!run.failed.empty()) {
        err << Error(Errc::BackendError, std::to_string(run.failed.size()) + " example(s) failed; see manifest.json",
                     {{"failed", run.failed.size()}, {"manifest", (dir / "manifest.json").string()}})
                   .to_json()
                   .dump()
            << '\n';
        return kExitInternal;
    }
    return kExitOk;
}

// grpo ---------------------------------------------------------------------

struct GrpoOptions {
    std::string dataset;
    std::string out;
    std::string format = "jsonl";
    int steps = reward::kDefaultSteps;
    int group_size = reward::kDefaultGroupSize;
    double beta = reward::kDefaultBeta;
    double temperature = reward::kDefaultTemperature;
    double tau = semqual::kDefaultTau;
    std::uint64_t seed = 0;
    int max_new_tokens = backends::kDefaultMaxNewTokens;
    std::size_t batch = 0;
    bool resume = false;
    int stop_after = 0;
    std::string logprob_reduction = "sum";
    FactFlags fact;
    reward::RewardWeights weights;
    EndpointOptions endpoints;
};

constexpr const char* kStepsFile = "grpo_steps.jsonl";
constexpr const char* kCheckpointFile = "grpo_checkpoint.json";

json run_identity(const GrpoOptions& o) {
    return {{"dataset", o.dataset}, {"seed", o.seed}, {"group_size", o.group_size}, {"beta", o.beta},
            {"temperature", o.temperature}, {"batch", o.batch}, {"weights", o.weights.as_array()},
            {"tau", o.tau}, {"logprob_reduction", o.logprob_reduction},
            {"fact", json::array({o.fact.granularity, o.fact.premise})}};
}

std::vector<corpus::DialogueExample> step_batch(const std::vector<corpus::DialogueExample>& all, std::size_t batch,
                                                int step) {
    if (batch == 0 || batch >= all.size()) return all;
    std::vector<corpus::DialogueExample> out;
    const std::size_t start = (static_cast<std::size_t>(step - 1) * batch) % all.size();
    for (std::size_t k = 0; k < batch; ++k) out.push_back(all[(start + k) % all.size()]);
    return out;
}

int cmd_grpo(const GrpoOptions& o, std::ostream& out, std::ostream& err) {
    const auto format = report::series_format_from_string(o.format);
    const auto examples = load_dataset(o.dataset);
    if (examples.empty()) throw Error(Errc::EmptyCorpus, "dataset has no examples", {{"path", o.dataset}});
    const auto policy = need_generation(o.endpoints.generation_url(), o.endpoints, "--backend-url");
    const auto ref_url = o.endpoints.ref_backend_url.empty() ? o.endpoints.generation_url() : o.endpoints.ref_backend_url;
    const auto reference = need_generation(ref_url, o.endpoints, "--ref-backend-url");
    const auto nli = need_nli(o.endpoints);

    reward::RolloutConfig config;
    config.weights = o.weights;
    config.reward.tau = o.tau;
    config.reward.fact = o.fact.resolve();
    config.reduction =
        o.logprob_reduction == "token-mean" ? reward::LogprobReduction::token_mean : reward::LogprobReduction::sum;
    config.group_size = o.group_size;
    config.temperature = o.temperature;
    config.beta = o.beta;
    config.max_new_tokens = o.max_new_tokens;
    config.seed = o.seed;

    ensure_dir(o.out);
    const fs::path dir(o.out);
    const auto steps_path = dir / kStepsFile;
    const auto checkpoint_path = dir / kCheckpointFile;

    int last_done = 0;
    std::vector<reward::GrpoStepRecord> kept;
    if (o.resume && fs::exists(checkpoint_path)) {
        json checkpoint;
        try {
            std::ifstream in(checkpoint_path);
            checkpoint = json::parse(in);
            last_done = checkpoint.at("last_step").get<int>();
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, std::string("bad checkpoint: ") + e.what(),
                        {{"path", checkpoint_path.string()}});
        }
        if (checkpoint.value("run", json()) != run_identity(o)) {
            throw Error(Errc::InvalidConfig, "checkpoint was written by a run with different settings",
                        {{"path", checkpoint_path.string()}});
        }
        if (fs::exists(steps_path)) {
            for (auto& r : report::read_step_records_jsonl(steps_path)) {
                if (r.step <= last_done) kept.push_back(std::move(r));
            }
        }
    }
    {
        std::string text;
        for (const auto& r : kept) text += reward::to_json(r).dump() + "\n";
        write_atomic(steps_path, text);
    }

    std::ofstream steps_out(steps_path, std::ios::binary | std::ios::app);
    if (!steps_out) throw Error(Errc::IoError, "cannot append to " + steps_path.string());
    int run_steps = 0;
    bool stopped = false;
    const auto workers = static_cast<std::size_t>(o.endpoints.max_in_flight);
    for (int step = last_done + 1; step <= o.steps; ++step) {
        const auto batch = step_batch(examples, o.batch, step);
        const auto result = reward::grpo_rollout_step(step, batch, *policy, *reference, *nli, config, workers);
        for (const auto& r : result.records) {
            steps_out << reward::to_json(r).dump() << '\n';
            kept.push_back(r);
        }
        steps_out.flush();
        if (!steps_out) throw Error(Errc::IoError, "write failed for " + steps_path.string());
        last_done = step;
        write_atomic(checkpoint_path, json{{"last_step", last_done}, {"run", run_identity(o)}}.dump() + "\n");
        ++run_steps;
        if (g_stop.load() || (o.stop_after > 0 && run_steps >= o.stop_after)) {
            stopped = last_done < o.steps;
            break;
        }
    }
    if (o.steps <= 0 || last_done == 0) {
        write_atomic(checkpoint_path, json{{"last_step", last_done}, {"run", run_identity(o)}}.dump() + "\n");
    }

    if (format == report::SeriesFormat::csv) report::emit_series(kept, format, dir / "grpo_steps.csv");
    out << json{{"last_step", last_done}, {"records", kept.size()}, {"steps_file", steps_path.string()}}.dump() << '\n';
    if (stopped) {
        err << json{{"error", "Interrupted"},
                    {"message", "stopped after step " + std::to_string(last_done) + "; rerun with --resume"},
                    {"details", {{"last_step", last_done}, {"checkpoint", checkpoint_path.string()}}}}
                   .dump()
            << '\n';
        return kExitInternal;
    }
    return kExitOk;
}

// xai ----------------------------------------------------------------------

struct XaiOptions {
    std::string dataset;
    std::string out;
    std::string saliency_dir;
    std::size_t subset = 100;
    std::size_t top_k = xai::kDefaultTopK;
    int max_new_tokens = backends::kDefaultMaxNewTokens;
    EndpointOptions endpoints;
};

struct XaiRow {
    json record;
    std::optional<double> alignment;
    std::optional<xai::SaliencyStats> saliency;
    bool saliency_undefined = false;
    std::optional<double> grounding;
};

XaiRow analyse_example(const corpus::DialogueExample& ex, backends::GenerationBackend& gen, const XaiOptions& o) {
    XaiRow row;
    backends::GenerationRequest req;
    req.prompt = corpus::build_prompt(ex);
    req.temperature = 0.0;
    req.max_new_tokens = o.max_new_tokens;
    req.want_attentions = true;
    const auto response = gen.generate(req);

    json record = {{"id", ex.id}, {"baseline", response.text}};

    std::set<cite::Index> cited;
    const auto n = static_cast<cite::Index>(ex.knowledge.size());
    for (const auto i : cite::parse_citations(response.text).distinct()) {
        if (i >= 1 && i <= n) cited.insert(i);
    }
    if (!response.attention_dump_ref) {
        record["alignment"] = {{"value", nullptr}, {"reason", "no cross-attention dump"}};
    } else {
        const auto dump = xai::read_tensor_dump(*response.attention_dump_ref);
        const auto* attn = std::get_if<xai::AttentionDump>(&dump);
        if (!attn) throw Error(Errc::FormatError, "expected an attention dump", {{"path", *response.attention_dump_ref}});
        if (cited.empty()) {
            record["alignment"] = {{"value", nullptr}, {"reason", "baseline cites no passage"}};
        } else {
            const auto passages = corpus::prompt_passage_spans(ex.query, ex.knowledge);
            const auto tokens = xai::cited_token_indices(attn->input_token_spans, passages, cited);
            row.alignment = xai::attention_alignment(*attn, tokens);
            record["alignment"] = {{"value", *row.alignment}, {"cited_tokens", tokens.size()}};
        }
    }

    if (o.saliency_dir.empty()) {
        record["saliency"] = nullptr;
    } else {
        const auto path = fs::path(o.saliency_dir) / (ex.id + ".tdmp");
        if (!fs::exists(path)) {
            record["saliency"] = {{"status", "missing"}};
        } else {
            const auto dump = xai::read_tensor_dump(path);
            const auto* sal = std::get_if<xai::SaliencyDump>(&dump);
            if (!sal) throw Error(Errc::FormatError, "expected a saliency dump", {{"path", path.string()}});
            row.saliency = xai::saliency_summary(*sal, o.top_k);
            if (row.saliency) {
                record["saliency"] = {{"status", "ok"},
                                      {"entropy", row.saliency->entropy},
                                      {"concentration", row.saliency->concentration}};
            } else {
                row.saliency_undefined = true;
                record["saliency"] = {{"status", "undefined"}, {"entropy", nullptr}, {"concentration", nullptr}};
            }
        }
    }

    xai::OcclusionOptions occlusion;
    occlusion.max_new_tokens = o.max_new_tokens;
    const auto grounding = xai::occlusion_grounding_from(ex, response.text, gen, occlusion);
    row.grounding = grounding.score;
    record["grounding"] = xai::to_json(grounding);
    row.record = std::move(record);
    return row;
}

json mean_or_null(const std::vector<double>& v) {
    if (v.empty()) return nullptr;
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

int cmd_xai(const XaiOptions& o, std::ostream& out, std::ostream& err) {
    auto examples = load_dataset(o.dataset);
    if (examples.empty()) throw Error(Errc::EmptyCorpus, "dataset has no examples", {{"path", o.dataset}});
    if (o.subset == 0) throw Error(Errc::UsageError, "--subset must be >= 1");
    if (examples.size() > o.subset) examples.resize(o.subset);
    const auto gen = need_generation(o.endpoints.generation_url(), o.endpoints, "--backend-url");

    std::vector<std::optional<XaiRow>> rows(examples.size());
    std::vector<std::optional<json>> failures(examples.size());
    parallel_for(examples.size(), static_cast<std::size_t>(o.endpoints.max_in_flight), [&](std::size_t i) {
        try {
            rows[i] = analyse_example(examples[i], *gen, o);
        } catch (const Error& e) {
            if (!is_backend_error(e.code())) throw;
            failures[i] = e.to_json();
        }
    });

    ensure_dir(o.out);
    const fs::path dir(o.out);
    std::vector<json> lines;
    std::vector<double> alignment;
    std::vector<double> entropy;
    std::vector<double> concentration;
    std::vector<double> grounding;
    std::size_t undefined = 0;
    json failed = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (failures[i]) failed.push_back({{"id", examples[i].id}, {"error", *failures[i]}});
        if (!rows[i]) continue;
        lines.push_back(rows[i]->record);
        if (rows[i]->alignment) alignment.push_back(*rows[i]->alignment);
        if (rows[i]->saliency) {
            entropy.push_back(rows[i]->saliency->entropy);
            concentration.push_back(rows[i]->saliency->concentration);
        }
        undefined += rows[i]->saliency_undefined ? 1 : 0;
        if (rows[i]->grounding) grounding.push_back(*rows[i]->grounding);
    }
    write_json_lines(dir / "xai.jsonl", lines);
    const json summary = {{"examples", lines.size()},
                          {"subset", o.subset},
                          {"alignment_mean", mean_or_null(alignment)},
                          {"alignment_defined", alignment.size()},
                          {"saliency_entropy_mean", mean_or_null(entropy)},
                          {"saliency_concentration_mean", mean_or_null(concentration)},
                          {"saliency_undefined", undefined},
                          {"grounding_mean", mean_or_null(grounding)},
                          {"grounding_defined", grounding.size()},
                          {"failed", failed}};
    write_text(dir / "xai_summary.json", summary.dump(2) + "\n");
    out << summary.dump() << '\n';
    if (!failed.empty()) {
        err << Error(Errc::BackendError, std::to_string(failed.size()) + " example(s) failed; see xai_summary.json",
                     {{"failed", failed.size()}})
                   .to_json()
                   .dump()
            << '\n';
        return kExitInternal;
    }
    return kExitOk;
}

// report -------------------------------------------------------------------

struct ReportOptions {
    std::vector<std::string> results;
    std::string out;
    std::string format = "csv";
};

int cmd_report(const ReportOptions& o, std::ostream& out) {
    const auto format = report::series_format_from_string(o.format);
    std::vector<report::StageResult> all;
    for (const auto& path : o.results) {
        if (!fs::exists(path)) throw Error(Errc::IoError, "results file not found: " + path, {{"path", path}});
        for (auto& r : report::read_stage_results_jsonl(path)) all.push_back(std::move(r));
    }
    if (all.empty()) throw Error(Errc::EmptyCorpus, "no stage results to report");
    const auto table = report::bold_best(report::annotate_deltas(report::make_table(all)));
    const auto text = report::render_text(table);
    if (!o.out.empty()) {
        ensure_dir(o.out);
        const fs::path dir(o.out);
        write_text(dir / "table.txt", text);
        report::emit_series(all, format, dir / (format == report::SeriesFormat::csv ? "stage_series.csv"
                                                                                      : "stage_series.jsonl"));
    }
    out << text;
    return kExitOk;
}

void add_weight_options(CLI::App& app, reward::RewardWeights& w) {
    app.add_option("--w-fact", w.fact, "Weight of the factuality term");
    app.add_option("--w-ent", w.ent, "Weight of the entity-overlap term");
    app.add_option("--w-attr", w.attr, "Weight of the attribution term");
    app.add_option("--w-flu", w.flu, "Weight of the fluency term");
    app.add_option("--w-len", w.len, "Weight of the length term");
    app.add_option("--w-hal", w.hal, "Weight of the hallucination term");
    app.add_option("--w-cite-pos", w.cite_pos, "Weight of the valid-citation term");
    app.add_option("--w-cite-neg", w.cite_neg, "Weight of the fabricated-citation term");
}

}  // namespace

int exit_code_for(Errc code) noexcept {
    switch (code) {
        case Errc::UsageError:
        case Errc::InvalidConfig:
        case Errc::MalformedRecord:
        case Errc::IndexGap:
        case Errc::EmptyKnowledge:
        case Errc::EmptyCorpus:
        case Errc::EmptyPool:
        case Errc::EmptyText:
        case Errc::IoError:
        case Errc::StageOrderError:
        case Errc::ColumnMismatch:
        case Errc::FormatError:
        case Errc::ShapeMismatch:
        case Errc::NonStochastic:
            return kExitUsage;
        default:
            return kExitInternal;
    }
}

void request_stop() noexcept { g_stop.store(true); }
void clear_stop() noexcept { g_stop.store(false); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Evaluate citation-grounded dialogue models", "citegauge"};
    app.set_config("--config", "", "TOML file of option values; flags override it");
    app.require_subcommand(1);
    app.set_version_flag("--version", "citegauge 1.0.0");

    FormatOptions fmt;
    auto* format_cmd = app.add_subcommand("format", "Normalize, translate, mix, or build prompts for a dataset");
    format_cmd->add_option("--dataset", fmt.dataset, "Input JSONL")->required();
    format_cmd->add_option("--out", fmt.out, "Output JSONL")->required();
    format_cmd->add_option("--translate-url", fmt.translate_url, "Translate every example through this backend");
    format_cmd->add_option("--source", fmt.source, "Translation source language")->check(CLI::IsMember({"en", "hi"}));
    format_cmd->add_option("--target", fmt.target, "Translation target language")->check(CLI::IsMember({"en", "hi"}));
    format_cmd->add_option("--mix", fmt.mix, "Resample to this English share")->check(CLI::Range(0.0, 1.0));
    format_cmd->add_option("--count", fmt.count, "Mixture size (default: dataset size)");
    format_cmd->add_option("--seed", fmt.seed, "Mixture seed");
    format_cmd->add_flag("--prompts", fmt.prompts, "Write {id, language, prompt} records");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions and write stage results");
    eval_cmd->add_option("--dataset", ev.dataset, "Dataset JSONL")->required();
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();
    eval_cmd->add_option("--predictions", ev.predictions, "JSONL of {id, prediction}; otherwise generate");
    eval_cmd->add_option("--model", ev.model, "Model name for the result rows");
    eval_cmd->add_option("--stage", ev.stage, "Pipeline stage")->check(CLI::IsMember({"baseline", "s1", "s2", "s3", "s4"}));
    eval_cmd->add_option("--format", ev.format, "Stage result format")->check(CLI::IsMember({"csv", "jsonl"}));
    eval_cmd->add_option("--tau", ev.tau, "Entailment threshold")->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--rouge", ev.rouge, "ROUGE variant")->check(CLI::IsMember({"f1", "recall"}));
    eval_cmd->add_option("--empty-citations", ev.empty_citations, "Score when prediction and gold both cite nothing")
        ->check(CLI::IsMember({"one", "zero"}));
    add_fact_options(*eval_cmd, ev.fact);
    eval_cmd->add_option("--max-new-tokens", ev.max_new_tokens, "Generation budget")->check(CLI::PositiveNumber);
    add_endpoint_options(*eval_cmd, ev.endpoints, false, true);

    GrpoOptions gr;
    auto* grpo_cmd = app.add_subcommand("grpo", "Drive group-relative rollouts and record training signals");
    grpo_cmd->add_option("--dataset", gr.dataset, "Prompt dataset JSONL")->required();
    grpo_cmd->add_option("--out", gr.out, "Output directory")->required();
    grpo_cmd->add_option("--format", gr.format, "Also write the series as csv")->check(CLI::IsMember({"csv", "jsonl"}));
    grpo_cmd->add_option("--steps", gr.steps, "Number of steps")->check(CLI::NonNegativeNumber);
    grpo_cmd->add_option("--group-size", gr.group_size, "Candidates per prompt")->check(CLI::Range(2, 1 << 20));
    grpo_cmd->add_option("--beta", gr.beta, "KL coefficient")->check(CLI::NonNegativeNumber);
    grpo_cmd->add_option("--temperature", gr.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
    grpo_cmd->add_option("--tau", gr.tau, "Entailment threshold")->check(CLI::Range(0.0, 1.0));
    grpo_cmd->add_option("--seed", gr.seed, "Run seed");
    grpo_cmd->add_option("--max-new-tokens", gr.max_new_tokens, "Generation budget")->check(CLI::PositiveNumber);
    grpo_cmd->add_option("--batch", gr.batch, "Prompts per step (0: all)");
    grpo_cmd->add_flag("--resume", gr.resume, "Continue after the last checkpointed step");
    grpo_cmd->add_option("--stop-after", gr.stop_after, "Stop as if interrupted after this many steps")
        ->check(CLI::NonNegativeNumber);
    grpo_cmd->add_option("--logprob-reduction", gr.logprob_reduction, "Candidate log-prob in the objective")
        ->check(CLI::IsMember({"sum", "token-mean"}));
    add_fact_options(*grpo_cmd, gr.fact);
    add_weight_options(*grpo_cmd, gr.weights);
    add_endpoint_options(*grpo_cmd, gr.endpoints, true, false);

    XaiOptions xo;
    auto* xai_cmd = app.add_subcommand("xai", "Attention alignment, saliency and occlusion grounding");
    xai_cmd->add_option("--dataset", xo.dataset, "Dataset JSONL")->required();
    xai_cmd->add_option("--out", xo.out, "Output directory")->required();
    xai_cmd->add_option("--subset", xo.subset, "Analyse at most this many examples");
    xai_cmd->add_option("--saliency-dir", xo.saliency_dir, "Directory of <id>.tdmp saliency dumps");
    xai_cmd->add_option("--top-k", xo.top_k, "Tokens in the concentration share")->check(CLI::PositiveNumber);
    xai_cmd->add_option("--max-new-tokens", xo.max_new_tokens, "Generation budget")->check(CLI::PositiveNumber);
    add_endpoint_options(*xai_cmd, xo.endpoints, false, false);

    ReportOptions ro;
    auto* report_cmd = app.add_subcommand("report", "Annotated stage tables from stage result files");
    report_cmd->add_option("--results", ro.results, "Stage result JSONL files in pipeline order")->required();
    report_cmd->add_option("--out", ro.out, "Output directory");
    report_cmd->add_option("--format", ro.format, "Series format")->check(CLI::IsMember({"csv", "jsonl"}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << Error(Errc::UsageError, e.what(), {{"args", args}}).to_json().dump() << '\n';
        return kExitUsage;
    }

    try {
        if (*format_cmd) return cmd_format(fmt, out);
        if (*eval_cmd) return cmd_eval(ev, out, err);
        if (*grpo_cmd) return cmd_grpo(gr, out, err);
        if (*xai_cmd) return cmd_xai(xo, out, err);
        if (*report_cmd) return cmd_report(ro, out);
    } catch (const Error& e) {
        err << e.to_json().dump() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << json{{"error", "Internal"}, {"message", e.what()}, {"details", json::object()}}.dump() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace citegauge::cli
