#include <doctest.h>

#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "citegauge/cli.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/report.hpp"
#include "citegauge/xai.hpp"
#include "support.hpp"

using namespace citegauge;
using nlohmann::json;
using testsupport::fixture;
using testsupport::slurp;
using testsupport::spit;
using testsupport::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<json> read_lines(const std::filesystem::path& p) {
    std::vector<json> out;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

void write_identity_predictions(const std::filesystem::path& dataset, const std::filesystem::path& out) {
    std::string text;
    for (const auto& ex : corpus::read_jsonl(dataset)) {
        text += json{{"id", ex.id}, {"prediction", ex.reference}}.dump() + "\n";
    }
    spit(out, text);
}

}  // namespace

TEST_CASE("exit code mapping") {
    CHECK(cli::exit_code_for(Errc::UsageError) == 2);
    CHECK(cli::exit_code_for(Errc::MalformedRecord) == 2);
    CHECK(cli::exit_code_for(Errc::EmptyCorpus) == 2);
    CHECK(cli::exit_code_for(Errc::BackendError) == 1);
    CHECK(cli::exit_code_for(Errc::Timeout) == 1);
    CHECK(run({"--version"}).code == 0);
    CHECK(run({"no-such-command"}).code == 2);
    CHECK(run({"eval"}).code == 2);
}

TEST_CASE("format keeps the example count and writes prompts") {
    TempDir dir("cli-format");
    auto r = run({"format", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "n.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(corpus::read_jsonl(dir / "n.jsonl").size() == 5);

    r = run({"format", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "p.jsonl").string(), "--prompts"});
    CHECK(r.code == 0);
    const auto prompts = read_lines(dir / "p.jsonl");
    REQUIRE(prompts.size() == 5);
    CHECK(prompts[0].at("prompt").get<std::string>().rfind("Query: Who designed the Eiffel Tower?\nKnowledge:\n[1] ", 0) == 0);
}

TEST_CASE("format mixture is deterministic") {
    TempDir dir("cli-mix");
    const auto args = [&](const std::string& name) {
        return std::vector<std::string>{"format", "--dataset", fixture("bilingual20.jsonl").string(), "--out",
                                        (dir / name).string(), "--mix", "0.4", "--seed", "7", "--count", "50"};
    };
    CHECK(run(args("a.jsonl")).code == 0);
    CHECK(run(args("b.jsonl")).code == 0);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    CHECK(corpus::read_jsonl(dir / "a.jsonl").size() == 50);
}

TEST_CASE("format translation keeps markers") {
    TempDir dir("cli-translate");
    const auto r = run({"format", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "t.jsonl").string(),
                        "--translate-url", "mock://devanagari"});
    CHECK(r.code == 0);
    const auto out = corpus::read_jsonl(dir / "t.jsonl");
    const auto in = corpus::read_jsonl(fixture("five.jsonl"));
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        CHECK(cite::parse_citations(out[i].reference).indices == cite::parse_citations(in[i].reference).indices);
        CHECK(out[i].language == Language::hi);
    }
}

TEST_CASE("missing input exits 2 with error JSON") {
    TempDir dir("cli-missing");
    const auto r = run({"format", "--dataset", (dir / "absent.jsonl").string(), "--out", (dir / "o.jsonl").string()});
    CHECK(r.code == 2);
    const auto e = json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(e.at("error") == "IoError");
    CHECK(e.contains("message"));
    CHECK(e.contains("details"));
}

TEST_CASE("eval with identity predictions") {
    TempDir dir("cli-eval-id");
    write_identity_predictions(fixture("five.jsonl"), dir / "pred.jsonl");
    const auto r = run({"eval", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "o").string(),
                        "--predictions", (dir / "pred.jsonl").string(), "--nli-url", "mock://nli-fixed?p=1.0"});
    REQUIRE(r.code == 0);
    const auto results = report::read_stage_results_jsonl(dir / "o" / "stage_results.jsonl");
    REQUIRE(results.size() == 3);
    for (const auto& res : results) {
        CHECK(res.metrics.at("bleu") == 1.0);
        CHECK(res.metrics.at("rouge1") == 1.0);
        CHECK(res.metrics.at("rougeL") == 1.0);
        CHECK(res.metrics.at("citation_f1") == 1.0);
        CHECK(res.metrics.at("halluc_rate") == 0.0);
    }
    CHECK(results[0].language == report::Split::overall);
    CHECK(results[1].language == report::Split::en);
    CHECK(results[2].language == report::Split::hi);
    CHECK(read_lines(dir / "o" / "per_example.jsonl").size() == 5);
}

TEST_CASE("eval scoring switches") {
    TempDir dir("cli-eval-switch");
    spit(dir / "d.jsonl",
         R"({"id":"a","query":"Which letters?","knowledge":["a b c d"],"reference":"a b c d"})"
         "\n");
    spit(dir / "p.jsonl", R"({"id":"a","prediction":"a b"})"
                          "\n");
    const auto metrics = [&](const std::string& name, std::vector<std::string> extra) {
        std::vector<std::string> args = {"eval", "--dataset", (dir / "d.jsonl").string(), "--out", (dir / name).string(),
                                         "--predictions", (dir / "p.jsonl").string(), "--nli-url", "mock://nli-fixed?p=1.0"};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(run(args).code == 0);
        return report::read_stage_results_jsonl(dir / name / "stage_results.jsonl").at(0).metrics;
    };
    const auto plain = metrics("plain", {});
    CHECK(plain.at("rouge1") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(plain.at("citation_f1") == 1.0);
    const auto strict = metrics("strict", {"--rouge", "recall", "--empty-citations", "zero"});
    CHECK(strict.at("rouge1") == 0.5);
    CHECK(strict.at("rougeL") == 0.5);
    CHECK(strict.at("citation_f1") == 0.0);
    CHECK(run({"eval", "--dataset", (dir / "d.jsonl").string(), "--out", (dir / "x").string(), "--rouge", "precision"})
              .code == 2);
}

TEST_CASE("grpo log-prob reduction switch") {
    TempDir dir("cli-grpo-red");
    const auto first = [&](const std::string& name, const std::string& reduction) {
        REQUIRE(run({"grpo", "--dataset", fixture("grpo2.jsonl").string(), "--out", (dir / name).string(), "--steps", "1",
                     "--backend-url", "mock://sampler?salt=1", "--ref-backend-url", "mock://sampler?salt=2", "--nli-url",
                     "mock://nli-overlap", "--logprob-reduction", reduction})
                    .code == 0);
        return report::read_step_records_jsonl(dir / name / "grpo_steps.jsonl").at(0);
    };
    const auto sum = first("sum", "sum");
    const auto mean = first("mean", "token-mean");
    CHECK(sum.mean_reward == mean.mean_reward);
    CHECK(sum.kl_estimate == mean.kl_estimate);
    CHECK(sum.objective_estimate != mean.objective_estimate);
}

TEST_CASE("eval with mock generation is deterministic") {
    TempDir dir("cli-eval-gen");
    const auto args = [&](const std::string& name) {
        return std::vector<std::string>{"eval", "--dataset", fixture("five.jsonl").string(), "--out", (dir / name).string(),
                                        "--backend-url", "mock://grounded", "--nli-url", "mock://nli-overlap",
                                        "--embed-url", "mock://hash-embed", "--max-in-flight", "3"};
    };
    CHECK(run(args("a")).code == 0);
    CHECK(run(args("b")).code == 0);
    for (const auto* f : {"per_example.jsonl", "stage_results.jsonl", "report.txt"}) {
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    const auto results = report::read_stage_results_jsonl(dir / "a" / "stage_results.jsonl");
    CHECK(results[0].metrics.contains("semantic"));
}

TEST_CASE("eval on an empty dataset") {
    TempDir dir("cli-eval-empty");
    spit(dir / "empty.jsonl", "");
    const auto r = run({"eval", "--dataset", (dir / "empty.jsonl").string(), "--out", (dir / "o").string(),
                        "--backend-url", "mock://echo", "--nli-url", "mock://nli-fixed"});
    CHECK(r.code == 2);
    CHECK(r.err.find("EmptyCorpus") != std::string::npos);
}

TEST_CASE("eval records failing examples in the manifest") {
    httplib::Server server;
    server.Post("/generate", [](const httplib::Request& req, httplib::Response& res) {
        if (req.body.find("Apollo") != std::string::npos) {
            res.status = 500;
            res.set_content("boom", "text/plain");
            return;
        }
        res.set_content(R"({"text":"An answer [1]."})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    TempDir dir("cli-eval-fail");
    const auto r = run({"eval", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "o").string(),
                        "--backend-url", "http://127.0.0.1:" + std::to_string(port), "--nli-url",
                        "mock://nli-fixed?p=0.9", "--embed-url", "mock://hash-embed", "--retries", "1"});
    server.stop();
    t.join();
    CHECK(r.code == 1);
    CHECK(r.err.find("BackendError") != std::string::npos);
    const auto manifest = json::parse(slurp(dir / "o" / "manifest.json"));
    CHECK(manifest.at("completed").size() == 4);
    REQUIRE(manifest.at("failed").size() == 1);
    CHECK(manifest.at("failed")[0].at("id") == "en-02");
    CHECK(read_lines(dir / "o" / "per_example.jsonl").size() == 4);
}

TEST_CASE("grpo writes steps times prompts records with the default settings") {
    TempDir dir("cli-grpo");
    const auto r = run({"grpo", "--dataset", fixture("grpo2.jsonl").string(), "--out", (dir / "o").string(), "--steps",
                        "3", "--backend-url", "mock://sampler?salt=1", "--ref-backend-url", "mock://sampler?salt=2",
                        "--nli-url", "mock://nli-overlap"});
    REQUIRE(r.code == 0);
    const auto recs = report::read_step_records_jsonl(dir / "o" / "grpo_steps.jsonl");
    CHECK(recs.size() == 6);
    for (const auto& rec : recs) {
        CHECK(rec.group_size == 4);
        CHECK(rec.beta == 0.04);
        CHECK(rec.temperature == 0.7);
        CHECK(rec.reward_std >= 0.0);
    }
}

TEST_CASE("grpo resume after an interrupt continues without duplicates") {
    TempDir dir("cli-grpo-resume");
    const std::vector<std::string> base = {"grpo", "--dataset", fixture("grpo2.jsonl").string(), "--out",
                                           (dir / "o").string(), "--steps", "5", "--backend-url",
                                           "mock://sampler?salt=1", "--ref-backend-url", "mock://sampler?salt=2",
                                           "--nli-url", "mock://nli-overlap", "--seed", "3"};
    auto interrupted = base;
    interrupted.insert(interrupted.end(), {"--stop-after", "2"});
    const auto first = run(interrupted);
    CHECK(first.code == 1);
    CHECK(first.err.find("Interrupted") != std::string::npos);
    CHECK(json::parse(slurp(dir / "o" / "grpo_checkpoint.json")).at("last_step") == 2);

    auto resumed = base;
    resumed.push_back("--resume");
    CHECK(run(resumed).code == 0);
    const auto recs = report::read_step_records_jsonl(dir / "o" / "grpo_steps.jsonl");
    REQUIRE(recs.size() == 10);
    std::set<std::pair<int, std::string>> keys;
    for (const auto& rec : recs) keys.insert({rec.step, rec.prompt_id});
    CHECK(keys.size() == 10);
    CHECK(recs.back().step == 5);

    // The same run done in one go produces the same bytes.
    TempDir whole("cli-grpo-whole");
    auto straight = base;
    straight[4] = (whole / "o").string();
    CHECK(run(straight).code == 0);
    CHECK(slurp(whole / "o" / "grpo_steps.jsonl") == slurp(dir / "o" / "grpo_steps.jsonl"));

    // Resuming with different settings is refused.
    auto changed = resumed;
    changed[6] = "6";
    changed.insert(changed.end(), {"--beta", "0.5"});
    CHECK(run(changed).code == 2);
}

TEST_CASE("grpo 500-step run with one prompt per step") {
    TempDir dir("cli-grpo-500");
    const auto r = run({"grpo", "--dataset", fixture("grpo2.jsonl").string(), "--out", (dir / "o").string(), "--batch",
                        "1", "--group-size", "2", "--backend-url", "mock://sampler?salt=1", "--ref-backend-url",
                        "mock://sampler?salt=2", "--nli-url", "mock://nli-fixed?p=0.9"});
    REQUIRE(r.code == 0);
    const auto recs = report::read_step_records_jsonl(dir / "o" / "grpo_steps.jsonl");
    REQUIRE(recs.size() == 500);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].step == static_cast<int>(i) + 1);
}

TEST_CASE("xai honours the subset cap and reports alignment") {
    TempDir dir("cli-xai");
    const auto r = run({"xai", "--dataset", fixture("bilingual20.jsonl").string(), "--out", (dir / "o").string(),
                        "--subset", "3", "--backend-url", "mock://grounded?attn=" + (dir / "attn").string()});
    REQUIRE(r.code == 0);
    const auto rows = read_lines(dir / "o" / "xai.jsonl");
    CHECK(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.at("alignment").contains("value"));
    }
    const auto summary = json::parse(slurp(dir / "o" / "xai_summary.json"));
    CHECK(summary.at("examples") == 3);
}

TEST_CASE("xai with the always-cite mock grounds nothing") {
    TempDir dir("cli-xai-always");
    const auto r = run({"xai", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "o").string(),
                        "--backend-url", "mock://always-cite"});
    REQUIRE(r.code == 0);
    for (const auto& row : read_lines(dir / "o" / "xai.jsonl")) {
        CHECK(row.at("grounding").at("score") == 0.0);
    }
    CHECK(json::parse(slurp(dir / "o" / "xai_summary.json")).at("grounding_mean") == 0.0);
}

TEST_CASE("xai propagates an undefined saliency dump") {
    TempDir dir("cli-xai-sal");
    std::filesystem::create_directories(dir / "sal");
    xai::SaliencyDump zeros;
    zeros.scores.assign(6, 0.0f);
    xai::write_tensor_dump(dir / "sal" / "en-01.tdmp", zeros);
    xai::SaliencyDump ok;
    ok.scores = {1, 1, 1, 1};
    xai::write_tensor_dump(dir / "sal" / "en-02.tdmp", ok);
    const auto r = run({"xai", "--dataset", fixture("five.jsonl").string(), "--out", (dir / "o").string(),
                        "--backend-url", "mock://grounded", "--saliency-dir", (dir / "sal").string()});
    REQUIRE(r.code == 0);
    const auto rows = read_lines(dir / "o" / "xai.jsonl");
    CHECK(rows[0].at("saliency").at("status") == "undefined");
    CHECK(rows[0].at("saliency").at("entropy").is_null());
    CHECK(rows[1].at("saliency").at("status") == "ok");
    CHECK(rows[2].at("saliency").at("status") == "missing");
    CHECK(json::parse(slurp(dir / "o" / "xai_summary.json")).at("saliency_undefined") == 1);
}

TEST_CASE("report over stage result files") {
    TempDir dir("cli-report");
    write_identity_predictions(fixture("five.jsonl"), dir / "pred.jsonl");
    for (const auto* stage : {"baseline", "s1"}) {
        CHECK(run({"eval", "--dataset", fixture("five.jsonl").string(), "--out", (dir / stage).string(), "--predictions",
                   (dir / "pred.jsonl").string(), "--nli-url", "mock://nli-fixed?p=1.0", "--stage", stage})
                  .code == 0);
    }
    const auto r = run({"report", "--results", (dir / "baseline" / "stage_results.jsonl").string(),
                        (dir / "s1" / "stage_results.jsonl").string(), "--out", (dir / "rep").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("=") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "rep" / "table.txt"));
    CHECK(std::filesystem::exists(dir / "rep" / "stage_series.csv"));

    const auto bad = run({"report", "--results", (dir / "s1" / "stage_results.jsonl").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("StageOrderError") != std::string::npos);
}

TEST_CASE("config file supplies options and flags override it") {
    TempDir dir("cli-config");
    spit(dir / "run.toml", "[eval]\nnli-url = \"mock://nli-fixed?p=1.0\"\nmodel = \"from-config\"\n");
    write_identity_predictions(fixture("five.jsonl"), dir / "pred.jsonl");
    CHECK(run({"--config", (dir / "run.toml").string(), "eval", "--dataset", fixture("five.jsonl").string(), "--out",
               (dir / "a").string(), "--predictions", (dir / "pred.jsonl").string()})
              .code == 0);
    CHECK(report::read_stage_results_jsonl(dir / "a" / "stage_results.jsonl")[0].model == "from-config");
    CHECK(run({"--config", (dir / "run.toml").string(), "eval", "--dataset", fixture("five.jsonl").string(), "--out",
               (dir / "b").string(), "--predictions", (dir / "pred.jsonl").string(), "--model", "flag"})
              .code == 0);
    CHECK(report::read_stage_results_jsonl(dir / "b" / "stage_results.jsonl")[0].model == "flag");
}
