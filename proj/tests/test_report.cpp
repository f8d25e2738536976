#include <doctest.h>

#include <sstream>

#include "citegauge/error.hpp"
#include "citegauge/report.hpp"
#include "support.hpp"

using namespace citegauge;
using namespace citegauge::report;

namespace {

StageResult result(Stage stage, std::map<std::string, double> metrics, std::string model = "m",
                   Split lang = Split::overall) {
    return {std::move(model), stage, lang, std::move(metrics)};
}

Table table_of(std::vector<StageResult> rs) { return make_table(rs); }

}  // namespace

TEST_CASE("delta classification") {
    CHECK(classify_delta(0.005).direction == Direction::flat);
    CHECK(classify_delta(0.1).direction == Direction::up);
    CHECK(classify_delta(-0.1).direction == Direction::down);
    CHECK(classify_delta(0.0099).direction == Direction::flat);
    CHECK(classify_delta(0.01).direction == Direction::up);
    CHECK(classify_delta(-0.01).direction == Direction::down);
    CHECK(classify_delta(0.0101).direction == Direction::up);
    CHECK(classify_delta(0.11 - 0.10).direction == Direction::up);
    CHECK(classify_delta(0.0).direction == Direction::flat);
}

TEST_CASE("annotate deltas across stages") {
    auto t = annotate_deltas(table_of({result(Stage::baseline, {{"bleu", 0.100}}), result(Stage::s1, {{"bleu", 0.105}}),
                                       result(Stage::s2, {{"bleu", 0.205}}), result(Stage::s3, {{"bleu", 0.105}})}));
    CHECK_FALSE(t.rows[0].cells.at("bleu").delta);
    CHECK(t.rows[1].cells.at("bleu").delta->direction == Direction::flat);
    CHECK(t.rows[2].cells.at("bleu").delta->direction == Direction::up);
    CHECK(t.rows[3].cells.at("bleu").delta->direction == Direction::down);
}

TEST_CASE("stage order is enforced") {
    CHECK_THROWS_AS(annotate_deltas(table_of({result(Stage::s1, {{"bleu", 0.1}})})), Error);
    CHECK_THROWS_AS(annotate_deltas(table_of({result(Stage::baseline, {{"bleu", 0.1}}),
                                              result(Stage::s2, {{"bleu", 0.1}}), result(Stage::s1, {{"bleu", 0.1}})})),
                    Error);
    // Separate models and languages are independent groups.
    CHECK_NOTHROW(annotate_deltas(table_of({result(Stage::baseline, {{"bleu", 0.1}}, "a"),
                                            result(Stage::baseline, {{"bleu", 0.1}}, "b"),
                                            result(Stage::s1, {{"bleu", 0.2}}, "a"),
                                            result(Stage::baseline, {{"bleu", 0.1}}, "a", Split::hi)})));
}

TEST_CASE("best marking") {
    auto h = bold_best(table_of({result(Stage::baseline, {{"halluc_rate", 0.078}}),
                                 result(Stage::s1, {{"halluc_rate", 0.000}}), result(Stage::s2, {{"halluc_rate", 0.000}})}));
    CHECK_FALSE(h.rows[0].cells.at("halluc_rate").best);
    CHECK(h.rows[1].cells.at("halluc_rate").best);
    CHECK(h.rows[2].cells.at("halluc_rate").best);

    auto single = bold_best(table_of({result(Stage::baseline, {{"bleu", 0.3}})}));
    CHECK(single.rows[0].cells.at("bleu").best);

    auto tie = bold_best(table_of({result(Stage::baseline, {{"bleu", 0.05}}), result(Stage::s3, {{"bleu", 0.092}}),
                                   result(Stage::s4, {{"bleu", 0.092}})}));
    CHECK_FALSE(tie.rows[0].cells.at("bleu").best);
    CHECK(tie.rows[1].cells.at("bleu").best);
    CHECK(tie.rows[2].cells.at("bleu").best);
}

TEST_CASE("annotations commute") {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        std::vector<StageResult> rs;
        for (int s = 0; s < 5; ++s) {
            std::map<std::string, double> m;
            for (const auto name : kMetricRegistry) m[std::string(name)] = std::round(rng.uniform() * 100) / 100;
            rs.push_back(result(static_cast<Stage>(s), m));
        }
        const auto t = make_table(rs);
        CHECK(annotate_deltas(bold_best(t)) == bold_best(annotate_deltas(t)));
    }
}

TEST_CASE("rendering is deterministic and marks cells") {
    const auto t = bold_best(annotate_deltas(
        table_of({result(Stage::baseline, {{"bleu", 0.1}, {"halluc_rate", 0.2}}),
                  result(Stage::s1, {{"bleu", 0.3}, {"halluc_rate", 0.2}})})));
    const auto text = render_text(t);
    CHECK(text == render_text(t));
    CHECK(text.find("*0.300^*") != std::string::npos);
    CHECK(text.find("=") != std::string::npos);
}

TEST_CASE("registry validation and names") {
    CHECK(lower_is_better("halluc_rate"));
    CHECK_FALSE(lower_is_better("bleu"));
    CHECK_THROWS_AS(validate(result(Stage::baseline, {{"meteor", 0.1}})), Error);
    CHECK(stage_from_string("s3") == Stage::s3);
    CHECK_THROWS_AS(stage_from_string("s9"), Error);
    CHECK(split_from_string("hi") == Split::hi);
    CHECK_THROWS_AS(series_format_from_string("xml"), Error);
}

TEST_CASE("series emission") {
    testsupport::TempDir dir("report");
    std::vector<reward::GrpoStepRecord> recs(3);
    for (int i = 0; i < 3; ++i) {
        recs[static_cast<std::size_t>(i)].step = i + 1;
        recs[static_cast<std::size_t>(i)].prompt_id = "p";
        recs[static_cast<std::size_t>(i)].mean_reward = 0.1 * i;
    }
    emit_series(recs, SeriesFormat::csv, dir / "r.csv");
    const auto csv = testsupport::slurp(dir / "r.csv");
    std::istringstream lines(csv);
    std::string line;
    std::vector<std::string> all;
    while (std::getline(lines, line)) all.push_back(line);
    REQUIRE(all.size() == 4);
    CHECK(all[0] == "step,prompt_id,group_size,mean_reward,reward_std,kl_estimate,objective_estimate,beta,temperature");

    emit_series(recs, SeriesFormat::jsonl, dir / "r.jsonl");
    CHECK(read_step_records_jsonl(dir / "r.jsonl") == recs);

    std::vector<StageResult> rs = {result(Stage::baseline, {{"bleu", 1.0 / 3.0}, {"rouge1", 0.5}}),
                                   result(Stage::s1, {{"bleu", 0.25}, {"rouge1", 0.75}}, "m", Split::hi)};
    emit_series(rs, SeriesFormat::jsonl, dir / "s.jsonl");
    CHECK(read_stage_results_jsonl(dir / "s.jsonl") == rs);
    emit_series(rs, SeriesFormat::csv, dir / "s.csv");
    CHECK(testsupport::slurp(dir / "s.csv").rfind("model,stage,language,bleu,rouge1\n", 0) == 0);

    std::vector<StageResult> mixed = {result(Stage::baseline, {{"bleu", 0.1}}), result(Stage::s1, {{"rouge1", 0.1}})};
    try {
        emit_series(mixed, SeriesFormat::csv, dir / "m.csv");
        FAIL("expected ColumnMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ColumnMismatch);
    }
}

TEST_CASE("stage result JSON") {
    const auto r = result(Stage::s2, {{"bleu", 0.1}, {"semantic", 0.9}}, "model-x", Split::en);
    CHECK(stage_result_from_json(to_json(r)) == r);
}
