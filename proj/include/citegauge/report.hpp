// SPDX-License-Identifier: Apache-2.0
//
// Stage result tables: delta arrows between consecutive stages, best-value
// marking, a plain-text renderer, and CSV/JSONL data series.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citegauge/reward.hpp"

namespace citegauge::report {

inline constexpr std::array<std::string_view, 7> kMetricRegistry = {
    "bleu", "rouge1", "rougeL", "factscore", "citation_f1", "halluc_rate", "semantic"};

bool is_registered_metric(std::string_view name) noexcept;
bool lower_is_better(std::string_view metric) noexcept;

enum class Stage { baseline, s1, s2, s3, s4 };
enum class Split { overall, en, hi };

std::string_view to_string(Stage stage) noexcept;
std::string_view to_string(Split split) noexcept;
/// Throw Error(InvalidConfig) for unknown names.
Stage stage_from_string(std::string_view name);
Split split_from_string(std::string_view name);

struct StageResult {
    std::string model;
    Stage stage = Stage::baseline;
    Split language = Split::overall;
    std::map<std::string, double> metrics;

    bool operator==(const StageResult&) const = default;
};

/// Throws Error(InvalidConfig) for a metric outside the registry.
void validate(const StageResult& result);

nlohmann::json to_json(const StageResult& result);
StageResult stage_result_from_json(const nlohmann::json& j);

// Deltas -------------------------------------------------------------------

inline constexpr double kFlatThreshold = 0.01;

enum class Direction { up, down, flat };

std::string_view to_string(Direction d) noexcept;

struct DeltaAnnotation {
    Direction direction = Direction::flat;
    double delta = 0.0;

    bool operator==(const DeltaAnnotation&) const = default;
};

/// Flat iff |delta| < 0.01. The magnitude is first rounded to 1e-9 so that
/// differences such as 0.11 - 0.10 land on the boundary they denote.
DeltaAnnotation classify_delta(double delta) noexcept;

// Tables -------------------------------------------------------------------

struct Cell {
    double value = 0.0;
    std::optional<DeltaAnnotation> delta;
    bool best = false;

    bool operator==(const Cell&) const = default;
};

struct Row {
    std::string model;
    Stage stage = Stage::baseline;
    Split language = Split::overall;
    std::map<std::string, Cell> cells;

    bool operator==(const Row&) const = default;
};

struct Table {
    std::vector<Row> rows;

    bool operator==(const Table&) const = default;
};

Table make_table(std::span<const StageResult> results);

/// Within each (model, language) group, in row order, annotates every cell
/// against the same metric in the previous row. Baseline rows stay bare.
/// Throws Error(StageOrderError) unless each group starts at baseline and
/// its stages strictly increase.
Table annotate_deltas(Table table);

/// Marks the best value of every metric within each (model, language)
/// group: the maximum, or the minimum for halluc_rate. Values within 1e-12
/// of the best are ties and are all marked.
Table bold_best(Table table);

/// Fixed-width text rendering: values to three decimals, "^"/"v"/"=" after
/// annotated values and "*" around marked ones.
std::string render_text(const Table& table);

// Series -------------------------------------------------------------------

enum class SeriesFormat { csv, jsonl };

SeriesFormat series_format_from_string(std::string_view name);

/// Columns: step, prompt_id, group_size, mean_reward, reward_std,
/// kl_estimate, objective_estimate, beta, temperature.
void emit_series(std::span<const reward::GrpoStepRecord> records, SeriesFormat format,
                 const std::filesystem::path& path);

/// Columns: model, stage, language, then the metrics in registry order.
/// Throws Error(ColumnMismatch) when results carry different metric sets.
void emit_series(std::span<const StageResult> results, SeriesFormat format, const std::filesystem::path& path);

std::vector<StageResult> read_stage_results_jsonl(const std::filesystem::path& path);
std::vector<reward::GrpoStepRecord> read_step_records_jsonl(const std::filesystem::path& path);

}  // namespace citegauge::report
