// SPDX-License-Identifier: Apache-2.0

#include "citegauge/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "citegauge/error.hpp"

namespace citegauge::report {

using nlohmann::json;

namespace {

constexpr double kTieTolerance = 1e-12;

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string(), {{"path", path.string()}});
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string(), {{"path", path.string()}});
}

template <class Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, std::string("bad record: ") + e.what(),
                        {{"path", path.string()}, {"line", line_no}});
        }
    }
}

/// Rows grouped by (model, language), each group in row order.
std::map<std::pair<std::string, Split>, std::vector<std::size_t>> groups_of(const Table& table) {
    std::map<std::pair<std::string, Split>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        groups[{table.rows[i].model, table.rows[i].language}].push_back(i);
    }
    return groups;
}

}  // namespace

bool is_registered_metric(std::string_view name) noexcept {
    return std::find(kMetricRegistry.begin(), kMetricRegistry.end(), name) != kMetricRegistry.end();
}

bool lower_is_better(std::string_view metric) noexcept { return metric == "halluc_rate"; }

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::baseline: return "baseline";
        case Stage::s1: return "s1";
        case Stage::s2: return "s2";
        case Stage::s3: return "s3";
        case Stage::s4: return "s4";
    }
    return "baseline";
}

std::string_view to_string(Split split) noexcept {
    switch (split) {
        case Split::overall: return "overall";
        case Split::en: return "en";
        case Split::hi: return "hi";
    }
    return "overall";
}

Stage stage_from_string(std::string_view name) {
    for (const auto s : {Stage::baseline, Stage::s1, Stage::s2, Stage::s3, Stage::s4}) {
        if (to_string(s) == name) return s;
    }
    throw Error(Errc::InvalidConfig, "unknown stage '" + std::string(name) + "'");
}

Split split_from_string(std::string_view name) {
    for (const auto s : {Split::overall, Split::en, Split::hi}) {
        if (to_string(s) == name) return s;
    }
    throw Error(Errc::InvalidConfig, "unknown language split '" + std::string(name) + "'");
}

void validate(const StageResult& result) {
    for (const auto& [name, value] : result.metrics) {
        if (!is_registered_metric(name)) {
            throw Error(Errc::InvalidConfig, "unknown metric '" + name + "'", {{"model", result.model}});
        }
    }
}

json to_json(const StageResult& r) {
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = v;
    return {{"model", r.model},
            {"stage", to_string(r.stage)},
            {"language", to_string(r.language)},
            {"metrics", std::move(metrics)}};
}

StageResult stage_result_from_json(const json& j) {
    StageResult r;
    r.model = j.at("model").get<std::string>();
    r.stage = stage_from_string(j.at("stage").get<std::string>());
    r.language = split_from_string(j.at("language").get<std::string>());
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
    validate(r);
    return r;
}

std::string_view to_string(Direction d) noexcept {
    switch (d) {
        case Direction::up: return "up";
        case Direction::down: return "down";
        case Direction::flat: return "flat";
    }
    return "flat";
}

DeltaAnnotation classify_delta(double delta) noexcept {
    const double magnitude = std::round(std::abs(delta) * 1e9) / 1e9;
    if (magnitude < kFlatThreshold) return {Direction::flat, delta};
    return {delta > 0 ? Direction::up : Direction::down, delta};
}

Table make_table(std::span<const StageResult> results) {
    Table t;
    for (const auto& r : results) {
        validate(r);
        Row row{r.model, r.stage, r.language, {}};
        for (const auto& [k, v] : r.metrics) row.cells[k] = Cell{v, std::nullopt, false};
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table annotate_deltas(Table table) {
    for (const auto& [key, indices] : groups_of(table)) {
        const auto& first = table.rows[indices.front()];
        if (first.stage != Stage::baseline) {
            throw Error(Errc::StageOrderError, "stage sequence must start at baseline",
                        {{"model", key.first}, {"language", to_string(key.second)}, {"first", to_string(first.stage)}});
        }
        for (std::size_t k = 1; k < indices.size(); ++k) {
            const auto& prev = table.rows[indices[k - 1]];
            auto& row = table.rows[indices[k]];
            if (static_cast<int>(row.stage) <= static_cast<int>(prev.stage)) {
                throw Error(Errc::StageOrderError, "stages out of pipeline order",
                            {{"model", key.first},
                             {"language", to_string(key.second)},
                             {"previous", to_string(prev.stage)},
                             {"stage", to_string(row.stage)}});
            }
            for (auto& [metric, cell] : row.cells) {
                const auto it = prev.cells.find(metric);
                if (it != prev.cells.end()) cell.delta = classify_delta(cell.value - it->second.value);
            }
        }
    }
    return table;
}

Table bold_best(Table table) {
    for (const auto& [key, indices] : groups_of(table)) {
        std::set<std::string> metrics;
        for (const auto i : indices) {
            for (const auto& [m, c] : table.rows[i].cells) metrics.insert(m);
        }
        for (const auto& m : metrics) {
            const bool lower = lower_is_better(m);
            std::optional<double> best;
            for (const auto i : indices) {
                const auto it = table.rows[i].cells.find(m);
                if (it == table.rows[i].cells.end() || std::isnan(it->second.value)) continue;
                const double v = it->second.value;
                if (!best || (lower ? v < *best : v > *best)) best = v;
            }
            if (!best) continue;
            for (const auto i : indices) {
                const auto it = table.rows[i].cells.find(m);
                if (it == table.rows[i].cells.end()) continue;
                it->second.best = std::abs(it->second.value - *best) <= kTieTolerance;
            }
        }
    }
    return table;
}

std::string render_text(const Table& table) {
    std::vector<std::string> metrics;
    for (const auto name : kMetricRegistry) {
        const bool present = std::any_of(table.rows.begin(), table.rows.end(),
                                         [&](const Row& r) { return r.cells.contains(std::string(name)); });
        if (present) metrics.emplace_back(name);
    }
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header = {"model", "stage", "lang"};
    header.insert(header.end(), metrics.begin(), metrics.end());
    grid.push_back(header);
    for (const auto& r : table.rows) {
        std::vector<std::string> line = {r.model, std::string(to_string(r.stage)), std::string(to_string(r.language))};
        for (const auto& m : metrics) {
            const auto it = r.cells.find(m);
            if (it == r.cells.end()) {
                line.emplace_back("-");
                continue;
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", it->second.value);
            std::string cell = buf;
            if (it->second.delta) {
                switch (it->second.delta->direction) {
                    case Direction::up: cell += "^"; break;
                    case Direction::down: cell += "v"; break;
                    case Direction::flat: cell += "="; break;
                }
            }
            if (it->second.best) cell = "*" + cell + "*";
            line.push_back(std::move(cell));
        }
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
    }
    std::ostringstream out;
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (c) out << "  ";
            out << line[c];
            if (c + 1 < line.size()) out << std::string(widths[c] - line[c].size(), ' ');
        }
        out << '\n';
    }
    return out.str();
}

SeriesFormat series_format_from_string(std::string_view name) {
    if (name == "csv") return SeriesFormat::csv;
    if (name == "jsonl") return SeriesFormat::jsonl;
    throw Error(Errc::UsageError, "format must be csv or jsonl", {{"format", std::string(name)}});
}

void emit_series(std::span<const reward::GrpoStepRecord> records, SeriesFormat format,
                 const std::filesystem::path& path) {
    auto out = open_output(path);
    if (format == SeriesFormat::jsonl) {
        for (const auto& r : records) out << reward::to_json(r).dump() << '\n';
    } else {
        out << "step,prompt_id,group_size,mean_reward,reward_std,kl_estimate,objective_estimate,beta,temperature\n";
        for (const auto& r : records) {
            out << r.step << ',' << csv_field(r.prompt_id) << ',' << r.group_size << ','
                << format_number(r.mean_reward) << ',' << format_number(r.reward_std) << ','
                << format_number(r.kl_estimate) << ',' << format_number(r.objective_estimate) << ','
                << format_number(r.beta) << ',' << format_number(r.temperature) << '\n';
        }
    }
    finish(out, path);
}

void emit_series(std::span<const StageResult> results, SeriesFormat format, const std::filesystem::path& path) {
    std::vector<std::string> columns;
    for (std::size_t i = 0; i < results.size(); ++i) {
        validate(results[i]);
        std::vector<std::string> mine;
        for (const auto name : kMetricRegistry) {
            if (results[i].metrics.contains(std::string(name))) mine.emplace_back(name);
        }
        if (i == 0) {
            columns = std::move(mine);
        } else if (mine != columns) {
            throw Error(Errc::ColumnMismatch, "stage results carry different metric sets",
                        {{"row", i}, {"expected", columns}, {"got", mine}});
        }
    }

    auto out = open_output(path);
    if (format == SeriesFormat::jsonl) {
        for (const auto& r : results) out << to_json(r).dump() << '\n';
    } else {
        out << "model,stage,language";
        for (const auto& c : columns) out << ',' << c;
        out << '\n';
        for (const auto& r : results) {
            out << csv_field(r.model) << ',' << to_string(r.stage) << ',' << to_string(r.language);
            for (const auto& c : columns) out << ',' << format_number(r.metrics.at(c));
            out << '\n';
        }
    }
    finish(out, path);
}

std::vector<StageResult> read_stage_results_jsonl(const std::filesystem::path& path) {
    std::vector<StageResult> out;
    for_each_line(path, [&](const json& j) { out.push_back(stage_result_from_json(j)); });
    return out;
}

std::vector<reward::GrpoStepRecord> read_step_records_jsonl(const std::filesystem::path& path) {
    std::vector<reward::GrpoStepRecord> out;
    for_each_line(path, [&](const json& j) { out.push_back(reward::step_record_from_json(j)); });
    return out;
}

}  // namespace citegauge::report
