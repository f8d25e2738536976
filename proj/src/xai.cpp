// SPDX-License-Identifier: Apache-2.0

#include "citegauge/xai.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include "citegauge/error.hpp"
#include "citegauge/parallel.hpp"

namespace citegauge::xai {

using nlohmann::json;

namespace {

constexpr std::size_t kChunkValues = 1 << 16;

std::uint32_t to_little(std::uint32_t v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
    return v;
}

json spans_to_json(std::span<const cite::Span> spans) {
    json out = json::array();
    for (const auto& s : spans) out.push_back({s.begin, s.end});
    return out;
}

std::vector<cite::Span> spans_from_json(const json& j) {
    if (!j.is_array()) throw Error(Errc::FormatError, "token_spans must be an array", {{"offset", 0}});
    std::vector<cite::Span> out;
    out.reserve(j.size());
    for (const auto& s : j) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
            throw Error(Errc::FormatError, "token span must be [begin, end]", {{"offset", 0}});
        }
        out.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    return out;
}

void write_payload(std::ofstream& out, std::span<const float> values) {
    std::vector<std::uint32_t> chunk;
    chunk.reserve(std::min(values.size(), kChunkValues));
    for (std::size_t i = 0; i < values.size(); i += kChunkValues) {
        chunk.clear();
        const std::size_t end = std::min(values.size(), i + kChunkValues);
        for (std::size_t k = i; k < end; ++k) chunk.push_back(to_little(std::bit_cast<std::uint32_t>(values[k])));
        out.write(reinterpret_cast<const char*>(chunk.data()),
                  static_cast<std::streamsize>(chunk.size() * sizeof(std::uint32_t)));
    }
}

}  // namespace

void validate(const AttentionDump& d) {
    const std::size_t expected = d.layers * d.heads * d.out_len * d.in_len;
    if (d.weights.size() != expected) {
        throw Error(Errc::ShapeMismatch, "attention weights do not match dims",
                    {{"expected", expected}, {"got", d.weights.size()}});
    }
    if (!d.input_token_spans.empty() && d.input_token_spans.size() != d.in_len) {
        throw Error(Errc::ShapeMismatch, "one token span per input token is required",
                    {{"in_len", d.in_len}, {"token_spans", d.input_token_spans.size()}});
    }
    for (std::size_t l = 0; l < d.layers; ++l) {
        for (std::size_t h = 0; h < d.heads; ++h) {
            for (std::size_t o = 0; o < d.out_len; ++o) {
                double sum = 0.0;
                bool valid = true;
                for (std::size_t i = 0; i < d.in_len; ++i) {
                    const float w = d.at(l, h, o, i);
                    valid = valid && std::isfinite(w) && w >= 0.0f;
                    sum += w;
                }
                if (!valid || std::abs(sum - 1.0) > kStochasticTolerance) {
                    throw Error(Errc::NonStochastic, "attention row is not a probability distribution",
                                {{"layer", l}, {"head", h}, {"out", o}, {"sum", sum}});
                }
            }
        }
    }
}

void write_tensor_dump(const std::filesystem::path& path, const TensorDump& dump) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string(), {{"path", path.string()}});
    json header;
    std::span<const float> payload;
    if (const auto* a = std::get_if<AttentionDump>(&dump)) {
        header = {{"kind", "attention"},
                  {"dims", {a->layers, a->heads, a->out_len, a->in_len}},
                  {"token_spans", spans_to_json(a->input_token_spans)}};
        payload = a->weights;
    } else {
        const auto& s = std::get<SaliencyDump>(dump);
        header = {{"kind", "saliency"}, {"dims", {s.scores.size()}}, {"token_spans", spans_to_json(s.token_spans)}};
        if (s.undefined) header["undefined"] = true;
        payload = s.scores;
    }
    out << header.dump() << '\n';
    write_payload(out, payload);
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string(), {{"path", path.string()}});
}

TensorDump read_tensor_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});

    std::string line;
    if (!std::getline(in, line) || in.eof()) {
        throw Error(Errc::FormatError, "missing header line terminator", {{"offset", line.size()}});
    }
    const std::size_t header_bytes = line.size() + 1;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(Errc::FormatError, std::string("invalid header: ") + e.what(), {{"offset", e.byte}});
    }
    if (!header.is_object() || !header.contains("kind") || !header.at("kind").is_string() ||
        !header.contains("dims") || !header.at("dims").is_array()) {
        throw Error(Errc::FormatError, "header needs 'kind' and 'dims'", {{"offset", 0}});
    }
    const auto kind = header.at("kind").get<std::string>();
    std::vector<std::size_t> dims;
    for (const auto& d : header.at("dims")) {
        if (!d.is_number_unsigned()) throw Error(Errc::FormatError, "dims must be non-negative integers", {{"offset", 0}});
        dims.push_back(d.get<std::size_t>());
    }
    if ((kind == "attention" && dims.size() != 4) || (kind == "saliency" && dims.size() != 1)) {
        throw Error(Errc::ShapeMismatch, "wrong number of dims for kind " + kind, {{"dims", dims}});
    }
    if (kind != "attention" && kind != "saliency") {
        throw Error(Errc::FormatError, "unknown dump kind '" + kind + "'", {{"offset", 0}});
    }
    std::size_t count = 1;
    for (const auto d : dims) {
        if (d != 0 && count > std::numeric_limits<std::size_t>::max() / sizeof(float) / d) {
            throw Error(Errc::ShapeMismatch, "dims overflow", {{"dims", dims}});
        }
        count *= d;
    }
    auto spans = spans_from_json(header.value("token_spans", json::array()));

    std::vector<float> values;
    values.reserve(std::min(count, kChunkValues));
    std::vector<std::uint32_t> chunk(kChunkValues);
    while (values.size() < count) {
        const std::size_t want = std::min(kChunkValues, count - values.size());
        in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(want * sizeof(float)));
        const auto got_bytes = static_cast<std::size_t>(in.gcount());
        if (got_bytes % sizeof(float) != 0) {
            throw Error(Errc::FormatError, "payload ends inside a value",
                        {{"offset", header_bytes + values.size() * sizeof(float) + got_bytes}});
        }
        for (std::size_t k = 0; k < got_bytes / sizeof(float); ++k) {
            values.push_back(std::bit_cast<float>(to_little(chunk[k])));
        }
        if (got_bytes < want * sizeof(float)) {
            throw Error(Errc::ShapeMismatch, "payload shorter than dims imply",
                        {{"expected", count}, {"got", values.size()}});
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        in.ignore(std::numeric_limits<std::streamsize>::max());
        const auto extra = static_cast<std::size_t>(in.gcount());
        const std::size_t offset = header_bytes + count * sizeof(float);
        if (extra % sizeof(float) != 0) {
            throw Error(Errc::FormatError, "payload ends inside a value", {{"offset", offset + extra}});
        }
        throw Error(Errc::ShapeMismatch, "payload longer than dims imply", {{"expected", count}, {"offset", offset}});
    }

    if (kind == "attention") {
        AttentionDump a;
        a.layers = dims[0];
        a.heads = dims[1];
        a.out_len = dims[2];
        a.in_len = dims[3];
        a.weights = std::move(values);
        a.input_token_spans = std::move(spans);
        validate(a);
        return a;
    }
    SaliencyDump s;
    s.scores = std::move(values);
    s.token_spans = std::move(spans);
    s.undefined = header.value("undefined", false);
    if (!s.token_spans.empty() && s.token_spans.size() != s.scores.size()) {
        throw Error(Errc::ShapeMismatch, "one token span per score is required",
                    {{"scores", s.scores.size()}, {"token_spans", s.token_spans.size()}});
    }
    return s;
}

std::set<std::size_t> cited_token_indices(std::span<const cite::Span> token_spans,
                                          std::span<const cite::Span> passage_spans,
                                          const std::set<cite::Index>& cited_passages) {
    std::set<std::size_t> out;
    for (const auto passage : cited_passages) {
        if (passage < 1 || static_cast<std::size_t>(passage) > passage_spans.size()) continue;
        const auto& p = passage_spans[static_cast<std::size_t>(passage - 1)];
        for (std::size_t t = 0; t < token_spans.size(); ++t) {
            if (token_spans[t].begin >= p.begin && token_spans[t].end <= p.end) out.insert(t);
        }
    }
    return out;
}

double attention_alignment(const AttentionDump& dump, const std::set<std::size_t>& cited_tokens) {
    for (const auto t : cited_tokens) {
        if (t >= dump.in_len) {
            throw Error(Errc::IndexOutOfRange, "cited token index beyond the input length",
                        {{"index", t}, {"in_len", dump.in_len}});
        }
    }
    validate(dump);
    const std::size_t cells = dump.layers * dump.heads * dump.out_len * cited_tokens.size();
    if (cells == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t l = 0; l < dump.layers; ++l) {
        for (std::size_t h = 0; h < dump.heads; ++h) {
            for (std::size_t o = 0; o < dump.out_len; ++o) {
                for (const auto t : cited_tokens) sum += dump.at(l, h, o, t);
            }
        }
    }
    return sum / static_cast<double>(cells);
}

std::optional<SaliencyStats> saliency_summary(const SaliencyDump& dump, std::size_t top_k) {
    if (dump.undefined || dump.scores.empty()) return std::nullopt;
    std::vector<double> p;
    p.reserve(dump.scores.size());
    double total = 0.0;
    for (const float s : dump.scores) {
        if (!std::isfinite(s)) return std::nullopt;
        p.push_back(std::abs(static_cast<double>(s)));
        total += p.back();
    }
    if (!(total > 0.0) || !std::isfinite(total)) return std::nullopt;

    SaliencyStats stats;
    for (auto& v : p) {
        v /= total;
        if (v > 0.0) stats.entropy -= v * std::log(v);
    }
    const std::size_t k = std::min(top_k, p.size());
    std::partial_sort(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k), p.end(), std::greater<>());
    for (std::size_t i = 0; i < k; ++i) stats.concentration += p[i];
    stats.concentration = std::min(stats.concentration, 1.0);
    return stats;
}

json to_json(const GroundingResult& r) {
    json details = json::array();
    for (const auto& d : r.details) details.push_back({{"index", d.index}, {"disappeared", d.disappeared}});
    return {{"total_citations", r.total_citations},
            {"disappeared", r.disappeared},
            {"score", r.score ? json(*r.score) : json(nullptr)},
            {"citations", std::move(details)}};
}

GroundingResult occlusion_grounding_from(const corpus::DialogueExample& example, const std::string& baseline,
                                         backends::GenerationBackend& gen, const OcclusionOptions& options) {
    corpus::validate_knowledge(example.knowledge, example.id);
    GroundingResult result;
    result.baseline = baseline;

    const auto n = static_cast<cite::Index>(example.knowledge.size());
    std::vector<cite::Index> cited;
    for (const auto i : cite::parse_citations(baseline).distinct()) {
        if (i >= 1 && i <= n) cited.push_back(i);
    }
    result.total_citations = cited.size();
    if (cited.empty()) return result;

    result.details.resize(cited.size());
    parallel_for(cited.size(), options.max_in_flight, [&](std::size_t k) {
        const auto index = cited[k];
        const auto reduced = corpus::without_passage(example.knowledge, static_cast<int>(index));
        backends::GenerationRequest req;
        req.prompt = corpus::build_prompt_allow_empty(example.query, reduced);
        req.temperature = 0.0;
        req.max_new_tokens = options.max_new_tokens;
        const auto regen = gen.generate(req).text;

        const auto marks = cite::parse_citations(regen);
        const auto present = marks.distinct();
        const bool still_cited = present.contains(index);
        const bool fabricated =
            !cite::fabricated_citations(marks, static_cast<std::int64_t>(reduced.size())).empty();
        result.details[k] = {index, !still_cited && !fabricated, regen};
    });
    for (const auto& d : result.details) result.disappeared += d.disappeared ? 1 : 0;
    result.score = static_cast<double>(result.disappeared) / static_cast<double>(result.total_citations);
    return result;
}

GroundingResult occlusion_grounding(const corpus::DialogueExample& example, backends::GenerationBackend& gen,
                                    const OcclusionOptions& options) {
    backends::GenerationRequest req;
    req.prompt = corpus::build_prompt(example);
    req.temperature = 0.0;
    req.max_new_tokens = options.max_new_tokens;
    const auto baseline = gen.generate(req).text;
    return occlusion_grounding_from(example, baseline, gen, options);
}

}  // namespace citegauge::xai
