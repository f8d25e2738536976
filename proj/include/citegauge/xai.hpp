// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc explainability analyses over backend-provided tensors and
// regenerations: cross-attention alignment with cited passages, saliency
// entropy/concentration, and occlusion-based causal grounding.
//
// Tensor dump format (.tdmp): one JSON header line
//   {"kind": "attention"|"saliency", "dims": [...], "token_spans": [[b,e],...]}
// terminated by '\n', followed by exactly prod(dims) little-endian float32
// values in row-major order. Attention dims are [layers, heads, out, in];
// saliency dims are [tokens]. A saliency header may carry "undefined": true.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "citegauge/backends.hpp"
#include "citegauge/citations.hpp"
#include "citegauge/corpus.hpp"

namespace citegauge::xai {

inline constexpr double kStochasticTolerance = 1e-4;

struct AttentionDump {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t out_len = 0;
    std::size_t in_len = 0;
    std::vector<float> weights;  // [layer][head][out][in]
    std::vector<cite::Span> input_token_spans;

    float at(std::size_t layer, std::size_t head, std::size_t out, std::size_t in) const {
        return weights[((layer * heads + head) * out_len + out) * in_len + in];
    }
    bool operator==(const AttentionDump&) const = default;
};

struct SaliencyDump {
    std::vector<float> scores;
    std::vector<cite::Span> token_spans;
    bool undefined = false;

    bool operator==(const SaliencyDump&) const = default;
};

using TensorDump = std::variant<AttentionDump, SaliencyDump>;

/// Throws ShapeMismatch for inconsistent sizes and NonStochastic(layer,
/// head, out) for a row that is negative, non-finite, or off by > 1e-4.
void validate(const AttentionDump& dump);

void write_tensor_dump(const std::filesystem::path& path, const TensorDump& dump);

/// Parses and validates a dump, reading the payload in bounded chunks.
/// Throws FormatError(offset), ShapeMismatch, NonStochastic, IoError.
TensorDump read_tensor_dump(const std::filesystem::path& path);

/// Input tokens whose byte span lies inside any cited passage's span.
std::set<std::size_t> cited_token_indices(std::span<const cite::Span> token_spans,
                                          std::span<const cite::Span> passage_spans,
                                          const std::set<cite::Index>& cited_passages);

/// Flat mean of the weights over every (layer, head, out, cited-token)
/// cell; 0 for an empty cited set. Throws IndexOutOfRange, NonStochastic.
double attention_alignment(const AttentionDump& dump, const std::set<std::size_t>& cited_tokens);

struct SaliencyStats {
    double entropy = 0.0;        // natural log
    double concentration = 0.0;  // mass of the top-k tokens
};

inline constexpr std::size_t kDefaultTopK = 5;

/// nullopt is the undefined marker: all-zero or non-finite scores, an empty
/// dump, or a dump flagged undefined by its producer.
std::optional<SaliencyStats> saliency_summary(const SaliencyDump& dump, std::size_t top_k = kDefaultTopK);

struct CitationOcclusion {
    cite::Index index = 0;
    bool disappeared = false;
    std::string regenerated;
};

struct GroundingResult {
    std::size_t total_citations = 0;
    std::size_t disappeared = 0;
    /// Absent when the baseline output cites no passage.
    std::optional<double> score;
    std::string baseline;
    std::vector<CitationOcclusion> details;
};

nlohmann::json to_json(const GroundingResult& result);

struct OcclusionOptions {
    int max_new_tokens = backends::kDefaultMaxNewTokens;
    std::size_t max_in_flight = 1;
};

/// Greedy baseline from the full prompt, then one greedy regeneration per
/// distinct in-range cited passage with that passage removed and the rest
/// renumbered. A citation of passage i disappeared iff the regeneration
/// neither contains marker [i] nor any marker beyond the reduced passage
/// count.
GroundingResult occlusion_grounding(const corpus::DialogueExample& example, backends::GenerationBackend& gen,
                                    const OcclusionOptions& options = {});

/// Same, reusing an already generated baseline.
GroundingResult occlusion_grounding_from(const corpus::DialogueExample& example, const std::string& baseline,
                                         backends::GenerationBackend& gen, const OcclusionOptions& options = {});

}  // namespace citegauge::xai
