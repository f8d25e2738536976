// SPDX-License-Identifier: Apache-2.0
//
// Model-side capabilities behind abstract interfaces, and the JSON wire
// format they share with the HTTP protocol (/generate, /nli, /embed,
// /translate, /health).
//
// Every implementation must be safe to call from several threads at once.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace citegauge::backends {

inline constexpr int kDefaultMaxNewTokens = 128;

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_new_tokens = kDefaultMaxNewTokens;
    std::optional<std::uint64_t> seed;
    bool want_logprobs = false;
    bool want_attentions = false;
    /// When set, the backend scores this text instead of sampling (teacher
    /// forcing) and returns it verbatim as `text` with its token log-probs.
    std::optional<std::string> continuation;

    bool operator==(const GenerationRequest&) const = default;
};

struct GenerationResponse {
    std::string text;
    std::optional<std::vector<double>> token_logprobs;
    std::optional<std::string> attention_dump_ref;

    bool operator==(const GenerationResponse&) const = default;
};

struct EntailmentJudgment {
    std::string premise;
    std::string hypothesis;
    double p_entail = 0.0;
    double p_contradict = 0.0;
    double p_neutral = 0.0;
};

/// Row-major [rows x dim] token embeddings for one text.
struct TokenEmbeddings {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values).subspan(r * dim, dim);
    }
    bool operator==(const TokenEmbeddings&) const = default;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

class NliBackend {
public:
    virtual ~NliBackend() = default;
    virtual EntailmentJudgment nli(const std::string& premise, const std::string& hypothesis) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    /// One matrix per input text, order preserved. An empty text yields a
    /// 0 x dim matrix.
    virtual std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) = 0;
};

class TranslatorBackend {
public:
    virtual ~TranslatorBackend() = default;
    virtual std::string translate(const std::string& text, const std::string& source_lang,
                                  const std::string& target_lang) = 0;
};

// Wire format. Decoders throw Error(ProtocolError) on malformed bodies.

nlohmann::json to_wire(const GenerationRequest& request);
GenerationRequest generation_request_from_wire(const nlohmann::json& body);
nlohmann::json to_wire(const GenerationResponse& response);
GenerationResponse generation_response_from_wire(const nlohmann::json& body);

nlohmann::json nli_request_to_wire(const std::string& premise, const std::string& hypothesis);
nlohmann::json to_wire(const EntailmentJudgment& judgment);
/// Validates that the three probabilities lie in [0,1] and sum to 1 +- 1e-6.
EntailmentJudgment entailment_from_wire(const nlohmann::json& body, const std::string& premise,
                                        const std::string& hypothesis);

nlohmann::json embed_request_to_wire(std::span<const std::string> texts);
/// {"embeddings": [[[...], ...], ...]}
nlohmann::json embeddings_to_wire(std::span<const TokenEmbeddings> embeddings);
std::vector<TokenEmbeddings> embeddings_from_wire(const nlohmann::json& body, std::size_t expected);

nlohmann::json translate_request_to_wire(const std::string& text, const std::string& source_lang,
                                         const std::string& target_lang);
std::string translation_from_wire(const nlohmann::json& body);

/// Checks the EntailmentJudgment invariant; throws Error(ProtocolError).
void validate_judgment(const EntailmentJudgment& judgment);

}  // namespace citegauge::backends
