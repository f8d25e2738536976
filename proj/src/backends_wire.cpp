// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "citegauge/backends.hpp"
#include "citegauge/error.hpp"

namespace citegauge::backends {

using nlohmann::json;

namespace {

[[noreturn]] void protocol_error(const std::string& what, const json& body) {
    throw Error(Errc::ProtocolError, what, {{"status", 200}, {"body", body.dump()}});
}

template <typename T>
T require(const json& body, const char* field) {
    if (!body.is_object() || !body.contains(field)) {
        protocol_error(std::string("missing field '") + field + "'", body);
    }
    try {
        return body.at(field).get<T>();
    } catch (const json::exception&) {
        protocol_error(std::string("field '") + field + "' has the wrong type", body);
    }
}

}  // namespace

json to_wire(const GenerationRequest& request) {
    json body = {
        {"prompt", request.prompt},
        {"temperature", request.temperature},
        {"max_new_tokens", request.max_new_tokens},
        {"want_logprobs", request.want_logprobs},
        {"want_attentions", request.want_attentions},
    };
    if (request.seed) body["seed"] = *request.seed;
    if (request.continuation) body["continuation"] = *request.continuation;
    return body;
}

GenerationRequest generation_request_from_wire(const json& body) {
    GenerationRequest request;
    request.prompt = require<std::string>(body, "prompt");
    if (body.contains("temperature")) request.temperature = require<double>(body, "temperature");
    if (body.contains("max_new_tokens")) request.max_new_tokens = require<int>(body, "max_new_tokens");
    if (body.contains("seed") && !body.at("seed").is_null()) request.seed = require<std::uint64_t>(body, "seed");
    if (body.contains("want_logprobs")) request.want_logprobs = require<bool>(body, "want_logprobs");
    if (body.contains("want_attentions")) request.want_attentions = require<bool>(body, "want_attentions");
    if (body.contains("continuation") && !body.at("continuation").is_null()) {
        request.continuation = require<std::string>(body, "continuation");
    }
    if (request.temperature < 0.0) protocol_error("temperature must be >= 0", body);
    return request;
}

json to_wire(const GenerationResponse& response) {
    json body = {{"text", response.text}};
    if (response.token_logprobs) body["token_logprobs"] = *response.token_logprobs;
    if (response.attention_dump_ref) body["attention_dump_ref"] = *response.attention_dump_ref;
    return body;
}

GenerationResponse generation_response_from_wire(const json& body) {
    GenerationResponse response;
    response.text = require<std::string>(body, "text");
    if (body.contains("token_logprobs") && !body.at("token_logprobs").is_null()) {
        response.token_logprobs = require<std::vector<double>>(body, "token_logprobs");
    }
    if (body.contains("attention_dump_ref") && !body.at("attention_dump_ref").is_null()) {
        response.attention_dump_ref = require<std::string>(body, "attention_dump_ref");
    }
    return response;
}

json nli_request_to_wire(const std::string& premise, const std::string& hypothesis) {
    return {{"premise", premise}, {"hypothesis", hypothesis}};
}

json to_wire(const EntailmentJudgment& judgment) {
    return {{"premise", judgment.premise},
            {"hypothesis", judgment.hypothesis},
            {"p_entail", judgment.p_entail},
            {"p_contradict", judgment.p_contradict},
            {"p_neutral", judgment.p_neutral}};
}

void validate_judgment(const EntailmentJudgment& j) {
    const double ps[] = {j.p_entail, j.p_contradict, j.p_neutral};
    for (const double p : ps) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw Error(Errc::ProtocolError, "NLI probability outside [0,1]", {{"value", p}});
        }
    }
    if (std::abs(j.p_entail + j.p_contradict + j.p_neutral - 1.0) > 1e-6) {
        throw Error(Errc::ProtocolError, "NLI probabilities do not sum to 1",
                    {{"sum", j.p_entail + j.p_contradict + j.p_neutral}});
    }
}

EntailmentJudgment entailment_from_wire(const json& body, const std::string& premise,
                                        const std::string& hypothesis) {
    EntailmentJudgment j;
    j.premise = premise;
    j.hypothesis = hypothesis;
    j.p_entail = require<double>(body, "p_entail");
    j.p_contradict = require<double>(body, "p_contradict");
    j.p_neutral = require<double>(body, "p_neutral");
    validate_judgment(j);
    return j;
}

json embed_request_to_wire(std::span<const std::string> texts) {
    return {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
}

json embeddings_to_wire(std::span<const TokenEmbeddings> embeddings) {
    std::size_t dim = embeddings.empty() ? 0 : embeddings.front().dim;
    json list = json::array();
    for (const auto& m : embeddings) {
        json rows = json::array();
        for (std::size_t r = 0; r < m.rows; ++r) {
            const auto row = m.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        list.push_back(std::move(rows));
    }
    return {{"dim", dim}, {"embeddings", std::move(list)}};
}

std::vector<TokenEmbeddings> embeddings_from_wire(const json& body, std::size_t expected) {
    const auto& list = body.contains("embeddings") ? body.at("embeddings") : json();
    if (!list.is_array()) protocol_error("missing field 'embeddings'", body);
    // "dim" is optional; without it the first non-empty row sets the width.
    std::size_t dim = 0;
    if (body.contains("dim")) {
        dim = require<std::size_t>(body, "dim");
    } else {
        for (const auto& matrix : list) {
            if (matrix.is_array() && !matrix.empty() && matrix.front().is_array()) {
                dim = matrix.front().size();
                break;
            }
        }
    }
    if (list.size() != expected) {
        throw Error(Errc::ProtocolError, "embedding batch size mismatch",
                    {{"expected", expected}, {"got", list.size()}});
    }
    std::vector<TokenEmbeddings> out;
    out.reserve(list.size());
    for (const auto& matrix : list) {
        if (!matrix.is_array()) protocol_error("embedding matrix is not an array", body);
        TokenEmbeddings m;
        m.dim = dim;
        m.rows = matrix.size();
        m.values.reserve(m.rows * dim);
        for (const auto& row : matrix) {
            if (!row.is_array()) protocol_error("embedding row is not an array", body);
            if (row.size() != dim) {
                throw Error(Errc::DimensionMismatch, "embedding row width differs from dim",
                            {{"dim", dim}, {"row", row.size()}});
            }
            for (const auto& v : row) {
                if (!v.is_number()) protocol_error("embedding value is not a number", body);
                m.values.push_back(v.get<double>());
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

json translate_request_to_wire(const std::string& text, const std::string& source_lang,
                               const std::string& target_lang) {
    return {{"text", text}, {"source_lang", source_lang}, {"target_lang", target_lang}};
}

std::string translation_from_wire(const json& body) {
    return require<std::string>(body, "text");
}

}  // namespace citegauge::backends
