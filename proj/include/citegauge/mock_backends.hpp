// SPDX-License-Identifier: Apache-2.0
//
// Deterministic in-process backends. They need no model weights and are
// used by the tests, the acceptance suite, and `mock://` URLs on the CLI.
// Outputs depend only on the request (and constructor arguments), so every
// instance is safe to share between threads.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "citegauge/backends.hpp"
#include "citegauge/error.hpp"

namespace citegauge::backends::mock {

/// Hash-derived per-token log-probs in [-3, -0.05) for the whitespace tokens
/// of `text`. Different salts model different policies.
std::vector<double> synthetic_logprobs(std::string_view prompt, std::string_view text, std::uint64_t salt);

/// Keeps at most `max_tokens` whitespace-separated tokens.
std::string truncate_tokens(std::string_view text, int max_tokens);

/// Shared behaviour: truncation, teacher forcing and log-probs. Subclasses
/// only decide the text.
class TextGenerator : public GenerationBackend {
public:
    explicit TextGenerator(std::uint64_t salt = 0) : salt_(salt) {}
    GenerationResponse generate(const GenerationRequest& request) final;

protected:
    virtual std::string respond(const GenerationRequest& request) = 0;

private:
    std::uint64_t salt_;
};

/// Returns the prompt's query (or the whole prompt if it is not one).
class EchoGenerator final : public TextGenerator {
public:
    using TextGenerator::TextGenerator;

protected:
    std::string respond(const GenerationRequest& request) override;
};

/// Always answers "Answer [1]." whatever the knowledge says.
class AlwaysCiteGenerator final : public TextGenerator {
public:
    using TextGenerator::TextGenerator;

protected:
    std::string respond(const GenerationRequest& request) override;
};

/// Restates and cites every passage that shares a content word with the
/// query; "I do not know." when none does.
class GroundedGenerator final : public TextGenerator {
public:
    using TextGenerator::TextGenerator;

protected:
    std::string respond(const GenerationRequest& request) override;
};

/// Greedy (temperature 0) output equals GroundedGenerator's. Otherwise a
/// seeded draw of passage fragments with markers, occasionally dropping a
/// marker or citing past the knowledge set.
class SamplingGenerator final : public TextGenerator {
public:
    using TextGenerator::TextGenerator;

protected:
    std::string respond(const GenerationRequest& request) override;
};

/// Looks the prompt up in a table, then falls back to a function.
class ScriptedGenerator final : public TextGenerator {
public:
    using Fallback = std::function<std::string(const GenerationRequest&)>;

    explicit ScriptedGenerator(std::map<std::string, std::string> by_prompt, Fallback fallback = {},
                               std::uint64_t salt = 0);

protected:
    std::string respond(const GenerationRequest& request) override;

private:
    std::map<std::string, std::string> by_prompt_;
    Fallback fallback_;
};

/// Throws Error(code) for every prompt containing `needle` (every prompt
/// when it is empty) and delegates the rest.
class FailingGenerator final : public GenerationBackend {
public:
    FailingGenerator(std::shared_ptr<GenerationBackend> inner, Errc code, std::string needle = {});
    GenerationResponse generate(const GenerationRequest& request) override;

private:
    std::shared_ptr<GenerationBackend> inner_;
    Errc code_;
    std::string needle_;
};

/// Adds a synthetic cross-attention dump (.tdmp) under `dir` when the
/// request asks for attentions. Attention rows favour the passages the
/// response cites.
class AttentionDumpGenerator final : public GenerationBackend {
public:
    AttentionDumpGenerator(std::shared_ptr<GenerationBackend> inner, std::filesystem::path dir);
    GenerationResponse generate(const GenerationRequest& request) override;

private:
    std::shared_ptr<GenerationBackend> inner_;
    std::filesystem::path dir_;
};

// NLI ----------------------------------------------------------------------

class FixedNli final : public NliBackend {
public:
    /// The non-entailment mass is split evenly.
    explicit FixedNli(double p_entail) : FixedNli(p_entail, (1.0 - p_entail) / 2.0, (1.0 - p_entail) / 2.0) {}
    FixedNli(double p_entail, double p_contradict, double p_neutral)
        : p_entail_(p_entail), p_contradict_(p_contradict), p_neutral_(p_neutral) {}
    EntailmentJudgment nli(const std::string& premise, const std::string& hypothesis) override;

private:
    double p_entail_;
    double p_contradict_;
    double p_neutral_;
};

class ScriptedNli final : public NliBackend {
public:
    using Fn = std::function<double(const std::string& premise, const std::string& hypothesis)>;
    explicit ScriptedNli(Fn fn) : fn_(std::move(fn)) {}
    EntailmentJudgment nli(const std::string& premise, const std::string& hypothesis) override;

private:
    Fn fn_;
};

/// p_entail is the share of the hypothesis' word tokens found in the
/// premise, so a text always entails itself.
class OverlapNli final : public NliBackend {
public:
    EntailmentJudgment nli(const std::string& premise, const std::string& hypothesis) override;
};

// Embeddings ---------------------------------------------------------------

/// Each token maps to the basis vector e[fnv1a(token) % dim].
class HashEmbedder final : public EmbeddingBackend {
public:
    explicit HashEmbedder(std::size_t dim = 64);
    std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) override;

private:
    std::size_t dim_;
};

// Translators --------------------------------------------------------------

class IdentityTranslator final : public TranslatorBackend {
public:
    std::string translate(const std::string& text, const std::string&, const std::string&) override {
        return text;
    }
};

/// Reverses word order.
class ReverseTranslator final : public TranslatorBackend {
public:
    std::string translate(const std::string& text, const std::string&, const std::string&) override;
};

/// Shuffles words with a generator seeded from (seed, text).
class ShuffleTranslator final : public TranslatorBackend {
public:
    explicit ShuffleTranslator(std::uint64_t seed) : seed_(seed) {}
    std::string translate(const std::string& text, const std::string&, const std::string&) override;

private:
    std::uint64_t seed_;
};

/// Maps ASCII letters onto Devanagari vowels and consonants; everything
/// else passes through. Enough to turn English fixtures into text the
/// language detector reads as Hindi.
class DevanagariTranslator final : public TranslatorBackend {
public:
    std::string translate(const std::string& text, const std::string&, const std::string&) override;
};

/// Drops every word containing `needle`. With the placeholder bracket as the
/// needle it destroys markers.
class DroppingTranslator final : public TranslatorBackend {
public:
    explicit DroppingTranslator(std::string needle) : needle_(std::move(needle)) {}
    std::string translate(const std::string& text, const std::string&, const std::string&) override;

private:
    std::string needle_;
};

}  // namespace citegauge::backends::mock
