// SPDX-License-Identifier: Apache-2.0
//
// Citation-aware composite reward, group-relative advantages, KL and
// objective estimates, and the rollout driver that turns sampled groups
// into training-signal records.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citegauge/backends.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/semqual.hpp"

namespace citegauge::reward {

struct RewardWeights {
    double fact = 5.0;
    double ent = 3.0;
    double attr = 1.5;
    double flu = 1.0;
    double len = -0.1;
    double hal = -10.0;
    double cite_pos = 5.0;
    double cite_neg = -5.0;

    std::array<double, 8> as_array() const noexcept {
        return {fact, ent, attr, flu, len, hal, cite_pos, cite_neg};
    }
    RewardWeights scaled(double c) const noexcept;
};

struct RewardBreakdown {
    double r_fact = 0.0;
    double r_ent = 0.0;
    double r_attr = 0.0;
    double r_flu = 0.0;
    double r_len = 0.0;
    double r_hal = 0.0;
    double r_cite_pos = 0.0;
    double r_cite_neg = 0.0;
    double total = 0.0;

    std::array<double, 8> components() const noexcept {
        return {r_fact, r_ent, r_attr, r_flu, r_len, r_hal, r_cite_pos, r_cite_neg};
    }
};

/// Sum of weight * component over the eight terms; the hallucination term is
/// added after the other seven.
double weighted_total(const RewardBreakdown& components, const RewardWeights& weights) noexcept;

inline constexpr std::size_t kMaxLengthTokens = 128;

struct RewardOptions {
    double tau = semqual::kDefaultTau;
    std::size_t max_length = kMaxLengthTokens;
    semqual::FactOptions fact;
};

/// Numbers, runs of capitalized words (a lone sentence-initial capitalized
/// word is skipped), and Devanagari words outside a stopword list; all
/// lowercased. Citation markers never count.
std::vector<std::string> extract_entities(std::string_view text, Language language);

/// |A ∩ B| / |A ∪ B|; 0 when both are empty.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// Unique bigrams over total bigrams; 0 below two tokens.
double distinct2(std::span<const std::string> tokens);

/// Scores one response against its example. Throws EmptyKnowledge and
/// backend errors.
RewardBreakdown component_scores(std::string_view response, const corpus::DialogueExample& example,
                                 backends::NliBackend& nli, const RewardWeights& weights = {},
                                 const RewardOptions& options = {});

inline constexpr double kDefaultEpsilon = 1e-6;

/// (R - mean) / (population std + epsilon). A group whose rewards are all
/// equal maps to zeros. Throws GroupTooSmall below two rewards.
std::vector<double> normalize_advantages(std::span<const double> rewards, double epsilon = kDefaultEpsilon);

double mean(std::span<const double> values);
double population_std(std::span<const double> values);

/// Mean per-token log-ratio log pi_theta - log pi_ref. May be negative.
double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs);

struct CandidateGroup {
    std::string prompt_id;
    std::vector<std::string> candidates;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double epsilon = kDefaultEpsilon;
};

/// sum_g A_g * logprob_g - beta * kl.
double objective_estimate(const CandidateGroup& group, std::span<const double> logprob_sums, double kl,
                          double beta);

inline constexpr double kDefaultBeta = 0.04;
inline constexpr double kDefaultTemperature = 0.7;
inline constexpr int kDefaultGroupSize = 4;
inline constexpr int kDefaultSteps = 500;

enum class LogprobReduction { sum, token_mean };

struct RolloutConfig {
    RewardWeights weights;
    RewardOptions reward;
    int group_size = kDefaultGroupSize;
    double temperature = kDefaultTemperature;
    double beta = kDefaultBeta;
    double epsilon = kDefaultEpsilon;
    int max_new_tokens = backends::kDefaultMaxNewTokens;
    std::uint64_t seed = 0;
    LogprobReduction reduction = LogprobReduction::sum;
};

struct GrpoStepRecord {
    int step = 0;
    std::string prompt_id;
    int group_size = kDefaultGroupSize;
    double mean_reward = 0.0;
    double reward_std = 0.0;
    double kl_estimate = 0.0;
    double objective_estimate = 0.0;
    double beta = kDefaultBeta;
    double temperature = kDefaultTemperature;

    bool operator==(const GrpoStepRecord&) const = default;
};

nlohmann::json to_json(const GrpoStepRecord& record);
GrpoStepRecord step_record_from_json(const nlohmann::json& j);

struct RolloutResult {
    std::vector<GrpoStepRecord> records;
    std::vector<CandidateGroup> groups;
};

/// Per-candidate generation seed, derived only from (seed, step, prompt, g)
/// so any step can be replayed in isolation.
std::uint64_t candidate_seed(std::uint64_t seed, int step, std::string_view prompt_id, int g) noexcept;

/// Samples a group per prompt from `policy`, scores and normalizes it, and
/// gets per-token log-probs of every candidate from both policies. Prompts
/// are processed concurrently up to `max_in_flight`; records come back in
/// prompt order. A failing prompt raises Error(BackendError) naming it and
/// no records are returned.
RolloutResult grpo_rollout_step(int step, std::span<const corpus::DialogueExample> prompts,
                                backends::GenerationBackend& policy, backends::GenerationBackend& reference,
                                backends::NliBackend& nli, const RolloutConfig& config,
                                std::size_t max_in_flight = 1);

/// Runs steps first_step..last_step and hands each step's records to `sink`.
/// The sink can return false to stop after the current step (checkpointing).
/// Returns the last completed step.
int run_grpo(int first_step, int last_step, std::span<const corpus::DialogueExample> prompts,
             backends::GenerationBackend& policy, backends::GenerationBackend& reference,
             backends::NliBackend& nli, const RolloutConfig& config,
             const std::function<bool(const RolloutResult&)>& sink, std::size_t max_in_flight = 1);

}  // namespace citegauge::reward
