// SPDX-License-Identifier: Apache-2.0

#include "citegauge/reward.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "citegauge/error.hpp"
#include "citegauge/parallel.hpp"
#include "citegauge/text_metrics.hpp"

namespace citegauge::reward {

using nlohmann::json;

RewardWeights RewardWeights::scaled(double c) const noexcept {
    return {fact * c, ent * c, attr * c, flu * c, len * c, hal * c, cite_pos * c, cite_neg * c};
}

double weighted_total(const RewardBreakdown& r, const RewardWeights& w) noexcept {
    const auto rs = r.components();
    const auto ws = w.as_array();
    // The hallucination term goes in last: with a 0/1 indicator and a base
    // within 16 of the penalty, toggling it then moves the total by exactly
    // the weight.
    constexpr std::size_t kHal = 5;
    double total = 0.0;
    for (std::size_t j = 0; j < rs.size(); ++j) {
        if (j != kHal) total += ws[j] * rs[j];
    }
    return total + ws[kHal] * rs[kHal];
}

// Entities -----------------------------------------------------------------

namespace {

const std::unordered_set<std::string>& hindi_stopwords() {
    static const std::unordered_set<std::string> words = {
        "है", "हैं", "था", "थी", "थे", "का", "की", "के", "को", "में", "से", "ने", "पर", "और", "या", "भी", "ही",
        "तो", "कि", "यह", "वह", "ये", "वे", "इस", "उस", "इसे", "उसे", "एक", "हो", "जो", "लिए", "साथ", "द्वारा",
        "किया", "गया", "गई", "गए", "कर", "करने", "करता", "करती", "होता", "होती", "होते", "अनुसार", "क्या", "कौन",
        "कब", "कहाँ", "कहां", "कैसे", "क्यों", "नहीं", "हम", "आप", "मैं", "अपने", "अपना", "अपनी", "बहुत", "कुछ",
        "सकता", "सकती", "सकते", "रहा", "रही", "रहे", "तक", "लेकिन", "जब", "तब", "फिर", "अब", "बाद", "पहले",
        "हुआ", "हुई", "हुए", "जाता", "जाती", "जाते", "दिया", "लिया", "वाला", "वाली", "वाले", "कोई", "सभी",
    };
    return words;
}

bool is_marker(const std::string& token) {
    return token.size() >= 3 && token.front() == '[' && token.back() == ']';
}

bool is_number(const std::string& token) {
    const auto cps = utf8::decode(token);
    return !cps.empty() && std::all_of(cps.begin(), cps.end(), [](const auto& cp) { return utf8::is_digit(cp.value); });
}

bool is_capitalized(const std::string& token) {
    const auto cps = utf8::decode(token);
    if (cps.empty()) return false;
    const char32_t c = cps.front().value;
    return (c >= 'A' && c <= 'Z') || (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7);
}

bool is_devanagari_word(const std::string& token) {
    const auto cps = utf8::decode(token);
    return !cps.empty() && utf8::is_devanagari(cps.front().value) && !utf8::is_danda(cps.front().value) &&
           !utf8::is_digit(cps.front().value);
}

bool ends_sentence(const std::string& token) {
    return token == "." || token == "?" || token == "!" || token == "।" || token == "॥";
}

std::string ascii_lower(std::string s) {
    for (auto& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

}  // namespace

std::vector<std::string> extract_entities(std::string_view text, Language /*language*/) {
    // The Hindi path of the tokenizer keeps letter case.
    const auto tokens = text::tokenize(text, Language::hi).tokens;
    std::set<std::string> entities;

    std::vector<std::string> run;
    bool run_starts_sentence = false;
    const auto close_run = [&] {
        if (!run.empty() && !(run.size() == 1 && run_starts_sentence)) {
            std::string joined;
            for (const auto& t : run) {
                if (!joined.empty()) joined.push_back(' ');
                joined.append(ascii_lower(t));
            }
            entities.insert(std::move(joined));
        }
        run.clear();
    };

    bool sentence_start = true;
    for (const auto& tok : tokens) {
        if (is_marker(tok)) {
            close_run();
            continue;
        }
        if (is_number(tok)) {
            close_run();
            entities.insert(tok);
        } else if (is_capitalized(tok)) {
            if (run.empty()) run_starts_sentence = sentence_start;
            run.push_back(tok);
        } else {
            close_run();
            if (is_devanagari_word(tok) && !hindi_stopwords().contains(tok)) entities.insert(tok);
        }
        sentence_start = ends_sentence(tok);
    }
    close_run();
    return {entities.begin(), entities.end()};
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
    const std::set<std::string> sa(a.begin(), a.end());
    const std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& x : sa) common += sb.contains(x) ? 1 : 0;
    return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

double distinct2(std::span<const std::string> tokens) {
    if (tokens.size() < 2) return 0.0;
    std::set<std::pair<std::string_view, std::string_view>> unique;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) unique.emplace(tokens[i], tokens[i + 1]);
    return static_cast<double>(unique.size()) / static_cast<double>(tokens.size() - 1);
}

// Components ---------------------------------------------------------------

RewardBreakdown component_scores(std::string_view response, const corpus::DialogueExample& example,
                                 backends::NliBackend& nli, const RewardWeights& weights,
                                 const RewardOptions& options) {
    if (example.knowledge.empty()) {
        throw Error(Errc::EmptyKnowledge, "reward needs knowledge passages", {{"id", example.id}});
    }
    RewardBreakdown r;

    const Language lang = trim(response).empty() ? example.language : corpus::detect_language(response);
    const auto tokens = text::tokenize(response, lang);
    const auto predicted = cite::parse_citations(response);
    const auto gold = cite::parse_citations(example.reference);
    const auto n_passages = static_cast<std::int64_t>(example.knowledge.size());

    // Entailment of every response sentence by every passage, shared by the
    // factuality and attribution terms.
    std::vector<std::string> hypotheses;
    for (const auto& s : semqual::split_sentences(response)) {
        auto h = semqual::strip_markers(s);
        if (!h.empty()) hypotheses.push_back(std::move(h));
    }
    const auto pred_set = predicted.distinct();
    std::vector<std::vector<double>> entail(example.knowledge.size());
    const bool default_fact = options.fact.granularity == semqual::FactGranularity::sentence &&
                              options.fact.premise == semqual::PremiseMode::per_passage;
    for (std::size_t p = 0; p < example.knowledge.size(); ++p) {
        const bool cited = pred_set.contains(static_cast<cite::Index>(p + 1));
        if (!default_fact && !cited) continue;
        const auto premise = example.knowledge[p].display_text();
        for (const auto& h : hypotheses) {
            const auto j = nli.nli(premise, h);
            backends::validate_judgment(j);
            entail[p].push_back(j.p_entail);
        }
    }

    if (default_fact) {
        if (!hypotheses.empty()) {
            double sum = 0.0;
            for (std::size_t s = 0; s < hypotheses.size(); ++s) {
                double best = 0.0;
                for (const auto& row : entail) best = std::max(best, row[s]);
                sum += best;
            }
            r.r_fact = sum / static_cast<double>(hypotheses.size());
        }
    } else {
        r.r_fact = semqual::fact_score(response, example.knowledge, nli, options.fact);
    }

    std::string knowledge_text;
    for (const auto& p : example.knowledge) {
        if (!knowledge_text.empty()) knowledge_text.push_back(' ');
        knowledge_text.append(p.display_text());
    }
    const auto resp_entities = extract_entities(response, lang);
    const auto know_entities = extract_entities(knowledge_text, example.language);
    r.r_ent = jaccard(resp_entities, know_entities);

    if (!pred_set.empty()) {
        std::size_t attributed = 0;
        for (const auto i : pred_set) {
            if (i < 1 || i > n_passages) continue;
            const auto& row = entail[static_cast<std::size_t>(i - 1)];
            if (std::any_of(row.begin(), row.end(), [&](double p) { return p >= options.tau; })) ++attributed;
        }
        r.r_attr = static_cast<double>(attributed) / static_cast<double>(pred_set.size());
    }

    r.r_flu = std::clamp(distinct2(tokens.tokens), 0.0, 1.0);
    const auto max_len = static_cast<double>(std::max<std::size_t>(options.max_length, 1));
    r.r_len = std::max(0.0, static_cast<double>(tokens.size()) - max_len) / max_len;
    r.r_hal = cite::fabricated_citations(predicted, n_passages).empty() ? 0.0 : 1.0;

    const auto gold_set = gold.distinct();
    std::size_t correct = 0;
    for (const auto i : pred_set) correct += gold_set.contains(i) ? 1 : 0;
    r.r_cite_pos = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, gold_set.size()));
    r.r_cite_neg = static_cast<double>(pred_set.size() - correct) /
                   static_cast<double>(std::max<std::size_t>(1, pred_set.size()));

    r.total = weighted_total(r, weights);
    return r;
}

// Advantages ---------------------------------------------------------------

double mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
    if (values.empty()) return 0.0;
    const double mu = mean(values);
    double ss = 0.0;
    for (const double v : values) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

std::vector<double> normalize_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2) {
        throw Error(Errc::GroupTooSmall, "a group needs at least two rewards", {{"size", rewards.size()}});
    }
    if (!(epsilon >= 0.0)) throw Error(Errc::InvalidConfig, "epsilon must be >= 0", {{"epsilon", epsilon}});

    std::vector<double> out(rewards.size(), 0.0);
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;

    // Deviations are taken as (G*R_i - sum)/G. When the rewards and their
    // sum are exactly representable this is unchanged, bit for bit, by a
    // common shift, which R_i - fl(mean) is not.
    const double g = static_cast<double>(rewards.size());
    double sum = 0.0;
    for (const double r : rewards) sum += r;
    std::vector<double> dev(rewards.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        dev[i] = (g * rewards[i] - sum) / g;
        sq += dev[i] * dev[i];
    }
    const double denom = std::sqrt(sq / g) + epsilon;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = dev[i] / denom;
    return out;
}

double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs) {
    if (policy_logprobs.size() != ref_logprobs.size() || policy_logprobs.empty()) {
        throw Error(Errc::LengthMismatch, "log-prob sequences must be non-empty and aligned",
                    {{"policy", policy_logprobs.size()}, {"reference", ref_logprobs.size()}});
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < policy_logprobs.size(); ++t) sum += policy_logprobs[t] - ref_logprobs[t];
    return sum / static_cast<double>(policy_logprobs.size());
}

double objective_estimate(const CandidateGroup& group, std::span<const double> logprob_sums, double kl,
                          double beta) {
    if (group.advantages.size() != logprob_sums.size()) {
        throw Error(Errc::LengthMismatch, "one log-prob value per candidate is required",
                    {{"advantages", group.advantages.size()}, {"logprobs", logprob_sums.size()}});
    }
    double sum = 0.0;
    for (std::size_t g = 0; g < logprob_sums.size(); ++g) sum += group.advantages[g] * logprob_sums[g];
    return sum - beta * kl;
}

// Rollout ------------------------------------------------------------------

json to_json(const GrpoStepRecord& r) {
    return {{"step", r.step},
            {"prompt_id", r.prompt_id},
            {"group_size", r.group_size},
            {"mean_reward", r.mean_reward},
            {"reward_std", r.reward_std},
            {"kl_estimate", r.kl_estimate},
            {"objective_estimate", r.objective_estimate},
            {"beta", r.beta},
            {"temperature", r.temperature}};
}

GrpoStepRecord step_record_from_json(const json& j) {
    GrpoStepRecord r;
    r.step = j.at("step").get<int>();
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.group_size = j.at("group_size").get<int>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.reward_std = j.at("reward_std").get<double>();
    r.kl_estimate = j.at("kl_estimate").get<double>();
    r.objective_estimate = j.at("objective_estimate").get<double>();
    r.beta = j.at("beta").get<double>();
    r.temperature = j.at("temperature").get<double>();
    return r;
}

std::uint64_t candidate_seed(std::uint64_t seed, int step, std::string_view prompt_id, int g) noexcept {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(step));
    h = mix64(h ^ fnv1a(prompt_id));
    return mix64(h ^ static_cast<std::uint64_t>(g));
}

namespace {

struct PromptOutcome {
    GrpoStepRecord record;
    CandidateGroup group;
};

PromptOutcome roll_one(int step, const corpus::DialogueExample& example, backends::GenerationBackend& policy,
                       backends::GenerationBackend& reference, backends::NliBackend& nli,
                       const RolloutConfig& config) {
    const std::string prompt = corpus::build_prompt(example);
    const auto group_size = static_cast<std::size_t>(config.group_size);

    CandidateGroup group;
    group.prompt_id = example.id;
    group.epsilon = config.epsilon;

    std::vector<double> policy_tokens;
    std::vector<double> ref_tokens;
    std::vector<double> per_candidate;
    for (std::size_t g = 0; g < group_size; ++g) {
        backends::GenerationRequest req;
        req.prompt = prompt;
        req.temperature = config.temperature;
        req.max_new_tokens = config.max_new_tokens;
        req.seed = candidate_seed(config.seed, step, example.id, static_cast<int>(g));
        req.want_logprobs = true;
        auto sample = policy.generate(req);
        if (!sample.token_logprobs) {
            throw Error(Errc::ProtocolError, "policy backend returned no token log-probs");
        }

        backends::GenerationRequest score_req;
        score_req.prompt = prompt;
        score_req.max_new_tokens = config.max_new_tokens;
        score_req.want_logprobs = true;
        score_req.continuation = sample.text;
        const auto scored = reference.generate(score_req);
        if (!scored.token_logprobs) {
            throw Error(Errc::ProtocolError, "reference backend returned no token log-probs");
        }
        const auto& lp = *sample.token_logprobs;
        const auto& lr = *scored.token_logprobs;
        if (lp.size() != lr.size()) {
            throw Error(Errc::LengthMismatch, "policy and reference token counts differ",
                        {{"policy", lp.size()}, {"reference", lr.size()}});
        }
        policy_tokens.insert(policy_tokens.end(), lp.begin(), lp.end());
        ref_tokens.insert(ref_tokens.end(), lr.begin(), lr.end());
        double value = 0.0;
        for (const double v : lp) value += v;
        if (config.reduction == LogprobReduction::token_mean && !lp.empty()) {
            value /= static_cast<double>(lp.size());
        }
        per_candidate.push_back(value);

        const auto breakdown = component_scores(sample.text, example, nli, config.weights, config.reward);
        group.candidates.push_back(std::move(sample.text));
        group.rewards.push_back(breakdown.total);
    }
    group.advantages = normalize_advantages(group.rewards, config.epsilon);

    PromptOutcome out;
    out.record.step = step;
    out.record.prompt_id = example.id;
    out.record.group_size = config.group_size;
    out.record.mean_reward = mean(group.rewards);
    out.record.reward_std = population_std(group.rewards);
    out.record.kl_estimate = policy_tokens.empty() ? 0.0 : kl_estimate(policy_tokens, ref_tokens);
    out.record.objective_estimate =
        objective_estimate(group, per_candidate, out.record.kl_estimate, config.beta);
    out.record.beta = config.beta;
    out.record.temperature = config.temperature;
    out.group = std::move(group);
    return out;
}

}  // namespace

RolloutResult grpo_rollout_step(int step, std::span<const corpus::DialogueExample> prompts,
                                backends::GenerationBackend& policy, backends::GenerationBackend& reference,
                                backends::NliBackend& nli, const RolloutConfig& config,
                                std::size_t max_in_flight) {
    if (config.group_size < 2) {
        throw Error(Errc::GroupTooSmall, "group size must be >= 2", {{"group_size", config.group_size}});
    }
    std::vector<PromptOutcome> outcomes(prompts.size());
    parallel_for(prompts.size(), max_in_flight, [&](std::size_t i) {
        try {
            outcomes[i] = roll_one(step, prompts[i], policy, reference, nli, config);
        } catch (const Error& e) {
            if (!is_backend_error(e.code()) && e.code() != Errc::LengthMismatch) throw;
            throw Error(Errc::BackendError, "prompt " + prompts[i].id + ": " + e.what(),
                        {{"prompt_id", prompts[i].id}, {"step", step}, {"cause", e.to_json()}});
        }
    });

    RolloutResult result;
    for (auto& o : outcomes) {
        result.records.push_back(std::move(o.record));
        result.groups.push_back(std::move(o.group));
    }
    return result;
}

int run_grpo(int first_step, int last_step, std::span<const corpus::DialogueExample> prompts,
             backends::GenerationBackend& policy, backends::GenerationBackend& reference,
             backends::NliBackend& nli, const RolloutConfig& config,
             const std::function<bool(const RolloutResult&)>& sink, std::size_t max_in_flight) {
    int done = first_step - 1;
    for (int step = first_step; step <= last_step; ++step) {
        const auto result = grpo_rollout_step(step, prompts, policy, reference, nli, config, max_in_flight);
        done = step;
        if (!sink(result)) break;
    }
    return done;
}

}  // namespace citegauge::reward
