#include <doctest.h>

#include <cmath>
#include <map>

#include "citegauge/error.hpp"
#include "citegauge/mock_backends.hpp"
#include "citegauge/semqual.hpp"
#include "support.hpp"

using namespace citegauge;
using namespace citegauge::semqual;
using backends::TokenEmbeddings;
namespace mock = citegauge::backends::mock;

namespace {

/// Returns hand-written matrices keyed by text.
class TableEmbedder final : public backends::EmbeddingBackend {
public:
    explicit TableEmbedder(std::map<std::string, TokenEmbeddings> table) : table_(std::move(table)) {}
    std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) override {
        std::vector<TokenEmbeddings> out;
        for (const auto& t : texts) out.push_back(table_.at(t));
        return out;
    }

private:
    std::map<std::string, TokenEmbeddings> table_;
};

TokenEmbeddings matrix(std::vector<std::vector<double>> rows) {
    TokenEmbeddings m;
    m.rows = rows.size();
    m.dim = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) m.values.insert(m.values.end(), r.begin(), r.end());
    return m;
}

corpus::KnowledgeSet knowledge(std::vector<std::string> texts) { return corpus::make_knowledge(texts); }

}  // namespace

TEST_CASE("semantic score examples") {
    mock::HashEmbedder emb(64);
    CHECK(semantic_score("the same words here", "the same words here", emb) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(semantic_score("", "", emb) == 1.0);
    CHECK(semantic_score("", "x", emb) == 0.0);

    TableEmbedder ortho({{"a", matrix({{1, 0, 0}})}, {"b", matrix({{0, 1, 0}, {0, 0, 1}})}});
    CHECK(semantic_score("a", "b", ortho) == 0.0);
}

TEST_CASE("semantic score on a hand-computed 3x2 fixture") {
    TableEmbedder t({{"cand", matrix({{1, 0}, {0, 1}, {1, 1}})}, {"ref", matrix({{1, 0}, {1, 1}})}});
    // Best matches: c1->r1 = 1, c2->r2 = 1/sqrt2, c3->r2 = 1; r1->c1 = 1, r2->c3 = 1.
    const double p = (2.0 + 1.0 / std::sqrt(2.0)) / 3.0;
    const double r = 1.0;
    CHECK(semantic_score("cand", "ref", t) == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
}

TEST_CASE("semantic score self-similarity for token-function embedders") {
    mock::HashEmbedder emb(16);
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        std::string s;
        for (std::uint64_t k = 0; k < 1 + rng.below(10); ++k) s += "t" + std::to_string(rng.below(30)) + " ";
        CHECK(semantic_score(s, s, emb) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("semantic score rejects mismatched widths") {
    TableEmbedder t({{"a", matrix({{1, 0}})}, {"b", matrix({{1, 0, 0}})}});
    CHECK_THROWS_AS(semantic_score("a", "b", t), Error);
}

TEST_CASE("sentence splitting") {
    CHECK(split_sentences("One [1]. Two? Three!") == std::vector<std::string>{"One [1].", "Two?", "Three!"});
    CHECK(split_sentences("Done. [2] Next.") == std::vector<std::string>{"Done. [2]", "Next."});
    CHECK(split_sentences("एक [1]। दो।") == std::vector<std::string>{"एक [1]।", "दो।"});
    CHECK(split_sentences("v1.2 is out") == std::vector<std::string>{"v1.2 is out"});
    CHECK(split_sentences("   ").empty());
    CHECK(strip_markers("A [1] b [2].") == "A b.");
}

TEST_CASE("fact score examples") {
    const auto k = knowledge({"p1", "p2"});
    mock::FixedNli one(1.0);
    CHECK(fact_score("Anything at all. More.", k, one) == 1.0);
    CHECK(fact_score("", k, one) == 0.0);

    mock::ScriptedNli scripted([](const std::string&, const std::string& h) { return h == "First." ? 0.8 : 0.4; });
    CHECK(fact_score("First. Second.", k, scripted) == doctest::Approx(0.6).epsilon(1e-12));

    // Max over passages.
    mock::ScriptedNli per_passage([](const std::string& p, const std::string&) { return p == "p2" ? 0.9 : 0.1; });
    CHECK(fact_score("Claim.", k, per_passage) == doctest::Approx(0.9).epsilon(1e-12));

    CHECK_THROWS_AS(fact_score("x", corpus::KnowledgeSet{}, one), Error);
}

TEST_CASE("fact score is monotone in the backend") {
    const auto k = knowledge({"alpha beta", "gamma"});
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const double base = rng.uniform() * 0.5;
        const double bump = rng.uniform() * 0.5;
        mock::ScriptedNli lo([&](const std::string& p, const std::string& h) {
            return std::fmod(base + static_cast<double>(p.size() + h.size()) * 0.01, 0.5);
        });
        mock::ScriptedNli hi([&](const std::string& p, const std::string& h) {
            return std::fmod(base + static_cast<double>(p.size() + h.size()) * 0.01, 0.5) + bump;
        });
        const std::string resp = "One claim. Another claim [1]. Third.";
        CHECK(fact_score(resp, k, hi) >= fact_score(resp, k, lo));
    }
}

TEST_CASE("hallucination flag examples") {
    const auto k = knowledge({"a", "b"});
    mock::FixedNli high(0.9);
    mock::FixedNli low(0.2);
    const std::string fabricated = "Something [5].";
    CHECK(hallucination_flag(fabricated, k, cite::parse_citations(fabricated), high));
    const std::string fine = "Something [1].";
    CHECK_FALSE(hallucination_flag(fine, k, cite::parse_citations(fine), high));
    CHECK(hallucination_flag(fine, k, cite::parse_citations(fine), low));
    CHECK_FALSE(hallucination_flag("", k, cite::parse_citations(""), low));

    const auto c = check_hallucination(fine, k, cite::parse_citations(fine), low);
    CHECK(c.unsupported);
    CHECK_FALSE(c.fabricated);
    CHECK(c.fact_score == doctest::Approx(0.2));
}

TEST_CASE("no fabrication and fact score at or above tau is never flagged") {
    const auto k = knowledge({"a", "b", "c"});
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double p = 0.5 + 0.5 * rng.uniform();
        mock::FixedNli nli(p);
        const std::string resp = "Claim " + std::to_string(i) + " [" + std::to_string(1 + rng.below(3)) + "].";
        CHECK_FALSE(hallucination_flag(resp, k, cite::parse_citations(resp), nli));
    }
}

TEST_CASE("aggregation identity") {
    std::vector<ExampleFactuality> xs;
    Rng rng(21);
    std::size_t flagged = 0;
    for (int i = 0; i < 40; ++i) {
        HallucinationCheck c;
        c.fabricated = rng.below(4) == 0;
        c.fact_score = rng.uniform();
        c.unsupported = c.fact_score < 0.5;
        c.flagged = c.fabricated || c.unsupported;
        flagged += c.flagged ? 1 : 0;
        xs.push_back({"e" + std::to_string(i), c});
    }
    const auto r = aggregate_factuality(xs);
    CHECK(r.halluc_rate == static_cast<double>(flagged) / 40.0);
    CHECK(r.flagged_ids.size() == flagged);
    CHECK_THROWS_AS(aggregate_factuality({}), Error);
}
