#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "citegauge/citations.hpp"
#include "citegauge/corpus.hpp"
#include "citegauge/error.hpp"
#include "citegauge/mock_backends.hpp"
#include "support.hpp"

using namespace citegauge;
using namespace citegauge::corpus;
using testsupport::make_example;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::UsageError;
}

std::string random_marked_text(Rng& rng) {
    static const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "नमस्ते", "भारत",
                                                   "x,", "y.", "(z)", "[", "]", "[a]", "⟪", "42"};
    std::string out;
    const auto n = 1 + rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!out.empty()) out += rng.below(4) == 0 ? "" : " ";
        if (rng.below(3) == 0) {
            out += "[" + std::to_string(rng.below(15)) + "]";
        } else {
            out += words[rng.below(words.size())];
        }
    }
    return out;
}

}  // namespace

TEST_CASE("prompt template with two passages") {
    const auto ex = make_example("e", "Who built the Eiffel Tower?", {"Completed 1889.", "Designed by Gustave Eiffel."});
    const auto prompt = build_prompt(ex);
    CHECK(prompt ==
          "Query: Who built the Eiffel Tower?\nKnowledge:\n[1] Completed 1889.\n[2] Designed by Gustave Eiffel.\n"
          "Respond using the knowledge above with citations [1], [2], etc.");
    CHECK(prompt.find("[1] Completed 1889.") < prompt.find("[2] Designed by Gustave Eiffel."));
}

TEST_CASE("prompt with a single passage") {
    const auto prompt = build_prompt(make_example("e", "x", {"a"}));
    CHECK(prompt == "Query: x\nKnowledge:\n[1] a\nRespond using the knowledge above with citations [1], [2], etc.");
}

TEST_CASE("newline inside the query is kept verbatim") {
    const auto prompt = build_prompt(make_example("e", "line one\nline two", {"a", "b"}));
    const std::string expected =
        "Query: line one\nline two\nKnowledge:\n[1] a\n[2] b\n"
        "Respond using the knowledge above with citations [1], [2], etc.";
    CHECK(prompt == expected);
    const auto parsed = parse_prompt(prompt);
    REQUIRE(parsed);
    CHECK(parsed->query == "line one\nline two");
    CHECK(parsed->knowledge.size() == 2);
}

TEST_CASE("empty knowledge is rejected") {
    DialogueExample ex;
    ex.id = "e";
    ex.query = "q";
    CHECK(code_of([&] { build_prompt(ex); }) == Errc::EmptyKnowledge);
}

TEST_CASE("passage text with bracketed digits never parses as a citation") {
    const auto ex = make_example("e", "q", {"Footnote [3] here."});
    CHECK(ex.knowledge[0].text == "Footnote ⟦3⟧ here.");
    CHECK(ex.knowledge[0].display_text() == "Footnote [3] here.");
    const auto prompt = build_prompt(ex);
    const auto cites = cite::parse_citations(prompt);
    // Only the instruction line's [1], [2] and the passage label [1] remain.
    CHECK(cites.size() == 3);
}

TEST_CASE("prompt construction is injective on random inputs") {
    Rng rng(11);
    std::set<std::string> prompts;
    std::set<std::pair<std::string, std::vector<std::string>>> inputs;
    for (int i = 0; i < 400; ++i) {
        const auto q = random_marked_text(rng);
        std::vector<std::string> ks;
        const auto n = 1 + rng.below(3);
        for (std::uint64_t k = 0; k < n; ++k) ks.push_back(random_marked_text(rng));
        if (!inputs.insert({q, ks}).second) continue;
        prompts.insert(build_prompt(q, make_knowledge(ks)));
    }
    CHECK(prompts.size() == inputs.size());
}

TEST_CASE("prompt passage spans point at the passage text") {
    const auto k = make_knowledge(std::vector<std::string>{"first passage", "second"});
    const auto prompt = build_prompt("q", k);
    const auto spans = prompt_passage_spans("q", k);
    REQUIRE(spans.size() == 2);
    CHECK(prompt.substr(spans[0].begin, spans[0].end - spans[0].begin) == "first passage");
    CHECK(prompt.substr(spans[1].begin, spans[1].end - spans[1].begin) == "second");
}

TEST_CASE("without_passage renumbers contiguously") {
    const auto k = make_knowledge(std::vector<std::string>{"a", "b", "c"});
    const auto r = without_passage(k, 2);
    REQUIRE(r.size() == 2);
    CHECK(r[0].index == 1);
    CHECK(r[0].text == "a");
    CHECK(r[1].index == 2);
    CHECK(r[1].text == "c");
}

TEST_CASE("JSONL round trip preserves examples and unknown fields") {
    testsupport::TempDir dir("corpus");
    const auto path = dir / "in.jsonl";
    testsupport::spit(path,
                      R"({"id":"a","query":"Who?","knowledge":["P one.","P two."],"reference":"Him [1].","language":"en","source":"wow","extra":{"k":1}})"
                      "\n"
                      R"({"id":"b","query":"क्या?","knowledge":["पाठ [2] एक"],"reference":"हाँ [1]।","language":"hi","source":"faithdial"})"
                      "\n"
                      R"({"id":"c","query":"Why?","knowledge":["x"],"reference":"","source":"dstc9"})"
                      "\n");
    const auto examples = read_jsonl(path);
    REQUIRE(examples.size() == 3);
    CHECK(examples[0].id == "a");
    CHECK(examples[1].id == "b");
    CHECK(examples[2].id == "c");
    CHECK(examples[0].metadata.at("extra").at("k") == 1);
    CHECK(examples[1].knowledge[0].display_text() == "पाठ [2] एक");
    CHECK(examples[1].source == Source::faithdial);

    const auto out = dir / "out.jsonl";
    write_jsonl(examples, out);
    CHECK(read_jsonl(out) == examples);
}

TEST_CASE("JSONL round trip on generated examples") {
    Rng rng(5);
    std::vector<DialogueExample> examples;
    for (int i = 0; i < 60; ++i) {
        std::vector<std::string> ks;
        const auto n = 1 + rng.below(4);
        for (std::uint64_t k = 0; k < n; ++k) ks.push_back("p" + random_marked_text(rng));
        auto ex = make_example("id" + std::to_string(i), "q " + random_marked_text(rng), ks,
                               random_marked_text(rng), rng.below(2) ? Language::hi : Language::en);
        ex.source = static_cast<Source>(rng.below(4));
        examples.push_back(std::move(ex));
    }
    testsupport::TempDir dir("corpus-gen");
    write_jsonl(examples, dir / "g.jsonl");
    CHECK(read_jsonl(dir / "g.jsonl") == examples);
}

TEST_CASE("reference citing past the knowledge is flagged, not rejected") {
    testsupport::TempDir dir("corpus-flag");
    testsupport::spit(dir / "f.jsonl",
                      R"({"id":"f","query":"q","knowledge":["a","b"],"reference":"see [3]","language":"en"})"
                      "\n");
    const auto examples = read_jsonl(dir / "f.jsonl");
    REQUIRE(examples.size() == 1);
    CHECK(examples[0].flags.fabricated_reference);
}

TEST_CASE("duplicate passage index raises IndexGap") {
    testsupport::TempDir dir("corpus-gap");
    testsupport::spit(dir / "g.jsonl",
                      R"({"id":"g","query":"q","knowledge":[{"index":1,"text":"a"},{"index":1,"text":"b"}],"reference":""})"
                      "\n");
    try {
        read_jsonl(dir / "g.jsonl");
        FAIL("expected IndexGap");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::IndexGap);
        CHECK(e.details().at("id") == "g");
    }
}

TEST_CASE("malformed line reports its line number") {
    testsupport::TempDir dir("corpus-bad");
    testsupport::spit(dir / "b.jsonl",
                      R"({"id":"a","query":"q","knowledge":["a"],"reference":""})"
                      "\n{not json\n");
    try {
        read_jsonl(dir / "b.jsonl");
        FAIL("expected MalformedRecord");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MalformedRecord);
        CHECK(e.details().at("line_no") == 2);
    }
}

TEST_CASE("missing dataset file is an IoError") {
    CHECK(code_of([] { read_jsonl("/nonexistent/citegauge/none.jsonl"); }) == Errc::IoError);
}

TEST_CASE("language detection examples") {
    CHECK(detect_language("नमस्ते") == Language::hi);
    CHECK(detect_language("Hello world") == Language::en);
    // Two Devanagari and eight Latin letters.
    CHECK(detect_language("नम abcdefgh") == Language::en);
    CHECK(detect_language("नमस abcdefg") == Language::hi);  // 3 of 10 sits on the threshold
    CHECK(code_of([] { detect_language("   "); }) == Errc::EmptyText);
}

TEST_CASE("language detection ignores digits and punctuation") {
    Rng rng(3);
    const std::vector<std::string> bases = {"hello there", "नमस्ते दोस्त", "mixed भारत text", "ab कख"};
    const std::string noise = "0123456789.,;:!?()[]-";
    for (const auto& base : bases) {
        const auto expected = detect_language(base);
        for (int i = 0; i < 50; ++i) {
            std::string s = base;
            for (int j = 0; j < 5; ++j) {
                const auto at = rng.below(s.size() + 1);
                // Only insert at ASCII boundaries so UTF-8 stays intact.
                if (at < s.size() && (static_cast<unsigned char>(s[at]) & 0xC0) == 0x80) continue;
                s.insert(at, 1, noise[rng.below(noise.size())]);
            }
            CHECK(detect_language(s) == expected);
        }
    }
}

TEST_CASE("guard_translate with the identity translator") {
    backends::mock::IdentityTranslator id;
    CHECK(guard_translate("According to [1], X.", id) == "According to [1], X.");
    Rng rng(19);
    for (int i = 0; i < 500; ++i) {
        const auto s = random_marked_text(rng);
        CHECK(guard_translate(s, id) == s);
    }
}

TEST_CASE("guard_translate keeps markers through word reversal") {
    backends::mock::ReverseTranslator rev;
    const auto out = guard_translate("See [1] and [2].", rev);
    const auto cites = cite::parse_citations(out);
    std::vector<cite::Index> idx = cites.indices;
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<cite::Index>{1, 2});
}

TEST_CASE("guard_translate reports lost markers") {
    backends::mock::DroppingTranslator drop("⟪");
    try {
        guard_translate("According to [1], X.", drop);
        FAIL("expected MarkerLoss");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MarkerLoss);
        CHECK(e.details().dump().find('1') != std::string::npos);
    }
}

TEST_CASE("translate_example sets the target language") {
    backends::mock::DevanagariTranslator dev;
    const auto ex = make_example("t", "Who made it?", {"Made by Ada [1]."}, "Ada [1].");
    const auto out = translate_example(ex, dev);
    CHECK(out.language == Language::hi);
    CHECK(detect_language(out.query) == Language::hi);
    CHECK(cite::parse_citations(out.reference).indices == std::vector<cite::Index>{1});
    CHECK(out.knowledge[0].display_text().find("[1]") != std::string::npos);
}

TEST_CASE("mixture sampling") {
    std::vector<DialogueExample> en;
    std::vector<DialogueExample> hi;
    for (int i = 0; i < 5; ++i) en.push_back(make_example("en" + std::to_string(i), "q", {"k"}));
    for (int i = 0; i < 7; ++i) hi.push_back(make_example("hi" + std::to_string(i), "क", {"k"}, "", Language::hi));

    SUBCASE("English share near alpha") {
        const auto draws = sample_mixture(en, hi, {0.4, 1234}, 10000);
        REQUIRE(draws.size() == 10000);
        const auto n_en = std::count_if(draws.begin(), draws.end(), [](const auto& e) { return e.id.rfind("en", 0) == 0; });
        CHECK(std::abs(static_cast<double>(n_en) / 10000.0 - 0.4) <= 0.02);
    }
    SUBCASE("alpha one gives only English") {
        const auto draws = sample_mixture(en, hi, {1.0, 9}, 500);
        CHECK(std::all_of(draws.begin(), draws.end(), [](const auto& e) { return e.id.rfind("en", 0) == 0; }));
    }
    SUBCASE("determinism and pool membership") {
        for (std::uint64_t seed : {0ULL, 1ULL, 77ULL, 0xFFFFFFFFFFFFFFFFULL}) {
            const auto a = sample_mixture(en, hi, {0.4, seed}, 300);
            const auto b = sample_mixture(en, hi, {0.4, seed}, 300);
            CHECK(a == b);
            for (const auto& e : a) {
                const bool member = std::find(en.begin(), en.end(), e) != en.end() ||
                                    std::find(hi.begin(), hi.end(), e) != hi.end();
                CHECK(member);
            }
        }
    }
    SUBCASE("errors") {
        CHECK(code_of([&] { sample_mixture({}, hi, {0.4, 1}, 3); }) == Errc::EmptyPool);
        CHECK(code_of([&] { sample_mixture(en, hi, {1.5, 1}, 3); }) == Errc::InvalidConfig);
    }
}
