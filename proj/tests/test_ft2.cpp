#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flashthink/errors.hpp"
#include "flashthink/ft2.hpp"
#include "flashthink/metrics.hpp"

using namespace flashthink;

namespace {

// Independent reading of the labeling rule: a prefix answer that scores
// consistently with the baseline answer, or that is correct outright, is a
// positive sample; everything else is negative.
bool oracle_positive(bool prefix_correct, bool baseline_correct) {
    bool consistent = (prefix_correct && baseline_correct) ||
                      (!prefix_correct && !baseline_correct);
    return consistent || prefix_correct;
}

FixtureEntry contains(std::string key, std::string needle,
                      std::vector<std::string> responses) {
    FixtureEntry e;
    e.key = std::move(key);
    e.match_kind = FixtureEntry::MatchKind::Contains;
    e.match_text = std::move(needle);
    e.responses = std::move(responses);
    return e;
}

std::vector<Chunk> make_chunks(const std::vector<std::string>& texts) {
    std::vector<Chunk> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Chunk c;
        c.text = texts[i];
        c.index = i + 1;
        c.terminated_by = "\n\n";
        out.push_back(c);
    }
    return out;
}

PromptRecord record() {
    PromptRecord x;
    x.question = "What is six times seven?";
    return x;
}

AnswerScorer gold_42() {
    return [](const std::string& answer) {
        return score_accuracy(answer, "42", ScoreMode::NumericEquivalence).value;
    };
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("Ft2: label truth table has exactly one negative cell") {
    int negatives = 0;
    for (bool prefix : {false, true}) {
        for (bool baseline : {false, true}) {
            Label got = label_for(prefix, baseline);
            bool want_positive = oracle_positive(prefix, baseline);
            CHECK((got == Label::Positive) == want_positive);
            if (got == Label::Negative) {
                ++negatives;
                CHECK(!prefix);
                CHECK(baseline);
            }
        }
    }
    CHECK(negatives == 1);
}

TEST_CASE("Ft2: graded labeling reduces to the boolean rule at epsilon 0") {
    for (bool prefix : {false, true}) {
        for (bool baseline : {false, true}) {
            Label boolean_rule = label_for(prefix, baseline);
            Label graded = label_for_graded(prefix ? 1.0 : 0.0, baseline ? 1.0 : 0.0, prefix, 0.0);
            CHECK(boolean_rule == graded);
        }
    }
    CHECK(label_for_graded(0.8, 0.8, false, 0.0) == Label::Positive);
    CHECK(label_for_graded(0.7, 0.8, false, 0.0) == Label::Negative);
    CHECK(label_for_graded(0.7, 0.8, false, 0.15) == Label::Positive);
    CHECK(label_for_graded(0.1, 0.9, true, 0.0) == Label::Positive);
}

TEST_CASE("Ft2: one continuation per prefix, scored against gold") {
    ScriptedClient reasoner({
        contains("p1", "alpha.\n\n</think>", {"It is 11."}),
        contains("p2", "beta.\n\n</think>", {"Still 11."}),
        contains("p3", "gamma.\n\n</think>", {"The answer is 42."}),
    });
    auto chunks = make_chunks({"alpha.\n\n", "beta.\n\n", "gamma.\n\n"});
    auto results = generate_prefix_answers(reasoner, record(), chunks, RunConfig{}, gold_42());

    REQUIRE(results.size() == 3);
    CHECK(reasoner.call_log().size() == 3);
    CHECK(results[0].prefix_text == "alpha.\n\n");
    CHECK(results[1].prefix_text == "alpha.\n\nbeta.\n\n");
    CHECK(results[2].prefix_text == "alpha.\n\nbeta.\n\ngamma.\n\n");
    CHECK(results[0].correct == false);
    CHECK(results[1].correct == false);
    CHECK(results[2].correct == true);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(results[i].prefix_len == i + 1);
        CHECK(results[i].error.empty());
    }
    // Each request context ends at the chunk boundary plus the closed span.
    auto log = reasoner.call_log();
    for (std::size_t i = 0; i < 3; ++i) {
        std::string tail = results[i].prefix_text + "</think>\n\n";
        CHECK(log[i].context.substr(log[i].context.size() - tail.size()) == tail);
    }
    // Prefix monotonicity.
    CHECK(results[1].prefix_text.rfind(results[0].prefix_text, 0) == 0);
    CHECK(results[2].prefix_text.rfind(results[1].prefix_text, 0) == 0);
}

TEST_CASE("Ft2: single chunk yields a single full-reasoning request") {
    ScriptedClient reasoner({contains("p1", "</think>", {"42"})});
    auto chunks = make_chunks({"only chunk.\n\n"});
    auto results = generate_prefix_answers(reasoner, record(), chunks, RunConfig{}, gold_42());
    REQUIRE(results.size() == 1);
    CHECK(results[0].prefix_text == "only chunk.\n\n");
    CHECK(results[0].correct);
    CHECK(reasoner.call_log().size() == 1);
}

TEST_CASE("Ft2: stride keeps every k-th prefix") {
    ScriptedClient reasoner({contains("any", "</think>", {"42"})});
    auto chunks = make_chunks({"c1.\n\n", "c2.\n\n", "c3.\n\n", "c4.\n\n", "c5.\n\n"});
    Ft2Options opts;
    opts.stride = 2;
    auto results =
        generate_prefix_answers(reasoner, record(), chunks, RunConfig{}, gold_42(), opts);
    REQUIRE(results.size() == 3);  // ceil(5 / 2)
    CHECK(results[0].prefix_len == 1);
    CHECK(results[1].prefix_len == 3);
    CHECK(results[2].prefix_len == 5);
    CHECK(results[2].prefix_text == "c1.\n\nc2.\n\nc3.\n\nc4.\n\nc5.\n\n");
}

TEST_CASE("Ft2: a failed continuation is recorded and skipped, not fatal") {
    // Only prefixes 1 and 3 have fixture entries; prefix 2 goes unmatched.
    ScriptedClient reasoner({
        contains("p1", "alpha.\n\n</think>", {"11"}),
        contains("p3", "gamma.\n\n</think>", {"42"}),
    });
    auto chunks = make_chunks({"alpha.\n\n", "beta.\n\n", "gamma.\n\n"});
    auto results = generate_prefix_answers(reasoner, record(), chunks, RunConfig{}, gold_42());
    REQUIRE(results.size() == 3);
    CHECK(results[0].error.empty());
    CHECK(!results[1].error.empty());
    CHECK(results[1].answer.empty());
    CHECK(results[2].error.empty());
    CHECK(results[2].correct);
}

TEST_CASE("Ft2: empty chunk list and zero stride are rejected") {
    ScriptedClient reasoner({contains("any", "</think>", {"42"})});
    CHECK_THROWS_AS(
        generate_prefix_answers(reasoner, record(), {}, RunConfig{}, gold_42()),
        InvalidConfig);
    Ft2Options opts;
    opts.stride = 0;
    CHECK_THROWS_AS(generate_prefix_answers(reasoner, record(), make_chunks({"x.\n\n"}),
                                            RunConfig{}, gold_42(), opts),
                    InvalidConfig);
}

TEST_CASE("Ft2: label_sample carries provenance that reproduces the label") {
    PrefixResult prefix;
    prefix.prefix_len = 2;
    prefix.prefix_text = "a.\n\nb.\n\n";
    prefix.correct = false;

    auto s = label_sample("q?", prefix, true, "gsm8k", "item-7");
    CHECK(s.label == Label::Negative);
    CHECK(s.question == "q?");
    CHECK(s.thought_prefix == prefix.prefix_text);
    CHECK(s.provenance.benchmark == "gsm8k");
    CHECK(s.provenance.item_id == "item-7");
    CHECK(s.provenance.prefix_len == 2);
    CHECK(label_for(s.provenance.prefix_correct, s.provenance.baseline_correct) == s.label);

    prefix.correct = true;
    CHECK(label_sample("q?", prefix, true).label == Label::Positive);
    CHECK(label_sample("q?", prefix, false).label == Label::Positive);

    prefix.correct = false;
    prefix.score = 0.6;
    auto graded = label_sample_graded("q?", prefix, 0.6, true, 0.0);
    CHECK(graded.label == Label::Positive);
    auto graded_far = label_sample_graded("q?", prefix, 0.9, true, 0.1);
    CHECK(graded_far.label == Label::Negative);
}

TEST_CASE("Ft2: emitted dataset round-trips and is deterministic") {
    auto tmpl = PromptTemplate::builtin(TemplateFamily::Qwen2_5);
    PrefixResult p1;
    p1.prefix_len = 1;
    p1.prefix_text = "first step.\n\n";
    p1.correct = true;
    PrefixResult p2;
    p2.prefix_len = 2;
    p2.prefix_text = "first step.\n\nsecond step.\n\n";
    p2.correct = false;

    std::vector<TrainingSample> samples = {
        label_sample("what is 2+2?", p1, true, "demo", "1"),
        label_sample("what is 2+2?", p2, true, "demo", "1"),
    };

    const std::string path = "ft2_test_dataset.jsonl";
    std::size_t written = emit_dataset(samples, tmpl, path);
    CHECK(written == 2);

    std::ifstream in(path);
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 2);

    CHECK(rows[0]["input"] == render_prompt(tmpl, "what is 2+2?", p1.prefix_text));
    CHECK(rows[0]["target"] == "yes");
    CHECK(rows[1]["target"] == "no");
    CHECK(rows[1]["meta"]["prefix_len"] == 2);
    CHECK(rows[1]["meta"]["baseline_correct"] == true);
    CHECK(rows[1]["meta"]["prefix_correct"] == false);
    CHECK(rows[0]["meta"]["benchmark"] == "demo");

    std::string first = read_file(path);
    emit_dataset(samples, tmpl, path);
    CHECK(read_file(path) == first);
    std::remove(path.c_str());

    CHECK_THROWS_AS(emit_dataset(samples, tmpl, "/nonexistent-dir/out.jsonl"), IoError);
}

TEST_CASE("Ft2: generation is deterministic across fresh scripted clients") {
    auto run = [] {
        ScriptedClient reasoner({
            contains("p1", "alpha.\n\n</think>", {"11"}),
            contains("p2", "beta.\n\n</think>", {"The answer is 42."}),
        });
        auto chunks = make_chunks({"alpha.\n\n", "beta.\n\n"});
        return generate_prefix_answers(reasoner, record(), chunks, RunConfig{}, gold_42());
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].prefix_text == b[i].prefix_text);
        CHECK(a[i].answer == b[i].answer);
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].correct == b[i].correct);
    }
}
