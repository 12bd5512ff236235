#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "caption/captioner.hpp"
#include "synth/corpus.hpp"
#include "util/errors.hpp"

using namespace coseq;

static caption::Contextualizer make_ctx() {
    return caption::Contextualizer(synth::Palette::standard());
}

TEST_CASE("contextualize: reference-free input is returned unchanged") {
    auto ctx = make_ctx();
    std::string raw = "add a red circle at r1c2";
    CHECK(ctx.contextualize(raw, {}) == raw);
    std::string bg = "set the background to navy";
    CHECK(ctx.contextualize(bg, {}) == bg);
}

TEST_CASE("contextualize: 'it' resolves to the previously touched entity") {
    auto ctx = make_ctx();
    std::vector<std::string> history = {"add a red circle at r1c2"};
    CHECK(ctx.contextualize("recolor it blue", history) ==
          "recolor the red circle at r1c2 blue");
    CHECK(ctx.contextualize("transform it into a square", history) ==
          "transform the red circle at r1c2 into a square");
}

TEST_CASE("contextualize: 'the mixture' resolves to the combine result") {
    auto ctx = make_ctx();
    std::vector<std::string> history = {
        "add a red circle at r0c0",
        "add a blue square at r2c2",
        "combine the red circle at r0c0 and the blue square at r2c2 into a purple circle at r0c0",
    };
    CHECK(ctx.contextualize("recolor the mixture green", history) ==
          "recolor the purple circle at r0c0 green");
}

TEST_CASE("contextualize: step prefix selects the antecedent state") {
    auto ctx = make_ctx();
    std::vector<std::string> history = {
        "add a red circle at r0c0",
        "recolor it yellow",  // red circle is yellow on the step-2 branch
    };
    // step 3 extends step 1, where the circle is still red
    CHECK(ctx.contextualize("using the result of step 1 recolor it green", history) ==
          "recolor the red circle at r0c0 green");
    // no prefix: previous step's state applies
    CHECK(ctx.contextualize("recolor it green", history) ==
          "recolor the yellow circle at r0c0 green");
    // explicit hint behaves like the prefix
    CHECK(ctx.contextualize("recolor it green", history, 1) ==
          "recolor the red circle at r0c0 green");
}

TEST_CASE("contextualize: unresolvable references raise named errors") {
    auto ctx = make_ctx();
    CHECK_THROWS_AS(ctx.contextualize("recolor it blue", {}),
                    caption::UnresolvedReference);
    try {
        ctx.contextualize("recolor it blue", {});
        CHECK(false);
    } catch (const caption::UnresolvedReference& e) {
        CHECK(e.expression == "it");
    }
    std::vector<std::string> history = {"add a red circle at r0c0"};
    CHECK_THROWS_AS(ctx.contextualize("recolor the mixture blue", history),
                    caption::UnresolvedReference);
    // explicit mentions are already self-contained and pass through untouched
    CHECK(ctx.contextualize("recolor the green bar at r3c3 blue", history) ==
          "recolor the green bar at r3c3 blue");
    // antecedent outside the history
    CHECK_THROWS_AS(ctx.contextualize("using the result of step 4 recolor it blue", history),
                    caption::UnresolvedReference);
}

TEST_CASE("contextualize: matches stored resolved text across a corpus") {
    synth::CorpusConfig cfg;
    cfg.n_tasks = 120;
    cfg.rng_seed = 21;
    auto corpus = synth::generate_corpus(cfg);
    caption::Contextualizer ctx(corpus.config.palette);

    long total = 0, matched = 0;
    for (const auto& task : corpus.tasks) {
        std::vector<std::string> history;
        for (const auto& s : task.steps) {
            std::string got = ctx.contextualize(s.raw_text, history);
            ++total;
            matched += (got == s.resolved_text);
            history.push_back(s.raw_text);
        }
    }
    CHECK(total > 400);
    CHECK(static_cast<double>(matched) / total >= 0.99);
}

TEST_CASE("contextualize: idempotent and never mentions step indices") {
    synth::CorpusConfig cfg;
    cfg.n_tasks = 40;
    cfg.rng_seed = 22;
    auto corpus = synth::generate_corpus(cfg);
    caption::Contextualizer ctx(corpus.config.palette);
    for (const auto& task : corpus.tasks) {
        std::vector<std::string> history;
        for (const auto& s : task.steps) {
            std::string once = ctx.contextualize(s.raw_text, history);
            std::string twice = ctx.contextualize(once, history);
            CHECK(once == twice);
            for (const auto& tok : synth::tokenize(once)) {
                CHECK(tok != "step");
                CHECK(tok != "it");
                CHECK(tok != "mixture");
            }
            history.push_back(s.raw_text);
        }
    }
}

TEST_CASE("resolve_task: full-task resolution agrees with stepwise calls") {
    synth::CorpusConfig cfg;
    cfg.n_tasks = 10;
    cfg.rng_seed = 23;
    auto corpus = synth::generate_corpus(cfg);
    caption::Contextualizer ctx(corpus.config.palette);
    for (const auto& task : corpus.tasks) {
        std::vector<std::string> raws;
        for (const auto& s : task.steps) raws.push_back(s.raw_text);
        auto resolved = ctx.resolve_task(raws);
        REQUIRE(resolved.size() == task.steps.size());
        for (size_t i = 0; i < resolved.size(); ++i) {
            CHECK(resolved[i].caption == task.steps[i].resolved_text);
            CHECK(resolved[i].antecedent == task.steps[i].antecedent);
        }
    }
}
