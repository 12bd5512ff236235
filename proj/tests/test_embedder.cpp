#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "embed/embedder.hpp"
#include "support/oracles.hpp"
#include "synth/corpus.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace coseq;
namespace fs = std::filesystem;

static embed::Embedder fresh_embedder(uint64_t seed = 3) {
    embed::Embedder e;
    embed::EmbedderConfig cfg;
    e.init(cfg, synth::grammar_vocab(synth::Palette::standard()), 16, 16, seed);
    return e;
}

TEST_CASE("encode_text: deterministic, finite on empty, permutation-invariant") {
    auto e = fresh_embedder();
    auto a = e.encode_text("add a red circle at r0c0");
    auto b = e.encode_text("add a red circle at r0c0");
    CHECK(a.data == b.data);
    CHECK(a.cols() == 64);

    auto empty = e.encode_text("");
    CHECK(empty.all_finite());

    auto p1 = e.encode_text("red circle blue square");
    auto p2 = e.encode_text("square blue circle red");
    CHECK(p1.data == p2.data);  // mean pooling in double accumulation
}

TEST_CASE("encode_text: vocabulary and length validation") {
    auto e = fresh_embedder();
    CHECK_THROWS_AS(e.encode_text("add a crimson circle at r0c0"), VocabularyError);
    std::string long_text = "red";
    for (int i = 0; i < 405; ++i) long_text += " red";
    CHECK_THROWS_AS(e.encode_text(long_text), DomainError);
}

TEST_CASE("encode_image: deterministic, finite, right dim, size-checked") {
    auto e = fresh_embedder();
    util::Image img(16, 16, 0.0f);
    auto a = e.encode_image(img);
    auto b = e.encode_image(img);
    CHECK(a.data == b.data);
    CHECK(a.all_finite());
    CHECK(a.cols() == 64);
    util::Image wrong(8, 8, 0.0f);
    CHECK_THROWS_AS(e.encode_image(wrong), DimensionError);
}

TEST_CASE("similarity: anchors, oracle, scale invariance, zero vector") {
    util::Rng rng(4);
    std::vector<float> av(10), bv(10);
    for (auto& x : av) x = rng.normal();
    for (auto& x : bv) x = rng.normal();
    nn::Tensor a = nn::Tensor::vec(av), b = nn::Tensor::vec(bv);

    CHECK(embed::similarity(a, a) == doctest::Approx(1.0).epsilon(1e-6));
    nn::Tensor neg = a;
    for (auto& x : neg.data) x = -x;
    CHECK(embed::similarity(a, neg) == doctest::Approx(-1.0).epsilon(1e-6));

    CHECK(std::fabs(embed::similarity(a, b) - oracles::cosine_naive(av, bv)) < 1e-6);
    CHECK(embed::similarity(a, b) == embed::similarity(b, a));

    nn::Tensor scaled = a;
    for (auto& x : scaled.data) x *= 37.5f;
    CHECK(std::fabs(embed::similarity(scaled, b) - embed::similarity(a, b)) < 1e-6);

    nn::Tensor zero = nn::Tensor::zeros({10});
    CHECK(embed::similarity(zero, b) == 0.0f);
    CHECK_THROWS_AS(embed::similarity(a, nn::Tensor::zeros({4})), DimensionError);
}

TEST_CASE("config validation: d must be even, batch >= 2") {
    embed::EmbedderConfig cfg;
    cfg.d = 63;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    synth::CorpusConfig ccfg;
    ccfg.n_tasks = 2;
    ccfg.rng_seed = 31;
    auto corpus = synth::generate_corpus(ccfg);
    auto e = fresh_embedder();
    // a 1-pair corpus cannot form a contrastive batch
    synth::Corpus tiny;
    tiny.config = corpus.config;
    tiny.tasks.push_back(corpus.tasks[0]);
    tiny.tasks[0].steps.resize(1);
    CHECK_THROWS_AS(e.train(tiny), ConfigError);
}

TEST_CASE("training: first-batch loss near ln(batch), reproducible, learns") {
    synth::CorpusConfig ccfg;
    ccfg.n_tasks = 60;
    ccfg.rng_seed = 32;
    auto corpus = synth::generate_corpus(ccfg);

    embed::EmbedderConfig cfg;
    cfg.hidden = 64;
    cfg.optim.epochs = 3;
    cfg.optim.batch_size = 64;

    auto run = [&] {
        embed::Embedder e;
        e.init(cfg, synth::grammar_vocab(corpus.config.palette), 16, 16, 7);
        auto report = e.train(corpus);
        return std::make_pair(e, report);
    };
    auto [e1, r1] = run();
    auto [e2, r2] = run();
    CHECK(r1.epoch_losses == r2.epoch_losses);  // fixed seed, bit-reproducible
    CHECK(e1.trained());

    float ln_b = std::log(64.0f);
    CHECK(r1.first_batch_loss == doctest::Approx(ln_b).epsilon(0.10));
    CHECK(r1.epoch_losses.back() < r1.first_batch_loss);
}

TEST_CASE("training: held-out retrieval beats chance decisively") {
    synth::CorpusConfig ccfg;
    ccfg.n_tasks = 250;
    ccfg.rng_seed = 33;
    auto corpus = synth::generate_corpus(ccfg);
    auto [train, heldout] = synth::split_corpus(corpus, 0.8);

    embed::EmbedderConfig cfg;
    embed::Embedder e;
    e.init(cfg, synth::grammar_vocab(corpus.config.palette), 16, 16, 8);
    e.train(train);
    double top1 = embed::eval_retrieval_top1(e, heldout, 32, 44);
    MESSAGE("held-out retrieval top-1: ", top1);
    CHECK(top1 >= 0.5);  // chance is 1/32
}

TEST_CASE("checkpoint round trip preserves encoders") {
    auto e = fresh_embedder(9);
    fs::path path = fs::temp_directory_path() / "coseq_test_embedder.ckpt";
    e.save(path.string());
    embed::Embedder loaded;
    loaded.load(path.string());
    CHECK(loaded.dim() == e.dim());
    auto a = e.encode_text("add a red circle at r0c0");
    auto b = loaded.encode_text("add a red circle at r0c0");
    CHECK(a.data == b.data);
    util::Image img(16, 16, 0.3f);
    CHECK(e.encode_image(img).data == loaded.encode_image(img).data);
    fs::remove(path);
}
