#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "diffusion/diffuser.hpp"
#include "synth/corpus.hpp"
#include "util/errors.hpp"

using namespace coseq;

static synth::Corpus tiny_corpus(int n_tasks, uint64_t seed) {
    synth::CorpusConfig cfg;
    cfg.n_tasks = n_tasks;
    cfg.rng_seed = seed;
    return synth::generate_corpus(cfg);
}

static embed::Embedder tiny_embedder(const synth::Corpus& corpus) {
    embed::EmbedderConfig cfg;
    cfg.hidden = 64;
    cfg.optim.epochs = 2;
    cfg.optim.batch_size = 32;
    embed::Embedder e;
    e.init(cfg, synth::grammar_vocab(corpus.config.palette), corpus.config.image_width,
           corpus.config.image_height, 5);
    e.train(corpus);
    return e;
}

TEST_CASE("noise schedule: betas increasing in (0,1), alpha_bar strictly decreasing") {
    auto s = diffusion::NoiseSchedule::linear();
    CHECK(s.T == 50);
    CHECK(s.beta(1) == doctest::Approx(1e-4));
    CHECK(s.beta(50) == doctest::Approx(0.02));
    CHECK(s.alpha_bar(1) == doctest::Approx(1.0 - 1e-4));
    float prev = 1.0f;
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.beta(t) > 0.0f);
        CHECK(s.beta(t) < 1.0f);
        if (t > 1) CHECK(s.beta(t) > s.beta(t - 1));
        CHECK(s.alpha_bar(t) < prev);
        prev = s.alpha_bar(t);
    }
}

TEST_CASE("forward_noise: boundary, exact scaling, oracle") {
    auto s = diffusion::NoiseSchedule::linear();
    util::Rng rng(41);
    nn::Tensor x0({1, 48});
    for (auto& v : x0.data) v = rng.uniform();
    nn::Tensor eps({1, 48});
    for (auto& v : eps.data) v = rng.normal();

    // t=1, beta tiny: z ~ x0
    nn::Tensor z1 = s.forward_noise(x0, 1, eps);
    double rms = 0.0;
    for (int i = 0; i < 48; ++i) {
        double d = z1.data[static_cast<size_t>(i)] - x0.data[static_cast<size_t>(i)];
        rms += d * d;
    }
    CHECK(std::sqrt(rms / 48.0) < 0.02);

    // eps = 0: exactly sqrt(alpha_bar_t) * x0
    nn::Tensor zero = nn::Tensor::zeros({1, 48});
    nn::Tensor z20 = s.forward_noise(x0, 20, zero);
    float a20 = std::sqrt(s.alpha_bar(20));
    for (int i = 0; i < 48; ++i) {
        CHECK(z20.data[static_cast<size_t>(i)] == a20 * x0.data[static_cast<size_t>(i)]);
    }

    // random case vs scalar formula
    nn::Tensor z35 = s.forward_noise(x0, 35, eps);
    double a = std::sqrt(static_cast<double>(s.alpha_bar(35)));
    double b = std::sqrt(1.0 - static_cast<double>(s.alpha_bar(35)));
    for (int i = 0; i < 48; ++i) {
        double want = a * x0.data[static_cast<size_t>(i)] + b * eps.data[static_cast<size_t>(i)];
        CHECK(std::fabs(z35.data[static_cast<size_t>(i)] - want) < 1e-6);
    }

    CHECK_THROWS_AS(s.forward_noise(x0, 0, eps), DomainError);
    CHECK_THROWS_AS(s.forward_noise(x0, 51, eps), DomainError);
    CHECK_THROWS_AS(s.forward_noise(x0, 5, nn::Tensor::zeros({1, 4})), DimensionError);
}

TEST_CASE("forward_noise: marginal variance matches the schedule within 5%") {
    auto s = diffusion::NoiseSchedule::linear();
    util::Rng rng(43);
    // x0 drawn uniform [0,1]: Var = 1/12
    int n = 10000;
    for (int t : {10, 30, 50}) {
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            nn::Tensor x0({1, 1}, {rng.uniform()});
            nn::Tensor eps({1, 1}, {rng.normal()});
            float z = s.forward_noise(x0, t, eps).data[0];
            sum += z;
            sum2 += static_cast<double>(z) * z;
        }
        double var = sum2 / n - (sum / n) * (sum / n);
        double want = s.alpha_bar(t) * (1.0 / 12.0) + (1.0 - s.alpha_bar(t));
        CHECK(std::fabs(var - want) / want < 0.05);
    }
}

TEST_CASE("generate: recording window, determinism, validation") {
    diffusion::DiffuserConfig cfg;
    cfg.hidden = 32;
    diffusion::Diffuser d;
    d.init(cfg, 11);

    util::Rng rng1(101);
    auto r0 = d.generate(nullptr, nullptr, 0, rng1);
    CHECK(r0.recorded.size() == 1);
    CHECK(r0.recorded[0].iter == cfg.T);

    util::Rng rng2(101);
    auto r1 = d.generate(nullptr, nullptr, 3, rng2);
    CHECK(r1.recorded.size() == 4);
    CHECK(r1.recorded[0].iter == 50);
    CHECK(r1.recorded[3].iter == 47);
    // same seed: identical image regardless of how much is recorded
    CHECK(r1.image.px == r0.image.px);
    // recorded latents are exactly the sampler's visited states
    CHECK(r1.recorded[0].x.data == r0.recorded[0].x.data);

    util::Rng rng3(101);
    auto r2 = d.generate(nullptr, nullptr, 3, rng3);
    CHECK(r2.image.px == r1.image.px);
    for (size_t i = 0; i < r1.recorded.size(); ++i) {
        CHECK(r2.recorded[i].x.data == r1.recorded[i].x.data);
    }

    nn::Tensor bad({1, 5});
    util::Rng rng4(1);
    CHECK_THROWS_AS(d.generate(nullptr, &bad, 0, rng4), DimensionError);
    CHECK_THROWS_AS(d.generate(nullptr, nullptr, cfg.T, rng4), DomainError);
    CHECK_THROWS_AS(d.generate(nullptr, nullptr, -1, rng4), DomainError);

    // resume from a mid-schedule iteration records from there
    nn::Tensor init({1, cfg.data_dim()});
    util::Rng rng5(7);
    auto r3 = d.generate(nullptr, &init, 2, rng5, 4, 10);
    CHECK(r3.recorded.size() == 3);
    CHECK(r3.recorded[0].iter == 10);
    CHECK(r3.recorded[2].iter == 8);
    CHECK(r3.recorded[0].source_step == 4);
}

TEST_CASE("candidate_latents: counts, ordering, tags, errors") {
    auto make_rec = [](int source, int from_iter, int count) {
        std::vector<diffusion::Latent> rec;
        for (int k = 0; k < count; ++k) {
            rec.push_back(diffusion::Latent{source, from_iter - k,
                                            nn::Tensor({1, 4}, {float(source), float(k), 0, 0})});
        }
        return rec;
    };

    // n=2 (one prior step), w=2 -> 3 latents, all source 1
    {
        std::vector<std::vector<diffusion::Latent>> recs = {make_rec(1, 50, 3)};
        auto c = diffusion::candidate_latents(recs, 2);
        REQUIRE(c.size() == 3);
        for (const auto& l : c) CHECK(l.source_step == 1);
        CHECK(c[0].iter == 50);
        CHECK(c[2].iter == 48);
    }
    // n=4 (three prior steps), w=1 -> 6 latents
    {
        std::vector<std::vector<diffusion::Latent>> recs = {
            make_rec(1, 50, 4), make_rec(2, 50, 4), make_rec(3, 50, 4)};
        auto c = diffusion::candidate_latents(recs, 1);
        REQUIRE(c.size() == 6);
        // ordered by (source ascending, iter descending)
        CHECK(c[0].source_step == 1);
        CHECK(c[0].iter == 50);
        CHECK(c[1].source_step == 1);
        CHECK(c[1].iter == 49);
        CHECK(c[4].source_step == 3);
        // tags round-trip with the recordings
        for (const auto& l : c) {
            CHECK(l.x.data[0] == static_cast<float>(l.source_step));
        }
    }
    // missing recordings
    {
        std::vector<std::vector<diffusion::Latent>> recs = {make_rec(1, 50, 2)};
        CHECK_THROWS_AS(diffusion::candidate_latents(recs, 2), StateError);
    }
}

TEST_CASE("train: init loss near 1, decreasing epochs, reproducible, deps checked") {
    auto corpus = tiny_corpus(24, 51);
    auto embedder = tiny_embedder(corpus);

    diffusion::DiffuserConfig cfg;
    cfg.hidden = 64;
    cfg.optim.epochs = 4;
    cfg.optim.batch_size = 32;
    cfg.optim.learning_rate = 2e-3f;

    auto run = [&] {
        diffusion::Diffuser d;
        d.init(cfg, 13);
        return d.train(corpus, embedder);
    };
    auto r1 = run();
    auto r2 = run();
    CHECK(r1.epoch_losses == r2.epoch_losses);

    CHECK(r1.first_batch_loss == doctest::Approx(1.0).epsilon(0.2));
    REQUIRE(r1.epoch_losses.size() == 4);
    CHECK(r1.epoch_losses[1] < r1.epoch_losses[0]);
    CHECK(r1.epoch_losses[2] < r1.epoch_losses[1]);
    CHECK(r1.epoch_losses[3] < r1.epoch_losses[2]);

    // untrained embedder dependency
    embed::Embedder raw;
    raw.init(embed::EmbedderConfig{}, synth::grammar_vocab(corpus.config.palette), 16, 16,
             1);
    diffusion::Diffuser d2;
    d2.init(cfg, 13);
    CHECK_THROWS_AS(d2.train(corpus, raw), DependencyError);
}

TEST_CASE("generate: conditional path is deterministic and shape-safe") {
    auto corpus = tiny_corpus(12, 53);
    auto embedder = tiny_embedder(corpus);
    diffusion::DiffuserConfig cfg;
    cfg.hidden = 32;
    cfg.optim.epochs = 1;
    cfg.optim.batch_size = 16;
    diffusion::Diffuser d;
    d.init(cfg, 17);
    d.train(corpus, embedder);

    nn::Tensor cond = embed::l2_normalize(
        embedder.encode_text(corpus.tasks[0].steps[0].resolved_text));
    util::Rng a(5), b(5);
    auto ra = d.generate(&cond, nullptr, 2, a);
    auto rb = d.generate(&cond, nullptr, 2, b);
    CHECK(ra.image.px == rb.image.px);
    for (float v : ra.image.px) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    nn::Tensor bad_cond({1, 7});
    util::Rng c(5);
    CHECK_THROWS_AS(d.generate(&bad_cond, nullptr, 0, c), DimensionError);
}

TEST_CASE("checkpoint round trip preserves the denoiser") {
    diffusion::DiffuserConfig cfg;
    cfg.hidden = 32;
    diffusion::Diffuser d;
    d.init(cfg, 19);
    std::string path = "test_diffuser.ckpt";
    d.save(path);
    diffusion::Diffuser loaded;
    loaded.load(path);
    CHECK(loaded.config().T == cfg.T);
    CHECK(loaded.config().hidden == 32);
    CHECK_FALSE(loaded.trained());
    nn::Tensor z({2, cfg.data_dim()});
    nn::Tensor cond({2, cfg.cond_dim});
    auto p1 = d.predict_noise(z, {5, 9}, cond);
    auto p2 = loaded.predict_noise(z, {5, 9}, cond);
    CHECK(p1.data == p2.data);
    std::remove(path.c_str());
}
