#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nn/autograd.hpp"
#include "nn/functional.hpp"
#include "selector/selector.hpp"
#include "support/oracles.hpp"
#include "synth/corpus.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace coseq;

static selector::SelectionHead head_with(int d, uint64_t seed,
                                         bool normalize = false) {
    selector::SelectorConfig cfg;
    cfg.d = d;
    cfg.normalize_before_projection = normalize;
    selector::SelectionHead h;
    h.init(cfg, seed);
    return h;
}

static embed::SceneEmbedding random_embedding(int d, util::Rng& rng) {
    embed::SceneEmbedding e;
    e.text_vec = nn::Tensor({1, d});
    e.image_vec = nn::Tensor({1, d});
    for (auto& v : e.text_vec.data) v = rng.normal();
    for (auto& v : e.image_vec.data) v = rng.normal();
    return e;
}

TEST_CASE("project: zero embedding, role distinctness, dim checks") {
    auto head = head_with(8, 3);
    embed::SceneEmbedding zero;
    zero.text_vec = nn::Tensor({1, 8});
    zero.image_vec = nn::Tensor({1, 8});
    auto p = head.project(zero, selector::Role::past);
    for (float v : p.vec.data) CHECK(v == 0.0f);
    CHECK(p.vec.numel() == 8);

    util::Rng rng(5);
    auto emb = random_embedding(8, rng);
    auto past = head.project(emb, selector::Role::past);
    auto cur = head.project(emb, selector::Role::current);
    CHECK(past.vec.data != cur.vec.data);  // independent matrix pairs

    embed::SceneEmbedding wrong;
    wrong.text_vec = nn::Tensor({1, 4});
    wrong.image_vec = nn::Tensor({1, 8});
    CHECK_THROWS_AS(head.project(wrong, selector::Role::past), DimensionError);
}

TEST_CASE("project: hand-sized case matches the scalar-loop oracle") {
    auto head = head_with(4, 7);
    util::Rng rng(9);
    auto emb = random_embedding(4, rng);
    auto got = head.project(emb, selector::Role::current);

    auto params = head.parameters();  // {w_it, w_iv, w_ot, w_ov}
    nn::Tensor th = oracles::matmul_naive(nn::Tensor({1, 4}, emb.text_vec.data),
                                          params[2]->value);
    nn::Tensor vh = oracles::matmul_naive(nn::Tensor({1, 4}, emb.image_vec.data),
                                          params[3]->value);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::fabs(got.vec.data[static_cast<size_t>(j)] -
                        th.data[static_cast<size_t>(j)]) < 1e-6);
        CHECK(std::fabs(got.vec.data[static_cast<size_t>(2 + j)] -
                        vh.data[static_cast<size_t>(j)]) < 1e-6);
    }

    // score equals the dot product of the two projections
    auto past = head.project(emb, selector::Role::past);
    double dot = 0.0;
    for (int i = 0; i < 4; ++i) {
        dot += static_cast<double>(got.vec.data[static_cast<size_t>(i)]) *
               past.vec.data[static_cast<size_t>(i)];
    }
    float s = selector::SelectionHead::score(got, {past});
    CHECK(std::fabs(s - dot) < 1e-6);
}

TEST_CASE("score: anchors and scalar-loop oracle") {
    auto head = head_with(6, 11);
    int d = 6;

    selector::ProjectedScene cand;
    cand.role = selector::Role::current;
    cand.vec = nn::Tensor({1, d}, {1, 0, 0, 0, 0, 0});
    selector::ProjectedScene orth;
    orth.role = selector::Role::past;
    orth.vec = nn::Tensor({1, d}, {0, 1, 0, 0, 0, 0});
    CHECK(selector::SelectionHead::score(cand, {orth, orth}) == 0.0f);

    selector::ProjectedScene same = orth;
    same.vec = cand.vec;
    selector::ProjectedScene cur_same = cand;
    CHECK(selector::SelectionHead::score(cur_same, {same, same}) == doctest::Approx(2.0));

    util::Rng rng(13);
    selector::ProjectedScene c2;
    c2.role = selector::Role::current;
    c2.vec = nn::Tensor({1, d});
    for (auto& v : c2.vec.data) v = rng.normal();
    std::vector<selector::ProjectedScene> past;
    double want = 0.0;
    for (int k = 0; k < 3; ++k) {
        selector::ProjectedScene p;
        p.role = selector::Role::past;
        p.vec = nn::Tensor({1, d});
        for (auto& v : p.vec.data) v = rng.normal();
        want += oracles::dot_naive(c2.vec.data, p.vec.data);
        past.push_back(p);
    }
    CHECK(std::fabs(selector::SelectionHead::score(c2, past) - want) < 1e-6);

    CHECK_THROWS_AS(selector::SelectionHead::score(c2, {}), DomainError);
    CHECK_THROWS_AS(selector::SelectionHead::score(orth, {same}), DomainError);  // role misuse
}

TEST_CASE("select: singleton, exact tie, probability normalization") {
    auto head = head_with(8, 17);
    util::Rng rng(19);
    std::vector<embed::SceneEmbedding> past = {random_embedding(8, rng)};

    selector::CandidateScene c;
    c.embedding = random_embedding(8, rng);
    auto r1 = head.select({c}, past);
    CHECK(r1.chosen_index == 0);
    CHECK(r1.probs.size() == 1);
    CHECK(r1.probs[0] == doctest::Approx(1.0));

    selector::CandidateScene c2 = c;  // identical embedding: exact tie
    auto r2 = head.select({c, c2}, past);
    CHECK(r2.chosen_index == 0);  // tie broken to the lowest index
    CHECK(r2.probs[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r2.probs[1] == doctest::Approx(0.5).epsilon(1e-6));

    std::vector<selector::CandidateScene> many;
    for (int i = 0; i < 7; ++i) {
        selector::CandidateScene cc;
        cc.embedding = random_embedding(8, rng);
        many.push_back(cc);
    }
    auto r3 = head.select(many, past);
    double sum = 0.0;
    for (float p : r3.probs) sum += p;
    CHECK(std::fabs(sum - 1.0) < 1e-6);
    CHECK_THROWS_AS(head.select({}, past), DomainError);
}

TEST_CASE("select: matches brute-force oracle on random instances") {
    util::Rng rng(23);
    for (int rep = 0; rep < 100; ++rep) {
        int d = 2 * (1 + rng.uniform_int(4));  // 2..8, even
        auto head = head_with(d, 1000 + static_cast<uint64_t>(rep));
        int n_cand = 1 + rng.uniform_int(5);
        int n_past = 1 + rng.uniform_int(4);
        std::vector<selector::CandidateScene> cands(static_cast<size_t>(n_cand));
        std::vector<std::vector<float>> ct, ci, pt, pi;
        for (auto& c : cands) {
            c.embedding = random_embedding(d, rng);
            ct.push_back(c.embedding.text_vec.data);
            ci.push_back(c.embedding.image_vec.data);
        }
        std::vector<embed::SceneEmbedding> past(static_cast<size_t>(n_past));
        for (auto& p : past) {
            p = random_embedding(d, rng);
            pt.push_back(p.text_vec.data);
            pi.push_back(p.image_vec.data);
        }
        auto got = head.select(cands, past);

        // brute-force oracle with the head's own matrices (normalization off)
        auto params = head.parameters();
        auto brute = oracles::select_naive(ct, ci, pt, pi, params[0]->value,
                                           params[1]->value, params[2]->value,
                                           params[3]->value, 1.0);
        CHECK(got.chosen_index == brute.chosen);
        for (int i = 0; i < n_cand; ++i) {
            CHECK(std::fabs(got.probs[static_cast<size_t>(i)] -
                            brute.probs[static_cast<size_t>(i)]) < 1e-6);
            CHECK(std::fabs(got.scores[static_cast<size_t>(i)] -
                            brute.scores[static_cast<size_t>(i)]) < 1e-5);
        }
    }
}

TEST_CASE("select: argmax invariant to constant score shifts") {
    util::Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<float> scores(5);
        for (auto& s : scores) s = rng.normal();
        nn::Tensor probs = nn::softmax(nn::Tensor::vec(scores));
        std::vector<float> shifted = scores;
        for (auto& s : shifted) s += 3.75f;
        nn::Tensor probs2 = nn::softmax(nn::Tensor::vec(shifted));
        int a1 = 0, a2 = 0;
        for (int i = 1; i < 5; ++i) {
            if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(a1)]) a1 = i;
            if (shifted[static_cast<size_t>(i)] > shifted[static_cast<size_t>(a2)]) a2 = i;
        }
        CHECK(a1 == a2);
        for (int i = 0; i < 5; ++i) {
            CHECK(probs.data[static_cast<size_t>(i)] ==
                  doctest::Approx(probs2.data[static_cast<size_t>(i)]).epsilon(1e-4));
        }
    }
}

TEST_CASE("select: scaling all four matrices preserves the choice") {
    util::Rng rng(31);
    auto head = head_with(8, 37);
    std::vector<selector::CandidateScene> cands(4);
    for (auto& c : cands) c.embedding = random_embedding(8, rng);
    std::vector<embed::SceneEmbedding> past = {random_embedding(8, rng),
                                               random_embedding(8, rng)};
    auto base = head.select(cands, past);

    auto scaled = head_with(8, 37);
    for (nn::Param* p : scaled.parameters()) {
        for (auto& v : p->value.data) v *= 3.0f;
    }
    auto after = scaled.select(cands, past);
    CHECK(after.chosen_index == base.chosen_index);
    for (size_t i = 0; i < base.scores.size(); ++i) {
        CHECK(after.scores[i] == doctest::Approx(9.0 * base.scores[i]).epsilon(1e-4));
    }
}

TEST_CASE("score additivity over history splits") {
    util::Rng rng(37);
    auto head = head_with(8, 41);
    auto cand = head.project(random_embedding(8, rng), selector::Role::current);
    std::vector<selector::ProjectedScene> p1, p2, all;
    for (int k = 0; k < 3; ++k) {
        auto p = head.project(random_embedding(8, rng), selector::Role::past);
        (k < 2 ? p1 : p2).push_back(p);
        all.push_back(p);
    }
    float s_all = selector::SelectionHead::score(cand, all);
    float s_split = selector::SelectionHead::score(cand, p1) +
                    selector::SelectionHead::score(cand, p2);
    CHECK(std::fabs(s_all - s_split) < 1e-5);
}

TEST_CASE("full head gradient matches finite differences at d=8") {
    util::Rng rng(43);
    int d = 8, half = 4, m = 3;
    // pack the four matrices into one tensor for grad_check
    auto build_loss = [&](const std::vector<embed::SceneEmbedding>& cands,
                          const std::vector<embed::SceneEmbedding>& past, int label) {
        return [=](const nn::Tensor& packed, nn::Tensor* grad) -> float {
            auto slice = [&](int idx) {
                nn::Tensor w({d, half});
                for (int i = 0; i < d * half; ++i) {
                    w.data[static_cast<size_t>(i)] =
                        packed.data[static_cast<size_t>(idx * d * half + i)];
                }
                return w;
            };
            nn::Var wit = nn::leaf(slice(0)), wiv = nn::leaf(slice(1));
            nn::Var wot = nn::leaf(slice(2)), wov = nn::leaf(slice(3));
            nn::Tensor ct({m, d}), ci({m, d}), pt_sum({1, d}), pi_sum({1, d});
            for (int c = 0; c < m; ++c) {
                for (int j = 0; j < d; ++j) {
                    ct.at(c, j) = cands[static_cast<size_t>(c)].text_vec.data[static_cast<size_t>(j)];
                    ci.at(c, j) = cands[static_cast<size_t>(c)].image_vec.data[static_cast<size_t>(j)];
                }
            }
            for (const auto& p : past) {
                for (int j = 0; j < d; ++j) {
                    pt_sum.data[static_cast<size_t>(j)] += p.text_vec.data[static_cast<size_t>(j)];
                    pi_sum.data[static_cast<size_t>(j)] += p.image_vec.data[static_cast<size_t>(j)];
                }
            }
            nn::Var cur = nn::concat_cols({nn::matmul(nn::constant(ct), wot),
                                           nn::matmul(nn::constant(ci), wov)});
            nn::Var hist = nn::concat_cols({nn::matmul(nn::constant(pt_sum), wit),
                                            nn::matmul(nn::constant(pi_sum), wiv)});
            nn::Var scores = nn::block_scores(cur, hist, m);
            nn::Var loss = nn::softmax_ce_rows(scores, {label});
            if (grad != nullptr) {
                nn::backward(loss);
                auto fill = [&](int idx, const nn::Var& w) {
                    for (int i = 0; i < d * half; ++i) {
                        grad->data[static_cast<size_t>(idx * d * half + i)] =
                            w.node->grad.data[static_cast<size_t>(i)];
                    }
                };
                fill(0, wit);
                fill(1, wiv);
                fill(2, wot);
                fill(3, wov);
            }
            return loss.value().data[0];
        };
    };

    for (int rep = 0; rep < 5; ++rep) {
        std::vector<embed::SceneEmbedding> cands, past;
        for (int i = 0; i < m; ++i) cands.push_back(random_embedding(d, rng));
        for (int i = 0; i < 2; ++i) past.push_back(random_embedding(d, rng));
        nn::Tensor packed({4 * d * half});
        for (auto& v : packed.data) v = 0.3f * rng.normal();
        auto f = build_loss(cands, past, rep % m);
        CHECK(nn::grad_check(f, packed) < 1e-3f);
    }
}

TEST_CASE("parameter count matches the d=64 budget") {
    selector::SelectorConfig cfg;
    selector::SelectionHead h;
    h.init(cfg, 1);
    CHECK(h.parameter_count() == 8192);  // 4 * 64 * 32
    cfg.use_bias = true;
    selector::SelectionHead hb;
    hb.init(cfg, 1);
    CHECK(hb.parameter_count() == 8192 + 128);
    cfg.use_bias = false;
    cfg.m_tasks = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training: init loss ~ ln M, untrained ~ chance, learning lifts accuracy") {
    synth::CorpusConfig ccfg;
    ccfg.n_tasks = 150;
    ccfg.rng_seed = 61;
    auto corpus = synth::generate_corpus(ccfg);
    auto [train, heldout] = synth::split_corpus(corpus, 0.8);

    embed::EmbedderConfig ecfg;
    ecfg.hidden = 96;
    ecfg.optim.epochs = 20;
    ecfg.optim.batch_size = 64;
    embed::Embedder e;
    e.init(ecfg, synth::grammar_vocab(corpus.config.palette), 16, 16, 5);
    e.train(train);

    selector::SelectorConfig cfg;
    cfg.m_tasks = 10;
    cfg.optim.epochs = 10;
    selector::SelectionHead head;
    head.init(cfg, 7);

    double untrained_acc = selector::eval_selection_accuracy(head, heldout, e);
    MESSAGE("untrained accuracy: ", untrained_acc);
    CHECK(untrained_acc > 0.02);
    CHECK(untrained_acc < 0.25);

    auto report = head.train(train, e);
    CHECK(report.first_batch_loss == doctest::Approx(std::log(10.0)).epsilon(0.05));
    double acc = selector::eval_selection_accuracy(head, heldout, e);
    MESSAGE("trained accuracy: ", acc);
    CHECK(acc > 2 * untrained_acc);
    CHECK(acc > 0.3);

    // reproducibility
    selector::SelectionHead head2;
    head2.init(cfg, 7);
    auto report2 = head2.train(train, e);
    CHECK(report.epoch_losses == report2.epoch_losses);
}

TEST_CASE("checkpoint round trip preserves the head") {
    auto head = head_with(8, 91, /*normalize=*/false);
    std::string path = "test_selector.ckpt";
    head.save(path);
    selector::SelectionHead loaded;
    loaded.load(path);
    CHECK(loaded.config().d == 8);
    CHECK(loaded.config().normalize_before_projection == false);
    util::Rng rng(3);
    auto emb = random_embedding(8, rng);
    CHECK(loaded.project(emb, selector::Role::past).vec.data ==
          head.project(emb, selector::Role::past).vec.data);
    std::remove(path.c_str());
}
