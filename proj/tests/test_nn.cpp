#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nn/autograd.hpp"
#include "nn/checkpoint.hpp"
#include "nn/functional.hpp"
#include "nn/optim.hpp"
#include "nn/tensor.hpp"
#include "support/oracles.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace coseq;

static nn::Tensor random_tensor(std::vector<int> shape, util::Rng& rng, float scale = 1.0f) {
    nn::Tensor t(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

TEST_CASE("linear: identity and zero cases") {
    nn::Tensor eye({2, 2}, {1, 0, 0, 1});
    nn::Var y = nn::linear(nn::constant(eye), nn::constant(eye));
    CHECK(y.value().data == eye.data);

    nn::Tensor x0({3, 2});
    nn::Tensor b({1, 4}, {1, 2, 3, 4});
    nn::Tensor w({2, 4});
    nn::Var bias = nn::constant(b);
    nn::Var y2 = nn::linear(nn::constant(x0), nn::constant(w), &bias);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(y2.value().at(i, j) == b.data[static_cast<size_t>(j)]);
    }
    nn::Var y3 = nn::linear(nn::constant(x0), nn::constant(w));
    for (float v : y3.value().data) CHECK(v == 0.0f);
}

TEST_CASE("linear: random case matches triple-loop oracle") {
    util::Rng rng(7);
    nn::Tensor a = random_tensor({3, 4}, rng);
    nn::Tensor b = random_tensor({4, 2}, rng);
    nn::Tensor got = nn::matmul(a, b);
    nn::Tensor want = oracles::matmul_naive(a, b);
    for (int i = 0; i < got.numel(); ++i) {
        CHECK(std::fabs(got.data[static_cast<size_t>(i)] - want.data[static_cast<size_t>(i)]) < 1e-6f);
    }
    CHECK_THROWS_AS(nn::matmul(a, a), DimensionError);
}

TEST_CASE("softmax: symmetry, singleton, formula oracle") {
    nn::Tensor s3 = nn::softmax(nn::Tensor::vec({0.7f, 0.7f, 0.7f}));
    for (float v : s3.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    nn::Tensor s1 = nn::softmax(nn::Tensor::vec({-3.2f}));
    CHECK(s1.data[0] == doctest::Approx(1.0));

    nn::Tensor s = nn::softmax(nn::Tensor::vec({1.0f, 2.0f, 3.0f}));
    auto want = oracles::softmax_naive({1.0, 2.0, 3.0});
    for (int i = 0; i < 3; ++i) {
        CHECK(std::fabs(s.data[static_cast<size_t>(i)] - want[static_cast<size_t>(i)]) < 1e-7);
    }
    CHECK_THROWS_AS(nn::softmax(nn::Tensor{}), DomainError);
    // zero-length dimensions violate the tensor invariant outright
    CHECK_THROWS_AS(nn::Tensor::vec({}), DimensionError);
}

TEST_CASE("softmax: probability vector even at magnitude 1e4") {
    util::Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<float> v(5);
        for (auto& x : v) x = rng.uniform(-1e4f, 1e4f);
        nn::Tensor p = nn::softmax(nn::Tensor::vec(v));
        double sum = 0.0;
        for (float x : p.data) {
            CHECK(x >= 0.0f);
            CHECK(std::isfinite(x));
            sum += x;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("cross_entropy: exact values and validation") {
    nn::Tensor onehot = nn::Tensor::vec({0, 1, 0, 0});
    CHECK(nn::cross_entropy(onehot, onehot) == doctest::Approx(0.0).epsilon(1e-6));

    nn::Tensor uniform = nn::Tensor::full({4}, 0.25f);
    CHECK(nn::cross_entropy(uniform, onehot) == doctest::Approx(std::log(4.0)).epsilon(1e-5));

    CHECK_THROWS_AS(nn::cross_entropy(uniform, nn::Tensor::vec({1, 1, 0, 0})), DomainError);
    CHECK_THROWS_AS(nn::cross_entropy(uniform, nn::Tensor::vec({0, 0, 0, 0})), DomainError);
    CHECK_THROWS_AS(nn::cross_entropy(uniform, nn::Tensor::vec({0.5f, 0, 0, 0.5f})),
                    DomainError);
}

TEST_CASE("fused softmax+CE gradient matches finite differences") {
    util::Rng rng(13);
    for (int rep = 0; rep < 5; ++rep) {
        nn::Tensor logits = random_tensor({2, 5}, rng);
        std::vector<int> labels = {rng.uniform_int(5), rng.uniform_int(5)};
        auto f = [&labels](const nn::Tensor& x, nn::Tensor* grad) -> float {
            nn::Var v = nn::leaf(x);
            nn::Var loss = nn::softmax_ce_rows(v, labels);
            if (grad != nullptr) {
                nn::backward(loss);
                *grad = v.node->grad;
            }
            return loss.value().data[0];
        };
        CHECK(nn::grad_check(f, logits) < 1e-3f);
    }
}

TEST_CASE("adam: zero gradient leaves values unchanged") {
    nn::Param p("p", nn::Tensor::vec({1.0f, -2.0f}));
    std::vector<nn::Param*> params = {&p};
    nn::OptimConfig cfg;
    nn::adam_step(params, cfg);
    CHECK(p.value.data[0] == 1.0f);
    CHECK(p.value.data[1] == -2.0f);
    CHECK(p.step_count == 1);
}

TEST_CASE("adam: single scalar step matches hand-evaluated formula") {
    nn::Param p("p", nn::Tensor::vec({1.5f}));
    p.adam_m.data[0] = 0.2f;
    p.adam_v.data[0] = 0.05f;
    p.step_count = 3;
    p.grad.data[0] = -0.7f;
    nn::OptimConfig cfg;
    cfg.learning_rate = 0.01f;

    // independent evaluation of the bias-corrected update
    double m = 0.9 * 0.2 + 0.1 * (-0.7);
    double v = 0.999 * 0.05 + 0.001 * 0.49;
    double mhat = m / (1.0 - std::pow(0.9, 4));
    double vhat = v / (1.0 - std::pow(0.999, 4));
    double want = 1.5 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8);

    std::vector<nn::Param*> params = {&p};
    nn::adam_step(params, cfg);
    CHECK(p.value.data[0] == doctest::Approx(want).epsilon(1e-5));
    CHECK(p.grad.data[0] == 0.0f);  // grads zeroed
    CHECK(p.step_count == 4);
}

TEST_CASE("adam: identical params and grads stay identical; NaN fails fast") {
    util::Rng rng(17);
    nn::Tensor init = random_tensor({3, 3}, rng);
    nn::Param a("a", init), b("b", init);
    a.grad = random_tensor({3, 3}, rng);
    b.grad = a.grad;
    std::vector<nn::Param*> params = {&a, &b};
    nn::OptimConfig cfg;
    nn::adam_step(params, cfg);
    CHECK(a.value.data == b.value.data);

    a.grad.data[0] = std::nanf("");
    CHECK_THROWS_AS(nn::adam_step(params, cfg), NumericError);
}

TEST_CASE("optim config invariants") {
    nn::OptimConfig cfg;
    CHECK(cfg.learning_rate == 0.01f);
    CHECK(cfg.batch_size == 500);
    CHECK(cfg.epochs == 10);
    cfg.beta1 = 1.0f;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.beta1 = 0.9f;
    cfg.learning_rate = 0.0f;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("grad_check: quadratic analytic case") {
    auto f = [](const nn::Tensor& x, nn::Tensor* grad) -> float {
        if (grad != nullptr) grad->data[0] = 2.0f * x.data[0];
        return x.data[0] * x.data[0];
    };
    CHECK(nn::grad_check(f, nn::Tensor::vec({1.0f})) < 1e-6f);
}

TEST_CASE("grad_check: linear layer loss") {
    util::Rng rng(19);
    nn::Tensor x = random_tensor({4, 3}, rng);
    nn::Tensor target = random_tensor({4, 2}, rng);
    nn::Tensor w0 = random_tensor({3, 2}, rng, 0.5f);
    auto f = [&](const nn::Tensor& w, nn::Tensor* grad) -> float {
        nn::Var wv = nn::leaf(w);
        nn::Var loss = nn::mse_loss(nn::matmul(nn::constant(x), wv), target);
        if (grad != nullptr) {
            nn::backward(loss);
            *grad = wv.node->grad;
        }
        return loss.value().data[0];
    };
    CHECK(nn::grad_check(f, w0) < 1e-3f);
}

TEST_CASE("backward matches finite differences across the op set") {
    util::Rng rng(23);
    // tanh MLP + row normalization + CE, randomized small shapes
    for (int rep = 0; rep < 10; ++rep) {
        int m = 1 + rng.uniform_int(3);
        int k = 2 + rng.uniform_int(4);
        int h = 2 + rng.uniform_int(4);
        nn::Tensor x = random_tensor({m, k}, rng, 0.8f);
        nn::Tensor w2 = random_tensor({h, 3}, rng, 0.5f);
        std::vector<int> labels;
        for (int i = 0; i < m; ++i) labels.push_back(rng.uniform_int(3));
        nn::Tensor w0 = random_tensor({k, h}, rng, 0.4f);
        auto f = [&](const nn::Tensor& w, nn::Tensor* grad) -> float {
            nn::Var wv = nn::leaf(w);
            nn::Var hidden = nn::tanh_op(nn::matmul(nn::constant(x), wv));
            nn::Var normed = nn::row_l2norm(hidden);
            nn::Var logits = nn::matmul(normed, nn::constant(w2));
            nn::Var loss = nn::softmax_ce_rows(logits, labels);
            if (grad != nullptr) {
                nn::backward(loss);
                *grad = wv.node->grad;
            }
            return loss.value().data[0];
        };
        CHECK(nn::grad_check(f, w0) < 1e-3f);
    }
}

TEST_CASE("backward: embedding_mean, concat, block_scores, sub/mul/scale") {
    util::Rng rng(29);
    std::vector<std::vector<int>> ids = {{0, 2, 2}, {1}, {}};
    nn::Tensor table0 = random_tensor({4, 3}, rng);
    auto f = [&](const nn::Tensor& table, nn::Tensor* grad) -> float {
        nn::Var tv = nn::leaf(table);
        nn::Var pooled = nn::embedding_mean(tv, ids);             // 3x3
        nn::Var twice = nn::concat_cols({pooled, nn::scale(pooled, 2.0f)});  // 3x6
        nn::Var diff = nn::sub(twice, nn::constant(nn::Tensor::full({3, 6}, 0.1f)));
        nn::Var prod = nn::mul(diff, diff);                       // elementwise square
        nn::Var loss = nn::mean_all(prod);
        if (grad != nullptr) {
            nn::backward(loss);
            *grad = tv.node->grad;
        }
        return loss.value().data[0];
    };
    CHECK(nn::grad_check(f, table0) < 1e-3f);

    // block_scores path
    nn::Tensor cands = random_tensor({6, 4}, rng);
    nn::Tensor hist0 = random_tensor({2, 4}, rng);
    std::vector<int> labels = {1, 2};
    auto g = [&](const nn::Tensor& hist, nn::Tensor* grad) -> float {
        nn::Var hv = nn::leaf(hist);
        nn::Var scores = nn::block_scores(nn::constant(cands), hv, 3);
        nn::Var loss = nn::softmax_ce_rows(scores, labels);
        if (grad != nullptr) {
            nn::backward(loss);
            *grad = hv.node->grad;
        }
        return loss.value().data[0];
    };
    CHECK(nn::grad_check(g, hist0) < 1e-3f);
}

TEST_CASE("training loop is bit-reproducible under a fixed seed") {
    auto run = [] {
        util::Rng rng(123);
        nn::Param w("w", nn::xavier_uniform({4, 2}, rng));
        nn::Tensor x = random_tensor({8, 4}, rng);
        nn::Tensor y = random_tensor({8, 2}, rng);
        nn::OptimConfig cfg;
        cfg.learning_rate = 0.05f;
        std::vector<nn::Param*> params = {&w};
        std::vector<float> losses;
        for (int step = 0; step < 10; ++step) {
            nn::Var loss = nn::mse_loss(nn::matmul(nn::constant(x), nn::from_param(w)), y);
            losses.push_back(loss.value().data[0]);
            nn::backward(loss);
            nn::adam_step(params, cfg);
        }
        return losses;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);  // bitwise identical
}

TEST_CASE("checkpoint container round-trips tensors") {
    util::Rng rng(31);
    std::vector<nn::NamedTensor> tensors;
    tensors.push_back({"alpha", random_tensor({3, 5}, rng)});
    tensors.push_back({"beta/gamma", random_tensor({7}, rng)});
    std::string path = "test_ckpt.bin";
    nn::save_checkpoint(path, tensors);
    auto loaded = nn::load_checkpoint(path);
    CHECK(loaded.size() == 2);
    CHECK(nn::require_tensor(loaded, "alpha").data == tensors[0].tensor.data);
    CHECK(nn::require_tensor(loaded, "beta/gamma").shape == std::vector<int>{7});
    CHECK_THROWS_AS(nn::require_tensor(loaded, "missing"), FormatError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(nn::load_checkpoint("does_not_exist.bin"), IoError);
}

TEST_CASE("tensor invariants: data length matches shape, finiteness check") {
    CHECK_THROWS_AS(nn::Tensor({2, 2}, {1.0f}), DimensionError);
    nn::Tensor t({2}, {1.0f, std::nanf("")});
    CHECK_FALSE(t.all_finite());
}
