#pragma once

// Independent scalar-loop oracles used by the test suites. These stay
// deliberately naive and separate from the library implementations they
// check.

#include <cmath>
#include <vector>

#include "nn/tensor.hpp"

namespace oracles {

/// Triple-loop matmul in double precision.
inline coseq::nn::Tensor matmul_naive(const coseq::nn::Tensor& a,
                                      const coseq::nn::Tensor& b) {
    int m = a.rows(), k = a.cols(), n = b.cols();
    coseq::nn::Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += static_cast<double>(a.at(i, p)) * b.at(p, j);
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

/// Direct exp/sum softmax (no max subtraction; inputs kept small by tests).
inline std::vector<double> softmax_naive(const std::vector<double>& v) {
    double denom = 0.0;
    for (double x : v) denom += std::exp(x);
    std::vector<double> out;
    for (double x : v) out.push_back(std::exp(x) / denom);
    return out;
}

inline double dot_naive(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double cosine_naive(const std::vector<float>& a, const std::vector<float>& b) {
    double na = std::sqrt(dot_naive(a, a));
    double nb = std::sqrt(dot_naive(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot_naive(a, b) / (na * nb);
}

/// Brute-force contrastive selection: project with explicit loops, score by
/// summed dot products, softmax, first argmax.
struct BruteSelection {
    int chosen = 0;
    std::vector<double> probs;
    std::vector<double> scores;
};

inline BruteSelection select_naive(
    const std::vector<std::vector<float>>& cand_text,   // each [d]
    const std::vector<std::vector<float>>& cand_image,  // each [d]
    const std::vector<std::vector<float>>& past_text,
    const std::vector<std::vector<float>>& past_image,
    const coseq::nn::Tensor& w_it, const coseq::nn::Tensor& w_iv,
    const coseq::nn::Tensor& w_ot, const coseq::nn::Tensor& w_ov, double temperature) {
    int d = static_cast<int>(cand_text[0].size());
    int half = w_it.cols();
    auto project = [d, half](const std::vector<float>& t, const std::vector<float>& v,
                             const coseq::nn::Tensor& wt, const coseq::nn::Tensor& wv) {
        std::vector<double> out(static_cast<size_t>(2 * half), 0.0);
        for (int j = 0; j < half; ++j) {
            for (int i = 0; i < d; ++i) {
                out[static_cast<size_t>(j)] += static_cast<double>(t[static_cast<size_t>(i)]) * wt.at(i, j);
                out[static_cast<size_t>(half + j)] +=
                    static_cast<double>(v[static_cast<size_t>(i)]) * wv.at(i, j);
            }
        }
        return out;
    };

    std::vector<std::vector<double>> past;
    for (size_t k = 0; k < past_text.size(); ++k) {
        past.push_back(project(past_text[k], past_image[k], w_it, w_iv));
    }
    BruteSelection out;
    for (size_t c = 0; c < cand_text.size(); ++c) {
        auto pc = project(cand_text[c], cand_image[c], w_ot, w_ov);
        double s = 0.0;
        for (const auto& pk : past) {
            for (size_t j = 0; j < pc.size(); ++j) s += pc[j] * pk[j];
        }
        out.scores.push_back(s);
    }
    std::vector<double> logits;
    for (double s : out.scores) logits.push_back(s / temperature);
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    for (double l : logits) out.probs.push_back(std::exp(l - mx) / denom);
    out.chosen = 0;
    for (size_t c = 1; c < out.scores.size(); ++c) {
        if (out.scores[c] > out.scores[static_cast<size_t>(out.chosen)]) {
            out.chosen = static_cast<int>(c);
        }
    }
    return out;
}

}  // namespace oracles
