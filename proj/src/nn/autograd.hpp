#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nn/tensor.hpp"

namespace coseq::nn {

struct Param;

// Reverse-mode autodiff over a small fixed op set. Each op builds a Node
// whose backward_fn scatters the node's grad into its parents. Graphs are
// built per loss evaluation and freed with the last Var referencing them.

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    Param* bound_param = nullptr;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node(std::move(n)) {}

    const Tensor& value() const { return node->value; }
    const Tensor& grad() const { return node->grad; }
    bool defined() const { return node != nullptr; }

    NodePtr node;
};

// leaves
Var constant(Tensor v);              // requires_grad = false
Var leaf(Tensor v);                  // requires_grad = true, grad kept on node
Var from_param(Param& p);            // copies value, accumulates into p.grad

// ops
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_rowvec(const Var& a, const Var& b);  // b broadcast over rows of a
Var tanh_op(const Var& a);
Var relu(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_rows(const Var& a);                  // [m,n] -> [1,n]
Var row_l2norm(const Var& a);                // rows scaled to unit norm (eps-smoothed)
Var concat_cols(const std::vector<Var>& parts);

/// Mean of the embedding rows selected by each id list; an empty list maps
/// to a zero row.
Var embedding_mean(const Var& table, const std::vector<std::vector<int>>& ids);

/// Mean over rows of (logsumexp(row) - row[label]); the fused softmax +
/// cross-entropy whose gradient is (softmax - onehot) / m.
Var softmax_ce_rows(const Var& logits, const std::vector<int>& labels);

/// Mean squared error against a constant target of the same shape.
Var mse_loss(const Var& pred, const Tensor& target);

/// scores[b,j] = dot(c[b*M+j, :], h[b, :]) for candidate blocks of size M.
Var block_scores(const Var& candidates, const Var& history, int block);

/// out[i,j] = a[i,j] * gates[idx[i]]: per-row scalar gate selected by index.
Var scale_rows_by_index(const Var& a, const Var& gates, const std::vector<int>& idx);

/// y = x W (+ b). W is [d_in, d_out]; b, when present, is [1, d_out].
Var linear(const Var& x, const Var& w, const Var* b = nullptr);

/// Run reverse accumulation from a scalar root. Leaf grads are left on the
/// nodes; param-bound leaves additionally accumulate into Param::grad.
void backward(const Var& root);

}  // namespace coseq::nn
