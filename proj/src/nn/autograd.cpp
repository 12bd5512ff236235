#include "nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "nn/optim.hpp"
#include "util/errors.hpp"

namespace coseq::nn {

static NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                         std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
    for (const auto& p : n->parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    return n;
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return Var(n);
}

Var leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(n);
}

Var from_param(Param& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->requires_grad = true;
    n->bound_param = &p;
    return Var(n);
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul(a.value(), b.value());
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        if (A.requires_grad) {
            Tensor da = matmul(self.grad, transpose(B.value));
            A.ensure_grad();
            for (size_t i = 0; i < da.data.size(); ++i) A.grad.data[i] += da.data[i];
        }
        if (B.requires_grad) {
            Tensor db = matmul(transpose(A.value), self.grad);
            B.ensure_grad();
            for (size_t i = 0; i < db.data.size(); ++i) B.grad.data[i] += db.data[i];
        }
    }));
}

Var transpose(const Var& a) {
    return Var(make_node(transpose(a.value()), {a.node}, [](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        Tensor g = transpose(self.grad);
        A.ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) A.grad.data[i] += g.data[i];
    }));
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out(shape, a.value().data);
    return Var(make_node(std::move(out), {a.node}, [](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            A.grad.data[i] += self.grad.data[i];
        }
    }));
}

static void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             a.value().shape_str() + " vs " + b.value().shape_str());
    }
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& P = *self.parents[static_cast<size_t>(k)];
            if (!P.requires_grad) continue;
            P.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                P.grad.data[i] += self.grad.data[i];
            }
        }
    }));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                A.grad.data[i] += self.grad.data[i];
            }
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                B.grad.data[i] -= self.grad.data[i];
            }
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                A.grad.data[i] += self.grad.data[i] * B.value.data[i];
            }
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                B.grad.data[i] += self.grad.data[i] * A.value.data[i];
            }
        }
    }));
}

Var scale(const Var& a, float s) {
    Tensor out = a.value();
    for (auto& v : out.data) v *= s;
    return Var(make_node(std::move(out), {a.node}, [s](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            A.grad.data[i] += s * self.grad.data[i];
        }
    }));
}

Var add_rowvec(const Var& a, const Var& b) {
    int m = a.value().rows(), n = a.value().cols();
    if (b.value().numel() != n) {
        throw DimensionError("add_rowvec: bias length " +
                             std::to_string(b.value().numel()) + " != cols " +
                             std::to_string(n));
    }
    Tensor out = a.value();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.data[static_cast<size_t>(i) * n + j] += b.value().data[static_cast<size_t>(j)];
        }
    }
    return Var(make_node(std::move(out), {a.node, b.node}, [m, n](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i) {
                A.grad.data[i] += self.grad.data[i];
            }
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    B.grad.data[static_cast<size_t>(j)] +=
                        self.grad.data[static_cast<size_t>(i) * n + j];
                }
            }
        }
    }));
}

Var tanh_op(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = std::tanh(v);
    return Var(make_node(std::move(out), {a.node}, [](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            float y = self.value.data[i];
            A.grad.data[i] += self.grad.data[i] * (1.0f - y * y);
        }
    }));
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
    return Var(make_node(std::move(out), {a.node}, [](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            if (A.value.data[i] > 0.0f) A.grad.data[i] += self.grad.data[i];
        }
    }));
}

Var sum_all(const Var& a) {
    double acc = 0.0;
    for (float v : a.value().data) acc += v;
    Tensor out({1}, {static_cast<float>(acc)});
    return Var(make_node(std::move(out), {a.node}, [](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        float g = self.grad.data[0];
        for (auto& v : A.grad.data) v += g;
    }));
}

Var mean_all(const Var& a) {
    int n = a.value().numel();
    return scale(sum_all(a), 1.0f / static_cast<float>(n));
}

Var sum_rows(const Var& a) {
    int m = a.value().rows(), n = a.value().cols();
    Tensor out({1, n});
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += a.value().data[static_cast<size_t>(i) * n + j];
        out.data[static_cast<size_t>(j)] = static_cast<float>(acc);
    }
    return Var(make_node(std::move(out), {a.node}, [m, n](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                A.grad.data[static_cast<size_t>(i) * n + j] +=
                    self.grad.data[static_cast<size_t>(j)];
            }
        }
    }));
}

Var row_l2norm(const Var& a) {
    int m = a.value().rows(), n = a.value().cols();
    Tensor out = a.value();
    std::vector<float> norms(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            float v = a.value().data[static_cast<size_t>(i) * n + j];
            s += static_cast<double>(v) * v;
        }
        float norm = static_cast<float>(std::sqrt(s + 1e-12));
        norms[static_cast<size_t>(i)] = norm;
        for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(i) * n + j] /= norm;
    }
    return Var(make_node(std::move(out), {a.node}, [m, n, norms](Node& self) {
        Node& A = *self.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const float* y = self.value.data.data() + static_cast<size_t>(i) * n;
            const float* g = self.grad.data.data() + static_cast<size_t>(i) * n;
            float* out_g = A.grad.data.data() + static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += static_cast<double>(g[j]) * y[j];
            float inv = 1.0f / norms[static_cast<size_t>(i)];
            for (int j = 0; j < n; ++j) {
                out_g[j] += (g[j] - static_cast<float>(dot) * y[j]) * inv;
            }
        }
    }));
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty part list");
    int m = parts[0].value().rows();
    int total = 0;
    std::vector<NodePtr> nodes;
    std::vector<int> widths;
    for (const auto& p : parts) {
        if (p.value().rows() != m) throw DimensionError("concat_cols: row mismatch");
        widths.push_back(p.value().cols());
        total += p.value().cols();
        nodes.push_back(p.node);
    }
    Tensor out({m, total});
    int off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        int w = widths[k];
        const Tensor& src = parts[k].value();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
                out.data[static_cast<size_t>(i) * total + off + j] =
                    src.data[static_cast<size_t>(i) * w + j];
            }
        }
        off += w;
    }
    return Var(make_node(std::move(out), std::move(nodes), [m, total, widths](Node& self) {
        int off2 = 0;
        for (size_t k = 0; k < self.parents.size(); ++k) {
            int w = widths[k];
            Node& P = *self.parents[k];
            if (P.requires_grad) {
                P.ensure_grad();
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < w; ++j) {
                        P.grad.data[static_cast<size_t>(i) * w + j] +=
                            self.grad.data[static_cast<size_t>(i) * total + off2 + j];
                    }
                }
            }
            off2 += w;
        }
    }));
}

Var embedding_mean(const Var& table, const std::vector<std::vector<int>>& ids) {
    int vocab = table.value().rows(), d = table.value().cols();
    int m = static_cast<int>(ids.size());
    Tensor out({m, d});
    for (int i = 0; i < m; ++i) {
        const auto& row_ids = ids[static_cast<size_t>(i)];
        if (row_ids.empty()) continue;
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int id : row_ids) {
                if (id < 0 || id >= vocab) {
                    throw VocabularyError("embedding_mean: id out of range");
                }
                acc += table.value().data[static_cast<size_t>(id) * d + j];
            }
            out.data[static_cast<size_t>(i) * d + j] =
                static_cast<float>(acc / static_cast<double>(row_ids.size()));
        }
    }
    return Var(make_node(std::move(out), {table.node}, [ids, d](Node& self) {
        Node& T = *self.parents[0];
        if (!T.requires_grad) return;
        T.ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            const auto& row_ids = ids[i];
            if (row_ids.empty()) continue;
            float inv = 1.0f / static_cast<float>(row_ids.size());
            for (int id : row_ids) {
                for (int j = 0; j < d; ++j) {
                    T.grad.data[static_cast<size_t>(id) * d + j] +=
                        self.grad.data[i * static_cast<size_t>(d) + static_cast<size_t>(j)] * inv;
                }
            }
        }
    }));
}

Var softmax_ce_rows(const Var& logits, const std::vector<int>& labels) {
    int m = logits.value().rows(), k = logits.value().cols();
    if (static_cast<int>(labels.size()) != m) {
        throw DimensionError("softmax_ce_rows: labels length != rows");
    }
    for (int lab : labels) {
        if (lab < 0 || lab >= k) throw DomainError("softmax_ce_rows: label out of range");
    }
    // softmax rows are kept for the backward pass
    Tensor probs({m, k});
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const float* row = logits.value().data.data() + static_cast<size_t>(i) * k;
        float mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        double lse = static_cast<double>(mx) + std::log(denom);
        total += lse - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
        for (int j = 0; j < k; ++j) {
            probs.data[static_cast<size_t>(i) * k + j] =
                static_cast<float>(std::exp(static_cast<double>(row[j]) - lse));
        }
    }
    Tensor out({1}, {static_cast<float>(total / m)});
    return Var(make_node(std::move(out), {logits.node},
                         [m, k, labels, probs](Node& self) {
        Node& L = *self.parents[0];
        if (!L.requires_grad) return;
        L.ensure_grad();
        float g = self.grad.data[0] / static_cast<float>(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < k; ++j) {
                float p = probs.data[static_cast<size_t>(i) * k + j];
                float y = (j == labels[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
                L.grad.data[static_cast<size_t>(i) * k + j] += g * (p - y);
            }
        }
    }));
}

Var mse_loss(const Var& pred, const Tensor& target) {
    if (!pred.value().same_shape(target)) {
        throw DimensionError("mse_loss: shape mismatch");
    }
    int n = pred.value().numel();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = static_cast<double>(pred.value().data[static_cast<size_t>(i)]) -
                   target.data[static_cast<size_t>(i)];
        acc += d * d;
    }
    Tensor out({1}, {static_cast<float>(acc / n)});
    return Var(make_node(std::move(out), {pred.node}, [target, n](Node& self) {
        Node& P = *self.parents[0];
        if (!P.requires_grad) return;
        P.ensure_grad();
        float g = self.grad.data[0] * 2.0f / static_cast<float>(n);
        for (int i = 0; i < n; ++i) {
            P.grad.data[static_cast<size_t>(i)] +=
                g * (P.value.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)]);
        }
    }));
}

Var block_scores(const Var& candidates, const Var& history, int block) {
    int rows = candidates.value().rows(), d = candidates.value().cols();
    int b = history.value().rows();
    if (history.value().cols() != d || rows != b * block) {
        throw DimensionError("block_scores: inconsistent shapes");
    }
    Tensor out({b, block});
    for (int i = 0; i < b; ++i) {
        const float* h = history.value().data.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < block; ++j) {
            const float* c =
                candidates.value().data.data() + static_cast<size_t>(i * block + j) * d;
            double acc = 0.0;
            for (int t = 0; t < d; ++t) acc += static_cast<double>(c[t]) * h[t];
            out.data[static_cast<size_t>(i) * block + j] = static_cast<float>(acc);
        }
    }
    return Var(make_node(std::move(out), {candidates.node, history.node},
                         [b, block, d](Node& self) {
        Node& C = *self.parents[0];
        Node& H = *self.parents[1];
        if (C.requires_grad) C.ensure_grad();
        if (H.requires_grad) H.ensure_grad();
        for (int i = 0; i < b; ++i) {
            const float* h = H.value.data.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < block; ++j) {
                float g = self.grad.data[static_cast<size_t>(i) * block + j];
                if (g == 0.0f) continue;
                const float* c = C.value.data.data() + static_cast<size_t>(i * block + j) * d;
                if (C.requires_grad) {
                    float* cg = C.grad.data.data() + static_cast<size_t>(i * block + j) * d;
                    for (int t = 0; t < d; ++t) cg[t] += g * h[t];
                }
                if (H.requires_grad) {
                    float* hg = H.grad.data.data() + static_cast<size_t>(i) * d;
                    for (int t = 0; t < d; ++t) hg[t] += g * c[t];
                }
            }
        }
    }));
}

Var scale_rows_by_index(const Var& a, const Var& gates, const std::vector<int>& idx) {
    int m = a.value().rows(), n = a.value().cols();
    if (static_cast<int>(idx.size()) != m) {
        throw DimensionError("scale_rows_by_index: index length != rows");
    }
    int g = gates.value().numel();
    for (int i : idx) {
        if (i < 0 || i >= g) throw DomainError("scale_rows_by_index: index out of range");
    }
    Tensor out = a.value();
    for (int i = 0; i < m; ++i) {
        float s = gates.value().data[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(i) * n + j] *= s;
    }
    return Var(make_node(std::move(out), {a.node, gates.node}, [m, n, idx](Node& self) {
        Node& A = *self.parents[0];
        Node& G = *self.parents[1];
        if (A.requires_grad) A.ensure_grad();
        if (G.requires_grad) G.ensure_grad();
        for (int i = 0; i < m; ++i) {
            int gi = idx[static_cast<size_t>(i)];
            float s = G.value.data[static_cast<size_t>(gi)];
            double gacc = 0.0;
            for (int j = 0; j < n; ++j) {
                float go = self.grad.data[static_cast<size_t>(i) * n + j];
                if (A.requires_grad) {
                    A.grad.data[static_cast<size_t>(i) * n + j] += go * s;
                }
                gacc += static_cast<double>(go) * A.value.data[static_cast<size_t>(i) * n + j];
            }
            if (G.requires_grad) {
                G.grad.data[static_cast<size_t>(gi)] += static_cast<float>(gacc);
            }
        }
    }));
}

Var linear(const Var& x, const Var& w, const Var* b) {
    Var y = matmul(x, w);
    if (b != nullptr && b->defined()) y = add_rowvec(y, *b);
    return y;
}

void backward(const Var& root) {
    if (!root.defined() || root.value().numel() != 1) {
        throw DomainError("backward: root must be a defined scalar");
    }
    // iterative post-order topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node.get(), 0);
    visited.insert(root.node.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node->ensure_grad();
    root.node->grad.data[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad) continue;
        n->ensure_grad();
        if (n->backward_fn) n->backward_fn(*n);
        if (n->bound_param != nullptr) {
            Tensor& pg = n->bound_param->grad;
            for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n->grad.data[i];
        }
    }
}

}  // namespace coseq::nn
