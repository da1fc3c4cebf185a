#include "metagrl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace metagrl {

void Node::accumulate(const Matrix& g) {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad.setZero(value.rows(), value.cols());
    grad += g;
}

double Tensor::item() const {
    if (value().size() != 1) throw std::logic_error("item() on a non-scalar tensor");
    return value()(0, 0);
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(fn);
    }
    return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    }
}

void push(Node& n, std::size_t k, const Matrix& g) {
    if (n.parents[k]->requires_grad) n.parents[k]->accumulate(g);
}

double ordered_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

}  // namespace

Tensor constant(Matrix value) { return make(std::move(value), {}, nullptr); }

Tensor scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Tensor variable(Matrix value, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
    if (loss.value().size() != 1) throw std::invalid_argument("backward needs a scalar loss");
    if (!loss.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& n) {
        const Matrix& av = n.parents[0]->value;
        const Matrix& bv = n.parents[1]->value;
        push(n, 0, n.grad * bv.transpose());
        push(n, 1, av.transpose() * n.grad);
    });
}

Tensor matmul_rowwise(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul_rowwise: inner dimensions differ");
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    Matrix out(av.rows(), bv.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
        for (Eigen::Index c = 0; c < bv.cols(); ++c) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < av.cols(); ++k) s += av(i, k) * bv(k, c);
            out(i, c) = s;
        }
    }
    return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
        push(n, 0, n.grad * n.parents[1]->value.transpose());
        push(n, 1, n.parents[0]->value.transpose() * n.grad);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& n) {
        push(n, 0, n.grad);
        push(n, 1, n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& n) {
        push(n, 0, n.grad);
        push(n, 1, -n.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& n) {
        push(n, 0, n.grad.cwiseProduct(n.parents[1]->value));
        push(n, 1, n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    return make(a.value().cwiseQuotient(b.value()), {a.node(), b.node()}, [](Node& n) {
        const Matrix& av = n.parents[0]->value;
        const Matrix& bv = n.parents[1]->value;
        push(n, 0, n.grad.cwiseQuotient(bv));
        push(n, 1, -n.grad.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make(std::move(out), {a.node(), row.node()}, [](Node& n) {
        push(n, 0, n.grad);
        push(n, 1, n.grad.colwise().sum());
    });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: column shape mismatch");
    Matrix out = a.value().array().colwise() * col.value().col(0).array();
    return make(std::move(out), {a.node(), col.node()}, [](Node& n) {
        const Matrix& av = n.parents[0]->value;
        const Matrix& cv = n.parents[1]->value;
        push(n, 0, (n.grad.array().colwise() * cv.col(0).array()).matrix());
        push(n, 1, n.grad.cwiseProduct(av).rowwise().sum());
    });
}

Tensor scale(const Tensor& a, double s) {
    return make(a.value() * s, {a.node()}, [s](Node& n) { push(n, 0, n.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
    return make(a.value().array() + s, {a.node()}, [](Node& n) { push(n, 0, n.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor tanh(const Tensor& a) {
    Matrix out = a.value().array().tanh();
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, n.grad.cwiseProduct((1.0 - n.value.array().square()).matrix()));
    });
}

Tensor relu(const Tensor& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, (n.parents[0]->value.array() > 0.0).select(n.grad, 0.0).matrix());
    });
}

Tensor exp(const Tensor& a) {
    Matrix out = a.value().array().exp();
    return make(std::move(out), {a.node()}, [](Node& n) { push(n, 0, n.grad.cwiseProduct(n.value)); });
}

Tensor log(const Tensor& a) {
    Matrix out = a.value().array().log();
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, n.grad.cwiseQuotient(n.parents[0]->value));
    });
}

Tensor sqrt(const Tensor& a) {
    Matrix out = a.value().array().sqrt();
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, (0.5 * n.grad.array() / n.value.array()).matrix());
    });
}

Tensor softplus(const Tensor& a) {
    // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
    Matrix out = a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
    return make(std::move(out), {a.node()}, [](Node& n) {
        const Matrix sig = n.parents[0]->value.unaryExpr([](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
        push(n, 0, n.grad.cwiseProduct(sig));
    });
}

Tensor square(const Tensor& a) {
    Matrix out = a.value().array().square();
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, 2.0 * n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
    return make(std::move(out), {a.node()}, [lo, hi](Node& n) {
        const auto& x = n.parents[0]->value.array();
        push(n, 0, ((x > lo) && (x < hi)).select(n.grad, 0.0).matrix());
    });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "minimum");
    Matrix out = a.value().cwiseMin(b.value());
    return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
        const auto take_a = n.parents[0]->value.array() <= n.parents[1]->value.array();
        push(n, 0, take_a.select(n.grad, 0.0).matrix());
        push(n, 1, take_a.select(0.0, n.grad).matrix());
    });
}

Tensor detach(const Tensor& a) { return constant(a.value()); }

Tensor sum(const Tensor& a) {
    return make(Matrix::Constant(1, 1, a.value().sum()), {a.node()}, [](Node& n) {
        const auto& p = n.parents[0]->value;
        push(n, 0, Matrix::Constant(p.rows(), p.cols(), n.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    if (a.value().size() == 0) throw std::invalid_argument("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor sum_cols(const Tensor& a) {
    Matrix out = a.value().rowwise().sum();
    return make(std::move(out), {a.node()}, [](Node& n) {
        push(n, 0, n.grad.col(0).replicate(1, n.parents[0]->value.cols()));
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    Eigen::Index cols = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows()) throw std::invalid_argument("concat_cols: row count mismatch");
        cols += p.cols();
        parents.push_back(p.node());
    }
    Matrix out(parts[0].rows(), cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make(std::move(out), std::move(parents), [](Node& n) {
        Eigen::Index at = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            const Eigen::Index c = n.parents[k]->value.cols();
            push(n, k, n.grad.middleCols(at, c));
            at += c;
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    Eigen::Index rows = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.cols() != parts[0].cols()) throw std::invalid_argument("concat_rows: column count mismatch");
        rows += p.rows();
        parents.push_back(p.node());
    }
    Matrix out(rows, parts[0].cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make(std::move(out), std::move(parents), [](Node& n) {
        Eigen::Index at = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            const Eigen::Index r = n.parents[k]->value.rows();
            push(n, k, n.grad.middleRows(at, r));
            at += r;
        }
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
    return make(a.value().middleCols(start, count), {a.node()}, [start, count](Node& n) {
        const auto& p = n.parents[0]->value;
        Matrix g = Matrix::Zero(p.rows(), p.cols());
        g.middleCols(start, count) = n.grad;
        push(n, 0, g);
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& index) {
    Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] < 0 || index[r] >= a.rows()) throw std::invalid_argument("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(r)) = a.value().row(index[r]);
    }
    return make(std::move(out), {a.node()}, [index](Node& n) {
        const auto& p = n.parents[0]->value;
        Matrix g = Matrix::Zero(p.rows(), p.cols());
        for (std::size_t r = 0; r < index.size(); ++r) g.row(index[r]) += n.grad.row(static_cast<Eigen::Index>(r));
        push(n, 0, g);
    });
}

Tensor segment_sum(const Tensor& a, const std::vector<int>& offsets) {
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != a.rows()) {
        throw std::invalid_argument("segment_sum: offsets do not cover the rows");
    }
    const auto groups = static_cast<Eigen::Index>(offsets.size() - 1);
    Matrix out(groups, a.cols());
    std::vector<double> terms;
    for (Eigen::Index g = 0; g < groups; ++g) {
        if (offsets[g + 1] < offsets[g]) throw std::invalid_argument("segment_sum: offsets must be nondecreasing");
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            terms.clear();
            for (int r = offsets[g]; r < offsets[g + 1]; ++r) terms.push_back(a.value()(r, c));
            out(g, c) = ordered_sum(terms);
        }
    }
    return make(std::move(out), {a.node()}, [offsets](Node& n) {
        const auto& p = n.parents[0]->value;
        Matrix g(p.rows(), p.cols());
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
            for (int r = offsets[s]; r < offsets[s + 1]; ++r) g.row(r) = n.grad.row(static_cast<Eigen::Index>(s));
        }
        push(n, 0, g);
    });
}

Tensor segment_mean(const Tensor& a, const std::vector<int>& offsets) {
    Tensor s = segment_sum(a, offsets);
    Matrix inv(s.rows(), 1);
    for (Eigen::Index g = 0; g < s.rows(); ++g) {
        const int count = offsets[g + 1] - offsets[g];
        if (count == 0) throw std::invalid_argument("segment_mean: empty segment");
        inv(g, 0) = 1.0 / count;
    }
    return mul_col(s, constant(std::move(inv)));
}

Matrix normalized_adjacency(const Matrix& adj, const Matrix* edge_weights) {
    if (adj.rows() != adj.cols()) throw std::invalid_argument("adjacency must be square");
    if (edge_weights && (edge_weights->rows() != adj.rows() || edge_weights->cols() != adj.cols())) {
        throw std::invalid_argument("edge weights must match the adjacency shape");
    }
    const Eigen::Index n = adj.rows();
    Matrix a = Matrix::Zero(n, n);
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j || adj(i, j) != 0.0) {
                a(i, j) = (i != j && edge_weights) ? (*edge_weights)(i, j) : 1.0;
                deg(i) += 1.0;
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (a(i, j) != 0.0) a(i, j) /= std::sqrt(deg(i) * deg(j));
        }
    }
    return a;
}

GraphBatch make_graph_batch(const std::vector<const Matrix*>& adjacency, const Matrix* edge_weights) {
    GraphBatch batch;
    batch.offsets.push_back(0);
    for (const Matrix* adj : adjacency) {
        batch.norm_adj.push_back(normalized_adjacency(*adj, edge_weights));
        batch.offsets.push_back(batch.offsets.back() + static_cast<int>(adj->rows()));
    }
    return batch;
}

Tensor graph_aggregate(const Tensor& x, const GraphBatch& batch) {
    if (x.rows() != batch.node_count()) throw std::invalid_argument("graph_aggregate: row count differs from the batch");
    const Matrix& xv = x.value();
    Matrix out(xv.rows(), xv.cols());
    std::vector<double> terms;
    for (int g = 0; g < batch.graph_count(); ++g) {
        const Matrix& a = batch.norm_adj[g];
        const int off = batch.offsets[g];
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index c = 0; c < xv.cols(); ++c) {
                terms.clear();
                for (Eigen::Index j = 0; j < a.cols(); ++j) {
                    if (a(i, j) != 0.0) terms.push_back(a(i, j) * xv(off + j, c));
                }
                out(off + i, c) = ordered_sum(terms);
            }
        }
    }
    const auto shared = std::make_shared<GraphBatch>(batch);
    return make(std::move(out), {x.node()}, [shared](Node& n) {
        Matrix g = Matrix::Zero(n.value.rows(), n.value.cols());
        for (int b = 0; b < shared->graph_count(); ++b) {
            const Matrix& a = shared->norm_adj[b];
            const int off = shared->offsets[b];
            g.middleRows(off, a.rows()) = a.transpose() * n.grad.middleRows(off, a.rows());
        }
        push(n, 0, g);
    });
}

}  // namespace metagrl
