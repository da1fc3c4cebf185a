#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace metagrl {

using Matrix = Eigen::MatrixXd;

struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

// Handle onto a node of the dynamic tape. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->grad.size() > 0; }
    void zero_grad() { node_->grad.setZero(node_->value.rows(), node_->value.cols()); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;
    bool defined() const { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Tensor constant(Matrix value);
Tensor scalar_constant(double value);
// Leaf that accumulates gradients; used for trainable parameters.
Tensor variable(Matrix value, std::string name = {});

// Reverse pass from a 1x1 tensor. Each reachable node is visited once in
// reverse topological order.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
// Same product computed row by row with a fixed summation order, so that
// permuting the rows of `a` permutes the result bit for bit.
Tensor matmul_rowwise(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a (n x c) plus a 1 x c row repeated over every row.
Tensor add_row(const Tensor& a, const Tensor& row);
// a (n x c) times an n x 1 column repeated over every column.
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);
// Elementwise minimum; ties send the gradient to `a`.
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor detach(const Tensor& a);

Tensor sum(const Tensor& a);       // 1 x 1
Tensor mean(const Tensor& a);      // 1 x 1
Tensor sum_cols(const Tensor& a);  // n x 1, each row summed
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor& a, const std::vector<int>& index);

// Rows are grouped by offsets (size groups + 1, offsets[0] = 0). Within a
// group the terms are summed in ascending value order, so the result does not
// depend on row order inside the group.
Tensor segment_sum(const Tensor& a, const std::vector<int>& offsets);
Tensor segment_mean(const Tensor& a, const std::vector<int>& offsets);

// A batch of graphs stacked as consecutive row blocks, each with its
// symmetric normalized adjacency D^-1/2 (A + I) D^-1/2 (self-loops added,
// degree counted with the self-loop).
struct GraphBatch {
    std::vector<int> offsets;
    std::vector<Matrix> norm_adj;

    int graph_count() const { return static_cast<int>(norm_adj.size()); }
    int node_count() const { return offsets.empty() ? 0 : offsets.back(); }
};

// Unit edge weights unless `edge_weights` is given (same shape as adj).
Matrix normalized_adjacency(const Matrix& adj, const Matrix* edge_weights = nullptr);
GraphBatch make_graph_batch(const std::vector<const Matrix*>& adjacency, const Matrix* edge_weights = nullptr);

// Row i of block g becomes sum_j norm_adj_g(i, j) * x_j, neighbor terms summed
// in ascending value order.
Tensor graph_aggregate(const Tensor& x, const GraphBatch& batch);

}  // namespace metagrl
