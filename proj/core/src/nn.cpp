#include "metagrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace metagrl {

Tensor ParameterStore::add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.push_back(variable(std::move(init), name));
    return tensors_.back();
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

void ParameterStore::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value().size());
    return n;
}

Eigen::VectorXd ParameterStore::flat() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(scalar_count()));
    Eigen::Index at = 0;
    for (const auto& t : tensors_) {
        v.segment(at, t.value().size()) = t.value().reshaped();
        at += t.value().size();
    }
    return v;
}

void ParameterStore::set_flat(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != scalar_count()) throw std::invalid_argument("flat parameter size mismatch");
    Eigen::Index at = 0;
    for (auto& t : tensors_) {
        Matrix& m = t.mutable_value();
        m.reshaped() = v.segment(at, m.size());
        at += m.size();
    }
}

double ParameterStore::grad_norm() const {
    double s = 0.0;
    for (const auto& t : tensors_) {
        if (t.has_grad()) s += t.grad().squaredNorm();
    }
    return std::sqrt(s);
}

std::uint64_t ParameterStore::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tensors_) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.value().data());
        const std::size_t n = static_cast<std::size_t>(t.value().size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

void ParameterStore::require_same_layout(const ParameterStore& other) const {
    if (names_ != other.names_) throw std::invalid_argument("parameter stores have different tensor names");
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].rows() != other.tensors_[i].rows() || tensors_[i].cols() != other.tensors_[i].cols()) {
            throw std::invalid_argument("shape mismatch for parameter '" + names_[i] + "'");
        }
    }
}

void ParameterStore::copy_from(const ParameterStore& other) {
    require_same_layout(other);
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].mutable_value() = other.tensors_[i].value();
}

void ParameterStore::blend_from(const ParameterStore& other, double mix) {
    require_same_layout(other);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        Matrix& m = tensors_[i].mutable_value();
        m = mix * other.tensors_[i].value() + (1.0 - mix) * m;
    }
}

Activation activation_from_string(const std::string& text) {
    if (text == "identity") return Activation::identity;
    if (text == "relu") return Activation::relu;
    if (text == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + text + "'");
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Tensor activate(const Tensor& x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return relu(x);
        case Activation::tanh: return tanh(x);
    }
    return x;
}

namespace {

Matrix glorot(int in, int out, Rng& rng, double gain) {
    const double limit = gain * std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    return w;
}

}  // namespace

Dense Dense::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, double gain) {
    Dense d;
    d.w = store.add(name + ".w", glorot(in, out, rng, gain));
    d.b = store.add(name + ".b", Matrix::Zero(1, out));
    return d;
}

Tensor Dense::forward(const Tensor& x) const { return add_row(matmul(x, w), b); }

Mlp Mlp::create(ParameterStore& store, const std::string& name, const std::vector<int>& sizes, Rng& rng,
                Activation hidden_act, double last_gain) {
    if (sizes.size() < 2) throw std::invalid_argument("an MLP needs input and output sizes");
    Mlp m;
    m.hidden_act = hidden_act;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const bool last = k + 2 == sizes.size();
        m.layers.push_back(Dense::create(store, name + "." + std::to_string(k), sizes[k], sizes[k + 1], rng,
                                         last ? last_gain : 1.0));
    }
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        h = layers[k].forward(h);
        if (k + 1 < layers.size()) h = activate(h, hidden_act);
    }
    return h;
}

GcnLayer GcnLayer::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, Activation act) {
    GcnLayer g;
    g.theta = store.add(name + ".theta", glorot(in, out, rng, 1.0));
    g.act = act;
    return g;
}

Tensor GcnLayer::forward(const Tensor& x, const GraphBatch& batch) const {
    return activate(graph_aggregate(matmul_rowwise(x, theta), batch), act);
}

GcnEncoder GcnEncoder::create(ParameterStore& store, const std::string& name, int in, const std::vector<int>& widths,
                              Rng& rng, Activation act) {
    if (widths.empty()) throw std::invalid_argument("a GCN encoder needs at least one layer");
    GcnEncoder e;
    int prev = in;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        e.layers.push_back(GcnLayer::create(store, name + ".gcn" + std::to_string(k), prev, widths[k], rng, act));
        prev = widths[k];
    }
    return e;
}

Tensor GcnEncoder::node_embeddings(const Tensor& x, const GraphBatch& batch) const {
    Tensor h = x;
    for (const auto& layer : layers) h = layer.forward(h, batch);
    return h;
}

Tensor GcnEncoder::pooled(const Tensor& x, const GraphBatch& batch) const {
    return segment_mean(node_embeddings(x, batch), batch.offsets);
}

Tensor stack_features(const std::vector<const Matrix*>& features) {
    if (features.empty()) throw std::invalid_argument("no graphs to stack");
    Eigen::Index rows = 0;
    for (const Matrix* f : features) {
        if (f->cols() != features[0]->cols()) throw std::invalid_argument("graphs have different feature widths");
        rows += f->rows();
    }
    Matrix out(rows, features[0]->cols());
    Eigen::Index at = 0;
    for (const Matrix* f : features) {
        out.middleRows(at, f->rows()) = *f;
        at += f->rows();
    }
    return constant(std::move(out));
}

GaussianParams gaussian_head(const Tensor& mean, const Tensor& raw_log_std) {
    return {mean, clamp(raw_log_std, kLogStdMin, kLogStdMax)};
}

Tensor reparam_sample(const GaussianParams& g, const Matrix& eps) {
    if (eps.rows() != g.mean.rows() || eps.cols() != g.mean.cols()) throw std::invalid_argument("noise shape mismatch");
    return add(g.mean, mul(exp(g.log_std), constant(eps)));
}

Tensor gaussian_log_prob(const GaussianParams& g, const Tensor& x) {
    // -0.5 ((x - mu) / sigma)^2 - log sigma - 0.5 log(2 pi), summed per row
    const Tensor zs = div(sub(x, g.mean), exp(g.log_std));
    const Tensor per = add_scalar(neg(add(scale(square(zs), 0.5), g.log_std)), -0.5 * std::log(2.0 * std::numbers::pi));
    return sum_cols(per);
}

Tensor kl_gaussian(const Tensor& mu_q, const Tensor& log_std_q, const Tensor& mu_p, const Tensor& log_std_p) {
    // log sp - log sq + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
    const Tensor var_q = exp(scale(log_std_q, 2.0));
    const Tensor var_p = exp(scale(log_std_p, 2.0));
    const Tensor num = add(var_q, square(sub(mu_q, mu_p)));
    const Tensor terms = add_scalar(add(sub(log_std_p, log_std_q), div(num, scale(var_p, 2.0))), -0.5);
    return sum(terms);
}

Tensor kl_standard_normal(const Tensor& mu_q, const Tensor& log_std_q) {
    const Matrix zeros = Matrix::Zero(mu_q.rows(), mu_q.cols());
    return kl_gaussian(mu_q, log_std_q, constant(zeros), constant(zeros));
}

double kl_gaussian_value(const Eigen::VectorXd& mu_q, const Eigen::VectorXd& sigma_q, const Eigen::VectorXd& mu_p,
                         const Eigen::VectorXd& sigma_p) {
    if (mu_q.size() != sigma_q.size() || mu_p.size() != sigma_p.size() || mu_q.size() != mu_p.size()) {
        throw std::invalid_argument("kl_gaussian: dimension mismatch");
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < mu_q.size(); ++i) {
        if (!(sigma_q(i) > 0.0) || !(sigma_p(i) > 0.0)) throw std::invalid_argument("kl_gaussian: sigma must be positive");
        const double d = mu_q(i) - mu_p(i);
        kl += std::log(sigma_p(i) / sigma_q(i)) + (sigma_q(i) * sigma_q(i) + d * d) / (2.0 * sigma_p(i) * sigma_p(i)) - 0.5;
    }
    return kl;
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
    for (const auto& t : store.tensors()) {
        m_.push_back(Matrix::Zero(t.rows(), t.cols()));
        v_.push_back(Matrix::Zero(t.rows(), t.cols()));
    }
}

void Adam::step(ParameterStore& store) {
    auto& tensors = store.tensors();
    if (tensors.size() != m_.size()) throw std::logic_error("optimizer and parameter store layouts differ");
    for (const auto& t : tensors) {
        if (t.has_grad() && !t.grad().allFinite()) throw NonFiniteError("non-finite gradient for parameter '" + t.name() + "'");
    }
    double clip = 1.0;
    if (config_.clip_norm > 0.0) {
        const double norm = store.grad_norm();
        if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Tensor& p = tensors[i];
        const Matrix g = p.has_grad() ? Matrix(p.grad() * clip) : Matrix::Zero(p.rows(), p.cols());
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
        const Matrix step = (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + config_.eps);
        p.mutable_value() -= config_.lr * step;
    }
}

GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor*> params, double delta, double floor) {
    for (Tensor* p : params) p->zero_grad();
    backward(loss());
    std::vector<Matrix> analytic;
    for (Tensor* p : params) analytic.push_back(p->has_grad() ? p->grad() : Matrix::Zero(p->rows(), p->cols()));

    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& value = params[k]->mutable_value();
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double saved = value.data()[i];
            value.data()[i] = saved + delta;
            const double up = loss().item();
            value.data()[i] = saved - delta;
            const double down = loss().item();
            value.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * delta);
            const double a = analytic[k].data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > result.max_rel_error || !std::isfinite(rel)) {
                result.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
                result.worst_parameter = params[k]->name();
                result.worst_index = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

GradCheckResult grad_check(const std::function<Tensor()>& loss, ParameterStore& store, double delta, double floor) {
    std::vector<Tensor*> params;
    for (auto& t : store.tensors()) params.push_back(&t);
    return grad_check(loss, params, delta, floor);
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

void require_finite(const Tensor& t, const std::string& where) {
    if (!t.value().allFinite()) throw NonFiniteError("non-finite values in " + where);
}

}  // namespace metagrl
