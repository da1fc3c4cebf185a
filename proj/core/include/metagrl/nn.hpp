#pragma once

#include "metagrl/autodiff.hpp"
#include "metagrl/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace metagrl {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Named trainable tensors of one network. Names are unique within a store.
class ParameterStore {
public:
    Tensor add(const std::string& name, Matrix init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    const std::vector<std::string>& names() const { return names_; }

    void zero_grad();
    std::size_t scalar_count() const;
    Eigen::VectorXd flat() const;
    void set_flat(const Eigen::VectorXd& v);
    double grad_norm() const;
    // FNV-1a over the raw bytes of every value, in insertion order.
    std::uint64_t checksum() const;
    // Copies values (not gradients) from a store with identical layout.
    void copy_from(const ParameterStore& other);
    // this <- mix * other + (1 - mix) * this
    void blend_from(const ParameterStore& other, double mix);
    void require_same_layout(const ParameterStore& other) const;

private:
    std::vector<Tensor> tensors_;
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
};

enum class Activation { identity, relu, tanh };

Activation activation_from_string(const std::string& text);
const char* to_string(Activation a);
Tensor activate(const Tensor& x, Activation a);

struct Dense {
    Tensor w;
    Tensor b;

    // Glorot-uniform weights times `gain`, zero bias.
    static Dense create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, double gain = 1.0);
    Tensor forward(const Tensor& x) const;
    int in() const { return static_cast<int>(w.rows()); }
    int out() const { return static_cast<int>(w.cols()); }
};

// Hidden layers use `hidden_act`; the last layer is linear.
struct Mlp {
    std::vector<Dense> layers;
    Activation hidden_act = Activation::relu;

    static Mlp create(ParameterStore& store, const std::string& name, const std::vector<int>& sizes, Rng& rng,
                      Activation hidden_act = Activation::relu, double last_gain = 1.0);
    Tensor forward(const Tensor& x) const;
};

// x_i' = act( sum_j a_ij * (x_j Theta) ) over the self-looped neighborhood.
struct GcnLayer {
    Tensor theta;
    Activation act = Activation::tanh;

    static GcnLayer create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                           Activation act = Activation::tanh);
    Tensor forward(const Tensor& x, const GraphBatch& batch) const;
};

// Stacked GCN layers followed by mean pooling per graph.
struct GcnEncoder {
    std::vector<GcnLayer> layers;

    static GcnEncoder create(ParameterStore& store, const std::string& name, int in, const std::vector<int>& widths,
                             Rng& rng, Activation act = Activation::tanh);
    Tensor node_embeddings(const Tensor& x, const GraphBatch& batch) const;
    Tensor pooled(const Tensor& x, const GraphBatch& batch) const;
    int out() const { return static_cast<int>(layers.back().theta.cols()); }
};

// Stacks the eig matrices of several graphs into one feature tensor.
Tensor stack_features(const std::vector<const Matrix*>& features);

// Diagonal Gaussian; log_std is already clamped.
struct GaussianParams {
    Tensor mean;
    Tensor log_std;
};

GaussianParams gaussian_head(const Tensor& mean, const Tensor& raw_log_std);
// z = mean + exp(log_std) * eps; eps enters as a constant.
Tensor reparam_sample(const GaussianParams& g, const Matrix& eps);
// Per-row log density, n x 1.
Tensor gaussian_log_prob(const GaussianParams& g, const Tensor& x);

// Closed-form KL(q || p) for diagonal Gaussians given log standard
// deviations, summed over all elements.
Tensor kl_gaussian(const Tensor& mu_q, const Tensor& log_std_q, const Tensor& mu_p, const Tensor& log_std_p);
// KL(q || N(0, I)).
Tensor kl_standard_normal(const Tensor& mu_q, const Tensor& log_std_q);
// Value-only version taking standard deviations; throws on sigma <= 0.
double kl_gaussian_value(const Eigen::VectorXd& mu_q, const Eigen::VectorXd& sigma_q, const Eigen::VectorXd& mu_p,
                         const Eigen::VectorXd& sigma_p);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Global gradient-norm clip; nonpositive disables.
    double clip_norm = 0.0;
};

class Adam {
public:
    Adam() = default;
    Adam(const ParameterStore& store, AdamConfig config);

    // Applies the accumulated gradients of the store; missing gradients count
    // as zero. A non-finite gradient throws NonFiniteError naming the tensor.
    void step(ParameterStore& store);
    long steps() const { return t_; }
    const AdamConfig& config() const { return config_; }
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    AdamConfig config_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    Eigen::Index worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares reverse-mode gradients of `loss` against central differences for
// every scalar of every tensor in `params`. Relative error is
// |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor*> params, double delta = 1e-5,
                           double floor = 1e-6);
GradCheckResult grad_check(const std::function<Tensor()>& loss, ParameterStore& store, double delta = 1e-5,
                           double floor = 1e-6);

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);
void require_finite(const Tensor& t, const std::string& where);

}  // namespace metagrl
