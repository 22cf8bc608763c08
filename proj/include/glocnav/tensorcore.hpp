#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "glocnav/rng.hpp"

namespace glocnav::tc {

using Scalar = double;

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One node of the dynamically built compute graph. Values and gradients are
// dense row-major buffers; `backprop` scatters this node's gradient into its
// parents' gradient buffers.
struct Node {
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    std::vector<int> shape;
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantics handle over a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool needs_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<Scalar> data,
                       bool needs_grad = false);
    static Tensor scalar(Scalar v);

    bool valid() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->numel(); }
    std::vector<Scalar>& data() { return node_->value; }
    const std::vector<Scalar>& data() const { return node_->value; }
    std::vector<Scalar>& grad() { return node_->grad; }
    const std::vector<Scalar>& grad() const { return node_->grad; }
    bool needs_grad() const { return node_->needs_grad; }
    std::shared_ptr<Node> node() const { return node_; }

    Scalar item() const { return node_->value.at(0); }
    int dim(int i) const { return node_->shape.at(i); }

private:
    std::shared_ptr<Node> node_;
};

// Reverse-mode sweep from a scalar loss. Accumulates into parameter .grad
// buffers (callers zero them between optimizer steps).
void backward(const Tensor& loss);

// Thread-local graph recording switch; disable for frozen-weight inference.
bool grad_enabled();
void set_grad_enabled(bool on);
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

// ---- dense kernels (OpenMP with a serial reference; see parallel.hpp) ----
// C[m,n] = A[m,k] @ B[k,n] on raw buffers.
void matmul_raw(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n);
void matmul_raw_serial(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n);
void matmul_raw_omp(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n);

// y[co, lo] = sum_ci_t w[co,ci,t] * x[ci, s*lo + t - k/2], zero padded.
void conv1d_raw(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                int cout, int ksize, int stride, int lout);
void conv1d_raw_serial(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                       int cout, int ksize, int stride, int lout);
void conv1d_raw_omp(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                    int cout, int ksize, int stride, int lout);

// ---- graph ops ----
Tensor matmul(const Tensor& a, const Tensor& b);            // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);               // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_row_bias(const Tensor& x, const Tensor& b);      // [m,n] + [n]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // [c,l] + [c]
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);                       // [m,n], per row
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1);
Tensor upsample_nearest2(const Tensor& x);                  // [c,l] -> [c,2l]
Tensor concat_channels(const Tensor& a, const Tensor& b);   // [c1,l]+[c2,l]
Tensor concat_vec(const std::vector<Tensor>& parts);        // 1-D concat
Tensor mean_rows(const Tensor& x);                          // [m,n] -> [n]
Tensor transpose2(const Tensor& x);                         // [m,n] -> [n,m]
Tensor reshape(const Tensor& x, std::vector<int> shape);    // copying reshape
Tensor mse_loss(const Tensor& a, const Tensor& b);          // -> scalar
// Multi-head self-attention core: softmax(QK^T/sqrt(dh))V per head, heads
// concatenated back to [t, d]. d must be divisible by heads.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

// ---- parameters and optimizer ----

struct AdamWConfig {
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
    Scalar weight_decay = 1e-4;
};

// Named parameter tensors plus AdamW moments. Names are unique; insertion
// order is the checkpoint order.
class ParamStore {
public:
    Tensor add(const std::string& name, std::vector<int> shape, Rng& rng,
               Scalar init_scale);
    Tensor add_zeros(const std::string& name, std::vector<int> shape);
    Tensor add_constant(const std::string& name, std::vector<int> shape, Scalar v);

    // Register an existing tensor (checkpoint assembly, shared parameters).
    void put(const std::string& name, const Tensor& t);

    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const { return map_.count(name) > 0; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t total_params() const;

    void zero_grads();
    // Decoupled weight decay AdamW step over all parameters; deterministic.
    void adamw_step(Scalar lr, const AdamWConfig& cfg = {});
    long step_count() const { return step_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> map_;
    std::unordered_map<std::string, std::vector<Scalar>> m1_, m2_;
    long step_ = 0;
};

// Cosine-annealed learning rate: max_lr * (1 + cos(pi * min(step,T)/T)) / 2.
Scalar cosine_lr(long step, Scalar max_lr, long t_max);

// Sinusoidal positional encoding of an integer step, dimension `dim` (even).
std::vector<Scalar> sinusoidal_embedding(int step, int dim);

}  // namespace glocnav::tc
