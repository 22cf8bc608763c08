#include "glocnav/tensorcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "glocnav/parallel.hpp"

namespace glocnav::tc {

namespace {

// Graph recording switch. Off during rollout inference so frozen-weight
// forward passes stay allocation-light and thread-safe.
thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::shared_ptr<Node> make_node(std::vector<int> shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), 0.0);
    return n;
}

bool record(const std::initializer_list<Tensor>& inputs) {
    if (!g_grad_enabled) return false;
    for (const auto& t : inputs)
        if (t.node()->needs_grad) return true;
    return false;
}

void attach(const std::shared_ptr<Node>& out, std::initializer_list<Tensor> inputs,
            std::function<void(Node&)> fn) {
    out->needs_grad = true;
    for (const auto& t : inputs) out->parents.push_back(t.node());
    out->backprop = std::move(fn);
}

void check(bool cond, const char* msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(std::vector<int> shape, bool needs_grad) {
    auto n = make_node(std::move(shape));
    n->needs_grad = needs_grad;
    if (needs_grad) n->ensure_grad();
    return Tensor(n);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Scalar> data, bool needs_grad) {
    auto n = make_node(std::move(shape));
    check(n->value.size() == data.size(), "Tensor::from: data length != shape product");
    n->value = std::move(data);
    n->needs_grad = needs_grad;
    if (needs_grad) n->ensure_grad();
    return Tensor(n);
}

Tensor Tensor::scalar(Scalar v) { return from({1}, {v}); }

void backward(const Tensor& loss) {
    check(loss.numel() == 1, "backward: loss must be scalar");
    // Topological order by iterative DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* p = node->parents[child++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- kernels

void matmul_raw_serial(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        Scalar* ci = c + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (int p = 0; p < k; ++p) {
            Scalar av = a[static_cast<std::size_t>(i) * k + p];
            const Scalar* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_raw_omp(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int i = 0; i < m; ++i) {
        Scalar* ci = c + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (int p = 0; p < k; ++p) {
            Scalar av = a[static_cast<std::size_t>(i) * k + p];
            const Scalar* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_raw(const Scalar* a, const Scalar* b, Scalar* c, int m, int k, int n) {
    if (use_serial_kernels())
        matmul_raw_serial(a, b, c, m, k, n);
    else
        matmul_raw_omp(a, b, c, m, k, n);
}

void conv1d_raw_serial(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                       int cout, int ksize, int stride, int lout) {
    int pad = ksize / 2;
    for (int co = 0; co < cout; ++co) {
        for (int lo = 0; lo < lout; ++lo) {
            Scalar acc = 0.0;
            for (int ci = 0; ci < cin; ++ci) {
                const Scalar* xr = x + static_cast<std::size_t>(ci) * len;
                const Scalar* wr = w + (static_cast<std::size_t>(co) * cin + ci) * ksize;
                for (int t = 0; t < ksize; ++t) {
                    int xi = stride * lo + t - pad;
                    if (xi >= 0 && xi < len) acc += wr[t] * xr[xi];
                }
            }
            y[static_cast<std::size_t>(co) * lout + lo] = acc;
        }
    }
}

void conv1d_raw_omp(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                    int cout, int ksize, int stride, int lout) {
    int pad = ksize / 2;
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int co = 0; co < cout; ++co) {
        for (int lo = 0; lo < lout; ++lo) {
            Scalar acc = 0.0;
            for (int ci = 0; ci < cin; ++ci) {
                const Scalar* xr = x + static_cast<std::size_t>(ci) * len;
                const Scalar* wr = w + (static_cast<std::size_t>(co) * cin + ci) * ksize;
                for (int t = 0; t < ksize; ++t) {
                    int xi = stride * lo + t - pad;
                    if (xi >= 0 && xi < len) acc += wr[t] * xr[xi];
                }
            }
            y[static_cast<std::size_t>(co) * lout + lo] = acc;
        }
    }
}

void conv1d_raw(const Scalar* x, const Scalar* w, Scalar* y, int cin, int len,
                int cout, int ksize, int stride, int lout) {
    if (use_serial_kernels())
        conv1d_raw_serial(x, w, y, cin, len, cout, ksize, stride, lout);
    else
        conv1d_raw_omp(x, w, y, cin, len, cout, ksize, stride, lout);
}

// ---------------------------------------------------------------- graph ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2, "matmul: rank-2 inputs required");
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    check(k == k2, "matmul: inner dimensions differ");
    auto out = make_node({m, n});
    matmul_raw(a.data().data(), b.data().data(), out->value.data(), m, k, n);
    if (record({a, b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(out, {a, b}, [an, bn, m, k, n](Node& self) {
            an->ensure_grad();
            bn->ensure_grad();
            const Scalar* dc = self.grad.data();
            // dA += dC B^T ; dB += A^T dC
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    Scalar g = dc[static_cast<std::size_t>(i) * n + j];
                    if (g == 0.0) continue;
                    for (int p = 0; p < k; ++p) {
                        an->grad[static_cast<std::size_t>(i) * k + p] +=
                            g * bn->value[static_cast<std::size_t>(p) * n + j];
                        bn->grad[static_cast<std::size_t>(p) * n + j] +=
                            g * an->value[static_cast<std::size_t>(i) * k + p];
                    }
                }
        });
    }
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "add: shape mismatch");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->value.size(); ++i)
        out->value[i] = a.data()[i] + b.data()[i];
    if (record({a, b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(out, {a, b}, [an, bn](Node& self) {
            an->ensure_grad();
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                an->grad[i] += self.grad[i];
                bn->grad[i] += self.grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor scale(const Tensor& a, Scalar s) {
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = s * a.data()[i];
    if (record({a})) {
        auto an = a.node();
        attach(out, {a}, [an, s](Node& self) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += s * self.grad[i];
        });
    }
    return Tensor(out);
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    check(x.shape().size() == 2 && b.shape().size() == 1, "add_row_bias: [m,n] + [n]");
    int m = x.dim(0), n = x.dim(1);
    check(b.dim(0) == n, "add_row_bias: bias length mismatch");
    auto out = make_node(x.shape());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->value[static_cast<std::size_t>(i) * n + j] =
                x.data()[static_cast<std::size_t>(i) * n + j] + b.data()[j];
    if (record({x, b})) {
        auto xn = x.node();
        auto bn = b.node();
        attach(out, {x, b}, [xn, bn, m, n](Node& self) {
            xn->ensure_grad();
            bn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    Scalar g = self.grad[static_cast<std::size_t>(i) * n + j];
                    xn->grad[static_cast<std::size_t>(i) * n + j] += g;
                    bn->grad[j] += g;
                }
        });
    }
    return Tensor(out);
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    check(x.shape().size() == 2 && b.shape().size() == 1, "add_channel_bias: [c,l] + [c]");
    int c = x.dim(0), l = x.dim(1);
    check(b.dim(0) == c, "add_channel_bias: channel count mismatch");
    auto out = make_node(x.shape());
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < l; ++j)
            out->value[static_cast<std::size_t>(i) * l + j] =
                x.data()[static_cast<std::size_t>(i) * l + j] + b.data()[i];
    if (record({x, b})) {
        auto xn = x.node();
        auto bn = b.node();
        attach(out, {x, b}, [xn, bn, c, l](Node& self) {
            xn->ensure_grad();
            bn->ensure_grad();
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < l; ++j) {
                    Scalar g = self.grad[static_cast<std::size_t>(i) * l + j];
                    xn->grad[static_cast<std::size_t>(i) * l + j] += g;
                    bn->grad[i] += g;
                }
        });
    }
    return Tensor(out);
}

Tensor silu(const Tensor& x) {
    auto out = make_node(x.shape());
    for (std::size_t i = 0; i < out->value.size(); ++i) {
        Scalar v = x.data()[i];
        out->value[i] = v / (1.0 + std::exp(-v));
    }
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn](Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                Scalar v = xn->value[i];
                Scalar sg = 1.0 / (1.0 + std::exp(-v));
                xn->grad[i] += self.grad[i] * sg * (1.0 + v * (1.0 - sg));
            }
        });
    }
    return Tensor(out);
}

Tensor relu(const Tensor& x) {
    auto out = make_node(x.shape());
    for (std::size_t i = 0; i < out->value.size(); ++i)
        out->value[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn](Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
        });
    }
    return Tensor(out);
}

Tensor softmax_rows(const Tensor& x) {
    check(x.shape().size() == 2, "softmax_rows: rank-2 input required");
    int m = x.dim(0), n = x.dim(1);
    auto out = make_node(x.shape());
    for (int i = 0; i < m; ++i) {
        const Scalar* xi = x.data().data() + static_cast<std::size_t>(i) * n;
        Scalar* yi = out->value.data() + static_cast<std::size_t>(i) * n;
        Scalar mx = *std::max_element(xi, xi + n);
        Scalar sum = 0.0;
        for (int j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (int j = 0; j < n; ++j) yi[j] /= sum;
    }
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn, m, n](Node& self) {
            xn->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const Scalar* p = self.value.data() + static_cast<std::size_t>(i) * n;
                const Scalar* dy = self.grad.data() + static_cast<std::size_t>(i) * n;
                Scalar dot = 0.0;
                for (int j = 0; j < n; ++j) dot += dy[j] * p[j];
                for (int j = 0; j < n; ++j)
                    xn->grad[static_cast<std::size_t>(i) * n + j] += p[j] * (dy[j] - dot);
            }
        });
    }
    return Tensor(out);
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    check(x.shape().size() == 2 && w.shape().size() == 3 && b.shape().size() == 1,
          "conv1d: expects x[c,l], w[co,ci,k], b[co]");
    int cin = x.dim(0), len = x.dim(1);
    int cout = w.dim(0), ksize = w.dim(2);
    check(w.dim(1) == cin, "conv1d: input channel mismatch");
    check(b.dim(0) == cout, "conv1d: bias channel mismatch");
    check(stride == 1 || stride == 2, "conv1d: stride must be 1 or 2");
    int lout = (len + stride - 1) / stride;
    auto out = make_node({cout, lout});
    conv1d_raw(x.data().data(), w.data().data(), out->value.data(), cin, len, cout,
               ksize, stride, lout);
    for (int co = 0; co < cout; ++co)
        for (int lo = 0; lo < lout; ++lo)
            out->value[static_cast<std::size_t>(co) * lout + lo] += b.data()[co];
    if (record({x, w, b})) {
        auto xn = x.node();
        auto wn = w.node();
        auto bn = b.node();
        attach(out, {x, w, b}, [xn, wn, bn, cin, len, cout, ksize, stride, lout](Node& self) {
            xn->ensure_grad();
            wn->ensure_grad();
            bn->ensure_grad();
            int pad = ksize / 2;
            for (int co = 0; co < cout; ++co) {
                for (int lo = 0; lo < lout; ++lo) {
                    Scalar g = self.grad[static_cast<std::size_t>(co) * lout + lo];
                    if (g == 0.0) continue;
                    bn->grad[co] += g;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int t = 0; t < ksize; ++t) {
                            int xi = stride * lo + t - pad;
                            if (xi < 0 || xi >= len) continue;
                            std::size_t wi = (static_cast<std::size_t>(co) * cin + ci) * ksize + t;
                            wn->grad[wi] += g * xn->value[static_cast<std::size_t>(ci) * len + xi];
                            xn->grad[static_cast<std::size_t>(ci) * len + xi] +=
                                g * wn->value[wi];
                        }
                    }
                }
            }
        });
    }
    return Tensor(out);
}

Tensor upsample_nearest2(const Tensor& x) {
    check(x.shape().size() == 2, "upsample_nearest2: rank-2 input required");
    int c = x.dim(0), l = x.dim(1);
    auto out = make_node({c, 2 * l});
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < l; ++j) {
            Scalar v = x.data()[static_cast<std::size_t>(i) * l + j];
            out->value[static_cast<std::size_t>(i) * 2 * l + 2 * j] = v;
            out->value[static_cast<std::size_t>(i) * 2 * l + 2 * j + 1] = v;
        }
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn, c, l](Node& self) {
            xn->ensure_grad();
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < l; ++j)
                    xn->grad[static_cast<std::size_t>(i) * l + j] +=
                        self.grad[static_cast<std::size_t>(i) * 2 * l + 2 * j] +
                        self.grad[static_cast<std::size_t>(i) * 2 * l + 2 * j + 1];
        });
    }
    return Tensor(out);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(1),
          "concat_channels: [c1,l] and [c2,l] required");
    int c1 = a.dim(0), c2 = b.dim(0), l = a.dim(1);
    auto out = make_node({c1 + c2, l});
    std::copy(a.data().begin(), a.data().end(), out->value.begin());
    std::copy(b.data().begin(), b.data().end(),
              out->value.begin() + static_cast<std::ptrdiff_t>(c1) * l);
    if (record({a, b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(out, {a, b}, [an, bn, c1, c2, l](Node& self) {
            an->ensure_grad();
            bn->ensure_grad();
            std::size_t na = static_cast<std::size_t>(c1) * l;
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
            for (std::size_t i = 0; i < static_cast<std::size_t>(c2) * l; ++i)
                bn->grad[i] += self.grad[na + i];
        });
    }
    return Tensor(out);
}

Tensor concat_vec(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_vec: empty input");
    int total = 0;
    bool rec = false;
    for (const auto& p : parts) {
        check(p.shape().size() == 1, "concat_vec: rank-1 parts required");
        total += p.dim(0);
        if (g_grad_enabled && p.node()->needs_grad) rec = true;
    }
    auto out = make_node({total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->value.begin() + off);
        off += p.numel();
    }
    if (rec) {
        std::vector<std::shared_ptr<Node>> ps;
        for (const auto& p : parts) ps.push_back(p.node());
        out->needs_grad = true;
        out->parents = ps;
        out->backprop = [ps](Node& self) {
            std::size_t o = 0;
            for (const auto& p : ps) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->value.size(); ++i)
                    p->grad[i] += self.grad[o + i];
                o += p->value.size();
            }
        };
    }
    return Tensor(out);
}

Tensor mean_rows(const Tensor& x) {
    check(x.shape().size() == 2, "mean_rows: rank-2 input required");
    int m = x.dim(0), n = x.dim(1);
    auto out = make_node({n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->value[j] += x.data()[static_cast<std::size_t>(i) * n + j] / m;
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn, m, n](Node& self) {
            xn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    xn->grad[static_cast<std::size_t>(i) * n + j] += self.grad[j] / m;
        });
    }
    return Tensor(out);
}

Tensor transpose2(const Tensor& x) {
    check(x.shape().size() == 2, "transpose2: rank-2 input required");
    int m = x.dim(0), n = x.dim(1);
    auto out = make_node({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->value[static_cast<std::size_t>(j) * m + i] =
                x.data()[static_cast<std::size_t>(i) * n + j];
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn, m, n](Node& self) {
            xn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    xn->grad[static_cast<std::size_t>(i) * n + j] +=
                        self.grad[static_cast<std::size_t>(j) * m + i];
        });
    }
    return Tensor(out);
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    check(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
    auto out = make_node(std::move(shape));
    out->value = x.data();
    if (record({x})) {
        auto xn = x.node();
        attach(out, {x}, [xn](Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.grad[i];
        });
    }
    return Tensor(out);
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "mse_loss: shape mismatch");
    auto out = make_node({1});
    std::size_t n = a.numel();
    Scalar acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Scalar d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    out->value[0] = acc / static_cast<Scalar>(n);
    if (record({a, b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(out, {a, b}, [an, bn, n](Node& self) {
            an->ensure_grad();
            bn->ensure_grad();
            Scalar g = 2.0 * self.grad[0] / static_cast<Scalar>(n);
            for (std::size_t i = 0; i < n; ++i) {
                Scalar d = an->value[i] - bn->value[i];
                an->grad[i] += g * d;
                bn->grad[i] -= g * d;
            }
        });
    }
    return Tensor(out);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    check(q.shape().size() == 2 && q.shape() == k.shape() && k.shape() == v.shape(),
          "attention: q,k,v must share shape [t,d]");
    int t = q.dim(0), d = q.dim(1);
    check(heads > 0 && d % heads == 0, "attention: d must divide by head count");
    int dh = d / heads;
    Scalar inv = 1.0 / std::sqrt(static_cast<Scalar>(dh));
    auto out = make_node({t, d});
    // Per-head softmax probabilities, kept for the backward pass.
    auto probs = std::make_shared<std::vector<Scalar>>(
        static_cast<std::size_t>(heads) * t * t);
    auto at = [d](const std::vector<Scalar>& buf, int row, int col) {
        return buf[static_cast<std::size_t>(row) * d + col];
    };
    for (int hd = 0; hd < heads; ++hd) {
        int c0 = hd * dh;
        Scalar* P = probs->data() + static_cast<std::size_t>(hd) * t * t;
        for (int i = 0; i < t; ++i) {
            Scalar* pi = P + static_cast<std::size_t>(i) * t;
            Scalar mx = -std::numeric_limits<Scalar>::infinity();
            for (int j = 0; j < t; ++j) {
                Scalar s = 0.0;
                for (int c = 0; c < dh; ++c)
                    s += at(q.data(), i, c0 + c) * at(k.data(), j, c0 + c);
                pi[j] = s * inv;
                mx = std::max(mx, pi[j]);
            }
            Scalar sum = 0.0;
            for (int j = 0; j < t; ++j) {
                pi[j] = std::exp(pi[j] - mx);
                sum += pi[j];
            }
            for (int j = 0; j < t; ++j) pi[j] /= sum;
            for (int c = 0; c < dh; ++c) {
                Scalar acc = 0.0;
                for (int j = 0; j < t; ++j) acc += pi[j] * at(v.data(), j, c0 + c);
                out->value[static_cast<std::size_t>(i) * d + c0 + c] = acc;
            }
        }
    }
    if (record({q, k, v})) {
        auto qn = q.node();
        auto kn = k.node();
        auto vn = v.node();
        attach(out, {q, k, v}, [qn, kn, vn, probs, heads, t, d, dh, inv](Node& self) {
            qn->ensure_grad();
            kn->ensure_grad();
            vn->ensure_grad();
            std::vector<Scalar> dP(static_cast<std::size_t>(t) * t);
            std::vector<Scalar> dS(static_cast<std::size_t>(t) * t);
            for (int hd = 0; hd < heads; ++hd) {
                int c0 = hd * dh;
                const Scalar* P = probs->data() + static_cast<std::size_t>(hd) * t * t;
                // dV = P^T dO ; dP = dO V^T
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < t; ++j) {
                        Scalar acc = 0.0;
                        for (int c = 0; c < dh; ++c)
                            acc += self.grad[static_cast<std::size_t>(i) * d + c0 + c] *
                                   vn->value[static_cast<std::size_t>(j) * d + c0 + c];
                        dP[static_cast<std::size_t>(i) * t + j] = acc;
                    }
                for (int j = 0; j < t; ++j)
                    for (int c = 0; c < dh; ++c) {
                        Scalar acc = 0.0;
                        for (int i = 0; i < t; ++i)
                            acc += P[static_cast<std::size_t>(i) * t + j] *
                                   self.grad[static_cast<std::size_t>(i) * d + c0 + c];
                        vn->grad[static_cast<std::size_t>(j) * d + c0 + c] += acc;
                    }
                // dS = P o (dP - rowsum(dP o P))
                for (int i = 0; i < t; ++i) {
                    Scalar dot = 0.0;
                    for (int j = 0; j < t; ++j)
                        dot += dP[static_cast<std::size_t>(i) * t + j] *
                               P[static_cast<std::size_t>(i) * t + j];
                    for (int j = 0; j < t; ++j)
                        dS[static_cast<std::size_t>(i) * t + j] =
                            P[static_cast<std::size_t>(i) * t + j] *
                            (dP[static_cast<std::size_t>(i) * t + j] - dot);
                }
                // dQ += dS K * inv ; dK += dS^T Q * inv
                for (int i = 0; i < t; ++i)
                    for (int c = 0; c < dh; ++c) {
                        Scalar accq = 0.0;
                        for (int j = 0; j < t; ++j)
                            accq += dS[static_cast<std::size_t>(i) * t + j] *
                                    kn->value[static_cast<std::size_t>(j) * d + c0 + c];
                        qn->grad[static_cast<std::size_t>(i) * d + c0 + c] += accq * inv;
                    }
                for (int j = 0; j < t; ++j)
                    for (int c = 0; c < dh; ++c) {
                        Scalar acck = 0.0;
                        for (int i = 0; i < t; ++i)
                            acck += dS[static_cast<std::size_t>(i) * t + j] *
                                    qn->value[static_cast<std::size_t>(i) * d + c0 + c];
                        kn->grad[static_cast<std::size_t>(j) * d + c0 + c] += acck * inv;
                    }
            }
        });
    }
    return Tensor(out);
}

// ---------------------------------------------------------------- params

Tensor ParamStore::add(const std::string& name, std::vector<int> shape, Rng& rng,
                       Scalar init_scale) {
    check(map_.count(name) == 0, "ParamStore: duplicate parameter name");
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = rng.uniform(-init_scale, init_scale);
    names_.push_back(name);
    map_.emplace(name, t);
    m1_[name].assign(t.numel(), 0.0);
    m2_[name].assign(t.numel(), 0.0);
    return t;
}

Tensor ParamStore::add_zeros(const std::string& name, std::vector<int> shape) {
    return add_constant(name, std::move(shape), 0.0);
}

Tensor ParamStore::add_constant(const std::string& name, std::vector<int> shape, Scalar v) {
    check(map_.count(name) == 0, "ParamStore: duplicate parameter name");
    Tensor t = Tensor::zeros(std::move(shape), true);
    std::fill(t.data().begin(), t.data().end(), v);
    names_.push_back(name);
    map_.emplace(name, t);
    m1_[name].assign(t.numel(), 0.0);
    m2_[name].assign(t.numel(), 0.0);
    return t;
}

void ParamStore::put(const std::string& name, const Tensor& t) {
    check(map_.count(name) == 0, "ParamStore: duplicate parameter name");
    names_.push_back(name);
    map_.emplace(name, t);
    m1_[name].assign(t.numel(), 0.0);
    m2_[name].assign(t.numel(), 0.0);
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
    return it->second;
}

std::size_t ParamStore::total_params() const {
    std::size_t n = 0;
    for (const auto& name : names_) n += map_.at(name).numel();
    return n;
}

void ParamStore::zero_grads() {
    for (const auto& name : names_) {
        Tensor t = map_.at(name);
        t.node()->ensure_grad();
        std::fill(t.grad().begin(), t.grad().end(), 0.0);
    }
}

void ParamStore::adamw_step(Scalar lr, const AdamWConfig& cfg) {
    ++step_;
    Scalar bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Scalar>(step_));
    Scalar bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Scalar>(step_));
    for (const auto& name : names_) {
        Tensor t = map_.at(name);
        t.node()->ensure_grad();
        auto& m = m1_[name];
        auto& v = m2_[name];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            Scalar g = t.grad()[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            Scalar mhat = m[i] / bc1;
            Scalar vhat = v[i] / bc2;
            t.data()[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                 cfg.weight_decay * t.data()[i]);
        }
    }
}

namespace {
constexpr char kMagic[4] = {'G', 'L', 'N', 'V'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
}  // namespace

void ParamStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f.write(kMagic, 4);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(names_.size()));
    for (const auto& name : names_) {
        const Tensor t = map_.at(name);
        write_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(f, static_cast<std::uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_u32(f, static_cast<std::uint32_t>(d));
        std::vector<float> payload(t.numel());
        for (std::size_t i = 0; i < payload.size(); ++i)
            payload[i] = static_cast<float>(t.data()[i]);
        f.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
}

void ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": bad checkpoint magic");
    if (read_u32(f) != kVersion) throw std::runtime_error(path + ": unsupported version");
    std::uint32_t count = read_u32(f);
    for (std::uint32_t r = 0; r < count; ++r) {
        std::uint32_t nlen = read_u32(f);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        std::uint32_t rank = read_u32(f);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(f));
        std::vector<float> payload(shape_numel(shape));
        f.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size() * sizeof(float)));
        if (!f) throw std::runtime_error(path + ": truncated checkpoint");
        if (map_.count(name)) {
            Tensor t = map_.at(name);
            if (t.shape() != shape)
                throw ConfigError(path + ": shape mismatch for parameter " + name);
            for (std::size_t i = 0; i < payload.size(); ++i)
                t.data()[i] = static_cast<Scalar>(payload[i]);
        } else {
            Tensor t = Tensor::zeros(shape, true);
            for (std::size_t i = 0; i < payload.size(); ++i)
                t.data()[i] = static_cast<Scalar>(payload[i]);
            names_.push_back(name);
            map_.emplace(name, t);
            m1_[name].assign(t.numel(), 0.0);
            m2_[name].assign(t.numel(), 0.0);
        }
    }
}

Scalar cosine_lr(long step, Scalar max_lr, long t_max) {
    check(t_max > 0, "cosine_lr: t_max must be positive");
    long s = std::min(std::max(step, 0L), t_max);
    constexpr Scalar pi = 3.141592653589793238462643383279502884;
    return max_lr * (1.0 + std::cos(pi * static_cast<Scalar>(s) /
                                    static_cast<Scalar>(t_max))) / 2.0;
}

std::vector<Scalar> sinusoidal_embedding(int step, int dim) {
    check(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even and >= 2");
    std::vector<Scalar> out(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        Scalar freq = std::pow(10000.0, -static_cast<Scalar>(i) / half);
        out[2 * i] = std::sin(step * freq);
        out[2 * i + 1] = std::cos(step * freq);
    }
    return out;
}

}  // namespace glocnav::tc
