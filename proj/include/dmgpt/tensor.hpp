#pragma once

// Dense row-major tensors with a reverse-mode gradient tape. Ops record a
// backward closure on the tape; Tape::backward replays them in reverse
// creation order (a valid reverse topological order, since every op's inputs
// exist before its output). Matrix products are backed by Eigen; everything
// runs single-threaded within one tape so results are bitwise reproducible.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dmgpt/common.hpp"

namespace dmgpt::num {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("tensor extents must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); i++) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
struct TensorData {
    Shape shape;
    std::vector<T> v;  // values, row-major
    std::vector<T> g;  // adjoints; allocated iff requires_grad
    bool requires_grad = false;
    uint64_t tape_id = 0;  // tape that produced this tensor, 0 for leaves

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int last_dim() const { return shape.back(); }
    void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
    T scalar() const {
        if (numel() != 1) throw UsageError("scalar() on non-scalar tensor");
        return v[0];
    }
};

template <class T>
using TensorRef = std::shared_ptr<TensorData<T>>;

template <class T>
TensorRef<T> make_tensor(Shape shape, bool requires_grad = false) {
    auto t = std::make_shared<TensorData<T>>();
    int64_t n = shape_numel(shape);
    t->shape = std::move(shape);
    t->v.assign(static_cast<size_t>(n), T(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->g.assign(static_cast<size_t>(n), T(0));
    return t;
}

template <class T>
TensorRef<T> make_tensor(Shape shape, std::vector<T> vals, bool requires_grad = false) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(vals.size()))
        throw DimensionError("value count does not match shape " + shape_str(shape));
    auto t = std::make_shared<TensorData<T>>();
    t->shape = std::move(shape);
    t->v = std::move(vals);
    t->requires_grad = requires_grad;
    if (requires_grad) t->g.assign(static_cast<size_t>(n), T(0));
    return t;
}

template <class T>
TensorRef<T> full(Shape shape, T val, bool requires_grad = false) {
    auto t = make_tensor<T>(std::move(shape), requires_grad);
    std::fill(t->v.begin(), t->v.end(), val);
    return t;
}

template <class T>
TensorRef<T> randn(Rng& rng, Shape shape, T stddev, bool requires_grad = false) {
    auto t = make_tensor<T>(std::move(shape), requires_grad);
    for (auto& x : t->v) x = static_cast<T>(rng.normal()) * stddev;
    return t;
}

template <class T>
class Tape {
  public:
    Tape() : id_(next_id()++) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    uint64_t id() const { return id_; }
    size_t size() const { return nodes_.size(); }

    // Allocates an op output and decides whether the op must be recorded.
    TensorRef<T> make_out(Shape shape, bool needs_grad) {
        auto t = make_tensor<T>(std::move(shape), needs_grad && recording_);
        if (needs_grad && recording_) t->tape_id = id_;
        return t;
    }

    void push(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

    // Seeds the scalar loss with adjoint 1 and replays every recorded op
    // once, in reverse order. Fan-out accumulates additively because each
    // closure adds into its inputs' grad buffers.
    void backward(const TensorRef<T>& loss) {
        if (!loss || loss->numel() != 1)
            throw UsageError("backward requires a scalar loss tensor");
        if (!loss->requires_grad)
            throw UsageError("backward on a tensor disconnected from the tape");
        if (loss->tape_id != 0 && loss->tape_id != id_)
            throw UsageError("loss was produced by a different tape");
        loss->g[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

    bool check_finite = true;

  private:
    static uint64_t& next_id() {
        static uint64_t id = 1;
        return id;
    }
    uint64_t id_;
    std::vector<std::function<void()>> nodes_;
};

namespace detail {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

template <class T>
inline bool any_grad(const TensorRef<T>& a) {
    return a->requires_grad;
}
template <class T, class... R>
inline bool any_grad(const TensorRef<T>& a, const R&... rest) {
    return a->requires_grad || any_grad(rest...);
}

template <class T>
inline void finite_guard(Tape<T>* tp, const TensorRef<T>& out, const char* op) {
    if (!tp || tp->check_finite) check_all_finite(out->v, op);
}

// True when b's shape equals a trailing suffix of a's shape (bias-style
// broadcast over leading batch dimensions).
inline bool suffix_broadcast(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    for (size_t i = 0; i < b.size(); i++)
        if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

// a + b, with b broadcast over leading dims when its shape is a trailing
// suffix of a's. Any other mismatch is an error (no general broadcasting).
template <class T>
TensorRef<T> add(Tape<T>* tp, const TensorRef<T>& a, const TensorRef<T>& b) {
    const bool same = a->shape == b->shape;
    if (!same && !detail::suffix_broadcast(a->shape, b->shape))
        throw DimensionError("add: shapes " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    bool ng = detail::any_grad(a, b);
    auto out = tp ? tp->make_out(a->shape, ng) : make_tensor<T>(a->shape);
    const int64_t n = a->numel(), m = b->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] + b->v[i % m];
    detail::finite_guard(tp, out, "add");
    if (tp && out->requires_grad) {
        tp->push([a, b, out, n, m] {
            if (a->requires_grad)
                for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i];
            if (b->requires_grad)
                for (int64_t i = 0; i < n; i++) b->g[i % m] += out->g[i];
        });
    }
    return out;
}

template <class T>
TensorRef<T> sub(Tape<T>* tp, const TensorRef<T>& a, const TensorRef<T>& b) {
    if (a->shape != b->shape)
        throw DimensionError("sub: shapes " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    bool ng = detail::any_grad(a, b);
    auto out = tp ? tp->make_out(a->shape, ng) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] - b->v[i];
    detail::finite_guard(tp, out, "sub");
    if (tp && out->requires_grad) {
        tp->push([a, b, out, n] {
            if (a->requires_grad)
                for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i];
            if (b->requires_grad)
                for (int64_t i = 0; i < n; i++) b->g[i] -= out->g[i];
        });
    }
    return out;
}

template <class T>
TensorRef<T> mul(Tape<T>* tp, const TensorRef<T>& a, const TensorRef<T>& b) {
    if (a->shape != b->shape)
        throw DimensionError("mul: shapes " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    bool ng = detail::any_grad(a, b);
    auto out = tp ? tp->make_out(a->shape, ng) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] * b->v[i];
    detail::finite_guard(tp, out, "mul");
    if (tp && out->requires_grad) {
        tp->push([a, b, out, n] {
            if (a->requires_grad)
                for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i] * b->v[i];
            if (b->requires_grad)
                for (int64_t i = 0; i < n; i++) b->g[i] += out->g[i] * a->v[i];
        });
    }
    return out;
}

template <class T>
TensorRef<T> scale(Tape<T>* tp, const TensorRef<T>& a, T c) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] * c;
    detail::finite_guard(tp, out, "scale");
    if (tp && out->requires_grad) {
        tp->push([a, out, c, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i] * c;
        });
    }
    return out;
}

template <class T>
TensorRef<T> add_scalar(Tape<T>* tp, const TensorRef<T>& a, T c) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] + c;
    detail::finite_guard(tp, out, "add_scalar");
    if (tp && out->requires_grad) {
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i];
        });
    }
    return out;
}

template <class T>
TensorRef<T> tanh_op(Tape<T>* tp, const TensorRef<T>& a) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = std::tanh(a->v[i]);
    detail::finite_guard(tp, out, "tanh");
    if (tp && out->requires_grad) {
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i] * (T(1) - out->v[i] * out->v[i]);
        });
    }
    return out;
}

template <class T>
TensorRef<T> exp_op(Tape<T>* tp, const TensorRef<T>& a) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = std::exp(a->v[i]);
    detail::finite_guard(tp, out, "exp");
    if (tp && out->requires_grad) {
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i] * out->v[i];
        });
    }
    return out;
}

template <class T>
TensorRef<T> relu(Tape<T>* tp, const TensorRef<T>& a) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] > T(0) ? a->v[i] : T(0);
    detail::finite_guard(tp, out, "relu");
    if (tp && out->requires_grad) {
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++)
                if (a->v[i] > T(0)) a->g[i] += out->g[i];
        });
    }
    return out;
}

// Exact gelu: 0.5 x (1 + erf(x / sqrt(2))).
template <class T>
TensorRef<T> gelu(Tape<T>* tp, const TensorRef<T>& a) {
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    const int64_t n = a->numel();
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (int64_t i = 0; i < n; i++) {
        double x = static_cast<double>(a->v[i]);
        out->v[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    detail::finite_guard(tp, out, "gelu");
    if (tp && out->requires_grad) {
        tp->push([a, out, n] {
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            for (int64_t i = 0; i < n; i++) {
                double x = static_cast<double>(a->v[i]);
                double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                a->g[i] += out->g[i] * static_cast<T>(cdf + x * pdf);
            }
        });
    }
    return out;
}

// Inverted dropout; identity when disabled or p == 0. Mask draws come from
// `rng` in index order, so the rng trajectory is reproducible.
template <class T>
TensorRef<T> dropout(Tape<T>* tp, const TensorRef<T>& a, double p, Rng& rng, bool enabled) {
    if (!enabled || p <= 0.0) return a;
    if (p >= 1.0) throw UsageError("dropout rate must be < 1");
    const int64_t n = a->numel();
    auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (int64_t i = 0; i < n; i++)
        (*mask)[i] = rng.uniform() < p ? T(0) : keep_scale;
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    for (int64_t i = 0; i < n; i++) out->v[i] = a->v[i] * (*mask)[i];
    if (tp && out->requires_grad) {
        tp->push([a, out, mask, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i] * (*mask)[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
TensorRef<T> reshape(Tape<T>* tp, const TensorRef<T>& a, Shape shape) {
    if (shape_numel(shape) != a->numel())
        throw DimensionError("reshape: numel mismatch " + shape_str(a->shape) + " -> " +
                             shape_str(shape));
    auto out = tp ? tp->make_out(shape, a->requires_grad) : make_tensor<T>(shape);
    out->v = a->v;
    if (tp && out->requires_grad) {
        const int64_t n = a->numel();
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[i];
        });
    }
    return out;
}

// Swap the last two dims of a rank >= 2 tensor.
template <class T>
TensorRef<T> transpose_last2(Tape<T>* tp, const TensorRef<T>& a) {
    if (a->rank() < 2) throw DimensionError("transpose_last2: rank < 2");
    Shape s = a->shape;
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    const int r = a->shape[a->rank() - 2], c = a->shape[a->rank() - 1];
    const int64_t batch = a->numel() / (static_cast<int64_t>(r) * c);
    auto out = tp ? tp->make_out(s, a->requires_grad) : make_tensor<T>(s);
    for (int64_t b = 0; b < batch; b++) {
        const T* src = a->v.data() + b * r * c;
        T* dst = out->v.data() + b * r * c;
        for (int i = 0; i < r; i++)
            for (int j = 0; j < c; j++) dst[j * r + i] = src[i * c + j];
    }
    if (tp && out->requires_grad) {
        tp->push([a, out, batch, r, c] {
            for (int64_t b = 0; b < batch; b++) {
                const T* gsrc = out->g.data() + b * r * c;
                T* gdst = a->g.data() + b * r * c;
                for (int i = 0; i < r; i++)
                    for (int j = 0; j < c; j++) gdst[i * c + j] += gsrc[j * r + i];
            }
        });
    }
    return out;
}

// [B, T, H, D] -> [B, H, T, D]
template <class T>
TensorRef<T> transpose_12(Tape<T>* tp, const TensorRef<T>& a) {
    if (a->rank() != 4) throw DimensionError("transpose_12: expects rank-4 tensor");
    const int B = a->shape[0], Tn = a->shape[1], H = a->shape[2], D = a->shape[3];
    auto out = tp ? tp->make_out({B, H, Tn, D}, a->requires_grad)
                  : make_tensor<T>({B, H, Tn, D});
    auto idx_in = [=](int b, int t, int h) { return ((int64_t(b) * Tn + t) * H + h) * D; };
    auto idx_out = [=](int b, int h, int t) { return ((int64_t(b) * H + h) * Tn + t) * D; };
    for (int b = 0; b < B; b++)
        for (int t = 0; t < Tn; t++)
            for (int h = 0; h < H; h++)
                std::copy_n(a->v.data() + idx_in(b, t, h), D, out->v.data() + idx_out(b, h, t));
    if (tp && out->requires_grad) {
        tp->push([a, out, B, Tn, H, D, idx_in, idx_out] {
            for (int b = 0; b < B; b++)
                for (int t = 0; t < Tn; t++)
                    for (int h = 0; h < H; h++) {
                        const T* gs = out->g.data() + idx_out(b, h, t);
                        T* gd = a->g.data() + idx_in(b, t, h);
                        for (int d = 0; d < D; d++) gd[d] += gs[d];
                    }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

// Matrix product over the last two dims. Supported forms:
//   [.., m, k] x [k, n]        shared right operand (linear layers)
//   [B.., m, k] x [B.., k, n]  batched, identical leading dims
template <class T>
TensorRef<T> matmul(Tape<T>* tp, const TensorRef<T>& a, const TensorRef<T>& b) {
    using detail::ECMap;
    using detail::EMap;
    if (a->rank() < 2 || b->rank() < 2) throw DimensionError("matmul: rank < 2 operand");
    const int m = a->shape[a->rank() - 2], k = a->shape[a->rank() - 1];
    const int kb = b->shape[b->rank() - 2], n = b->shape[b->rank() - 1];
    if (k != kb)
        throw DimensionError("matmul: inner extents disagree " + shape_str(a->shape) + " x " +
                             shape_str(b->shape));

    const bool shared_b = b->rank() == 2;
    if (!shared_b) {
        if (a->rank() != b->rank()) throw DimensionError("matmul: batched rank mismatch");
        for (int i = 0; i < a->rank() - 2; i++)
            if (a->shape[i] != b->shape[i]) throw DimensionError("matmul: batch dims disagree");
    }
    Shape os(a->shape.begin(), a->shape.end() - 1);
    os.push_back(n);
    const int64_t batch = a->numel() / (static_cast<int64_t>(m) * k);

    bool ng = detail::any_grad(a, b);
    auto out = tp ? tp->make_out(os, ng) : make_tensor<T>(os);
    for (int64_t i = 0; i < batch; i++) {
        ECMap<T> A(a->v.data() + i * m * k, m, k);
        ECMap<T> B(b->v.data() + (shared_b ? 0 : i * k * n), k, n);
        EMap<T> C(out->v.data() + i * m * n, m, n);
        C.noalias() = A * B;
    }
    detail::finite_guard(tp, out, "matmul");
    if (tp && out->requires_grad) {
        tp->push([a, b, out, batch, m, k, n, shared_b] {
            for (int64_t i = 0; i < batch; i++) {
                ECMap<T> A(a->v.data() + i * m * k, m, k);
                ECMap<T> B(b->v.data() + (shared_b ? 0 : i * k * n), k, n);
                ECMap<T> dC(out->g.data() + i * m * n, m, n);
                if (a->requires_grad) {
                    EMap<T> dA(a->g.data() + i * m * k, m, k);
                    dA.noalias() += dC * B.transpose();
                }
                if (b->requires_grad) {
                    EMap<T> dB(b->g.data() + (shared_b ? 0 : i * k * n), k, n);
                    dB.noalias() += A.transpose() * dC;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions and normalizations
// ---------------------------------------------------------------------------

template <class T>
TensorRef<T> sum_all(Tape<T>* tp, const TensorRef<T>& a) {
    auto out = tp ? tp->make_out({1}, a->requires_grad) : make_tensor<T>({1});
    T acc = T(0);
    for (const T& x : a->v) acc += x;  // fixed index-ascending order
    out->v[0] = acc;
    detail::finite_guard(tp, out, "sum_all");
    if (tp && out->requires_grad) {
        const int64_t n = a->numel();
        tp->push([a, out, n] {
            for (int64_t i = 0; i < n; i++) a->g[i] += out->g[0];
        });
    }
    return out;
}

template <class T>
TensorRef<T> sum_lastdim(Tape<T>* tp, const TensorRef<T>& a) {
    if (a->rank() < 2) throw DimensionError("sum_lastdim: rank < 2");
    Shape os(a->shape.begin(), a->shape.end() - 1);
    const int n = a->last_dim();
    const int64_t rows = a->numel() / n;
    auto out = tp ? tp->make_out(os, a->requires_grad) : make_tensor<T>(os);
    for (int64_t r = 0; r < rows; r++) {
        T acc = T(0);
        for (int j = 0; j < n; j++) acc += a->v[r * n + j];
        out->v[r] = acc;
    }
    detail::finite_guard(tp, out, "sum_lastdim");
    if (tp && out->requires_grad) {
        tp->push([a, out, rows, n] {
            for (int64_t r = 0; r < rows; r++)
                for (int j = 0; j < n; j++) a->g[r * n + j] += out->g[r];
        });
    }
    return out;
}

// Row softmax over the last dim with max-subtraction. `allow`, when given,
// holds one byte per element; disallowed entries get exactly 0 weight and
// are excluded from the max, so they can never perturb allowed outputs.
template <class T>
TensorRef<T> softmax_lastdim(Tape<T>* tp, const TensorRef<T>& a,
                             const std::vector<uint8_t>* allow = nullptr) {
    if (a->rank() < 1 || a->last_dim() < 1)
        throw DimensionError("softmax_lastdim: empty last dimension");
    if (allow && static_cast<int64_t>(allow->size()) != a->numel())
        throw DimensionError("softmax_lastdim: mask size mismatch");
    const int n = a->last_dim();
    const int64_t rows = a->numel() / n;
    auto out = tp ? tp->make_out(a->shape, a->requires_grad) : make_tensor<T>(a->shape);
    for (int64_t r = 0; r < rows; r++) {
        const T* x = a->v.data() + r * n;
        T* y = out->v.data() + r * n;
        const uint8_t* al = allow ? allow->data() + r * n : nullptr;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < n; j++)
            if (!al || al[j]) mx = std::max(mx, x[j]);
        if (!std::isfinite(static_cast<double>(mx)))
            throw NumericError("softmax row with no allowed entries");
        T sum = T(0);
        for (int j = 0; j < n; j++) {
            y[j] = (!al || al[j]) ? std::exp(x[j] - mx) : T(0);
            sum += y[j];
        }
        for (int j = 0; j < n; j++) y[j] /= sum;
    }
    detail::finite_guard(tp, out, "softmax_lastdim");
    if (tp && out->requires_grad) {
        tp->push([a, out, rows, n] {
            for (int64_t r = 0; r < rows; r++) {
                const T* y = out->v.data() + r * n;
                const T* dy = out->g.data() + r * n;
                T dot = T(0);
                for (int j = 0; j < n; j++) dot += dy[j] * y[j];
                for (int j = 0; j < n; j++) a->g[r * n + j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

// Per-row standardization over the last dim followed by the affine map
// y = xhat * gain + bias, with eps guarding zero variance.
template <class T>
TensorRef<T> layer_normalize(Tape<T>* tp, const TensorRef<T>& a, const TensorRef<T>& gain,
                             const TensorRef<T>& bias, T eps = T(1e-5)) {
    const int n = a->last_dim();
    if (gain->shape != Shape{n} || bias->shape != Shape{n})
        throw DimensionError("layer_normalize: gain/bias must match last extent");
    const int64_t rows = a->numel() / n;
    bool ng = detail::any_grad(a, gain, bias);
    auto out = tp ? tp->make_out(a->shape, ng) : make_tensor<T>(a->shape);
    auto xhat = std::make_shared<std::vector<T>>(a->v.size());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; r++) {
        const T* x = a->v.data() + r * n;
        T mean = T(0);
        for (int j = 0; j < n; j++) mean += x[j];
        mean /= T(n);
        T var = T(0);
        for (int j = 0; j < n; j++) var += (x[j] - mean) * (x[j] - mean);
        var /= T(n);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int j = 0; j < n; j++) {
            T xh = (x[j] - mean) * is;
            (*xhat)[r * n + j] = xh;
            out->v[r * n + j] = xh * gain->v[j] + bias->v[j];
        }
    }
    detail::finite_guard(tp, out, "layer_normalize");
    if (tp && out->requires_grad) {
        tp->push([a, gain, bias, out, xhat, inv_std, rows, n] {
            for (int64_t r = 0; r < rows; r++) {
                const T* dy = out->g.data() + r * n;
                const T* xh = xhat->data() + r * n;
                if (bias->requires_grad)
                    for (int j = 0; j < n; j++) bias->g[j] += dy[j];
                if (gain->requires_grad)
                    for (int j = 0; j < n; j++) gain->g[j] += dy[j] * xh[j];
                if (a->requires_grad) {
                    T sum_dxh = T(0), sum_dxh_xh = T(0);
                    for (int j = 0; j < n; j++) {
                        T dxh = dy[j] * gain->v[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    const T is = (*inv_std)[r];
                    for (int j = 0; j < n; j++) {
                        T dxh = dy[j] * gain->v[j];
                        a->g[r * n + j] +=
                            is * (dxh - sum_dxh / T(n) - xh[j] * sum_dxh_xh / T(n));
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// gather / token layout ops
// ---------------------------------------------------------------------------

// Stack rows of a [N, E] table selected by idx into [len(idx), E]; backward
// scatter-adds, so repeated indices accumulate.
template <class T>
TensorRef<T> gather_rows(Tape<T>* tp, const TensorRef<T>& table, const std::vector<int>& idx) {
    if (table->rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
    const int N = table->shape[0], E = table->shape[1];
    for (int i : idx)
        if (i < 0 || i >= N)
            throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                                    " outside table of " + std::to_string(N) + " rows");
    const int L = static_cast<int>(idx.size());
    auto out = tp ? tp->make_out({L, E}, table->requires_grad) : make_tensor<T>({L, E});
    for (int i = 0; i < L; i++)
        std::copy_n(table->v.data() + int64_t(idx[i]) * E, E, out->v.data() + int64_t(i) * E);
    if (tp && out->requires_grad) {
        auto ids = std::make_shared<std::vector<int>>(idx);
        tp->push([table, out, ids, E] {
            for (size_t i = 0; i < ids->size(); i++) {
                const T* gs = out->g.data() + int64_t(i) * E;
                T* gd = table->g.data() + int64_t((*ids)[i]) * E;
                for (int j = 0; j < E; j++) gd[j] += gs[j];
            }
        });
    }
    return out;
}

// Interleave four [B, K, E] streams into [B, 4K, E]; slot order is the
// argument order (phase 0..3).
template <class T>
TensorRef<T> interleave4(Tape<T>* tp, const TensorRef<T>& x0, const TensorRef<T>& x1,
                         const TensorRef<T>& x2, const TensorRef<T>& x3) {
    const TensorRef<T> xs[4] = {x0, x1, x2, x3};
    for (int p = 0; p < 4; p++) {
        if (xs[p]->rank() != 3 || xs[p]->shape != x0->shape)
            throw DimensionError("interleave4: all inputs must share a [B,K,E] shape");
    }
    const int B = x0->shape[0], K = x0->shape[1], E = x0->shape[2];
    bool ng = detail::any_grad(x0, x1, x2, x3);
    auto out = tp ? tp->make_out({B, 4 * K, E}, ng) : make_tensor<T>({B, 4 * K, E});
    for (int b = 0; b < B; b++)
        for (int k = 0; k < K; k++)
            for (int p = 0; p < 4; p++)
                std::copy_n(xs[p]->v.data() + (int64_t(b) * K + k) * E, E,
                            out->v.data() + (int64_t(b) * 4 * K + 4 * k + p) * E);
    if (tp && out->requires_grad) {
        tp->push([x0, x1, x2, x3, out, B, K, E] {
            const TensorRef<T> xs[4] = {x0, x1, x2, x3};
            for (int b = 0; b < B; b++)
                for (int k = 0; k < K; k++)
                    for (int p = 0; p < 4; p++) {
                        if (!xs[p]->requires_grad) continue;
                        const T* gs = out->g.data() + (int64_t(b) * 4 * K + 4 * k + p) * E;
                        T* gd = xs[p]->g.data() + (int64_t(b) * K + k) * E;
                        for (int j = 0; j < E; j++) gd[j] += gs[j];
                    }
        });
    }
    return out;
}

// Extract one phase from an interleaved [B, 4K, E] stream -> [B, K, E].
template <class T>
TensorRef<T> deinterleave(Tape<T>* tp, const TensorRef<T>& x, int phase) {
    if (x->rank() != 3 || x->shape[1] % 4 != 0)
        throw DimensionError("deinterleave: expects [B, 4K, E]");
    if (phase < 0 || phase > 3) throw UsageError("deinterleave: phase must be 0..3");
    const int B = x->shape[0], K = x->shape[1] / 4, E = x->shape[2];
    auto out = tp ? tp->make_out({B, K, E}, x->requires_grad) : make_tensor<T>({B, K, E});
    for (int b = 0; b < B; b++)
        for (int k = 0; k < K; k++)
            std::copy_n(x->v.data() + (int64_t(b) * 4 * K + 4 * k + phase) * E, E,
                        out->v.data() + (int64_t(b) * K + k) * E);
    if (tp && out->requires_grad) {
        tp->push([x, out, B, K, E, phase] {
            for (int b = 0; b < B; b++)
                for (int k = 0; k < K; k++) {
                    const T* gs = out->g.data() + (int64_t(b) * K + k) * E;
                    T* gd = x->g.data() + (int64_t(b) * 4 * K + 4 * k + phase) * E;
                    for (int j = 0; j < E; j++) gd[j] += gs[j];
                }
        });
    }
    return out;
}

// Slice [.., start : start+len] of the last dim.
template <class T>
TensorRef<T> slice_lastdim(Tape<T>* tp, const TensorRef<T>& a, int start, int len) {
    const int n = a->last_dim();
    if (start < 0 || len < 1 || start + len > n) throw DimensionError("slice_lastdim: bad range");
    Shape os = a->shape;
    os.back() = len;
    const int64_t rows = a->numel() / n;
    auto out = tp ? tp->make_out(os, a->requires_grad) : make_tensor<T>(os);
    for (int64_t r = 0; r < rows; r++)
        std::copy_n(a->v.data() + r * n + start, len, out->v.data() + r * len);
    if (tp && out->requires_grad) {
        tp->push([a, out, rows, n, start, len] {
            for (int64_t r = 0; r < rows; r++)
                for (int j = 0; j < len; j++) a->g[r * n + start + j] += out->g[r * len + j];
        });
    }
    return out;
}

}  // namespace dmgpt::num
