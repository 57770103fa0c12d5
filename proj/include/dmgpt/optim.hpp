#pragma once

// Adaptive-moment optimizer with bias correction and decoupled weight decay,
// plus the central finite-difference gradient oracle used by the tests and
// the acceptance suite.

#include <cstdint>
#include <functional>
#include <vector>

#include "dmgpt/tensor.hpp"

namespace dmgpt::num {

template <class T>
class AdamW {
  public:
    struct Hyper {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW() = default;
    explicit AdamW(Hyper h) : hyper_(h) {}

    Hyper& hyper() { return hyper_; }
    const Hyper& hyper() const { return hyper_; }
    int64_t step_count() const { return t_; }

    // One update over `params` from their grad buffers. `lr_scale` carries
    // warmup; moment buffers are created on first use, shape-congruent with
    // their parameters.
    void step(const std::vector<TensorRef<T>>& params, double lr_scale = 1.0) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p->v.size(), T(0));
                v_.emplace_back(p->v.size(), T(0));
            }
        }
        if (m_.size() != params.size()) throw UsageError("AdamW: parameter set changed");
        t_ += 1;
        const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
        const double lr = hyper_.lr * lr_scale;
        for (size_t pi = 0; pi < params.size(); pi++) {
            auto& p = *params[pi];
            if (p.v.size() != m_[pi].size()) throw UsageError("AdamW: shape changed");
            for (size_t i = 0; i < p.v.size(); i++) {
                const double g = static_cast<double>(p.g[i]);
                double m = hyper_.beta1 * static_cast<double>(m_[pi][i]) + (1.0 - hyper_.beta1) * g;
                double v = hyper_.beta2 * static_cast<double>(v_[pi][i]) +
                           (1.0 - hyper_.beta2) * g * g;
                m_[pi][i] = static_cast<T>(m);
                v_[pi][i] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                const double upd = mhat / (std::sqrt(vhat) + hyper_.eps) +
                                   hyper_.weight_decay * static_cast<double>(p.v[i]);
                p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - lr * upd);
            }
        }
    }

    // Serialization hooks for checkpointing.
    int64_t step_counter() const { return t_; }
    void set_step_counter(int64_t t) { t_ = t; }
    std::vector<std::vector<T>>& moments1() { return m_; }
    std::vector<std::vector<T>>& moments2() { return v_; }

  private:
    Hyper hyper_;
    int64_t t_ = 0;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

// Central finite differences (f(p+h) - f(p-h)) / 2h per coordinate. `f` must
// be a deterministic scalar function of the parameter values; this path never
// touches the tape, so it is an independent oracle for backward().
template <class T>
std::vector<std::vector<double>> finite_difference_gradients(
    const std::function<double()>& f, const std::vector<TensorRef<T>>& params, double h) {
    if (!(h > 0)) throw UsageError("finite_difference_gradients: h must be positive");
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        std::vector<double> g(p->v.size());
        for (size_t i = 0; i < p->v.size(); i++) {
            const T keep = p->v[i];
            p->v[i] = static_cast<T>(static_cast<double>(keep) + h);
            const double fp = f();
            p->v[i] = static_cast<T>(static_cast<double>(keep) - h);
            const double fm = f();
            p->v[i] = keep;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_difference_gradients: non-finite objective");
            g[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

}  // namespace dmgpt::num
