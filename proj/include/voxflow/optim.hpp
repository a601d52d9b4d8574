#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "voxflow/array.hpp"
#include "voxflow/common.hpp"

namespace voxflow {

struct ParamRef {
    std::string name;
    NdArray* value = nullptr;
};

using ParamList = std::vector<ParamRef>;

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment slots are laid out
// in list order, so the update is deterministic for a given schedule of
// gradients.
class Adam {
  public:
    Adam(const ParamList& params, AdamConfig cfg = {}) : cfg_(cfg) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const ParamRef& p : params) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
    }

    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    void step(const ParamList& params, const std::vector<NdArray>& grads) {
        if (params.size() != grads.size() || params.size() != m_.size())
            throw NumericError("Adam::step: parameter/gradient list mismatch");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            NdArray& theta = *params[p].value;
            const NdArray& g = grads[p];
            if (!g.same_shape(theta))
                throw NumericError("Adam::step: gradient shape " + g.shape_str() +
                                   " vs parameter " + theta.shape_str() + " for '" +
                                   params[p].name + "'");
            if (!g.all_finite())
                throw NumericError("Adam::step: non-finite gradient for '" + params[p].name +
                                   "' at step " + std::to_string(step_));
            NdArray& m = m_[p];
            NdArray& v = v_[p];
            for (std::int64_t i = 0; i < theta.numel(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

  private:
    AdamConfig cfg_;
    long step_ = 0;
    std::vector<NdArray> m_;
    std::vector<NdArray> v_;
};

}  // namespace voxflow
