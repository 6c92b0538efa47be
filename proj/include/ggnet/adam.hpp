#pragma once

#include <cmath>
#include <cstddef>

#include "ggnet/tensor.hpp"

namespace ggnet {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a flat parameter vector. Moments are kept
/// in double. A gradient with any non-finite entry is rejected: the step is
/// skipped and counted.
template <typename Scalar>
class Adam {
public:
    explicit Adam(Eigen::Index size, AdamConfig cfg = {})
        : cfg_(cfg), m_(VectorX<double>::Zero(size)), v_(VectorX<double>::Zero(size)) {}

    /// Returns false when the step was skipped.
    bool step(VectorX<Scalar>& params, const VectorX<Scalar>& grad, double lr) {
        if (params.size() != m_.size() || grad.size() != m_.size()) {
            throw DimensionError("Adam::step: sizes " + std::to_string(params.size()) + "/" +
                                 std::to_string(grad.size()) + " for state of " + std::to_string(m_.size()));
        }
        if (!grad.allFinite()) {
            ++skipped_;
            return false;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        return true;
    }

    [[nodiscard]] std::size_t steps() const { return t_; }
    [[nodiscard]] std::size_t skipped() const { return skipped_; }

private:
    AdamConfig cfg_;
    VectorX<double> m_, v_;
    std::size_t t_ = 0;
    std::size_t skipped_ = 0;
};

} // namespace ggnet
