#pragma once

#include <variant>
#include <vector>

#include "dssm/ops.hpp"
#include "dssm/tensor.hpp"

namespace dssm {

// Filter state: posterior mean and the diagonal of the posterior covariance.
// Transition, process-noise, measurement-noise, and covariance matrices are
// all diagonal, so every recursion is elementwise.
struct KalmanState {
    Tensor mean;     // D_k
    Tensor cov_diag; // D_k, strictly positive
};

// Linear cell: transition diagonal gamma, process noise softplus(lambda_raw)+eps.
// The observation matrix is the identity.
struct LkfParams {
    Tensor gamma;
    Tensor lambda_raw;

    // Materialized process-noise diagonal, strictly positive.
    Tensor process_noise() const;
};

// Extended cell: elementwise quadratic transition f and measurement h whose
// coefficients come from affine heads of the previous posterior / prior mean.
struct EkfParams {
    Tensor coef_f_w; // D_k x 3*D_k
    Tensor coef_f_b; // 3*D_k, ordered (a0, a1, a2)
    Tensor coef_h_w;
    Tensor coef_h_b;
    Tensor lambda_raw;

    Tensor process_noise() const;
};

using FilterParams = std::variant<LkfParams, EkfParams>;

inline constexpr double kProcessNoiseEps = 1e-4;
inline constexpr double kCovFloor = 1e-10;

// Elementwise a0 + a1*x + a2*x^2 and its diagonal Jacobian a1 + 2*a2*x.
Tensor quad_eval(const Tensor& x, const Tensor& a0, const Tensor& a1, const Tensor& a2);
Tensor quad_jacobian_diag(const Tensor& x, const Tensor& a1, const Tensor& a2);

struct LkfStepResult {
    KalmanState state;
    Tensor gain; // D_k, in (0,1) for positive variances and noise
};

struct EkfStepResult {
    KalmanState state;
    Tensor gain;
    long var_floor_events = 0; // posterior variances clamped at kCovFloor
};

// One predict/update of the linear cell. process_noise is the materialized
// Q diagonal (see LkfParams::process_noise). l_t must be strictly positive.
LkfStepResult lkf_step(const KalmanState& state, const Tensor& z_t, const Tensor& l_t,
                       const Tensor& gamma, const Tensor& process_noise);

// One predict/update of the extended cell with quadratic f and h.
EkfStepResult ekf_step(const KalmanState& state, const Tensor& z_t, const Tensor& l_t,
                       const EkfParams& params, const Tensor& process_noise);

struct FilterResult {
    KalmanState final_state;
    Tensor posterior_means; // T x D_k
    Tensor gains;           // T x D_k
    long var_floor_events = 0;
};

KalmanState initial_state(std::size_t d_k);

// Sequential fold of the cell over a window of observations z (T x D_k)
// with per-step measurement noise l (T x D_k).
FilterResult run_filter(const Tensor& z, const Tensor& l, const FilterParams& params,
                        const KalmanState& init);

// Dense-matrix reference for the linear variant: full F, Q, R_t, P and a
// genuine matrix inverse in the gain. Validates the diagonal fast path.
struct DenseFilterResult {
    std::vector<double> final_mean;
    std::vector<double> final_cov_diag;
    std::vector<std::vector<double>> posterior_means; // T rows of D_k
    std::vector<std::vector<double>> gains;           // diag of K per step
};

DenseFilterResult dense_kf_oracle(const Tensor& z, const Tensor& l,
                                  const LkfParams& params, const KalmanState& init);

} // namespace dssm
