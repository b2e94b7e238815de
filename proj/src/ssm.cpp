#include "dssm/ssm.hpp"

#include <cmath>
#include <string>

namespace dssm {

namespace {

void check_noise_positive(const Tensor& l_t) {
    for (std::size_t i = 0; i < l_t.numel(); ++i)
        if (!(l_t.value(i) > 0.0))
            throw NumericError("filter: non-positive measurement noise at dim " +
                               std::to_string(i));
}

// Affine head producing the three quadratic coefficient vectors.
struct QuadCoeffs {
    Tensor a0, a1, a2;
};

QuadCoeffs coeff_head(const Tensor& x, const Tensor& w, const Tensor& b) {
    std::size_t dk = x.numel();
    Tensor raw = add(select_row(matmul(reshape(x, {1, dk}), w), 0), b);
    return {slice(raw, 0, dk), slice(raw, dk, dk), slice(raw, 2 * dk, dk)};
}

} // namespace

Tensor LkfParams::process_noise() const {
    return add_scalar(softplus(lambda_raw), kProcessNoiseEps);
}

Tensor EkfParams::process_noise() const {
    return add_scalar(softplus(lambda_raw), kProcessNoiseEps);
}

Tensor quad_eval(const Tensor& x, const Tensor& a0, const Tensor& a1, const Tensor& a2) {
    return add(add(a0, mul(a1, x)), mul(a2, square(x)));
}

Tensor quad_jacobian_diag(const Tensor& x, const Tensor& a1, const Tensor& a2) {
    return add(a1, scale(mul(a2, x), 2.0));
}

LkfStepResult lkf_step(const KalmanState& state, const Tensor& z_t, const Tensor& l_t,
                       const Tensor& gamma, const Tensor& process_noise) {
    check_noise_positive(l_t);
    Tensor prior_mean = mul(gamma, state.mean);
    Tensor prior_var = add(mul(square(gamma), state.cov_diag), process_noise);
    Tensor gain = div(prior_var, add(prior_var, l_t));
    // Update written as K*z + (x_prior - K*H*x_prior) so the linear and
    // extended cells share the exact arithmetic sequence (H = I here).
    Tensor post_mean = add(mul(gain, z_t), sub(prior_mean, mul(gain, prior_mean)));
    Tensor ones = Tensor::full({gain.numel()}, 1.0);
    Tensor post_var = mul(sub(ones, gain), prior_var);
    return {{post_mean, post_var}, gain};
}

EkfStepResult ekf_step(const KalmanState& state, const Tensor& z_t, const Tensor& l_t,
                       const EkfParams& params, const Tensor& process_noise) {
    check_noise_positive(l_t);
    QuadCoeffs alpha = coeff_head(state.mean, params.coef_f_w, params.coef_f_b);
    Tensor prior_mean = quad_eval(state.mean, alpha.a0, alpha.a1, alpha.a2);
    Tensor jac_f = quad_jacobian_diag(state.mean, alpha.a1, alpha.a2);
    Tensor prior_var = add(mul(square(jac_f), state.cov_diag), process_noise);

    QuadCoeffs beta = coeff_head(prior_mean, params.coef_h_w, params.coef_h_b);
    Tensor h_pred = quad_eval(prior_mean, beta.a0, beta.a1, beta.a2);
    Tensor jac_h = quad_jacobian_diag(prior_mean, beta.a1, beta.a2);

    Tensor innovation_var = add(mul(square(jac_h), prior_var), l_t);
    Tensor gain = div(mul(prior_var, jac_h), innovation_var);
    Tensor post_mean = add(mul(gain, z_t), sub(prior_mean, mul(gain, h_pred)));

    Tensor ones = Tensor::full({gain.numel()}, 1.0);
    Tensor post_var_raw = mul(sub(ones, mul(gain, jac_h)), prior_var);
    long floored = 0;
    for (std::size_t i = 0; i < post_var_raw.numel(); ++i)
        if (post_var_raw.value(i) < kCovFloor) ++floored;
    Tensor post_var = clamp_min(post_var_raw, kCovFloor);
    return {{post_mean, post_var}, gain, floored};
}

KalmanState initial_state(std::size_t d_k) {
    return {Tensor::zeros({d_k}), Tensor::full({d_k}, 1.0)};
}

FilterResult run_filter(const Tensor& z, const Tensor& l, const FilterParams& params,
                        const KalmanState& init) {
    if (z.rank() != 2 || l.shape() != z.shape())
        throw ShapeError("run_filter: z " + shape_str(z.shape()) + " vs l " +
                         shape_str(l.shape()));
    std::size_t horizon = z.dim(0);
    if (horizon < 1) throw ShapeError("run_filter: empty window");

    FilterResult result;
    KalmanState state = init;
    std::vector<Tensor> means, gains;
    means.reserve(horizon);
    gains.reserve(horizon);

    const bool linear = std::holds_alternative<LkfParams>(params);
    Tensor q = linear ? std::get<LkfParams>(params).process_noise()
                      : std::get<EkfParams>(params).process_noise();
    for (std::size_t t = 0; t < horizon; ++t) {
        Tensor z_t = select_row(z, t);
        Tensor l_t = select_row(l, t);
        if (linear) {
            auto step = lkf_step(state, z_t, l_t, std::get<LkfParams>(params).gamma, q);
            state = step.state;
            gains.push_back(step.gain);
        } else {
            auto step = ekf_step(state, z_t, l_t, std::get<EkfParams>(params), q);
            state = step.state;
            gains.push_back(step.gain);
            result.var_floor_events += step.var_floor_events;
        }
        means.push_back(state.mean);
    }
    result.final_state = state;
    result.posterior_means = stack_rows(means);
    result.gains = stack_rows(gains);
    return result;
}

namespace {

using Mat = std::vector<double>; // dense n x n, row-major

Mat mat_identity(std::size_t n) {
    Mat m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
    return m;
}

Mat mat_mul(const Mat& a, const Mat& b, std::size_t n) {
    Mat c(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            double v = a[i * n + k];
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += v * b[k * n + j];
        }
    return c;
}

// Gauss-Jordan with partial pivoting.
Mat mat_inverse(Mat a, std::size_t n) {
    Mat inv = mat_identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
        if (std::abs(a[pivot * n + col]) < 1e-300)
            throw NumericError("dense oracle: singular innovation matrix");
        if (pivot != col)
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[pivot * n + j], a[col * n + j]);
                std::swap(inv[pivot * n + j], inv[col * n + j]);
            }
        double d = a[col * n + col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a[r * n + col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a[r * n + j] -= f * a[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    return inv;
}

} // namespace

DenseFilterResult dense_kf_oracle(const Tensor& z, const Tensor& l,
                                  const LkfParams& params, const KalmanState& init) {
    if (z.rank() != 2 || l.shape() != z.shape())
        throw ShapeError("dense oracle: z " + shape_str(z.shape()) + " vs l " +
                         shape_str(l.shape()));
    std::size_t horizon = z.dim(0);
    std::size_t n = z.dim(1);

    Tensor q_diag = params.process_noise();
    Mat f(n * n, 0.0), q(n * n, 0.0), p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        f[i * n + i] = params.gamma.value(i);
        q[i * n + i] = q_diag.value(i);
        p[i * n + i] = init.cov_diag.value(i);
    }
    std::vector<double> x(init.mean.values());

    DenseFilterResult out;
    for (std::size_t t = 0; t < horizon; ++t) {
        // Predict: x = F x, P = F P F^T + Q.
        std::vector<double> xp(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) xp[i] += f[i * n + j] * x[j];
        Mat fp = mat_mul(f, p, n);
        Mat ft(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) ft[j * n + i] = f[i * n + j];
        Mat pp = mat_mul(fp, ft, n);
        for (std::size_t i = 0; i < n * n; ++i) pp[i] += q[i];

        // Update with H = I: K = P (P + R)^-1.
        Mat s = pp;
        for (std::size_t i = 0; i < n; ++i) s[i * n + i] += l.value(t * n + i);
        Mat k = mat_mul(pp, mat_inverse(s, n), n);

        std::vector<double> xn(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double kz = 0.0, kx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                kz += k[i * n + j] * z.value(t * n + j);
                kx += k[i * n + j] * xp[j];
            }
            xn[i] = kz + xp[i] - kx;
        }
        Mat ik = mat_identity(n);
        for (std::size_t i = 0; i < n * n; ++i) ik[i] -= k[i];
        p = mat_mul(ik, pp, n);
        x = xn;

        std::vector<double> kd(n), means(n);
        for (std::size_t i = 0; i < n; ++i) {
            kd[i] = k[i * n + i];
            means[i] = x[i];
        }
        out.gains.push_back(std::move(kd));
        out.posterior_means.push_back(std::move(means));
    }
    out.final_mean = x;
    out.final_cov_diag.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.final_cov_diag[i] = p[i * n + i];
    return out;
}

} // namespace dssm
