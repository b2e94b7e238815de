#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dssm/encoder.hpp"
#include "dssm/ssm.hpp"

namespace dssm {

enum class Variant { Alkf, Aekf };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    Variant variant = Variant::Alkf;
    std::size_t d_e = 34;
    std::size_t d_a = 16;
    std::size_t d_k = 8;
    std::size_t channels = 4;
    std::size_t t_in = 48;
    std::size_t horizon = 1;
    double eps_noise = 1e-4;
    bool use_ar = true;
    bool use_exo = true;
    bool use_attention = true;
    bool learned_init = false;

    std::size_t d_c() const { return kCells * channels; }
    void validate() const;
    std::string describe() const;
};

// Every learnable tensor of encoder, filter, AR, decoder, and fusion heads.
struct ModelParams {
    EncoderParams encoder;
    FilterParams filter;
    Tensor init_mean; // defined only with learned_init
    Tensor ar_w;      // D x D
    Tensor ar_b;      // D
    Tensor dec_w;     // D_k x D
    Tensor dec_b;     // D
    Tensor fuse_exo;  // D x h*D
    Tensor fuse_ar;   // D x h*D
    Tensor fuse_kal;  // D x h*D
    Tensor fuse_b;    // h*D

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);
    static std::vector<std::pair<std::string, std::vector<std::size_t>>>
    param_layout(const ModelConfig& config);
    static ModelParams from_tensors(const ModelConfig& config,
                                    const std::vector<Tensor>& tensors);

    std::vector<Tensor> tensors() const; // layout order
    void zero_grad();
    // Copy whose tensors carry no gradient tracking (for evaluation paths).
    ModelParams detached(const ModelConfig& config) const;
};

struct ModelOutput {
    Tensor forecast; // horizon x D, >= 0, normalized scale
    Tensor gains;    // T x D_k, detached values
    long var_floor_events = 0;
};

// Linear scale head of the raw window: W_ar^T x_T + b_ar.
Tensor ar_head(const Tensor& x_last, const Tensor& w, const Tensor& b);

// Kalman readout: relu(W_k^T x_hat + b_k).
Tensor decode(const Tensor& state_mean, const Tensor& w, const Tensor& b);

// relu(W1^T o_e2 + W2^T o_ar + W3^T o_kal + b) reshaped to horizon x D.
// Branches disabled by the ablation flags are left out of the graph entirely.
Tensor fuse(const Tensor& o_e2_last, const Tensor& o_ar, const Tensor& o_kal,
            const ModelParams& params, const ModelConfig& config);

// Full pass: encoder -> filter -> decoder, fused with the AR head and the
// exogenous features of the final timestep. Pure in (params, sample).
ModelOutput forward(const Tensor& input, const Tensor& exo, const ModelParams& params,
                    const ModelConfig& config);

// Mean Kalman gain per timestep, averaged over state dimensions and samples.
std::vector<double> gain_trace(const std::vector<std::pair<Tensor, Tensor>>& samples,
                               const ModelParams& params, const ModelConfig& config);

// Checkpoint: one JSON header line (config, tensor shapes, format version)
// followed by the flat little-endian float64 payload in layout order.
void save_params(const ModelParams& params, const ModelConfig& config,
                 const std::string& path);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

Checkpoint load_params(const std::string& path);

// Loads and verifies the checkpoint was trained with a compatible shape
// (d_e, t_in, horizon must match the dataset it is applied to).
Checkpoint load_params_checked(const std::string& path, std::size_t d_e,
                               std::size_t t_in, std::size_t horizon);

} // namespace dssm
