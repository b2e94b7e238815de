#pragma once

#include "dssm/ops.hpp"
#include "dssm/tensor.hpp"

namespace dssm {

// The spatial grid is a fixed 5x5 neighborhood of cells.
inline constexpr std::size_t kGridSide = 5;
inline constexpr std::size_t kCells = 25;

// Weights of the spatial encoder: two 3x3 conv layers with layer norm over
// the flattened per-timestep feature vector, query/key/value projections,
// the two exogenous affine maps, and the observation/noise heads.
struct EncoderParams {
    Tensor conv1_kernels; // C x 1 x 3 x 3
    Tensor ln1_gain;      // 25*C
    Tensor ln1_bias;
    Tensor conv2_kernels; // C x C x 3 x 3
    Tensor ln2_gain;
    Tensor ln2_bias;
    Tensor attn_query;    // D_c x D_a
    Tensor attn_key;
    Tensor attn_value;
    Tensor exo1_w;        // D_e x D_a
    Tensor exo1_b;        // D_a
    Tensor exo2_w;        // D_e x D
    Tensor exo2_b;        // D
    Tensor obs_w;         // 2*D_a x D_k
    Tensor obs_b;         // D_k
    Tensor noise_w;       // 2*D_a x D_k
    Tensor noise_b;       // D_k

    std::size_t channels() const { return conv1_kernels.dim(0); }
    std::size_t d_c() const { return kCells * channels(); }
    std::size_t d_a() const { return attn_value.dim(1); }
    std::size_t d_k() const { return obs_w.dim(1); }
    std::size_t d_e() const { return exo1_w.dim(0); }
};

struct ExoFeatures {
    Tensor o_e1; // T x D_a, feeds the observation head
    Tensor o_e2; // T x D, feeds the output fusion
};

struct EncoderOutput {
    Tensor z;    // T x D_k observations, >= 0
    Tensor l;    // T x D_k measurement-noise diagonal, >= eps_noise
    Tensor o_e2; // T x D
};

// Two independent affine maps of the exogenous window, no activation.
ExoFeatures exo_extract(const Tensor& exo, const EncoderParams& params);

// Per-timestep spatial pass: reshape each row to a 5x5 map, conv(3x3, C,
// pad 1) -> layer_norm -> relu, twice, flatten to D_c = 25*C. Weights are
// shared over time, so rows are processed independently.
Tensor cnn_encode(const Tensor& traffic, const EncoderParams& params);

// Scaled dot-product self-attention over all timesteps; scale is sqrt(D_c).
Tensor self_attention(const Tensor& o_cnn, const EncoderParams& params);

// Concatenate attention and exogenous features, then the two parallel heads:
// z = relu(W o + b), l = relu(W o + b) + eps_noise.
EncoderOutput observation_head(const Tensor& o_att, const Tensor& o_e1,
                               const Tensor& o_e2, const EncoderParams& params,
                               double eps_noise);

// Full encoder. With use_attention off, the attention output is replaced by
// the plain value projection of O_cnn. With use_exo off, o_e1 is zeros and
// o_e2 carries no gradient into the exogenous weights.
EncoderOutput encode(const Tensor& traffic, const Tensor& exo,
                     const EncoderParams& params, double eps_noise,
                     bool use_exo = true, bool use_attention = true);

} // namespace dssm
