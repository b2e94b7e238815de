#include "dssm/encoder.hpp"

#include <cmath>

namespace dssm {

ExoFeatures exo_extract(const Tensor& exo, const EncoderParams& params) {
    if (exo.rank() != 2 || exo.dim(1) != params.d_e())
        throw ShapeError("exo_extract: window " + shape_str(exo.shape()) +
                         " vs weights expecting D_e = " + std::to_string(params.d_e()));
    Tensor o_e1 = add_rowwise(matmul(exo, params.exo1_w), params.exo1_b);
    Tensor o_e2 = add_rowwise(matmul(exo, params.exo2_w), params.exo2_b);
    return {o_e1, o_e2};
}

Tensor cnn_encode(const Tensor& traffic, const EncoderParams& params) {
    if (traffic.rank() != 2 || traffic.dim(1) != kCells)
        throw ShapeError("cnn_encode: expected T x " + std::to_string(kCells) +
                         " window for a " + std::to_string(kGridSide) + "x" +
                         std::to_string(kGridSide) + " grid, got " +
                         shape_str(traffic.shape()));
    std::size_t horizon = traffic.dim(0);
    std::size_t c = params.channels();
    std::vector<Tensor> rows;
    rows.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        Tensor pixel_map = reshape(select_row(traffic, t), {1, kGridSide, kGridSide});
        Tensor h1 = conv2d(pixel_map, params.conv1_kernels, 1);
        h1 = relu(layer_norm(reshape(h1, {c * kCells}), params.ln1_gain, params.ln1_bias));
        Tensor h2 = conv2d(reshape(h1, {c, kGridSide, kGridSide}), params.conv2_kernels, 1);
        h2 = relu(layer_norm(reshape(h2, {c * kCells}), params.ln2_gain, params.ln2_bias));
        rows.push_back(h2);
    }
    return stack_rows(rows);
}

Tensor self_attention(const Tensor& o_cnn, const EncoderParams& params) {
    Tensor q = matmul(o_cnn, params.attn_query);
    Tensor k = matmul(o_cnn, params.attn_key);
    Tensor v = matmul(o_cnn, params.attn_value);
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(o_cnn.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k)), inv_scale);
    return matmul(softmax(scores), v);
}

EncoderOutput observation_head(const Tensor& o_att, const Tensor& o_e1,
                               const Tensor& o_e2, const EncoderParams& params,
                               double eps_noise) {
    Tensor o_concat = concat({o_att, o_e1}, 1);
    Tensor z = relu(add_rowwise(matmul(o_concat, params.obs_w), params.obs_b));
    Tensor l = add_scalar(relu(add_rowwise(matmul(o_concat, params.noise_w),
                                           params.noise_b)),
                          eps_noise);
    return {z, l, o_e2};
}

EncoderOutput encode(const Tensor& traffic, const Tensor& exo,
                     const EncoderParams& params, double eps_noise,
                     bool use_exo, bool use_attention) {
    Tensor o_cnn = cnn_encode(traffic, params);
    Tensor o_att = use_attention ? self_attention(o_cnn, params)
                                 : matmul(o_cnn, params.attn_value);
    Tensor o_e1, o_e2;
    if (use_exo) {
        ExoFeatures exo_features = exo_extract(exo, params);
        o_e1 = exo_features.o_e1;
        o_e2 = exo_features.o_e2;
    } else {
        o_e1 = Tensor::zeros({traffic.dim(0), params.d_a()});
        o_e2 = Tensor::zeros({traffic.dim(0), kCells});
    }
    return observation_head(o_att, o_e1, o_e2, params, eps_noise);
}

} // namespace dssm
