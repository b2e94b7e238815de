#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dssm/encoder.hpp"
#include "dssm/rng.hpp"

using namespace dssm;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -0.5,
                     double hi = 0.5, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

EncoderParams random_params(Rng& rng, std::size_t c, std::size_t d_a, std::size_t d_k,
                            std::size_t d_e) {
    std::size_t d_c = kCells * c;
    EncoderParams p;
    p.conv1_kernels = random_tensor(rng, {c, 1, 3, 3});
    p.ln1_gain = random_tensor(rng, {d_c}, 0.8, 1.2);
    p.ln1_bias = random_tensor(rng, {d_c}, -0.1, 0.1);
    p.conv2_kernels = random_tensor(rng, {c, c, 3, 3});
    p.ln2_gain = random_tensor(rng, {d_c}, 0.8, 1.2);
    p.ln2_bias = random_tensor(rng, {d_c}, -0.1, 0.1);
    p.attn_query = random_tensor(rng, {d_c, d_a});
    p.attn_key = random_tensor(rng, {d_c, d_a});
    p.attn_value = random_tensor(rng, {d_c, d_a});
    p.exo1_w = random_tensor(rng, {d_e, d_a});
    p.exo1_b = random_tensor(rng, {d_a});
    p.exo2_w = random_tensor(rng, {d_e, kCells});
    p.exo2_b = random_tensor(rng, {kCells});
    p.obs_w = random_tensor(rng, {2 * d_a, d_k});
    p.obs_b = random_tensor(rng, {d_k});
    p.noise_w = random_tensor(rng, {2 * d_a, d_k});
    p.noise_b = random_tensor(rng, {d_k});
    return p;
}

} // namespace

TEST_CASE("exo_extract shapes and zero-weight case") {
    Rng rng(3);
    std::size_t t = 6, d_e = 32, d_a = 16;
    EncoderParams p = random_params(rng, 2, d_a, 4, d_e);
    Tensor exo = random_tensor(rng, {t, d_e});
    auto f = exo_extract(exo, p);
    CHECK(f.o_e1.shape() == std::vector<std::size_t>{t, d_a});
    CHECK(f.o_e2.shape() == std::vector<std::size_t>{t, kCells});

    p.exo1_w = Tensor::zeros({d_e, d_a});
    p.exo1_b = Tensor::zeros({d_a});
    p.exo2_w = Tensor::zeros({d_e, kCells});
    p.exo2_b = Tensor::zeros({kCells});
    auto z = exo_extract(exo, p);
    for (std::size_t i = 0; i < z.o_e1.numel(); ++i) CHECK(z.o_e1.value(i) == 0.0);
    for (std::size_t i = 0; i < z.o_e2.numel(); ++i) CHECK(z.o_e2.value(i) == 0.0);

    CHECK_THROWS_AS(exo_extract(random_tensor(rng, {t, d_e + 1}), p), ShapeError);
}

TEST_CASE("exo_extract gradient matches finite differences") {
    Rng rng(5);
    std::size_t t = 4, d_e = 8, d_a = 3;
    EncoderParams p = random_params(rng, 1, d_a, 2, d_e);
    Tensor exo = random_tensor(rng, {t, d_e});
    double err = grad_check(
        [&](const Tensor& w) {
            EncoderParams q = p;
            q.exo1_w = reshape(w, {d_e, d_a});
            return reduce_sum(square(exo_extract(exo, q).o_e1));
        },
        random_tensor(rng, {d_e * d_a}), 1e-5);
    CHECK(err < 1e-5);
}

TEST_CASE("cnn_encode of zeros with zero biases is zero") {
    Rng rng(7);
    EncoderParams p = random_params(rng, 2, 4, 3, 8);
    p.ln1_bias = Tensor::zeros({p.d_c()});
    p.ln2_bias = Tensor::zeros({p.d_c()});
    Tensor x = Tensor::zeros({5, kCells});
    Tensor out = cnn_encode(x, p);
    REQUIRE(out.shape() == std::vector<std::size_t>{5, p.d_c()});
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.value(i) == 0.0);
}

TEST_CASE("cnn_encode rows are per-timestep independent") {
    Rng rng(11);
    EncoderParams p = random_params(rng, 2, 4, 3, 8);
    std::size_t t = 8;
    Tensor a = random_tensor(rng, {t, kCells}, 0.0, 1.0);
    std::vector<double> bv = a.values();
    for (std::size_t j = 0; j < kCells; ++j) bv[5 * kCells + j] += 0.3;
    Tensor b = Tensor::from({t, kCells}, bv);
    Tensor oa = cnn_encode(a, p);
    Tensor ob = cnn_encode(b, p);
    std::size_t d_c = p.d_c();
    bool row5_differs = false;
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < d_c; ++j) {
            if (r == 5) {
                if (oa.value(r * d_c + j) != ob.value(r * d_c + j)) row5_differs = true;
            } else {
                CHECK(oa.value(r * d_c + j) == ob.value(r * d_c + j));
            }
        }
    CHECK(row5_differs);
}

TEST_CASE("cnn_encode with delta kernels matches a per-row recomputation") {
    // Centred 3x3 deltas make each conv an identity, so the whole stage is
    // relu(ln(relu(ln(row)))) and the reshape wiring must be pixel-faithful.
    Rng rng(13);
    std::size_t c = 1;
    EncoderParams p = random_params(rng, c, 4, 3, 8);
    std::vector<double> delta(9, 0.0);
    delta[4] = 1.0;
    p.conv1_kernels = Tensor::from({1, 1, 3, 3}, delta);
    p.conv2_kernels = Tensor::from({1, 1, 3, 3}, delta);
    Tensor x = random_tensor(rng, {3, kCells}, 0.0, 1.0);
    Tensor out = cnn_encode(x, p);
    for (std::size_t t = 0; t < 3; ++t) {
        Tensor row = select_row(x, t);
        Tensor expect = relu(layer_norm(
            relu(layer_norm(row, p.ln1_gain, p.ln1_bias)), p.ln2_gain, p.ln2_bias));
        for (std::size_t j = 0; j < kCells; ++j)
            CHECK(out.value(t * kCells + j) == expect.value(j));
    }
}

TEST_CASE("cnn_encode rejects non-grid windows") {
    Rng rng(17);
    EncoderParams p = random_params(rng, 1, 4, 3, 8);
    CHECK_THROWS_AS(cnn_encode(random_tensor(rng, {4, 24}), p), ShapeError);
}

TEST_CASE("self_attention with one timestep returns its own value row") {
    Rng rng(19);
    EncoderParams p = random_params(rng, 1, 4, 3, 8);
    Tensor o_cnn = random_tensor(rng, {1, p.d_c()});
    Tensor att = self_attention(o_cnn, p);
    Tensor v = matmul(o_cnn, p.attn_value);
    for (std::size_t i = 0; i < att.numel(); ++i)
        CHECK(att.value(i) == doctest::Approx(v.value(i)).epsilon(1e-14));
}

TEST_CASE("self_attention maps identical rows to identical outputs") {
    Rng rng(23);
    EncoderParams p = random_params(rng, 1, 4, 3, 8);
    std::vector<double> row(p.d_c());
    for (auto& x : row) x = rng.uniform(-1.0, 1.0);
    std::vector<double> all;
    for (int t = 0; t < 5; ++t) all.insert(all.end(), row.begin(), row.end());
    Tensor att = self_attention(Tensor::from({5, p.d_c()}, all), p);
    for (std::size_t t = 1; t < 5; ++t)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(att.value(t * 4 + j) == doctest::Approx(att.value(j)).epsilon(1e-12));
}

TEST_CASE("self_attention matches a direct recomputation") {
    Rng rng(29);
    EncoderParams p = random_params(rng, 1, 3, 2, 8);
    std::size_t t = 4, d_c = p.d_c(), d_a = 3;
    Tensor o_cnn = random_tensor(rng, {t, d_c});
    Tensor att = self_attention(o_cnn, p);

    // test-local recomputation with explicit loops
    auto matv = [&](const Tensor& m, const Tensor& w) {
        std::vector<double> out(t * d_a, 0.0);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d_a; ++j)
                for (std::size_t k = 0; k < d_c; ++k)
                    out[i * d_a + j] += m.value(i * d_c + k) * w.value(k * d_a + j);
        return out;
    };
    auto q = matv(o_cnn, p.attn_query), k = matv(o_cnn, p.attn_key),
         v = matv(o_cnn, p.attn_value);
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> w(t, 0.0);
        double mx = -1e300;
        for (std::size_t j = 0; j < t; ++j) {
            for (std::size_t a = 0; a < d_a; ++a) w[j] += q[i * d_a + a] * k[j * d_a + a];
            w[j] /= std::sqrt(static_cast<double>(d_c));
            mx = std::max(mx, w[j]);
        }
        double sum = 0.0;
        for (auto& x : w) {
            x = std::exp(x - mx);
            sum += x;
        }
        double wsum = 0.0;
        for (auto& x : w) {
            x /= sum;
            wsum += x;
        }
        CHECK(std::abs(wsum - 1.0) < 1e-12); // attention rows are distributions
        for (std::size_t a = 0; a < d_a; ++a) {
            double expect = 0.0;
            for (std::size_t j = 0; j < t; ++j) expect += w[j] * v[j * d_a + a];
            CHECK(att.value(i * d_a + a) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("observation_head constants and noise floor") {
    Rng rng(31);
    std::size_t t = 5, d_a = 4, d_k = 3;
    EncoderParams p = random_params(rng, 1, d_a, d_k, 8);
    p.obs_w = Tensor::zeros({2 * d_a, d_k});
    p.obs_b = Tensor::from({d_k}, {-0.5, 0.0, 1.25});
    Tensor o_att = random_tensor(rng, {t, d_a});
    Tensor o_e1 = random_tensor(rng, {t, d_a});
    Tensor o_e2 = Tensor::zeros({t, kCells});
    auto out = observation_head(o_att, o_e1, o_e2, p, 1e-4);
    for (std::size_t r = 0; r < t; ++r) {
        CHECK(out.z.value(r * d_k + 0) == 0.0);
        CHECK(out.z.value(r * d_k + 1) == 0.0);
        CHECK(out.z.value(r * d_k + 2) == 1.25);
    }
    for (std::size_t i = 0; i < out.l.numel(); ++i) CHECK(out.l.value(i) >= 1e-4);
}

TEST_CASE("encoder output invariants hold for random parameters") {
    Rng rng(37);
    for (int trial = 0; trial < 5; ++trial) {
        EncoderParams p = random_params(rng, 2, 4, 3, 10);
        Tensor x = random_tensor(rng, {6, kCells}, 0.0, 1.0);
        Tensor e = random_tensor(rng, {6, 10}, 0.0, 1.0);
        auto out = encode(x, e, p, 1e-4);
        for (std::size_t i = 0; i < out.z.numel(); ++i) {
            CHECK(out.z.value(i) >= 0.0);
            CHECK(out.l.value(i) >= 1e-4);
        }
    }
}

TEST_CASE("full encoder gradient matches finite differences") {
    Rng rng(41);
    std::size_t c = 1, d_a = 2, d_k = 2, d_e = 4, t = 3;
    EncoderParams p = random_params(rng, c, d_a, d_k, d_e);
    Tensor x = random_tensor(rng, {t, kCells}, 0.1, 0.9);
    Tensor e = random_tensor(rng, {t, d_e}, 0.0, 1.0);

    // check through the conv kernels, the attention query, and the obs head
    double err = grad_check(
        [&](const Tensor& w) {
            EncoderParams q = p;
            q.conv1_kernels = reshape(w, {c, 1, 3, 3});
            auto out = encode(x, e, q, 1e-4);
            return reduce_sum(add(square(out.z), square(out.l)));
        },
        random_tensor(rng, {c * 9}), 1e-5);
    CHECK(err < 1e-4);

    err = grad_check(
        [&](const Tensor& w) {
            EncoderParams q = p;
            q.attn_query = reshape(w, {kCells * c, d_a});
            auto out = encode(x, e, q, 1e-4);
            return reduce_sum(square(out.z));
        },
        random_tensor(rng, {kCells * c * d_a}), 1e-5);
    CHECK(err < 1e-4);

    err = grad_check(
        [&](const Tensor& w) {
            EncoderParams q = p;
            q.obs_w = reshape(w, {2 * d_a, d_k});
            auto out = encode(x, e, q, 1e-4);
            return reduce_sum(square(out.z));
        },
        random_tensor(rng, {2 * d_a * d_k}), 1e-5);
    CHECK(err < 1e-4);
}
