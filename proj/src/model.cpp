#include "dssm/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dssm/rng.hpp"

namespace dssm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as little-endian float64");

using nlohmann::json;

std::string variant_name(Variant v) { return v == Variant::Alkf ? "alkf" : "aekf"; }

Variant variant_from_name(const std::string& name) {
    if (name == "alkf") return Variant::Alkf;
    if (name == "aekf") return Variant::Aekf;
    throw ConfigError("unknown variant '" + name + "' (expected alkf or aekf)");
}

void ModelConfig::validate() const {
    if (d_e < 1 || d_a < 1 || d_k < 1 || channels < 1 || t_in < 1 || horizon < 1)
        throw ConfigError("model config: all dimensions must be >= 1");
    if (eps_noise <= 0.0) throw ConfigError("model config: eps_noise must be positive");
}

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"d_e", c.d_e},
                {"d_a", c.d_a},
                {"d_k", c.d_k},
                {"channels", c.channels},
                {"t_in", c.t_in},
                {"horizon", c.horizon},
                {"eps_noise", c.eps_noise},
                {"use_ar", c.use_ar},
                {"use_exo", c.use_exo},
                {"use_attention", c.use_attention},
                {"learned_init", c.learned_init}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.d_e = j.at("d_e").get<std::size_t>();
    c.d_a = j.at("d_a").get<std::size_t>();
    c.d_k = j.at("d_k").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.t_in = j.at("t_in").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.eps_noise = j.at("eps_noise").get<double>();
    c.use_ar = j.at("use_ar").get<bool>();
    c.use_exo = j.at("use_exo").get<bool>();
    c.use_attention = j.at("use_attention").get<bool>();
    c.learned_init = j.at("learned_init").get<bool>();
    c.validate();
    return c;
}

} // namespace

std::string ModelConfig::describe() const { return config_to_json(*this).dump(); }

std::vector<std::pair<std::string, std::vector<std::size_t>>>
ModelParams::param_layout(const ModelConfig& c) {
    std::size_t dc = c.d_c(), da = c.d_a, dk = c.d_k, de = c.d_e, ch = c.channels;
    std::size_t hd = c.horizon * kCells;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> layout{
        {"conv1_kernels", {ch, 1, 3, 3}},
        {"ln1_gain", {dc}},
        {"ln1_bias", {dc}},
        {"conv2_kernels", {ch, ch, 3, 3}},
        {"ln2_gain", {dc}},
        {"ln2_bias", {dc}},
        {"attn_query", {dc, da}},
        {"attn_key", {dc, da}},
        {"attn_value", {dc, da}},
        {"exo1_w", {de, da}},
        {"exo1_b", {da}},
        {"exo2_w", {de, kCells}},
        {"exo2_b", {kCells}},
        {"obs_w", {2 * da, dk}},
        {"obs_b", {dk}},
        {"noise_w", {2 * da, dk}},
        {"noise_b", {dk}},
    };
    if (c.variant == Variant::Alkf) {
        layout.push_back({"gamma", {dk}});
        layout.push_back({"lambda_raw", {dk}});
    } else {
        layout.push_back({"coef_f_w", {dk, 3 * dk}});
        layout.push_back({"coef_f_b", {3 * dk}});
        layout.push_back({"coef_h_w", {dk, 3 * dk}});
        layout.push_back({"coef_h_b", {3 * dk}});
        layout.push_back({"lambda_raw", {dk}});
    }
    if (c.learned_init) layout.push_back({"init_mean", {dk}});
    layout.push_back({"ar_w", {kCells, kCells}});
    layout.push_back({"ar_b", {kCells}});
    layout.push_back({"dec_w", {dk, kCells}});
    layout.push_back({"dec_b", {kCells}});
    layout.push_back({"fuse_exo", {kCells, hd}});
    layout.push_back({"fuse_ar", {kCells, hd}});
    layout.push_back({"fuse_kal", {kCells, hd}});
    layout.push_back({"fuse_b", {hd}});
    return layout;
}

ModelParams ModelParams::from_tensors(const ModelConfig& c,
                                      const std::vector<Tensor>& t) {
    auto layout = param_layout(c);
    if (t.size() != layout.size())
        throw ShapeError("model params: expected " + std::to_string(layout.size()) +
                         " tensors, got " + std::to_string(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i].shape() != layout[i].second)
            throw ShapeError("model params: tensor '" + layout[i].first + "' has shape " +
                             shape_str(t[i].shape()) + ", expected " +
                             shape_str(layout[i].second));
    ModelParams p;
    std::size_t i = 0;
    p.encoder.conv1_kernels = t[i++];
    p.encoder.ln1_gain = t[i++];
    p.encoder.ln1_bias = t[i++];
    p.encoder.conv2_kernels = t[i++];
    p.encoder.ln2_gain = t[i++];
    p.encoder.ln2_bias = t[i++];
    p.encoder.attn_query = t[i++];
    p.encoder.attn_key = t[i++];
    p.encoder.attn_value = t[i++];
    p.encoder.exo1_w = t[i++];
    p.encoder.exo1_b = t[i++];
    p.encoder.exo2_w = t[i++];
    p.encoder.exo2_b = t[i++];
    p.encoder.obs_w = t[i++];
    p.encoder.obs_b = t[i++];
    p.encoder.noise_w = t[i++];
    p.encoder.noise_b = t[i++];
    if (c.variant == Variant::Alkf) {
        LkfParams lkf;
        lkf.gamma = t[i++];
        lkf.lambda_raw = t[i++];
        p.filter = lkf;
    } else {
        EkfParams ekf;
        ekf.coef_f_w = t[i++];
        ekf.coef_f_b = t[i++];
        ekf.coef_h_w = t[i++];
        ekf.coef_h_b = t[i++];
        ekf.lambda_raw = t[i++];
        p.filter = ekf;
    }
    if (c.learned_init) p.init_mean = t[i++];
    p.ar_w = t[i++];
    p.ar_b = t[i++];
    p.dec_w = t[i++];
    p.dec_b = t[i++];
    p.fuse_exo = t[i++];
    p.fuse_ar = t[i++];
    p.fuse_kal = t[i++];
    p.fuse_b = t[i++];
    return p;
}

std::vector<Tensor> ModelParams::tensors() const {
    std::vector<Tensor> t{encoder.conv1_kernels, encoder.ln1_gain, encoder.ln1_bias,
                          encoder.conv2_kernels, encoder.ln2_gain, encoder.ln2_bias,
                          encoder.attn_query, encoder.attn_key, encoder.attn_value,
                          encoder.exo1_w, encoder.exo1_b, encoder.exo2_w, encoder.exo2_b,
                          encoder.obs_w, encoder.obs_b, encoder.noise_w, encoder.noise_b};
    if (const auto* lkf = std::get_if<LkfParams>(&filter)) {
        t.push_back(lkf->gamma);
        t.push_back(lkf->lambda_raw);
    } else {
        const auto& ekf = std::get<EkfParams>(filter);
        t.push_back(ekf.coef_f_w);
        t.push_back(ekf.coef_f_b);
        t.push_back(ekf.coef_h_w);
        t.push_back(ekf.coef_h_b);
        t.push_back(ekf.lambda_raw);
    }
    if (init_mean.defined()) t.push_back(init_mean);
    t.push_back(ar_w);
    t.push_back(ar_b);
    t.push_back(dec_w);
    t.push_back(dec_b);
    t.push_back(fuse_exo);
    t.push_back(fuse_ar);
    t.push_back(fuse_kal);
    t.push_back(fuse_b);
    return t;
}

void ModelParams::zero_grad() {
    for (auto& t : tensors()) t.zero_grad();
}

ModelParams ModelParams::detached(const ModelConfig& config) const {
    std::vector<Tensor> copies;
    for (const auto& t : tensors())
        copies.push_back(Tensor::from(t.shape(), t.values(), false));
    return from_tensors(config, copies);
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    auto uniform_fan_in = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> v(shape_numel(shape));
        for (auto& x : v) x = rng.uniform(-bound, bound);
        return Tensor::from(std::move(shape), std::move(v), true);
    };
    auto zeros = [](std::vector<std::size_t> shape) {
        return Tensor::zeros(std::move(shape), true);
    };
    auto ones = [](std::vector<std::size_t> shape) {
        return Tensor::full(std::move(shape), 1.0, true);
    };

    std::size_t dc = config.d_c(), da = config.d_a, dk = config.d_k, de = config.d_e;
    std::size_t ch = config.channels, hd = config.horizon * kCells;

    std::vector<Tensor> t;
    t.push_back(uniform_fan_in({ch, 1, 3, 3}, 9));
    t.push_back(ones({dc}));
    t.push_back(zeros({dc}));
    t.push_back(uniform_fan_in({ch, ch, 3, 3}, 9 * ch));
    t.push_back(ones({dc}));
    t.push_back(zeros({dc}));
    t.push_back(uniform_fan_in({dc, da}, dc));
    t.push_back(uniform_fan_in({dc, da}, dc));
    t.push_back(uniform_fan_in({dc, da}, dc));
    t.push_back(uniform_fan_in({de, da}, de));
    t.push_back(zeros({da}));
    t.push_back(uniform_fan_in({de, kCells}, de));
    t.push_back(zeros({kCells}));
    t.push_back(uniform_fan_in({2 * da, dk}, 2 * da));
    t.push_back(zeros({dk}));
    t.push_back(uniform_fan_in({2 * da, dk}, 2 * da));
    t.push_back(zeros({dk}));

    // lambda_raw chosen so the initial process noise is about 0.1
    double lambda_raw0 = std::log(std::exp(0.1) - 1.0);
    if (config.variant == Variant::Alkf) {
        t.push_back(ones({dk})); // identity transition at start
        t.push_back(Tensor::full({dk}, lambda_raw0, true));
    } else {
        // heads start in the linear regime: f(x) = h(x) = x
        std::vector<double> linear_bias(3 * dk, 0.0);
        for (std::size_t i = 0; i < dk; ++i) linear_bias[dk + i] = 1.0;
        t.push_back(zeros({dk, 3 * dk}));
        t.push_back(Tensor::from({3 * dk}, linear_bias, true));
        t.push_back(zeros({dk, 3 * dk}));
        t.push_back(Tensor::from({3 * dk}, linear_bias, true));
        t.push_back(Tensor::full({dk}, lambda_raw0, true));
    }
    if (config.learned_init) t.push_back(zeros({dk}));
    t.push_back(uniform_fan_in({kCells, kCells}, kCells));
    t.push_back(zeros({kCells}));
    t.push_back(uniform_fan_in({dk, kCells}, dk));
    t.push_back(zeros({kCells}));
    t.push_back(uniform_fan_in({kCells, hd}, kCells));
    t.push_back(uniform_fan_in({kCells, hd}, kCells));
    t.push_back(uniform_fan_in({kCells, hd}, kCells));
    t.push_back(zeros({hd}));
    return from_tensors(config, t);
}

Tensor ar_head(const Tensor& x_last, const Tensor& w, const Tensor& b) {
    std::size_t d = x_last.numel();
    return add(select_row(matmul(reshape(x_last, {1, d}), w), 0), b);
}

Tensor decode(const Tensor& state_mean, const Tensor& w, const Tensor& b) {
    std::size_t dk = state_mean.numel();
    return relu(add(select_row(matmul(reshape(state_mean, {1, dk}), w), 0), b));
}

Tensor fuse(const Tensor& o_e2_last, const Tensor& o_ar, const Tensor& o_kal,
            const ModelParams& params, const ModelConfig& config) {
    auto branch = [](const Tensor& x, const Tensor& w) {
        return select_row(matmul(reshape(x, {1, x.numel()}), w), 0);
    };
    Tensor pre = branch(o_kal, params.fuse_kal);
    if (config.use_exo) pre = add(pre, branch(o_e2_last, params.fuse_exo));
    if (config.use_ar) pre = add(pre, branch(o_ar, params.fuse_ar));
    pre = add(pre, params.fuse_b);
    return reshape(relu(pre), {config.horizon, kCells});
}

ModelOutput forward(const Tensor& input, const Tensor& exo, const ModelParams& params,
                    const ModelConfig& config) {
    if (input.rank() != 2 || input.dim(0) != config.t_in || input.dim(1) != kCells)
        throw ShapeError("forward: input " + shape_str(input.shape()) + " vs config t_in " +
                         std::to_string(config.t_in));
    if (exo.rank() != 2 || exo.dim(0) != config.t_in || exo.dim(1) != config.d_e)
        throw ShapeError("forward: exo " + shape_str(exo.shape()) + " vs config d_e " +
                         std::to_string(config.d_e));

    EncoderOutput enc = encode(input, exo, params.encoder, config.eps_noise,
                               config.use_exo, config.use_attention);
    KalmanState init = initial_state(config.d_k);
    if (config.learned_init && params.init_mean.defined()) init.mean = params.init_mean;
    FilterResult filter = run_filter(enc.z, enc.l, params.filter, init);

    Tensor o_kal = decode(filter.final_state.mean, params.dec_w, params.dec_b);
    Tensor x_last = select_row(input, config.t_in - 1);
    Tensor o_ar = config.use_ar ? ar_head(x_last, params.ar_w, params.ar_b)
                                : Tensor::zeros({kCells});
    Tensor o_e2_last = select_row(enc.o_e2, config.t_in - 1);

    ModelOutput out;
    out.forecast = fuse(o_e2_last, o_ar, o_kal, params, config);
    out.gains = Tensor::from(filter.gains.shape(), filter.gains.values());
    out.var_floor_events = filter.var_floor_events;
    return out;
}

std::vector<double> gain_trace(const std::vector<std::pair<Tensor, Tensor>>& samples,
                               const ModelParams& params, const ModelConfig& config) {
    if (samples.empty()) throw DataError("gain_trace: no samples");
    std::vector<double> trace(config.t_in, 0.0);
    for (const auto& [input, exo] : samples) {
        ModelOutput out = forward(input, exo, params, config);
        for (std::size_t t = 0; t < config.t_in; ++t) {
            double mean = 0.0;
            for (std::size_t i = 0; i < config.d_k; ++i)
                mean += out.gains.value(t * config.d_k + i);
            trace[t] += mean / static_cast<double>(config.d_k);
        }
    }
    for (auto& v : trace) v /= static_cast<double>(samples.size());
    return trace;
}

void save_params(const ModelParams& params, const ModelConfig& config,
                 const std::string& path) {
    auto layout = ModelParams::param_layout(config);
    auto tensors = params.tensors();
    json header;
    header["format_version"] = 1;
    header["config"] = config_to_json(config);
    json shapes = json::array();
    for (std::size_t i = 0; i < layout.size(); ++i)
        shapes.push_back({{"name", layout[i].first}, {"shape", layout[i].second}});
    header["tensors"] = shapes;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << header.dump() << "\n";
    for (const auto& t : tensors)
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw DataError("short write to checkpoint: " + path);
}

Checkpoint load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw DataError("checkpoint " + path + ": missing header");
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + ": bad header: " + e.what());
    }
    if (header.value("format_version", 0) != 1)
        throw DataError("checkpoint " + path + ": unsupported format version");

    ModelConfig config;
    try {
        config = config_from_json(header.at("config"));
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + ": bad config: " + e.what());
    }
    auto layout = ModelParams::param_layout(config);
    std::size_t total = 0;
    for (const auto& [name, shape] : layout) total += shape_numel(shape);

    std::vector<double> payload(total);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != total * sizeof(double))
        throw DataError("checkpoint " + path + ": truncated payload (expected " +
                        std::to_string(total * sizeof(double)) + " bytes)");
    char extra;
    if (in.read(&extra, 1))
        throw DataError("checkpoint " + path + ": trailing bytes after payload");

    std::vector<Tensor> tensors;
    std::size_t off = 0;
    for (const auto& [name, shape] : layout) {
        std::size_t n = shape_numel(shape);
        tensors.push_back(Tensor::from(
            shape, std::vector<double>(payload.begin() + off, payload.begin() + off + n),
            true));
        off += n;
    }
    return {config, ModelParams::from_tensors(config, tensors)};
}

Checkpoint load_params_checked(const std::string& path, std::size_t d_e,
                               std::size_t t_in, std::size_t horizon) {
    Checkpoint ckpt = load_params(path);
    if (ckpt.config.d_e != d_e || ckpt.config.t_in != t_in ||
        ckpt.config.horizon != horizon) {
        ModelConfig wanted = ckpt.config;
        wanted.d_e = d_e;
        wanted.t_in = t_in;
        wanted.horizon = horizon;
        throw ConfigError("checkpoint " + path + " was trained with " +
                          ckpt.config.describe() + " but the dataset requires " +
                          wanted.describe());
    }
    return ckpt;
}

} // namespace dssm
