#include "dssm/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace dssm {

double rmse_metric(const std::vector<double>& targets, const std::vector<double>& preds) {
    if (targets.size() != preds.size() || targets.empty())
        throw ShapeError("rmse: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(preds.size()) + " predictions");
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double e = targets[i] - preds[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(targets.size()));
}

double mae_metric(const std::vector<double>& targets, const std::vector<double>& preds) {
    if (targets.size() != preds.size() || targets.empty())
        throw ShapeError("mae: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(preds.size()) + " predictions");
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) s += std::abs(targets[i] - preds[i]);
    return s / static_cast<double>(targets.size());
}

CorrResult corr_metric(const std::vector<double>& targets,
                       const std::vector<double>& preds, std::size_t n, std::size_t d,
                       bool as_printed) {
    if (targets.size() != n * d || preds.size() != n * d)
        throw ShapeError("corr: expected " + std::to_string(n) + "x" + std::to_string(d) +
                         " blocks");
    if (d < 2) throw ShapeError("corr: needs at least 2 dimensions per sample");
    CorrResult out;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* y = targets.data() + i * d;
        const double* p = preds.data() + i * d;
        double my = 0.0, mp = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            my += y[j];
            mp += p[j];
        }
        my /= static_cast<double>(d);
        mp /= static_cast<double>(d);
        double num = 0.0, yy = 0.0, pp = 0.0, printed = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double dy = y[j] - my, dp = p[j] - mp;
            num += dy * dp;
            yy += dy * dy;
            pp += dp * dp;
            printed += dy * dy * dp * dp;
        }
        if (yy == 0.0 || pp == 0.0) {
            ++out.skipped;
            continue;
        }
        double denom = as_printed ? std::sqrt(printed) : std::sqrt(yy * pp);
        if (denom == 0.0) {
            ++out.skipped;
            continue;
        }
        sum += num / denom;
        ++used;
    }
    if (used == 0) throw DataError("corr: every sample has zero variance");
    out.value = sum / static_cast<double>(used);
    return out;
}

Tensor persistence_baseline(const Tensor& input, std::size_t horizon) {
    if (input.rank() != 2) throw ShapeError("persistence: expected a 2-d window");
    std::size_t d = input.dim(1);
    std::size_t last = input.dim(0) - 1;
    std::vector<double> out(horizon * d);
    for (std::size_t k = 0; k < horizon; ++k)
        for (std::size_t j = 0; j < d; ++j) out[k * d + j] = input.value(last * d + j);
    return Tensor::from({horizon, d}, std::move(out));
}

EvalResult evaluate_predictions(const std::vector<double>& predictions,
                                const std::vector<double>& targets, std::size_t n,
                                std::size_t horizon, const EvalOptions& options) {
    std::size_t block = horizon * kCells;
    if (predictions.size() != n * block || targets.size() != n * block)
        throw ShapeError("evaluate: prediction/target blocks do not match n x h x D");
    EvalResult r;
    r.n_samples = n;
    r.rmse = rmse_metric(targets, predictions);
    r.mae = mae_metric(targets, predictions);

    double corr_sum = 0.0;
    for (std::size_t k = 0; k < horizon; ++k) {
        std::vector<double> tk(n * kCells), pk(n * kCells);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < kCells; ++j) {
                tk[i * kCells + j] = targets[i * block + k * kCells + j];
                pk[i * kCells + j] = predictions[i * block + k * kCells + j];
            }
        HorizonStats hs;
        hs.step = k + 1;
        hs.rmse = rmse_metric(tk, pk);
        hs.mae = mae_metric(tk, pk);
        CorrResult c = corr_metric(tk, pk, n, kCells, options.corr_as_printed);
        hs.corr = c.value;
        r.corr_skipped += c.skipped;
        corr_sum += c.value;
        r.per_horizon.push_back(hs);
    }
    r.corr = corr_sum / static_cast<double>(horizon);
    return r;
}

namespace {

EvalData evaluate_with(const PreparedDataset& ds,
                       const std::function<Tensor(std::size_t)>& forecast_of,
                       const EvalOptions& options) {
    std::size_t begin = ds.split.val_end, end = ds.split.test_end;
    if (begin >= end) throw DataError("evaluate: empty test split");
    EvalData data;
    data.n = end - begin;
    data.horizon = ds.window.horizon;
    data.first_sample = begin;
    std::size_t block = data.horizon * kCells;
    data.predictions.reserve(data.n * block);
    data.targets.reserve(data.n * block);
    for (std::size_t i = begin; i < end; ++i) {
        Tensor forecast = forecast_of(i);
        auto pred = ds.denorm_block(forecast.values(), data.horizon);
        auto truth = ds.denorm_block(ds.target_window(i).values(), data.horizon);
        data.predictions.insert(data.predictions.end(), pred.begin(), pred.end());
        data.targets.insert(data.targets.end(), truth.begin(), truth.end());
    }
    data.result = evaluate_predictions(data.predictions, data.targets, data.n,
                                       data.horizon, options);
    return data;
}

} // namespace

EvalData evaluate(const PreparedDataset& ds, const ModelParams& params,
                  const ModelConfig& config, const EvalOptions& options) {
    ModelParams frozen = params.detached(config);
    return evaluate_with(
        ds,
        [&](std::size_t i) {
            return forward(ds.input_window(i), ds.exo_window(i), frozen, config).forecast;
        },
        options);
}

EvalData evaluate_persistence(const PreparedDataset& ds, const EvalOptions& options) {
    return evaluate_with(
        ds,
        [&](std::size_t i) {
            return persistence_baseline(ds.input_window(i), ds.window.horizon);
        },
        options);
}

Tensor ar_only_forward(const ArOnlyModel& model, const Tensor& input,
                       std::size_t horizon) {
    Tensor x_last = select_row(input, input.dim(0) - 1);
    Tensor scale_head = ar_head(x_last, model.ar_w, model.ar_b);
    Tensor flat = add(select_row(matmul(reshape(scale_head, {1, kCells}),
                                        model.readout_w),
                                 0),
                      model.readout_b);
    return reshape(flat, {horizon, kCells});
}

ArOnlyResult ar_only_train(const PreparedDataset& ds, const TrainConfig& config) {
    config.validate();
    std::size_t hd = ds.window.horizon * kCells;
    Rng rng(config.seed);
    auto uniform = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> v(shape_numel(shape));
        for (auto& x : v) x = rng.uniform(-bound, bound);
        return Tensor::from(std::move(shape), std::move(v), true);
    };
    ArOnlyModel model{uniform({kCells, kCells}, kCells), Tensor::zeros({kCells}, true),
                      uniform({kCells, hd}, kCells), Tensor::zeros({hd}, true)};
    std::vector<Tensor> tensors{model.ar_w, model.ar_b, model.readout_w, model.readout_b};
    AdamState adam = AdamState::like(tensors);
    Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

    auto detached = [&]() {
        return ArOnlyModel{Tensor::from(model.ar_w.shape(), model.ar_w.values()),
                           Tensor::from(model.ar_b.shape(), model.ar_b.values()),
                           Tensor::from(model.readout_w.shape(), model.readout_w.values()),
                           Tensor::from(model.readout_b.shape(), model.readout_b.values())};
    };
    auto val_rmse = [&]() {
        ArOnlyModel frozen = detached();
        double sum_sq = 0.0;
        std::size_t count = 0;
        for (std::size_t i = ds.split.train_end; i < ds.split.val_end; ++i) {
            Tensor f = ar_only_forward(frozen, ds.input_window(i), ds.window.horizon);
            auto pred = ds.denorm_block(f.values(), ds.window.horizon);
            auto truth = ds.denorm_block(ds.target_window(i).values(), ds.window.horizon);
            for (std::size_t j = 0; j < pred.size(); ++j) {
                double e = pred[j] - truth[j];
                sum_sq += e * e;
            }
            count += pred.size();
        }
        return std::sqrt(sum_sq / static_cast<double>(count));
    };

    TrainReport report;
    std::vector<std::vector<double>> best;
    double best_val = 0.0;
    std::size_t bad = 0, step_index = 0;
    std::vector<std::size_t> order(ds.split.train_end);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        double epoch_sq = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t stop = std::min(order.size(), start + config.batch_size);
            for (auto& t : tensors) t.zero_grad();
            std::vector<Tensor> preds, targets;
            for (std::size_t k = start; k < stop; ++k) {
                Tensor f = ar_only_forward(model, ds.input_window(order[k]),
                                           ds.window.horizon);
                preds.push_back(reshape(f, {f.numel()}));
                Tensor t = ds.target_window(order[k]);
                targets.push_back(reshape(t, {t.numel()}));
            }
            Tensor loss = rmse_loss(concat(preds, 0), concat(targets, 0));
            if (!std::isfinite(loss.scalar_value())) {
                report.diverged = true;
                break;
            }
            std::size_t elems = (stop - start) * hd;
            epoch_sq += loss.scalar_value() * loss.scalar_value() *
                        static_cast<double>(elems);
            epoch_count += elems;
            loss.backward();
            adam_step(tensors, adam, ++step_index, config);
        }
        if (report.diverged) break;
        double val = val_rmse();
        report.epochs.push_back({epoch,
                                 std::sqrt(epoch_sq / static_cast<double>(epoch_count)),
                                 val});
        if (report.best_epoch == 0 || val < best_val) {
            best_val = val;
            report.best_epoch = epoch;
            report.best_val_rmse = val;
            bad = 0;
            best.clear();
            for (const auto& t : tensors) best.push_back(t.values());
        } else if (++bad >= config.patience) {
            break;
        }
    }
    if (!best.empty()) {
        model.ar_w = Tensor::from(model.ar_w.shape(), best[0], true);
        model.ar_b = Tensor::from(model.ar_b.shape(), best[1], true);
        model.readout_w = Tensor::from(model.readout_w.shape(), best[2], true);
        model.readout_b = Tensor::from(model.readout_b.shape(), best[3], true);
    }
    return {model, report};
}

EvalData evaluate_ar_only(const PreparedDataset& ds, const ArOnlyModel& model,
                          const EvalOptions& options) {
    return evaluate_with(
        ds,
        [&](std::size_t i) {
            return ar_only_forward(model, ds.input_window(i), ds.window.horizon);
        },
        options);
}

void write_predictions_csv(const EvalData& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "sample_id,horizon_step,cell_id,target,prediction\n";
    std::size_t block = data.horizon * kCells;
    char buf[160];
    for (std::size_t i = 0; i < data.n; ++i)
        for (std::size_t k = 0; k < data.horizon; ++k)
            for (std::size_t j = 0; j < kCells; ++j) {
                std::size_t at = i * block + k * kCells + j;
                std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.17g,%.17g\n",
                              data.first_sample + i, k + 1, j, data.targets[at],
                              data.predictions[at]);
                out << buf;
            }
}

void write_metrics_json(const EvalResult& result, const std::string& path) {
    nlohmann::json j;
    j["rmse"] = result.rmse;
    j["mae"] = result.mae;
    j["corr"] = result.corr;
    j["n_samples"] = result.n_samples;
    j["corr_skipped"] = result.corr_skipped;
    nlohmann::json ph = nlohmann::json::array();
    for (const auto& h : result.per_horizon)
        ph.push_back({{"step", h.step}, {"rmse", h.rmse}, {"mae", h.mae},
                      {"corr", h.corr}});
    j["per_horizon"] = ph;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace dssm
