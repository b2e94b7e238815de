#include "dssm/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "dssm/rng.hpp"

namespace dssm {

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("train config: learning rate must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("train config: beta1/beta2 must lie in [0, 1)");
    if (eps <= 0.0) throw ConfigError("train config: eps must be positive");
    if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train config: max epochs must be >= 1");
    if (patience < 1) throw ConfigError("train config: patience must be >= 1");
}

Tensor rmse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("rmse_loss: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    Tensor msq = reduce_mean(square(sub(pred, target)));
    if (msq.scalar_value() < 1e-24)
        return Tensor::scalar(std::sqrt(msq.scalar_value()));
    return ::dssm::sqrt(msq);
}

AdamState AdamState::like(const std::vector<Tensor>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.emplace_back(p.numel(), 0.0);
        s.v.emplace_back(p.numel(), 0.0);
    }
    return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, std::size_t step_index,
               const TrainConfig& config) {
    if (step_index < 1) throw NumericError("adam_step: step index must be >= 1");
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                         " tensors, params " + std::to_string(params.size()));
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_index));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_index));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        auto& w = params[i].mutable_values();
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j]))
                throw NumericError("adam_step: non-finite gradient in parameter " +
                                   std::to_string(i));
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            w[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

double dataset_rmse(const PreparedDataset& ds, const ModelParams& params,
                    const ModelConfig& config, std::size_t begin, std::size_t end) {
    if (begin >= end) throw DataError("dataset_rmse: empty sample range");
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = begin; i < end; ++i) {
        ModelOutput out = forward(ds.input_window(i), ds.exo_window(i), params, config);
        auto pred = ds.denorm_block(out.forecast.values(), config.horizon);
        auto truth = ds.denorm_block(ds.target_window(i).values(), config.horizon);
        for (std::size_t j = 0; j < pred.size(); ++j) {
            double e = pred[j] - truth[j];
            sum_sq += e * e;
        }
        count += pred.size();
    }
    return std::sqrt(sum_sq / static_cast<double>(count));
}

TrainResult train(const PreparedDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
    model_config.validate();
    train_config.validate();
    if (model_config.d_e != ds.d_e || model_config.t_in != ds.window.t_in ||
        model_config.horizon != ds.window.horizon)
        throw ConfigError("train: model config " + model_config.describe() +
                          " does not match the dataset (d_e " + std::to_string(ds.d_e) +
                          ", t_in " + std::to_string(ds.window.t_in) + ", horizon " +
                          std::to_string(ds.window.horizon) + ")");
    if (ds.split.train_end == 0 || ds.split.val_end == ds.split.train_end)
        throw DataError("train: empty training or validation split");

    auto t0 = std::chrono::steady_clock::now();
    ModelParams params = ModelParams::init(model_config, train_config.seed);
    std::vector<Tensor> tensors = params.tensors();
    AdamState adam = AdamState::like(tensors);
    Rng rng(train_config.seed ^ 0x9e3779b97f4a7c15ull);

    TrainReport report;
    std::vector<std::vector<double>> best_snapshot;
    double best_val = 0.0;
    std::size_t bad_epochs = 0;
    std::size_t step_index = 0;

    std::vector<std::size_t> order(ds.split.train_end);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto snapshot = [&]() {
        best_snapshot.clear();
        for (const auto& t : tensors) best_snapshot.push_back(t.values());
    };
    auto finish = [&](bool diverged) {
        report.diverged = diverged;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ModelParams best = params;
        if (!best_snapshot.empty()) {
            std::vector<Tensor> best_tensors;
            auto layout = ModelParams::param_layout(model_config);
            for (std::size_t i = 0; i < layout.size(); ++i)
                best_tensors.push_back(
                    Tensor::from(layout[i].second, best_snapshot[i], true));
            best = ModelParams::from_tensors(model_config, best_tensors);
        }
        return TrainResult{best, report};
    };

    for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
        // seeded shuffle of the chronological sample order
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = rng.below(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_sq = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += train_config.batch_size) {
            std::size_t stop = std::min(order.size(), start + train_config.batch_size);
            params.zero_grad();
            std::vector<Tensor> preds, targets;
            long floor_events = 0;
            for (std::size_t k = start; k < stop; ++k) {
                std::size_t idx = order[k];
                ModelOutput out = forward(ds.input_window(idx), ds.exo_window(idx),
                                          params, model_config);
                floor_events += out.var_floor_events;
                preds.push_back(reshape(out.forecast, {out.forecast.numel()}));
                targets.push_back(
                    reshape(ds.target_window(idx), {ds.target_window(idx).numel()}));
            }
            Tensor loss = rmse_loss(concat(preds, 0), concat(targets, 0));
            double loss_value = loss.scalar_value();
            if (!std::isfinite(loss_value)) return finish(true);
            report.var_floor_events += floor_events;
            std::size_t batch_elems = (stop - start) * model_config.horizon * kCells;
            epoch_sq += loss_value * loss_value * static_cast<double>(batch_elems);
            epoch_count += batch_elems;

            loss.backward();
            adam_step(tensors, adam, ++step_index, train_config);
        }

        double val = dataset_rmse(ds, params.detached(model_config), model_config,
                                  ds.split.train_end, ds.split.val_end);
        report.epochs.push_back({epoch,
                                 std::sqrt(epoch_sq / static_cast<double>(epoch_count)),
                                 val});
        if (!std::isfinite(val)) return finish(true);

        if (report.best_epoch == 0 || val < best_val) {
            best_val = val;
            report.best_epoch = epoch;
            report.best_val_rmse = val;
            bad_epochs = 0;
            snapshot();
        } else if (++bad_epochs >= train_config.patience) {
            break;
        }
    }
    return finish(false);
}

SweepResult sweep(const PreparedDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& train_config, std::size_t jobs) {
    auto axis_or = [](auto grid_axis, auto base) {
        if (grid_axis.empty()) grid_axis.push_back(base);
        return grid_axis;
    };
    auto lrs = axis_or(train_config.sweep.lr, train_config.lr);
    auto batches = axis_or(train_config.sweep.batch_size, train_config.batch_size);
    auto dks = axis_or(train_config.sweep.d_k, model_config.d_k);
    auto das = axis_or(train_config.sweep.d_a, model_config.d_a);
    auto chans = axis_or(train_config.sweep.channels, model_config.channels);

    SweepResult result;
    std::vector<std::pair<ModelConfig, TrainConfig>> cells_cfg;
    for (double lr : lrs)
        for (std::size_t bs : batches)
            for (std::size_t dk : dks)
                for (std::size_t da : das)
                    for (std::size_t ch : chans) {
                        ModelConfig mc = model_config;
                        mc.d_k = dk;
                        mc.d_a = da;
                        mc.channels = ch;
                        TrainConfig tc = train_config;
                        tc.lr = lr;
                        tc.batch_size = bs;
                        tc.sweep = {};
                        cells_cfg.emplace_back(mc, tc);
                        SweepCell cell;
                        cell.lr = lr;
                        cell.batch_size = bs;
                        cell.d_k = dk;
                        cell.d_a = da;
                        cell.channels = ch;
                        result.cells.push_back(cell);
                    }

    std::vector<TrainResult> outcomes(cells_cfg.size());
    auto run_cell = [&](std::size_t i) {
        try {
            outcomes[i] = train(ds, cells_cfg[i].first, cells_cfg[i].second);
            result.cells[i].report = outcomes[i].report;
            result.cells[i].ok = !outcomes[i].report.diverged;
            if (outcomes[i].report.diverged) result.cells[i].error = "diverged";
        } catch (const std::exception& e) {
            result.cells[i].ok = false;
            result.cells[i].error = e.what();
        }
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < cells_cfg.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> workers;
        std::size_t n = cells_cfg.size();
        for (std::size_t w = 0; w < std::min(jobs, n); ++w)
            workers.emplace_back([&, w]() {
                for (std::size_t i = w; i < n; i += std::min(jobs, n)) run_cell(i);
            });
        for (auto& t : workers) t.join();
    }

    bool found = false;
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        if (!result.cells[i].ok) continue;
        if (!found || result.cells[i].report.best_val_rmse <
                          result.cells[result.best_index].report.best_val_rmse) {
            result.best_index = i;
            found = true;
        }
    }
    if (!found) throw DataError("sweep: every cell failed");
    result.best_config = cells_cfg[result.best_index].first;
    result.best_train_config = cells_cfg[result.best_index].second;
    result.best_params = outcomes[result.best_index].params;
    return result;
}

void write_report_json(const TrainReport& report, const std::string& path) {
    nlohmann::json j;
    j["best_epoch"] = report.best_epoch;
    j["best_val_rmse"] = report.best_val_rmse;
    j["wall_seconds"] = report.wall_seconds;
    j["var_floor_events"] = report.var_floor_events;
    j["diverged"] = report.diverged;
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_rmse", e.train_rmse},
                          {"val_rmse", e.val_rmse}});
    j["epochs"] = epochs;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_losses_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,train_rmse,val_rmse\n";
    char buf[128];
    for (const auto& e : report.epochs) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.epoch, e.train_rmse,
                      e.val_rmse);
        out << buf;
    }
}

} // namespace dssm
