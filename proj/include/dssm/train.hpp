#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dssm/dataset.hpp"
#include "dssm/model.hpp"

namespace dssm {

// Grid of hyperparameter candidates; empty axes fall back to the base value.
struct SweepGrid {
    std::vector<double> lr;
    std::vector<std::size_t> batch_size;
    std::vector<std::size_t> d_k;
    std::vector<std::size_t> d_a;
    std::vector<std::size_t> channels;

    bool empty() const {
        return lr.empty() && batch_size.empty() && d_k.empty() && d_a.empty() &&
               channels.empty();
    }
};

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 1;
    SweepGrid sweep;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;      // 1-based
    double train_rmse = 0.0;    // normalized scale (the optimized loss)
    double val_rmse = 0.0;      // raw units (the selection metric)
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    double best_val_rmse = 0.0;
    double wall_seconds = 0.0;
    long var_floor_events = 0;
    bool diverged = false;
};

// sqrt(mean(squared error)) over all entries; when the mean square falls
// below 1e-24 the result is detached so the gradient is exactly zero.
Tensor rmse_loss(const Tensor& pred, const Tensor& target);

// Adam first/second moment buffers, one pair per parameter tensor.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState like(const std::vector<Tensor>& params);
};

// One bias-corrected Adam update, reading each parameter's accumulated
// gradient. step_index is 1-based. Non-finite gradients abort the step.
void adam_step(std::vector<Tensor>& params, AdamState& state, std::size_t step_index,
               const TrainConfig& config);

struct TrainResult {
    ModelParams params; // best-validation snapshot
    TrainReport report;
};

// Mini-batch RMSE training with Adam, per-epoch validation on denormalized
// RMSE, best-checkpoint selection, and early stopping.
TrainResult train(const PreparedDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& train_config);

// Denormalized forecast RMSE of fixed parameters over a sample index range.
double dataset_rmse(const PreparedDataset& ds, const ModelParams& params,
                    const ModelConfig& config, std::size_t begin, std::size_t end);

struct SweepCell {
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::size_t d_k = 0;
    std::size_t d_a = 0;
    std::size_t channels = 0;
    TrainReport report;
    bool ok = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::size_t best_index = 0;
    ModelConfig best_config;
    TrainConfig best_train_config;
    ModelParams best_params;
};

// Exhaustive Cartesian product over the grid, every cell trained with the
// same seed; selection by validation RMSE. A failed cell is recorded, not
// fatal. jobs > 1 trains cells on that many threads.
SweepResult sweep(const PreparedDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& train_config, std::size_t jobs = 1);

void write_report_json(const TrainReport& report, const std::string& path);
void write_losses_csv(const TrainReport& report, const std::string& path);

} // namespace dssm
