#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dssm/train.hpp"

namespace dssm {

struct HorizonStats {
    std::size_t step = 0; // 1-based
    double rmse = 0.0;
    double mae = 0.0;
    double corr = 0.0;
};

struct EvalResult {
    double rmse = 0.0; // raw units
    double mae = 0.0;
    double corr = 0.0;
    std::size_t n_samples = 0;
    std::size_t corr_skipped = 0; // zero-variance sample/step pairs
    std::vector<HorizonStats> per_horizon;
};

struct EvalOptions {
    // The empirical correlation denominator as printed in some write-ups
    // puts the product of squares under one root; the standard per-sample
    // Pearson form is the default.
    bool corr_as_printed = false;
};

double rmse_metric(const std::vector<double>& targets, const std::vector<double>& preds);
double mae_metric(const std::vector<double>& targets, const std::vector<double>& preds);

struct CorrResult {
    double value = 0.0;
    std::size_t skipped = 0;
};

// Per-sample Pearson correlation across the D cells, averaged over samples;
// samples with zero variance on either side are skipped and counted.
CorrResult corr_metric(const std::vector<double>& targets,
                       const std::vector<double>& preds, std::size_t n, std::size_t d,
                       bool as_printed = false);

// Every forecast row repeats the last observed hour.
Tensor persistence_baseline(const Tensor& input, std::size_t horizon);

// Predictions and targets in raw units plus the aggregated metrics.
struct EvalData {
    EvalResult result;
    std::vector<double> predictions; // n x h x kCells
    std::vector<double> targets;
    std::size_t n = 0;
    std::size_t horizon = 0;
    std::size_t first_sample = 0;
};

// Metric aggregation over denormalized blocks: overall rmse/mae over all
// entries, correlation per horizon step then averaged.
EvalResult evaluate_predictions(const std::vector<double>& predictions,
                                const std::vector<double>& targets, std::size_t n,
                                std::size_t horizon, const EvalOptions& options = {});

// Runs the model over the test split and aggregates denormalized metrics.
EvalData evaluate(const PreparedDataset& ds, const ModelParams& params,
                  const ModelConfig& config, const EvalOptions& options = {});

EvalData evaluate_persistence(const PreparedDataset& ds, const EvalOptions& options = {});

// Linear scale head plus a linear readout to the full horizon, trained with
// the same loss and optimizer as the full model.
struct ArOnlyModel {
    Tensor ar_w;      // D x D
    Tensor ar_b;      // D
    Tensor readout_w; // D x h*D
    Tensor readout_b; // h*D
};

Tensor ar_only_forward(const ArOnlyModel& model, const Tensor& input,
                       std::size_t horizon);

struct ArOnlyResult {
    ArOnlyModel model;
    TrainReport report;
};

ArOnlyResult ar_only_train(const PreparedDataset& ds, const TrainConfig& config);

EvalData evaluate_ar_only(const PreparedDataset& ds, const ArOnlyModel& model,
                          const EvalOptions& options = {});

void write_predictions_csv(const EvalData& data, const std::string& path);
void write_metrics_json(const EvalResult& result, const std::string& path);

} // namespace dssm
