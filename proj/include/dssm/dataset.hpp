#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dssm/ingest.hpp"
#include "dssm/tensor.hpp"

namespace dssm {

// A fully prepared dataset: normalized traffic and exogenous matrices plus
// everything needed to window, split, and denormalize. Persisted as a
// directory with a JSON manifest and flat little-endian float64 arrays.
struct PreparedDataset {
    std::size_t hours = 0;
    std::int64_t start_hour = 0;
    std::size_t d_e = 0;
    std::vector<double> traffic; // hours x kCells, normalized
    std::vector<double> exo;     // hours x d_e
    MinMaxStats traffic_stats;   // per cell, raw units
    MinMaxStats social_stats;    // per social column
    std::vector<std::string> feature_names;
    std::size_t social_cols = 0; // trailing columns of exo that were normalized
    WindowSpec window;
    SplitRanges split;
    std::size_t test_days = 7;
    std::size_t val_days = 2;
    std::size_t parse_rejected = 0;

    std::size_t sample_count() const { return split.test_end; }

    // Window views materialized as plain tensors.
    Tensor input_window(std::size_t sample) const;   // t_in x kCells
    Tensor exo_window(std::size_t sample) const;     // t_in x d_e
    Tensor target_window(std::size_t sample) const;  // horizon x kCells, normalized

    // Raw-unit copy of a normalized horizon x kCells block.
    std::vector<double> denorm_block(const std::vector<double>& block,
                                     std::size_t rows) const;
};

// Shared preparation pipeline: normalize traffic per-cell on the training
// hour range, encode calendar metadata, normalize social counts with the
// same rule, window, and split chronologically.
PreparedDataset prepare_dataset(const std::vector<double>& raw_traffic,
                                std::size_t hours, std::int64_t start_hour,
                                const std::vector<double>& social_counts,
                                const std::vector<std::string>& social_names,
                                const std::set<int>& holidays,
                                const WindowSpec& window, std::size_t test_days,
                                std::size_t val_days,
                                std::size_t parse_rejected = 0);

void save_dataset(const PreparedDataset& ds, const std::string& dir);
PreparedDataset load_dataset(const std::string& dir);

} // namespace dssm
