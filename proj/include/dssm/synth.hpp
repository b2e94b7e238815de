#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dssm/ingest.hpp"

namespace dssm {

// Synthetic hourly traffic over the 5x5 grid: per-cell base + daily sinusoid
// + weekly modulation + spatially correlated component + Gaussian noise, with
// optional event spikes that raise a tweet-count column and, after a short
// lead, traffic in one cell.
struct SynthProfile {
    double base = 1.0;
    double daily_amp = 0.4;
    double weekly_amp = 0.1;
    double noise_sigma = 0.05;
    double spatial_mix = 0.1;    // amplitude of the shared spatial component
    double spatial_scale = 1.5;  // distance decay of the spatial mixing
    double cell_jitter = 0.2;    // per-cell variation of base/amplitude/phase

    std::size_t spike_period_hours = 0; // 0 disables event spikes
    double spike_magnitude = 1.5;
    std::size_t spike_duration = 4;
    std::size_t tweet_lead = 1;  // tweets precede the traffic rise
    double tweet_burst = 20.0;
    std::size_t spike_cell = 12; // center of the 5x5 grid

    double tweet_base = 1.0;
};

struct SynthResult {
    std::vector<double> traffic; // hours x kCells, raw units
    std::vector<double> social;  // hours x 2 raw counts
    std::vector<std::string> social_names{"tweets", "tweet_users"};
    std::size_t hours = 0;
    std::int64_t start_hour = 0;
};

// Deterministic for a fixed (seed, days, profile). days must be >= 3.
SynthResult synth_generate(std::size_t days, std::uint64_t seed,
                           const SynthProfile& profile);

} // namespace dssm
