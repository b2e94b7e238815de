#include "dssm/synth.hpp"

#include <cmath>

#include "dssm/rng.hpp"

namespace dssm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

SynthResult synth_generate(std::size_t days, std::uint64_t seed,
                           const SynthProfile& profile) {
    if (days < 3) throw DataError("synth: need at least 3 days, got " +
                                  std::to_string(days));
    Rng rng(seed);
    SynthResult out;
    out.hours = days * 24;
    out.start_hour = days_from_civil(2020, 12, 28) * 24; // a Monday 00:00 UTC
    out.traffic.assign(out.hours * kCells, 0.0);
    out.social.assign(out.hours * 2, 0.0);

    // Per-cell character: slightly different scale and phase per cell.
    std::vector<double> cell_base(kCells), cell_amp(kCells), cell_phase(kCells);
    for (std::size_t c = 0; c < kCells; ++c) {
        cell_base[c] = profile.base * (1.0 + profile.cell_jitter * (rng.uniform() - 0.5));
        cell_amp[c] = profile.daily_amp * (1.0 + profile.cell_jitter * (rng.uniform() - 0.5));
        cell_phase[c] = profile.cell_jitter * 4.0 * (rng.uniform() - 0.5);
    }

    // Distance-decaying mixing weights of the shared spatial field, rows
    // normalized to unit variance of the mixed component.
    std::vector<double> mix(kCells * kCells);
    for (std::size_t a = 0; a < kCells; ++a) {
        double norm = 0.0;
        for (std::size_t b = 0; b < kCells; ++b) {
            double dr = static_cast<double>(a / kGridSide) - static_cast<double>(b / kGridSide);
            double dc = static_cast<double>(a % kGridSide) - static_cast<double>(b % kGridSide);
            double w = std::exp(-(dr * dr + dc * dc) /
                                (2.0 * profile.spatial_scale * profile.spatial_scale));
            mix[a * kCells + b] = w;
            norm += w * w;
        }
        norm = std::sqrt(norm);
        for (std::size_t b = 0; b < kCells; ++b) mix[a * kCells + b] /= norm;
    }

    std::vector<double> field(kCells);
    for (std::size_t t = 0; t < out.hours; ++t) {
        for (std::size_t c = 0; c < kCells; ++c) field[c] = rng.normal();
        double weekly = profile.weekly_amp * std::sin(kTwoPi * static_cast<double>(t) / 168.0);
        for (std::size_t c = 0; c < kCells; ++c) {
            double mixed = 0.0;
            for (std::size_t b = 0; b < kCells; ++b) mixed += mix[c * kCells + b] * field[b];
            double v = cell_base[c] +
                       cell_amp[c] * std::sin(kTwoPi * (static_cast<double>(t) + cell_phase[c]) / 24.0) +
                       weekly + profile.spatial_mix * mixed +
                       profile.noise_sigma * rng.normal();
            out.traffic[t * kCells + c] = std::max(v, 0.0);
        }
        // Ambient tweet activity follows the daily cycle.
        double rate = profile.tweet_base *
                      (0.6 + 0.4 * std::sin(kTwoPi * static_cast<double>(t) / 24.0));
        double tweets = std::floor(std::max(rate, 0.0) + 2.0 * rng.uniform());
        out.social[t * 2 + 0] = tweets;
        out.social[t * 2 + 1] = tweets > 0.0 ? std::ceil(tweets * (0.4 + 0.4 * rng.uniform()))
                                             : 0.0;
    }

    if (profile.spike_period_hours > 0) {
        for (std::size_t k = 1;; ++k) {
            std::size_t base_t = k * profile.spike_period_hours;
            std::int64_t jitter = static_cast<std::int64_t>(rng.below(9)) - 4;
            std::int64_t onset = static_cast<std::int64_t>(base_t) + jitter;
            if (onset >= static_cast<std::int64_t>(out.hours)) break;
            for (std::size_t j = 0; j < profile.spike_duration; ++j) {
                double falloff = 1.0 - static_cast<double>(j) /
                                           static_cast<double>(profile.spike_duration);
                std::int64_t tt = onset + static_cast<std::int64_t>(j);
                if (tt >= 0 && tt < static_cast<std::int64_t>(out.hours))
                    out.traffic[tt * kCells + profile.spike_cell] +=
                        profile.spike_magnitude * falloff;
                std::int64_t tw = onset - static_cast<std::int64_t>(profile.tweet_lead) +
                                  static_cast<std::int64_t>(j);
                if (tw >= 0 && tw < static_cast<std::int64_t>(out.hours)) {
                    out.social[tw * 2 + 0] += profile.tweet_burst * falloff;
                    out.social[tw * 2 + 1] += 0.5 * profile.tweet_burst * falloff;
                }
            }
        }
    }
    return out;
}

} // namespace dssm
