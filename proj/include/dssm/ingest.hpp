#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dssm/encoder.hpp" // kCells, kGridSide
#include "dssm/errors.hpp"

namespace dssm {

// One parsed call-detail row, aggregated later into hourly traffic.
struct CdrRecord {
    std::int64_t square_id = 0;
    std::int64_t timestamp_ms = 0;
    double internet = 0.0;
    std::vector<double> aux; // optional counters in schema order
};

// Column mapping for CDR files. Cell ids are 1-based row-major:
// id = row * width + col + 1.
struct CdrSchema {
    char delimiter = '\t';
    int square_id_col = 0;
    int timestamp_col = 1;
    int internet_col = 7;
    std::vector<std::pair<std::string, int>> aux_cols;

    void validate(std::size_t = 0) const;
};

struct GridSpec {
    std::size_t width = 100;
    std::size_t height = 100;
    std::int64_t center_square_id = 0;

    // Row-major list of the 25 neighborhood cell ids; throws ConfigError if
    // the 5x5 block around the center falls outside the grid.
    std::vector<std::int64_t> cell_ids() const;
};

struct ParseResult {
    std::vector<CdrRecord> records;
    std::size_t rejected = 0;
};

ParseResult parse_cdr(const std::string& path, const CdrSchema& schema);

// Hour-by-cell traffic sums over the contiguous hour range covered by the
// neighborhood's records. Hours without records are zero.
struct HourlyMatrix {
    std::vector<double> values; // hours x kCells row-major
    std::size_t hours = 0;
    std::int64_t start_hour = 0; // epoch hours (UTC)
};

HourlyMatrix aggregate_hourly(const std::vector<CdrRecord>& records, const GridSpec& grid);

// Per-column min/max over the training rows.
struct MinMaxStats {
    std::vector<double> mins;
    std::vector<double> maxs;
};

MinMaxStats compute_minmax(const std::vector<double>& m, std::size_t rows,
                           std::size_t cols, std::size_t stat_rows);

// (x - min)/(max - min) per column; a constant column maps to 0. Values are
// clipped to [0, 1.5]: training rows land in [0, 1] by construction, rows
// outside the statistics range may exceed it.
std::vector<double> minmax_normalize(const std::vector<double>& m, std::size_t rows,
                                     std::size_t cols, const MinMaxStats& stats);

std::vector<double> denormalize(const std::vector<double>& m, std::size_t rows,
                                std::size_t cols, const MinMaxStats& stats);

// Calendar helpers (UTC). Civil dates are encoded as yyyymmdd.
std::int64_t days_from_civil(int y, int m, int d);
int civil_from_day(std::int64_t epoch_day); // returns yyyymmdd
int day_of_week(std::int64_t epoch_day);    // Monday = 0

inline constexpr std::size_t kMetadataCols = 32; // 7 dow + 24 hod + holiday

// Per hour: 7-way day-of-week one-hot, 24-way hour-of-day one-hot, and a
// holiday flag. Holidays are yyyymmdd dates.
std::vector<double> encode_metadata(std::int64_t start_hour, std::size_t hours,
                                    const std::set<int>& holidays);
std::vector<std::string> metadata_feature_names();

struct SocialEvent {
    std::int64_t timestamp_ms = 0;
    std::int64_t square_id = 0;
    std::string user_id;
    std::string kind; // "tweet" or an article type
};

// Per hour over the neighborhood: tweet count, distinct tweet users, and one
// article count per configured type plus an "other" bucket. Raw counts; the
// caller normalizes them with the traffic rule.
struct SocialColumns {
    std::vector<double> values; // hours x cols
    std::vector<std::string> names;
};

SocialColumns encode_social(const std::vector<SocialEvent>& events, const GridSpec& grid,
                            std::int64_t start_hour, std::size_t hours,
                            const std::vector<std::string>& article_types);

std::vector<SocialEvent> read_social_csv(const std::string& path);
std::set<int> read_holiday_file(const std::string& path);

struct WindowSpec {
    std::size_t t_in = 48;
    std::size_t horizon = 1;
    std::size_t stride = 1;
};

// Number of sliding windows; throws DataError when hours < t_in + horizon.
std::size_t window_count(std::size_t hours, const WindowSpec& w);

// Chronological sample index ranges: train [0, train_end), validation
// [train_end, val_end), test [val_end, test_end).
struct SplitRanges {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t test_end = 0;
};

// Splits windows by target end hour: test targets end within the final
// test_days*24 hours, validation within the val_days*24 hours before that.
SplitRanges split_last_days(std::size_t hours, const WindowSpec& w,
                            std::size_t test_days, std::size_t val_days);

} // namespace dssm
