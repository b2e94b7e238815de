#include "dssm/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace dssm {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(delim, pos);
        if (next == std::string::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    return fields;
}

bool parse_i64(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_f64(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

} // namespace

void CdrSchema::validate(std::size_t) const {
    if (square_id_col < 0 || timestamp_col < 0 || internet_col < 0)
        throw ConfigError("cdr schema: square_id, timestamp, and internet columns "
                          "must all be mapped");
    for (const auto& [name, col] : aux_cols)
        if (col < 0) throw ConfigError("cdr schema: auxiliary column '" + name +
                                       "' has no index");
}

std::vector<std::int64_t> GridSpec::cell_ids() const {
    if (center_square_id < 1 ||
        center_square_id > static_cast<std::int64_t>(width * height))
        throw ConfigError("grid: center square_id " + std::to_string(center_square_id) +
                          " outside a " + std::to_string(width) + "x" +
                          std::to_string(height) + " grid");
    std::int64_t row = (center_square_id - 1) / static_cast<std::int64_t>(width);
    std::int64_t col = (center_square_id - 1) % static_cast<std::int64_t>(width);
    std::int64_t half = kGridSide / 2;
    if (row < half || row >= static_cast<std::int64_t>(height) - half ||
        col < half || col >= static_cast<std::int64_t>(width) - half)
        throw ConfigError("grid: the " + std::to_string(kGridSide) + "x" +
                          std::to_string(kGridSide) + " neighborhood of square_id " +
                          std::to_string(center_square_id) +
                          " does not fit inside the grid");
    std::vector<std::int64_t> ids;
    ids.reserve(kCells);
    for (std::int64_t dr = -half; dr <= half; ++dr)
        for (std::int64_t dc = -half; dc <= half; ++dc)
            ids.push_back((row + dr) * static_cast<std::int64_t>(width) + (col + dc) + 1);
    return ids;
}

ParseResult parse_cdr(const std::string& path, const CdrSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CDR file: " + path);

    ParseResult result;
    std::string line;
    bool any_line = false;
    int max_col = std::max({schema.square_id_col, schema.timestamp_col,
                            schema.internet_col});
    for (const auto& [name, col] : schema.aux_cols) max_col = std::max(max_col, col);

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        any_line = true;
        auto fields = split_line(line, schema.delimiter);

        auto field = [&](int col) -> const std::string& {
            static const std::string empty;
            return col < static_cast<int>(fields.size()) ? fields[col] : empty;
        };

        CdrRecord rec;
        if (!parse_i64(field(schema.square_id_col), rec.square_id) ||
            !parse_i64(field(schema.timestamp_col), rec.timestamp_ms) ||
            rec.timestamp_ms <= 0) {
            ++result.rejected;
            continue;
        }
        const std::string& internet = field(schema.internet_col);
        if (internet.empty()) {
            rec.internet = 0.0;
        } else if (!parse_f64(internet, rec.internet) || rec.internet < 0.0) {
            ++result.rejected;
            continue;
        }
        rec.aux.reserve(schema.aux_cols.size());
        for (const auto& [name, col] : schema.aux_cols) {
            double v = 0.0;
            if (!parse_f64(field(col), v) || v < 0.0) v = 0.0;
            rec.aux.push_back(v);
        }
        result.records.push_back(std::move(rec));
    }
    if (!any_line) throw DataError("empty CDR file: " + path);
    return result;
}

HourlyMatrix aggregate_hourly(const std::vector<CdrRecord>& records, const GridSpec& grid) {
    if (records.empty()) throw DataError("aggregate_hourly: no records");
    auto ids = grid.cell_ids();
    std::unordered_map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;

    std::int64_t min_hour = 0, max_hour = 0;
    bool any = false;
    for (const auto& r : records) {
        auto it = index.find(r.square_id);
        if (it == index.end()) continue;
        std::int64_t hour = r.timestamp_ms / 3600000;
        if (!any) {
            min_hour = max_hour = hour;
            any = true;
        } else {
            min_hour = std::min(min_hour, hour);
            max_hour = std::max(max_hour, hour);
        }
    }
    if (!any)
        throw DataError("aggregate_hourly: no record falls inside the 25-cell "
                        "neighborhood");

    HourlyMatrix m;
    m.start_hour = min_hour;
    m.hours = static_cast<std::size_t>(max_hour - min_hour + 1);
    m.values.assign(m.hours * kCells, 0.0);
    for (const auto& r : records) {
        auto it = index.find(r.square_id);
        if (it == index.end()) continue;
        std::size_t hour = static_cast<std::size_t>(r.timestamp_ms / 3600000 - min_hour);
        m.values[hour * kCells + it->second] += r.internet;
    }
    return m;
}

MinMaxStats compute_minmax(const std::vector<double>& m, std::size_t rows,
                           std::size_t cols, std::size_t stat_rows) {
    if (stat_rows == 0 || stat_rows > rows)
        throw DataError("compute_minmax: statistics range " + std::to_string(stat_rows) +
                        " of " + std::to_string(rows) + " rows");
    MinMaxStats s;
    s.mins.assign(cols, 0.0);
    s.maxs.assign(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
        double lo = m[c], hi = m[c];
        for (std::size_t r = 1; r < stat_rows; ++r) {
            lo = std::min(lo, m[r * cols + c]);
            hi = std::max(hi, m[r * cols + c]);
        }
        s.mins[c] = lo;
        s.maxs[c] = hi;
    }
    return s;
}

std::vector<double> minmax_normalize(const std::vector<double>& m, std::size_t rows,
                                     std::size_t cols, const MinMaxStats& stats) {
    if (stats.mins.size() != cols || stats.maxs.size() != cols)
        throw ShapeError("minmax_normalize: stats cover " +
                         std::to_string(stats.mins.size()) + " columns, matrix has " +
                         std::to_string(cols));
    std::vector<double> out(m.size());
    for (std::size_t c = 0; c < cols; ++c) {
        double range = stats.maxs[c] - stats.mins[c];
        for (std::size_t r = 0; r < rows; ++r) {
            double v = range == 0.0 ? 0.0 : (m[r * cols + c] - stats.mins[c]) / range;
            out[r * cols + c] = std::clamp(v, 0.0, 1.5);
        }
    }
    return out;
}

std::vector<double> denormalize(const std::vector<double>& m, std::size_t rows,
                                std::size_t cols, const MinMaxStats& stats) {
    if (stats.mins.size() != cols || stats.maxs.size() != cols)
        throw ShapeError("denormalize: stats cover " + std::to_string(stats.mins.size()) +
                         " columns, matrix has " + std::to_string(cols));
    if (m.size() != rows * cols)
        throw ShapeError("denormalize: matrix size " + std::to_string(m.size()) +
                         " vs " + std::to_string(rows) + "x" + std::to_string(cols));
    std::vector<double> out(m.size());
    for (std::size_t c = 0; c < cols; ++c) {
        double range = stats.maxs[c] - stats.mins[c];
        for (std::size_t r = 0; r < rows; ++r)
            out[r * cols + c] = m[r * cols + c] * range + stats.mins[c];
    }
    return out;
}

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

int civil_from_day(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return static_cast<int>((y + (m <= 2)) * 10000 + m * 100 + d);
}

int day_of_week(std::int64_t epoch_day) {
    // 1970-01-01 was a Thursday; Monday = 0.
    std::int64_t dow = (epoch_day + 3) % 7;
    return static_cast<int>(dow < 0 ? dow + 7 : dow);
}

std::vector<double> encode_metadata(std::int64_t start_hour, std::size_t hours,
                                    const std::set<int>& holidays) {
    std::vector<double> out(hours * kMetadataCols, 0.0);
    for (std::size_t h = 0; h < hours; ++h) {
        std::int64_t hour = start_hour + static_cast<std::int64_t>(h);
        std::int64_t day = hour >= 0 ? hour / 24 : (hour - 23) / 24;
        int hod = static_cast<int>(hour - day * 24);
        double* row = out.data() + h * kMetadataCols;
        row[day_of_week(day)] = 1.0;
        row[7 + hod] = 1.0;
        if (holidays.count(civil_from_day(day))) row[31] = 1.0;
    }
    return out;
}

std::vector<std::string> metadata_feature_names() {
    std::vector<std::string> names;
    for (int i = 0; i < 7; ++i) names.push_back("dow_" + std::to_string(i));
    for (int i = 0; i < 24; ++i) names.push_back("hod_" + std::to_string(i));
    names.push_back("holiday");
    return names;
}

SocialColumns encode_social(const std::vector<SocialEvent>& events, const GridSpec& grid,
                            std::int64_t start_hour, std::size_t hours,
                            const std::vector<std::string>& article_types) {
    auto ids = grid.cell_ids();
    std::unordered_set<std::int64_t> cells(ids.begin(), ids.end());
    std::map<std::string, std::size_t> type_col;
    for (std::size_t i = 0; i < article_types.size(); ++i)
        type_col[article_types[i]] = 2 + i;
    std::size_t other_col = 2 + article_types.size();
    std::size_t cols = other_col + 1;

    SocialColumns out;
    out.values.assign(hours * cols, 0.0);
    out.names = {"tweets", "tweet_users"};
    for (const auto& t : article_types) out.names.push_back("articles_" + t);
    out.names.push_back("articles_other");

    std::vector<std::unordered_set<std::string>> users(hours);
    for (const auto& ev : events) {
        if (!cells.count(ev.square_id)) continue;
        std::int64_t hour = ev.timestamp_ms / 3600000 - start_hour;
        if (hour < 0 || hour >= static_cast<std::int64_t>(hours)) continue;
        auto h = static_cast<std::size_t>(hour);
        if (ev.kind == "tweet") {
            out.values[h * cols + 0] += 1.0;
            users[h].insert(ev.user_id);
        } else {
            auto it = type_col.find(ev.kind);
            out.values[h * cols + (it != type_col.end() ? it->second : other_col)] += 1.0;
        }
    }
    for (std::size_t h = 0; h < hours; ++h)
        out.values[h * cols + 1] = static_cast<double>(users[h].size());
    return out;
}

std::vector<SocialEvent> read_social_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open social events file: " + path);
    std::vector<SocialEvent> events;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_line(line, ',');
        if (fields.size() < 4)
            throw DataError("social events: expected 4 comma-separated columns, got '" +
                            line + "'");
        SocialEvent ev;
        if (!parse_i64(fields[0], ev.timestamp_ms) || !parse_i64(fields[1], ev.square_id))
            throw DataError("social events: bad timestamp/square_id in '" + line + "'");
        ev.user_id = fields[2];
        ev.kind = fields[3];
        events.push_back(std::move(ev));
    }
    return events;
}

std::set<int> read_holiday_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open holiday file: " + path);
    std::set<int> days;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        int y = 0, m = 0, d = 0;
        if (std::sscanf(line.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
            throw DataError("holiday file: expected ISO date, got '" + line + "'");
        days.insert(y * 10000 + m * 100 + d);
    }
    return days;
}

std::size_t window_count(std::size_t hours, const WindowSpec& w) {
    std::size_t need = w.t_in + w.horizon;
    if (hours < need)
        throw DataError("windowing: series of " + std::to_string(hours) +
                        " hours is shorter than the required minimum " +
                        std::to_string(need) + " (t_in + horizon)");
    if (w.stride == 0) throw ConfigError("windowing: stride must be >= 1");
    return (hours - need) / w.stride + 1;
}

SplitRanges split_last_days(std::size_t hours, const WindowSpec& w,
                            std::size_t test_days, std::size_t val_days) {
    std::size_t count = window_count(hours, w);
    std::size_t test_hours = test_days * 24;
    std::size_t val_hours = val_days * 24;
    if (test_hours + val_hours >= hours)
        throw DataError("split: " + std::to_string(test_days) + " test days plus " +
                        std::to_string(val_days) + " validation days exceed the " +
                        std::to_string(hours) + "-hour series");

    SplitRanges s;
    s.test_end = count;
    std::size_t val_boundary = hours - test_hours;             // targets >= here are test
    std::size_t train_boundary = val_boundary - val_hours;     // targets >= here are val
    s.train_end = count;
    s.val_end = count;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t target_end = i * w.stride + w.t_in + w.horizon - 1;
        if (target_end >= train_boundary && s.train_end == count) s.train_end = i;
        if (target_end >= val_boundary && s.val_end == count) s.val_end = i;
    }
    if (s.train_end == 0) throw DataError("split: empty training split");
    if (s.val_end == s.train_end) throw DataError("split: empty validation split");
    if (s.test_end == s.val_end) throw DataError("split: empty test split");
    return s;
}

} // namespace dssm
