#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dssm/dataset.hpp"
#include "dssm/ingest.hpp"
#include "dssm/rng.hpp"
#include "dssm/synth.hpp"

using namespace dssm;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "dssm_ingest_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

GridSpec default_grid() { return {100, 100, 5060}; }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

} // namespace

TEST_CASE("grid neighborhood is 25 row-major cells around the center") {
    auto ids = default_grid().cell_ids();
    REQUIRE(ids.size() == kCells);
    CHECK(ids[0] == 4858);  // two rows up, two columns left
    CHECK(ids[12] == 5060); // center
    CHECK(ids[24] == 5262);
    for (std::size_t i = 1; i < 5; ++i) CHECK(ids[i] == ids[i - 1] + 1);

    GridSpec edge{100, 100, 102};
    CHECK_THROWS_WITH_AS(edge.cell_ids(), doctest::Contains("5x5"), ConfigError);
}

TEST_CASE("parse_cdr handles the documented schema walk-through") {
    std::string path = temp_path("cdr_basic.tsv");
    write_file(path,
               "5060\t1383260400000\t\t\t\t\t\t12.5\n"
               "5060\t1383260400000\t39\t1.0\t\t2.0\t\t\n"
               "abc\t1383260400000\t\t\t\t\t\t1.0\n");
    CdrSchema schema;
    schema.aux_cols = {{"sms_in", 3}, {"sms_out", 4}, {"call_in", 5}, {"call_out", 6}};
    auto r = parse_cdr(path, schema);
    REQUIRE(r.records.size() == 2);
    CHECK(r.rejected == 1); // non-numeric square_id
    CHECK(r.records[0].square_id == 5060);
    CHECK(r.records[0].timestamp_ms == 1383260400000);
    CHECK(r.records[0].internet == 12.5);
    CHECK(r.records[1].internet == 0.0); // empty mandatory volume reads as no traffic
    CHECK(r.records[1].aux[0] == 1.0);
    CHECK(r.records[1].aux[1] == 0.0); // empty optional field
    CHECK(r.records[1].aux[2] == 2.0);
}

TEST_CASE("parse_cdr configuration and data errors") {
    CdrSchema bad;
    bad.internet_col = -1;
    CHECK_THROWS_AS(parse_cdr(temp_path("whatever.tsv"), bad), ConfigError);

    std::string empty = temp_path("cdr_empty.tsv");
    write_file(empty, "");
    CHECK_THROWS_AS(parse_cdr(empty, CdrSchema{}), DataError);
}

TEST_CASE("aggregate_hourly sums sub-hour records and zero-fills gaps") {
    GridSpec grid = default_grid();
    std::vector<CdrRecord> records;
    std::int64_t hour0 = 1383260400000 / 3600000 * 3600000;
    for (int i = 0; i < 6; ++i)
        records.push_back({5060, hour0 + i * 600000, 2.0, {}});
    // a record two hours later leaves a gap row of zeros in between
    records.push_back({5060, hour0 + 2 * 3600000, 5.0, {}});
    // outside the neighborhood: ignored
    records.push_back({9999, hour0, 100.0, {}});

    auto m = aggregate_hourly(records, grid);
    REQUIRE(m.hours == 3);
    std::size_t center = 12;
    CHECK(m.values[0 * kCells + center] == 12.0);
    CHECK(m.values[1 * kCells + center] == 0.0);
    CHECK(m.values[2 * kCells + center] == 5.0);
    double total = 0;
    for (double v : m.values) total += v;
    CHECK(total == 17.0);

    std::vector<CdrRecord> outside{{9999, hour0, 1.0, {}}};
    CHECK_THROWS_AS(aggregate_hourly(outside, grid), DataError);
}

TEST_CASE("minmax normalization maps, clips, and round-trips") {
    std::vector<double> col{2.0, 4.0, 6.0};
    auto stats = compute_minmax(col, 3, 1, 3);
    auto n = minmax_normalize(col, 3, 1, stats);
    CHECK(n[0] == 0.0);
    CHECK(n[1] == 0.5);
    CHECK(n[2] == 1.0);
    auto back = denormalize(n, 3, 1, stats);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(back[i] - col[i]) < 1e-12);

    std::vector<double> constant{5.0, 5.0, 5.0};
    auto cs = compute_minmax(constant, 3, 1, 3);
    auto cn = minmax_normalize(constant, 3, 1, cs);
    for (int i = 0; i < 3; ++i) CHECK(cn[i] == 0.0);
    auto cb = denormalize(cn, 3, 1, cs);
    for (int i = 0; i < 3; ++i) CHECK(cb[i] == 5.0); // constant column maps back to min

    // out-of-range rows clip to [0, 1.5]
    std::vector<double> wide{2.0, 4.0, 20.0, 0.0};
    auto ws = compute_minmax(wide, 4, 1, 2);
    auto wn = minmax_normalize(wide, 4, 1, ws);
    CHECK(wn[2] == 1.5);
    CHECK(wn[3] == 0.0);

    CHECK_THROWS_AS(denormalize(n, 3, 2, stats), ShapeError);
}

TEST_CASE("normalization round-trips on random non-constant columns") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t rows = 5 + rng.below(30);
        std::vector<double> m(rows);
        for (auto& v : m) v = rng.uniform(0.0, 100.0);
        auto stats = compute_minmax(m, rows, 1, rows);
        auto back = denormalize(minmax_normalize(m, rows, 1, stats), rows, 1, stats);
        for (std::size_t i = 0; i < rows; ++i) CHECK(std::abs(back[i] - m[i]) < 1e-12);
    }
}

TEST_CASE("metadata encoding: day-of-week, hour-of-day, holiday flag") {
    // epoch day 5 is Tuesday 1970-01-06
    std::int64_t tuesday_start = 5 * 24;
    auto cols = encode_metadata(tuesday_start, 48, {19700106});
    REQUIRE(cols.size() == 48 * kMetadataCols);
    const double* row0 = cols.data();
    CHECK(row0[1] == 1.0);     // Tuesday
    CHECK(row0[7 + 0] == 1.0); // 00:00
    CHECK(row0[31] == 1.0);    // holiday
    const double* row25 = cols.data() + 25 * kMetadataCols; // Wednesday 01:00
    CHECK(row25[2] == 1.0);
    CHECK(row25[7 + 1] == 1.0);
    CHECK(row25[31] == 0.0);
    for (std::size_t h = 0; h < 48; ++h) {
        const double* row = cols.data() + h * kMetadataCols;
        double dow = 0, hod = 0;
        for (int i = 0; i < 7; ++i) dow += row[i];
        for (int i = 7; i < 31; ++i) hod += row[i];
        CHECK(dow == 1.0);
        CHECK(hod == 1.0);
    }
}

TEST_CASE("social encoding counts tweets, users, and article types") {
    GridSpec grid = default_grid();
    std::int64_t start_hour = 1000;
    std::int64_t ms = start_hour * 3600000;
    std::vector<SocialEvent> events{
        {ms + 60000, 5060, "alice", "tweet"},
        {ms + 120000, 5060, "bob", "tweet"},
        {ms + 180000, 5061, "alice", "tweet"},
        {ms + 240000, 5060, "carol", "news"},
        {ms + 300000, 5060, "carol", "sport"},
        {ms + 360000, 5060, "carol", "gossip"}, // unknown type -> other
        {ms + 60000, 1, "dan", "tweet"},        // outside neighborhood
    };
    auto cols = encode_social(events, grid, start_hour, 2, {"news", "sport"});
    REQUIRE(cols.names.size() == 5);
    std::size_t w = cols.names.size();
    CHECK(cols.values[0 * w + 0] == 3.0); // tweets
    CHECK(cols.values[0 * w + 1] == 2.0); // distinct users
    CHECK(cols.values[0 * w + 2] == 1.0); // news
    CHECK(cols.values[0 * w + 3] == 1.0); // sport
    CHECK(cols.values[0 * w + 4] == 1.0); // other
    for (std::size_t c = 0; c < w; ++c) CHECK(cols.values[1 * w + c] == 0.0);

    auto none = encode_social({}, grid, start_hour, 2, {"news"});
    for (double v : none.values) CHECK(v == 0.0);
}

TEST_CASE("window count formula and boundaries") {
    CHECK(window_count(240, {48, 24, 1}) == 169);
    CHECK(window_count(72, {48, 24, 1}) == 1);
    CHECK_THROWS_WITH_AS(window_count(71, {48, 24, 1}), doctest::Contains("72"),
                         DataError);
}

TEST_CASE("window count matches brute-force enumeration on random shapes") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        WindowSpec w{1 + rng.below(72), 1 + rng.below(24), 1 + rng.below(5)};
        std::size_t hours = w.t_in + w.horizon + rng.below(500);
        std::size_t brute = 0;
        for (std::size_t s = 0; s + w.t_in + w.horizon <= hours; s += w.stride) ++brute;
        CHECK(window_count(hours, w) == brute);
    }
}

TEST_CASE("chronological split puts the last seven days in test") {
    // 16 days of hourly data, t_in 48, horizon 24
    std::size_t hours = 16 * 24;
    WindowSpec w{48, 24, 1};
    auto s = split_last_days(hours, w, 7, 2);
    CHECK(s.train_end == 97);
    CHECK(s.val_end == 145);
    CHECK(s.test_end == 313);

    auto target_end = [&](std::size_t i) { return i * w.stride + w.t_in + w.horizon - 1; };
    CHECK(target_end(s.train_end - 1) < target_end(s.train_end));
    CHECK(target_end(s.val_end - 1) < target_end(s.val_end));
    CHECK(target_end(s.val_end) >= hours - 168); // test targets in the final week
    CHECK(target_end(s.val_end - 1) < hours - 168);

    CHECK_THROWS_AS(split_last_days(hours, w, 7, 0), DataError); // empty validation
}

TEST_CASE("synthetic generator is deterministic per seed") {
    SynthProfile p;
    auto a = synth_generate(5, 42, p);
    auto b = synth_generate(5, 42, p);
    CHECK(a.traffic == b.traffic);
    CHECK(a.social == b.social);
    auto c = synth_generate(5, 43, p);
    CHECK(a.traffic != c.traffic);
}

TEST_CASE("noise-free profile is exactly 24-periodic") {
    SynthProfile p;
    p.noise_sigma = 0.0;
    p.weekly_amp = 0.0;
    p.spatial_mix = 0.0;
    p.spike_period_hours = 0;
    auto r = synth_generate(4, 7, p);
    for (std::size_t t = 24; t < r.hours; ++t)
        for (std::size_t c = 0; c < kCells; ++c)
            CHECK(r.traffic[t * kCells + c] ==
                  doctest::Approx(r.traffic[(t - 24) * kCells + c]).epsilon(1e-12));
}

TEST_CASE("spatial mixing correlates neighbors more than opposite corners") {
    SynthProfile p;
    p.daily_amp = 0.0;
    p.weekly_amp = 0.0;
    p.noise_sigma = 0.05;
    p.spatial_mix = 1.0;
    auto r = synth_generate(40, 11, p);

    auto series = [&](std::size_t cell) {
        std::vector<double> s(r.hours);
        for (std::size_t t = 0; t < r.hours; ++t) s[t] = r.traffic[t * kCells + cell];
        return s;
    };
    double adjacent = 0.0;
    int n_adj = 0;
    for (std::size_t row = 0; row < kGridSide; ++row)
        for (std::size_t col = 0; col + 1 < kGridSide; ++col) {
            adjacent += pearson(series(row * kGridSide + col),
                                series(row * kGridSide + col + 1));
            ++n_adj;
        }
    adjacent /= n_adj;
    double corners = (pearson(series(0), series(24)) + pearson(series(4), series(20))) / 2.0;
    CHECK(adjacent > corners);
}

TEST_CASE("prepared dataset: training rows normalized, split boundaries, round trip") {
    SynthProfile p;
    auto raw = synth_generate(16, 3, p);
    WindowSpec w{48, 24, 1};
    auto ds = prepare_dataset(raw.traffic, raw.hours, raw.start_hour, raw.social,
                              raw.social_names, {}, w, 7, 2);
    CHECK(ds.d_e == kMetadataCols + 2);
    CHECK(ds.split.train_end == 97);
    CHECK(ds.split.val_end == 145);
    CHECK(ds.sample_count() == 313);

    std::size_t stat_rows = ds.hours - 9 * 24;
    for (std::size_t r = 0; r < stat_rows; ++r)
        for (std::size_t c = 0; c < kCells; ++c) {
            double v = ds.traffic[r * kCells + c];
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

    // denormalization inverts the training-range scaling
    std::vector<double> row(ds.traffic.begin(), ds.traffic.begin() + kCells);
    auto back = ds.denorm_block(row, 1);
    for (std::size_t c = 0; c < kCells; ++c)
        CHECK(std::abs(back[c] - raw.traffic[c]) < 1e-12);

    // sample windows line up with the flat matrices
    Tensor input = ds.input_window(3);
    CHECK(input.shape() == std::vector<std::size_t>{48, kCells});
    CHECK(input.value(0) == ds.traffic[3 * kCells]);
    Tensor target = ds.target_window(3);
    CHECK(target.value(0) == ds.traffic[(3 + 48) * kCells]);
}

TEST_CASE("dataset directory save/load round trip") {
    SynthProfile p;
    auto raw = synth_generate(16, 5, p);
    WindowSpec w{24, 1, 1};
    auto ds = prepare_dataset(raw.traffic, raw.hours, raw.start_hour, raw.social,
                              raw.social_names, {20201231 + 1}, w, 7, 2);
    std::string dir = temp_path("roundtrip_ds");
    save_dataset(ds, dir);
    auto loaded = load_dataset(dir);
    CHECK(loaded.traffic == ds.traffic);
    CHECK(loaded.exo == ds.exo);
    CHECK(loaded.hours == ds.hours);
    CHECK(loaded.start_hour == ds.start_hour);
    CHECK(loaded.split.train_end == ds.split.train_end);
    CHECK(loaded.traffic_stats.mins == ds.traffic_stats.mins);
    CHECK(loaded.feature_names == ds.feature_names);

    // truncated array is detected
    std::ofstream trunc(dir + "/traffic.bin", std::ios::binary | std::ios::trunc);
    trunc.write("xx", 2);
    trunc.close();
    CHECK_THROWS_AS(load_dataset(dir), DataError);
}
