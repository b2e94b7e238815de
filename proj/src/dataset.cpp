#include "dssm/dataset.hpp"

#include <bit>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace dssm {

static_assert(std::endian::native == std::endian::little,
              "dataset arrays are written as little-endian float64");

using nlohmann::json;

namespace {

void write_doubles(const std::string& path, const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!out) throw DataError("short write to " + path);
}

std::vector<double> read_doubles(const std::string& path, std::size_t expect) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot read " + path);
    auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expect * sizeof(double))
        throw DataError(path + ": expected " + std::to_string(expect * sizeof(double)) +
                        " bytes, found " + std::to_string(bytes));
    std::vector<double> v(expect);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("short read from " + path);
    return v;
}

} // namespace

Tensor PreparedDataset::input_window(std::size_t sample) const {
    std::size_t start = sample * window.stride;
    std::vector<double> v(traffic.begin() + start * kCells,
                          traffic.begin() + (start + window.t_in) * kCells);
    return Tensor::from({window.t_in, kCells}, std::move(v));
}

Tensor PreparedDataset::exo_window(std::size_t sample) const {
    std::size_t start = sample * window.stride;
    std::vector<double> v(exo.begin() + start * d_e,
                          exo.begin() + (start + window.t_in) * d_e);
    return Tensor::from({window.t_in, d_e}, std::move(v));
}

Tensor PreparedDataset::target_window(std::size_t sample) const {
    std::size_t start = sample * window.stride + window.t_in;
    std::vector<double> v(traffic.begin() + start * kCells,
                          traffic.begin() + (start + window.horizon) * kCells);
    return Tensor::from({window.horizon, kCells}, std::move(v));
}

std::vector<double> PreparedDataset::denorm_block(const std::vector<double>& block,
                                                  std::size_t rows) const {
    return denormalize(block, rows, kCells, traffic_stats);
}

PreparedDataset prepare_dataset(const std::vector<double>& raw_traffic,
                                std::size_t hours, std::int64_t start_hour,
                                const std::vector<double>& social_counts,
                                const std::vector<std::string>& social_names,
                                const std::set<int>& holidays,
                                const WindowSpec& window, std::size_t test_days,
                                std::size_t val_days,
                                std::size_t parse_rejected) {
    if (raw_traffic.size() != hours * kCells)
        throw ShapeError("prepare: traffic size " + std::to_string(raw_traffic.size()) +
                         " vs " + std::to_string(hours) + "x" + std::to_string(kCells));
    std::size_t social_cols = social_names.size();
    if (social_counts.size() != hours * social_cols)
        throw ShapeError("prepare: social size mismatch");

    PreparedDataset ds;
    ds.hours = hours;
    ds.start_hour = start_hour;
    ds.window = window;
    ds.test_days = test_days;
    ds.val_days = val_days;
    ds.parse_rejected = parse_rejected;
    ds.split = split_last_days(hours, window, test_days, val_days);

    // Statistics come from the hour range whose targets precede the
    // validation and test windows.
    std::size_t stat_rows = hours - (test_days + val_days) * 24;
    ds.traffic_stats = compute_minmax(raw_traffic, hours, kCells, stat_rows);
    ds.traffic = minmax_normalize(raw_traffic, hours, kCells, ds.traffic_stats);

    std::vector<double> metadata = encode_metadata(start_hour, hours, holidays);
    std::vector<double> social_norm;
    if (social_cols > 0) {
        ds.social_stats = compute_minmax(social_counts, hours, social_cols, stat_rows);
        social_norm = minmax_normalize(social_counts, hours, social_cols, ds.social_stats);
    }

    ds.d_e = kMetadataCols + social_cols;
    ds.exo.assign(hours * ds.d_e, 0.0);
    for (std::size_t h = 0; h < hours; ++h) {
        for (std::size_t c = 0; c < kMetadataCols; ++c)
            ds.exo[h * ds.d_e + c] = metadata[h * kMetadataCols + c];
        for (std::size_t c = 0; c < social_cols; ++c)
            ds.exo[h * ds.d_e + kMetadataCols + c] = social_norm[h * social_cols + c];
    }
    ds.feature_names = metadata_feature_names();
    ds.feature_names.insert(ds.feature_names.end(), social_names.begin(),
                            social_names.end());
    ds.social_cols = social_cols;
    return ds;
}

void save_dataset(const PreparedDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["hours"] = ds.hours;
    manifest["start_hour"] = ds.start_hour;
    manifest["cells"] = kCells;
    manifest["d_e"] = ds.d_e;
    manifest["social_cols"] = ds.social_cols;
    manifest["feature_names"] = ds.feature_names;
    manifest["window"] = {{"t_in", ds.window.t_in},
                          {"horizon", ds.window.horizon},
                          {"stride", ds.window.stride}};
    manifest["split"] = {{"train_end", ds.split.train_end},
                         {"val_end", ds.split.val_end},
                         {"test_end", ds.split.test_end}};
    manifest["test_days"] = ds.test_days;
    manifest["val_days"] = ds.val_days;
    manifest["parse_rejected"] = ds.parse_rejected;
    manifest["traffic_stats"] = {{"min", ds.traffic_stats.mins},
                                 {"max", ds.traffic_stats.maxs}};
    manifest["social_stats"] = {{"min", ds.social_stats.mins},
                                {"max", ds.social_stats.maxs}};

    std::ofstream out(dir + "/manifest.json");
    if (!out) throw DataError("cannot write " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
    write_doubles(dir + "/traffic.bin", ds.traffic);
    write_doubles(dir + "/exo.bin", ds.exo);
}

PreparedDataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw DataError("not a prepared dataset (no manifest.json): " + dir);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError(dir + "/manifest.json: " + e.what());
    }
    if (manifest.value("format_version", 0) != 1)
        throw DataError(dir + ": unsupported dataset format version");

    PreparedDataset ds;
    try {
        ds.hours = manifest.at("hours").get<std::size_t>();
        ds.start_hour = manifest.at("start_hour").get<std::int64_t>();
        if (manifest.at("cells").get<std::size_t>() != kCells)
            throw DataError(dir + ": dataset cell count != " + std::to_string(kCells));
        ds.d_e = manifest.at("d_e").get<std::size_t>();
        ds.social_cols = manifest.at("social_cols").get<std::size_t>();
        ds.feature_names = manifest.at("feature_names").get<std::vector<std::string>>();
        const auto& w = manifest.at("window");
        ds.window = {w.at("t_in").get<std::size_t>(), w.at("horizon").get<std::size_t>(),
                     w.at("stride").get<std::size_t>()};
        const auto& s = manifest.at("split");
        ds.split = {s.at("train_end").get<std::size_t>(),
                    s.at("val_end").get<std::size_t>(),
                    s.at("test_end").get<std::size_t>()};
        ds.test_days = manifest.at("test_days").get<std::size_t>();
        ds.val_days = manifest.at("val_days").get<std::size_t>();
        ds.parse_rejected = manifest.value("parse_rejected", std::size_t{0});
        ds.traffic_stats.mins =
            manifest.at("traffic_stats").at("min").get<std::vector<double>>();
        ds.traffic_stats.maxs =
            manifest.at("traffic_stats").at("max").get<std::vector<double>>();
        ds.social_stats.mins =
            manifest.at("social_stats").at("min").get<std::vector<double>>();
        ds.social_stats.maxs =
            manifest.at("social_stats").at("max").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(dir + "/manifest.json: " + e.what());
    }
    ds.traffic = read_doubles(dir + "/traffic.bin", ds.hours * kCells);
    ds.exo = read_doubles(dir + "/exo.bin", ds.hours * ds.d_e);
    return ds;
}

} // namespace dssm
