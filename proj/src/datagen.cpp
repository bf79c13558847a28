// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/datagen.hpp"

#include <algorithm>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "soupkit/checkpoint_io.hpp"
#include "soupkit/error.hpp"
#include "soupkit/rng.hpp"

namespace soupkit {

using nlohmann::json;

std::string_view to_string(ShiftKind kind) {
    switch (kind) {
        case ShiftKind::MeanShift: return "mean-shift";
        case ShiftKind::NoiseInflation: return "noise-inflation";
        case ShiftKind::Rotation: return "rotation";
    }
    return "?";
}

ShiftKind parse_shift_kind(std::string_view text) {
    if (text == "mean-shift") return ShiftKind::MeanShift;
    if (text == "noise-inflation") return ShiftKind::NoiseInflation;
    if (text == "rotation") return ShiftKind::Rotation;
    throw Error(ErrorKind::Config, "unknown shift kind '" + std::string(text) + "'");
}

std::string_view to_string(SplitName split) {
    switch (split) {
        case SplitName::Train: return "train";
        case SplitName::Val: return "val";
        case SplitName::Test: return "test";
        case SplitName::Shift: return "shift";
    }
    return "?";
}

SplitName parse_split_name(std::string_view text) {
    if (text == "train") return SplitName::Train;
    if (text == "val") return SplitName::Val;
    if (text == "test") return SplitName::Test;
    if (text == "shift") return SplitName::Shift;
    throw Error(ErrorKind::InvalidArgument, "unknown split '" + std::string(text) + "'");
}

void DatasetConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "dataset config: " + m); };
    if (input_dim < 1) fail("input_dim must be positive");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (clusters_per_class < 1) fail("clusters_per_class must be positive");
    for (int n : {train_samples, val_samples, test_samples, shift_samples}) {
        if (n <= 0) fail("every split needs at least one sample");
        if (n < num_classes) fail("every split needs at least num_classes samples so each class appears");
    }
    if (!std::isfinite(class_center_scale) || class_center_scale < 0.0) fail("class_center_scale must be >= 0");
    if (!std::isfinite(within_class_std) || within_class_std <= 0.0) fail("within_class_std must be > 0");
    if (!std::isfinite(shift_magnitude) || shift_magnitude < 0.0) fail("shift_magnitude must be >= 0");
}

json to_json(const DatasetConfig& cfg) {
    return json{{"input_dim", cfg.input_dim},
                {"num_classes", cfg.num_classes},
                {"clusters_per_class", cfg.clusters_per_class},
                {"train_samples", cfg.train_samples},
                {"val_samples", cfg.val_samples},
                {"test_samples", cfg.test_samples},
                {"shift_samples", cfg.shift_samples},
                {"class_center_scale", cfg.class_center_scale},
                {"within_class_std", cfg.within_class_std},
                {"shift_kind", std::string(to_string(cfg.shift_kind))},
                {"shift_magnitude", cfg.shift_magnitude},
                {"seed", cfg.seed}};
}

DatasetConfig dataset_config_from_json(const json& j) {
    DatasetConfig cfg;
    detail::StrictObject obj(j, "dataset");
    obj.read("input_dim", cfg.input_dim);
    obj.read("num_classes", cfg.num_classes);
    obj.read("clusters_per_class", cfg.clusters_per_class);
    obj.read("train_samples", cfg.train_samples);
    obj.read("val_samples", cfg.val_samples);
    obj.read("test_samples", cfg.test_samples);
    obj.read("shift_samples", cfg.shift_samples);
    obj.read("class_center_scale", cfg.class_center_scale);
    obj.read("within_class_std", cfg.within_class_std);
    std::string kind(to_string(cfg.shift_kind));
    obj.read("shift_kind", kind);
    cfg.shift_kind = parse_shift_kind(kind);
    obj.read("shift_magnitude", cfg.shift_magnitude);
    obj.read("seed", cfg.seed);
    obj.finish();
    return cfg;
}

const Split& Dataset::split(SplitName name) const {
    switch (name) {
        case SplitName::Train: return train;
        case SplitName::Val: return val;
        case SplitName::Test: return test;
        case SplitName::Shift: return shift;
    }
    throw Error(ErrorKind::InvalidArgument, "bad split");
}

namespace {

std::vector<double> unit_normal_vector(Rng& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double n2 = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
}

double dotv(const std::vector<double>& a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Split draw_split(Rng& rng, const Matrix<double>& centers, double stddev, int n, int num_classes, int clusters,
                 std::uint64_t& next_id) {
    const std::size_t dim = centers.cols();
    Split s;
    s.features = FeatureMatrix(static_cast<std::size_t>(n), dim);
    s.labels.resize(static_cast<std::size_t>(n));
    s.ids.resize(static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        const auto C = static_cast<std::size_t>(num_classes);
        const auto K = static_cast<std::size_t>(clusters);
        const std::size_t label = j % C;
        const std::size_t center = label * K + (j / C) % K;
        s.labels[j] = static_cast<int>(label);
        s.ids[j] = next_id++;
        for (std::size_t d = 0; d < dim; ++d) {
            s.features(j, d) = static_cast<float>(centers(center, d) + stddev * rng.normal());
        }
    }
    return s;
}

}  // namespace

Dataset generate(const DatasetConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto C = static_cast<std::size_t>(cfg.num_classes) * static_cast<std::size_t>(cfg.clusters_per_class);
    const auto D = static_cast<std::size_t>(cfg.input_dim);

    Dataset ds;
    ds.input_dim = cfg.input_dim;
    ds.num_classes = cfg.num_classes;
    ds.clusters_per_class = cfg.clusters_per_class;
    ds.class_centers = Matrix<double>(C, D);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t d = 0; d < D; ++d) ds.class_centers(c, d) = cfg.class_center_scale * rng.normal();
    }

    const auto shift_dir = unit_normal_vector(rng, cfg.input_dim);
    auto p = unit_normal_vector(rng, cfg.input_dim);
    auto q = unit_normal_vector(rng, cfg.input_dim);
    if (D >= 2) {
        const double pq = dotv(p, q);
        double n2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            q[d] -= pq * p[d];
            n2 += q[d] * q[d];
        }
        const double n = std::sqrt(n2);
        for (auto& x : q) x /= n;
    }

    ds.shift_centers = ds.class_centers;
    ds.shift_std = cfg.within_class_std;
    const double m = cfg.shift_magnitude;
    switch (cfg.shift_kind) {
        case ShiftKind::MeanShift:
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t d = 0; d < D; ++d) ds.shift_centers(c, d) += m * shift_dir[d];
            }
            break;
        case ShiftKind::NoiseInflation:
            ds.shift_std = cfg.within_class_std * (1.0 + m);
            break;
        case ShiftKind::Rotation:
            // Rotate every center by angle m (radians) within the plane span(p, q).
            if (D >= 2) {
                for (std::size_t c = 0; c < C; ++c) {
                    auto row = ds.class_centers.row(c);
                    const double a = dotv(p, row);
                    const double b = dotv(q, row);
                    const double ca = std::cos(m), sa = std::sin(m);
                    for (std::size_t d = 0; d < D; ++d) {
                        ds.shift_centers(c, d) += (ca * a - sa * b - a) * p[d] + (sa * a + ca * b - b) * q[d];
                    }
                }
            }
            break;
    }

    std::uint64_t next_id = 0;
    auto draw = [&](const Matrix<double>& centers, double stddev, int n) {
        return draw_split(rng, centers, stddev, n, cfg.num_classes, cfg.clusters_per_class, next_id);
    };
    ds.train = draw(ds.class_centers, cfg.within_class_std, cfg.train_samples);
    ds.val = draw(ds.class_centers, cfg.within_class_std, cfg.val_samples);
    ds.test = draw(ds.class_centers, cfg.within_class_std, cfg.test_samples);
    ds.shift = draw(ds.shift_centers, ds.shift_std, cfg.shift_samples);
    return ds;
}

void write_split_csv(const Split& split, const std::filesystem::path& path) {
    std::string out = "label";
    for (std::size_t d = 0; d < split.features.cols(); ++d) out += ",f" + std::to_string(d);
    out += '\n';
    char buf[32];
    for (std::size_t i = 0; i < split.size(); ++i) {
        out += std::to_string(split.labels[i]);
        for (float v : split.features.row(i)) {
            std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
            out += buf;
        }
        out += '\n';
    }
    write_text_atomic(path, out);
}

Split read_split_csv(const std::filesystem::path& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingInput, "cannot open '" + path.string() + "'");
    const std::string where = path.string();
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::MalformedFile, where + ": empty file");
    std::size_t dim = 0;
    {
        std::stringstream hs(line);
        std::string cell;
        std::getline(hs, cell, ',');
        if (cell != "label") throw Error(ErrorKind::MalformedFile, where + ": header must start with 'label'");
        while (std::getline(hs, cell, ',')) {
            if (cell != "f" + std::to_string(dim)) {
                throw Error(ErrorKind::MalformedFile, where + ": unexpected header column '" + cell + "'");
            }
            ++dim;
        }
    }
    std::vector<float> values;
    Split s;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto bad = [&](const std::string& what) {
            return Error(ErrorKind::MalformedFile, where + ":" + std::to_string(lineno) + ": " + what);
        };
        const char* p = line.data();
        const char* end = line.data() + line.size();
        int label = 0;
        auto [lp, lec] = std::from_chars(p, end, label);
        if (lec != std::errc()) throw bad("bad label");
        if (label < 0 || label >= num_classes) throw bad("label " + std::to_string(label) + " out of range");
        p = lp;
        for (std::size_t d = 0; d < dim; ++d) {
            if (p == end || *p != ',') throw bad("expected " + std::to_string(dim) + " features");
            ++p;
            char* q = nullptr;
            const std::string cell(p, static_cast<std::size_t>(std::find(p, end, ',') - p));
            const double v = std::strtod(cell.c_str(), &q);
            if (cell.empty() || q != cell.c_str() + cell.size() || !std::isfinite(v)) throw bad("bad feature value");
            values.push_back(static_cast<float>(v));
            p += cell.size();
        }
        if (p != end) throw bad("too many columns");
        s.labels.push_back(label);
        s.ids.push_back(s.ids.size());
    }
    s.features = FeatureMatrix(s.labels.size(), dim);
    s.features.data() = std::move(values);
    return s;
}

void save_csv(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text_atomic(dir / "dataset.json",
                      json{{"input_dim", ds.input_dim}, {"num_classes", ds.num_classes}}.dump(2) + "\n");
    for (auto name : {SplitName::Train, SplitName::Val, SplitName::Test, SplitName::Shift}) {
        write_split_csv(ds.split(name), dir / (std::string(to_string(name)) + ".csv"));
    }
}

Dataset load_csv(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text_file(dir / "dataset.json"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, "dataset.json: " + std::string(e.what()));
    }
    Dataset ds;
    detail::StrictObject obj(meta, "dataset.json");
    obj.read("input_dim", ds.input_dim);
    obj.read("num_classes", ds.num_classes);
    obj.finish();
    ds.train = read_split_csv(dir / "train.csv", ds.num_classes);
    ds.val = read_split_csv(dir / "val.csv", ds.num_classes);
    ds.test = read_split_csv(dir / "test.csv", ds.num_classes);
    ds.shift = read_split_csv(dir / "shift.csv", ds.num_classes);
    for (auto name : {SplitName::Train, SplitName::Val, SplitName::Test, SplitName::Shift}) {
        if (ds.split(name).features.cols() != static_cast<std::size_t>(ds.input_dim)) {
            throw Error(ErrorKind::MalformedFile, std::string(to_string(name)) + ".csv: feature count mismatch");
        }
    }
    return ds;
}

}  // namespace soupkit
