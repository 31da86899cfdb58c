#pragma once

#include "error.hpp"
#include "format.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace bon {

struct Sample {
    std::vector<double> features;
    std::size_t label = 0;
};

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::vector<double> apply(std::span<const double> raw) const {
        std::vector<double> out(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean[i]) / stddev[i];
        return out;
    }
    std::vector<double> invert(std::span<const double> standardized) const {
        std::vector<double> out(standardized.size());
        for (std::size_t i = 0; i < standardized.size(); ++i) out[i] = standardized[i] * stddev[i] + mean[i];
        return out;
    }
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t class_count = 0;
    std::size_t feature_dim = 0;
    std::optional<FeatureStats> stats;  // set once standardized
    std::vector<std::string> class_names;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    void validate() const {
        if (samples.empty()) throw ConfigError("dataset is empty");
        for (const auto& s : samples) {
            if (s.features.size() != feature_dim) throw ShapeError("sample feature count differs from feature_dim");
            if (s.label >= class_count) throw LabelError("sample label exceeds class count");
            for (double v : s.features)
                if (!std::isfinite(v)) throw NumericError("non-finite feature value");
        }
    }

    // Feature vector in raw (un-standardized) units.
    std::vector<double> raw_features(std::size_t i) const {
        return stats ? stats->invert(samples[i].features) : samples[i].features;
    }
};

// Rows of N numeric columns followed by a class name. Labels are assigned in
// first-appearance order. Blank lines are skipped.
inline Dataset load_iris(const std::filesystem::path& path, std::pair<std::size_t, std::size_t> feature_indices = {0, 1}) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open iris file " + path.string());
    Dataset ds;
    ds.feature_dim = 2;
    std::map<std::string, std::size_t> label_of;
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.emplace_back(trim(std::string_view(line).substr(start, comma - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 2) throw ParseError("expected numeric columns followed by a class name", line_no);
        if (columns == 0) columns = fields.size();
        if (fields.size() != columns)
            throw ParseError("expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()),
                             line_no);
        const std::size_t numeric = columns - 1;
        if (feature_indices.first >= numeric || feature_indices.second >= numeric)
            throw ParseError("feature index beyond the " + std::to_string(numeric) + " numeric columns", line_no);
        std::vector<double> values(numeric);
        for (std::size_t c = 0; c < numeric; ++c)
            if (!parse_double(fields[c], values[c]) || !std::isfinite(values[c]))
                throw ParseError("bad numeric value '" + fields[c] + "' in column " + std::to_string(c + 1), line_no);
        const std::string& name = fields.back();
        if (name.empty()) throw ParseError("missing class name", line_no);
        auto [it, inserted] = label_of.try_emplace(name, ds.class_names.size());
        if (inserted) ds.class_names.push_back(name);
        ds.samples.push_back({{values[feature_indices.first], values[feature_indices.second]}, it->second});
    }
    if (ds.samples.empty()) throw ParseError("no data rows", line_no);
    ds.class_count = ds.class_names.size();
    return ds;
}

// Writes rows in the format load_iris reads: features then class name.
inline void write_iris_csv(std::ostream& os, const Dataset& ds) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.raw_features(i)) os << format_double(v) << ',';
        const auto label = ds.samples[i].label;
        os << (label < ds.class_names.size() ? ds.class_names[label] : "class" + std::to_string(label)) << '\n';
    }
}

struct LabeledPoint {
    std::vector<double> features;
    std::size_t label = 0;
};

// Gaussian blobs, one per class, plus explicit outliers. 2 features, 2 classes.
struct ConstructedSpec {
    std::vector<std::vector<double>> centers{{-1.0, -1.0}, {1.0, 1.0}};
    std::vector<double> spreads{0.5, 0.5};
    std::size_t points_per_class = 50;
    std::vector<LabeledPoint> outliers{{{-1.2, -0.8}, 1}};
    std::uint64_t seed = 1;
};

// Points are drawn class by class, x then y, from Rng(seed).normal(); the
// outliers are appended at the end.
inline Dataset make_constructed(const ConstructedSpec& spec) {
    if (spec.centers.size() != 2 || spec.spreads.size() != 2)
        throw ConfigError("constructed dataset has exactly 2 classes");
    for (const auto& c : spec.centers)
        if (c.size() != 2) throw ConfigError("constructed dataset has exactly 2 features");
    for (double s : spec.spreads)
        if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("blob spread must be finite and non-negative");
    Dataset ds;
    ds.class_count = 2;
    ds.feature_dim = 2;
    ds.class_names = {"class0", "class1"};
    Rng rng(spec.seed);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < spec.points_per_class; ++i) {
            const double x = spec.centers[c][0] + spec.spreads[c] * rng.normal();
            const double y = spec.centers[c][1] + spec.spreads[c] * rng.normal();
            ds.samples.push_back({{x, y}, c});
        }
    }
    for (const auto& o : spec.outliers) {
        if (o.features.size() != 2 || o.label >= 2) throw ConfigError("outlier must be a 2D point with label 0 or 1");
        ds.samples.push_back({o.features, o.label});
    }
    if (ds.samples.empty()) throw ConfigError("constructed dataset would be empty");
    return ds;
}

// Zero mean, unit (population) variance per feature; stats are kept so raw
// coordinates can be recovered.
inline Dataset standardize(const Dataset& ds) {
    if (ds.size() < 2) throw ConfigError("standardize needs at least 2 samples");
    const auto m = static_cast<double>(ds.size());
    FeatureStats st;
    st.mean.assign(ds.feature_dim, 0.0);
    st.stddev.assign(ds.feature_dim, 0.0);
    for (const auto& s : ds.samples)
        for (std::size_t f = 0; f < ds.feature_dim; ++f) st.mean[f] += s.features[f];
    for (auto& v : st.mean) v /= m;
    for (const auto& s : ds.samples)
        for (std::size_t f = 0; f < ds.feature_dim; ++f) {
            const double d = s.features[f] - st.mean[f];
            st.stddev[f] += d * d;
        }
    for (std::size_t f = 0; f < ds.feature_dim; ++f) {
        st.stddev[f] = std::sqrt(st.stddev[f] / m);
        if (!(st.stddev[f] > 0.0)) throw ConfigError("feature " + std::to_string(f) + " has zero variance");
    }
    Dataset out = ds;
    for (auto& s : out.samples) s.features = st.apply(s.features);
    if (ds.stats) {
        // Compose with the earlier transform so raw units stay recoverable.
        for (std::size_t f = 0; f < ds.feature_dim; ++f) {
            st.mean[f] = ds.stats->mean[f] + ds.stats->stddev[f] * st.mean[f];
            st.stddev[f] = ds.stats->stddev[f] * st.stddev[f];
        }
    }
    out.stats = std::move(st);
    return out;
}

using Batch = std::vector<std::size_t>;

// Seeded Fisher-Yates shuffle of sample indices, then contiguous chunks of
// batch_size; the last batch may be short.
inline std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (ds.empty()) throw ConfigError("dataset is empty");
    if (batch_size > ds.size()) throw ConfigError("batch size exceeds dataset size");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(epoch_seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const auto stop = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

// Export: header f0,...,f{d-1},label then one row per sample in raw units.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
    for (std::size_t f = 0; f < ds.feature_dim; ++f) os << 'f' << f << ',';
    os << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.raw_features(i)) os << format_double(v) << ',';
        os << ds.samples[i].label << '\n';
    }
}

} // namespace bon
