#pragma once

// Config-driven experiment runs and their on-disk artifacts.
//
// Config file: INI-style `key = value` lines under [run], [data], [model],
// [bon] and [grid] sections (see README). A run directory holds:
//
//   config.ini            resolved config; re-running it reproduces the run
//   metrics.csv           epoch,acc_real,acc_synth,mean_synth_mse,mean_mas_penalty,gated_fraction
//   classifier.mlp        final classifier dump
//   generator_NNN.mlp     final generator dumps (non-baseline modes)
//   dataset.csv           training data in raw units
//   feature_stats.csv     standardization stats, when standardized
//   boundary.csv          decision-boundary grid of the final classifier
//   cloud_epoch_NNNN.csv  synthetic clouds at snapshot epochs (+ epoch_NNNN/ model dumps)
//   run_info.txt          status, epochs completed, wall time

#include "datasets.hpp"
#include "engine.hpp"
#include "error.hpp"
#include "format.hpp"
#include "model_io.hpp"
#include "nn.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bon {

namespace fs = std::filesystem;

enum class DataSource { iris, constructed };

struct GridSpec {
    std::size_t resolution = 200;
    double margin = 0.15;  // fraction of the data range added on each side
};

struct RunConfig {
    std::string name = "run";
    BonConfig bon;
    DataSource source = DataSource::constructed;
    fs::path iris_path = "data/iris.csv";
    std::pair<std::size_t, std::size_t> iris_features{0, 1};
    ConstructedSpec constructed;
    bool standardize = false;
    std::vector<std::size_t> d_dims{2, 100, 100, 50, 2};
    std::vector<std::size_t> g_dims{2, 50, 50, 50, 2};
    double dropout = 0.0;  // classifier dropout
    GridSpec grid;
    std::vector<std::size_t> cloud_epochs;
    fs::path output_dir;  // empty: $BON_OUTPUT_ROOT/<name>, or runs/<name>

    void validate() const {
        bon.validate();
        if (d_dims.size() < 2) throw ConfigError("d_dims needs at least input and output");
        if (g_dims.size() < 2) throw ConfigError("g_dims needs at least input and output");
        for (auto d : d_dims)
            if (d == 0) throw ConfigError("d_dims entries must be positive");
        for (auto d : g_dims)
            if (d == 0) throw ConfigError("g_dims entries must be positive");
        if (g_dims.front() != g_dims.back()) throw ConfigError("generator output dim must equal its input dim");
        if (bon.mode != Mode::baseline && g_dims.front() != d_dims.front())
            throw ConfigError("generator and classifier input dims differ");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
        if (grid.resolution < 2) throw ConfigError("grid resolution must be at least 2");
        if (!(grid.margin >= 0.0)) throw ConfigError("grid margin must be non-negative");
        for (auto e : cloud_epochs)
            if (e == 0 || e > bon.epochs) throw ConfigError("cloud epoch " + std::to_string(e) + " outside the run");
        if (source == DataSource::iris && iris_features.first == iris_features.second)
            throw ConfigError("iris features must be two distinct columns");
    }
};

// ---------------------------------------------------------------- presets

inline RunConfig constructed_preset(Mode mode) {
    RunConfig c;
    c.name = "constructed-" + to_string(mode);
    c.source = DataSource::constructed;
    c.standardize = false;
    c.constructed.spreads = {1.0, 1.0};
    c.d_dims = {2, 100, 100, 50, 2};
    c.g_dims = {2, 50, 50, 50, 2};
    c.bon.mode = mode;
    c.bon.K = 10;
    c.bon.alpha = mode == Mode::bonpp ? 2.0 : 1.0;
    c.bon.beta = 1.025;
    c.bon.lr_d = 0.001;
    c.bon.lr_g = 0.01;
    c.bon.batch_size = 10;
    c.bon.epochs = 500;
    c.bon.seed = 1;
    if (mode != Mode::baseline) c.cloud_epochs = {50, 150, 500};
    return c;
}

inline RunConfig iris_preset(Mode mode) {
    RunConfig c;
    c.name = mode == Mode::baseline ? "iris-baseline" : "iris-paper";
    c.source = DataSource::iris;
    c.standardize = true;
    c.d_dims = {2, 100, 100, 50, 3};
    c.g_dims = {2, 50, 50, 50, 2};
    c.bon.mode = mode;
    c.bon.K = 100;
    c.bon.alpha = 2.0;
    c.bon.beta = 1.025;
    c.bon.lr_d = 0.001;
    c.bon.lr_g = 0.0001;
    c.bon.batch_size = 10;
    c.bon.epochs = 1000;
    c.bon.seed = 1;
    return c;
}

inline const std::map<std::string, std::function<RunConfig()>>& presets() {
    static const std::map<std::string, std::function<RunConfig()>> table{
        {"iris-paper", [] { return iris_preset(Mode::bonpp); }},
        {"iris-baseline", [] { return iris_preset(Mode::baseline); }},
        {"constructed-bon", [] { return constructed_preset(Mode::bon); }},
        {"constructed-bonpp", [] { return constructed_preset(Mode::bonpp); }},
        {"constructed-baseline", [] { return constructed_preset(Mode::baseline); }},
    };
    return table;
}

inline RunConfig preset(const std::string& name) {
    const auto it = presets().find(name);
    if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
    return it->second();
}

// ---------------------------------------------------------------- config text

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) {
        auto t = std::string(trim(cur));
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    if (!parse_size(v, out)) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

inline double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    if (!parse_double(v, out) || !std::isfinite(out)) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& t : split(v, ',')) out.push_back(to_size(key, t));
    return out;
}

inline std::vector<double> to_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& t : split(v, ',')) out.push_back(to_real(key, t));
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F fmt, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + fmt(v[i]);
    return out;
}

inline std::string sizes_text(const std::vector<std::size_t>& v) {
    return join(v, [](std::size_t x) { return std::to_string(x); });
}

inline std::string reals_text(const std::vector<double>& v) { return join(v, format_double); }

} // namespace detail

// Applies one `section.key = value` setting.
inline void apply_setting(RunConfig& c, const std::string& section, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v(trim(raw));
    const std::string full = section + "." + key;
    if (section == "run") {
        if (key == "name") c.name = v;
        else if (key == "preset") { /* resolved before other keys */ }
        else if (key == "mode") c.bon.mode = parse_mode(v);
        else if (key == "epochs") c.bon.epochs = to_size(full, v);
        else if (key == "seed") c.bon.seed = to_size(full, v);
        else if (key == "threads") c.bon.threads = to_size(full, v);
        else if (key == "output_dir") c.output_dir = v;
        else if (key == "cloud_epochs") c.cloud_epochs = to_sizes(full, v);
        else throw ConfigError("unknown key " + full);
    } else if (section == "data") {
        if (key == "source") {
            if (v == "iris") c.source = DataSource::iris;
            else if (v == "constructed") c.source = DataSource::constructed;
            else throw ConfigError("data.source must be iris or constructed");
        } else if (key == "iris_path") c.iris_path = v;
        else if (key == "features") {
            const auto f = to_sizes(full, v);
            if (f.size() != 2) throw ConfigError("data.features expects two column indices");
            c.iris_features = {f[0], f[1]};
        } else if (key == "standardize") c.standardize = to_bool(full, v);
        else if (key == "constructed_seed") c.constructed.seed = to_size(full, v);
        else if (key == "points_per_class") c.constructed.points_per_class = to_size(full, v);
        else if (key == "spread") {
            const auto s = to_reals(full, v);
            if (s.size() == 1) c.constructed.spreads = {s[0], s[0]};
            else if (s.size() == 2) c.constructed.spreads = s;
            else throw ConfigError("data.spread expects one or two values");
        } else if (key == "class0_center" || key == "class1_center") {
            const auto p = to_reals(full, v);
            if (p.size() != 2) throw ConfigError(full + " expects two coordinates");
            c.constructed.centers[key == "class0_center" ? 0 : 1] = p;
        } else if (key == "outliers") {
            // "x y label; x y label"
            c.constructed.outliers.clear();
            for (const auto& item : split(v, ';')) {
                std::istringstream ss(item);
                std::string xs, ys, ls;
                if (!(ss >> xs >> ys >> ls)) throw ConfigError("data.outliers entries are 'x y label'");
                c.constructed.outliers.push_back({{to_real(full, xs), to_real(full, ys)}, to_size(full, ls)});
            }
        } else throw ConfigError("unknown key " + full);
    } else if (section == "model") {
        if (key == "d_dims") c.d_dims = to_sizes(full, v);
        else if (key == "g_dims") c.g_dims = to_sizes(full, v);
        else if (key == "dropout") c.dropout = to_real(full, v);
        else throw ConfigError("unknown key " + full);
    } else if (section == "bon") {
        if (key == "K") c.bon.K = to_size(full, v);
        else if (key == "alpha") c.bon.alpha = to_real(full, v);
        else if (key == "beta") c.bon.beta = to_real(full, v);
        else if (key == "lr_d") c.bon.lr_d = to_real(full, v);
        else if (key == "lr_g") c.bon.lr_g = to_real(full, v);
        else if (key == "batch_size") c.bon.batch_size = to_size(full, v);
        else if (key == "normalize_by_k") c.bon.normalize_by_k = to_bool(full, v);
        else if (key == "gate_before_update") c.bon.gate_before_update = to_bool(full, v);
        else if (key == "momentum") c.bon.momentum = to_real(full, v);
        else if (key == "penalty_step") c.bon.penalty_step = parse_penalty_step(v);
        else throw ConfigError("unknown key " + full);
    } else if (section == "grid") {
        if (key == "resolution") c.grid.resolution = to_size(full, v);
        else if (key == "margin") c.grid.margin = to_real(full, v);
        else throw ConfigError("unknown key " + full);
    } else {
        throw ConfigError("unknown section [" + section + "]");
    }
}

// "section.key=value"
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override must look like section.key=value: '" + assignment + "'");
    apply_setting(c, std::string(trim(assignment.substr(0, dot))),
                  std::string(trim(assignment.substr(dot + 1, eq - dot - 1))), assignment.substr(eq + 1));
}

inline RunConfig parse_config(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(e.message(), e.line());
    }
    RunConfig c;
    if (auto run = tree.get_child_optional("run"))
        if (auto p = run->get_optional<std::string>("preset")) c = preset(std::string(trim(*p)));
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
        for (const auto& [key, value] : body) apply_setting(c, section, key, value.data());
    }
    return c;
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    return parse_config(is);
}

// Full, canonical text of a config. parse_config(write_config(c)) == c.
inline std::string write_config(const RunConfig& c) {
    using namespace detail;
    std::ostringstream os;
    os << "[run]\n"
       << "name = " << c.name << '\n'
       << "mode = " << to_string(c.bon.mode) << '\n'
       << "epochs = " << c.bon.epochs << '\n'
       << "seed = " << c.bon.seed << '\n'
       << "threads = " << c.bon.threads << '\n'
       << "cloud_epochs = " << sizes_text(c.cloud_epochs) << '\n';
    if (!c.output_dir.empty()) os << "output_dir = " << c.output_dir.string() << '\n';
    os << "\n[data]\n";
    if (c.source == DataSource::iris) {
        os << "source = iris\n"
           << "iris_path = " << c.iris_path.string() << '\n'
           << "features = " << c.iris_features.first << ',' << c.iris_features.second << '\n';
    } else {
        const auto& s = c.constructed;
        os << "source = constructed\n"
           << "constructed_seed = " << s.seed << '\n'
           << "points_per_class = " << s.points_per_class << '\n'
           << "spread = " << reals_text(s.spreads) << '\n'
           << "class0_center = " << reals_text(s.centers[0]) << '\n'
           << "class1_center = " << reals_text(s.centers[1]) << '\n'
           << "outliers = "
           << join(s.outliers,
                   [](const LabeledPoint& p) {
                       return format_double(p.features[0]) + " " + format_double(p.features[1]) + " " +
                              std::to_string(p.label);
                   },
                   "; ")
           << '\n';
    }
    os << "standardize = " << (c.standardize ? "true" : "false") << '\n'
       << "\n[model]\n"
       << "d_dims = " << sizes_text(c.d_dims) << '\n'
       << "g_dims = " << sizes_text(c.g_dims) << '\n'
       << "dropout = " << format_double(c.dropout) << '\n'
       << "\n[bon]\n"
       << "K = " << c.bon.K << '\n'
       << "alpha = " << format_double(c.bon.alpha) << '\n'
       << "beta = " << format_double(c.bon.beta) << '\n'
       << "lr_d = " << format_double(c.bon.lr_d) << '\n'
       << "lr_g = " << format_double(c.bon.lr_g) << '\n'
       << "batch_size = " << c.bon.batch_size << '\n'
       << "normalize_by_k = " << (c.bon.normalize_by_k ? "true" : "false") << '\n'
       << "gate_before_update = " << (c.bon.gate_before_update ? "true" : "false") << '\n'
       << "momentum = " << format_double(c.bon.momentum) << '\n'
       << "penalty_step = " << to_string(c.bon.penalty_step) << '\n'
       << "\n[grid]\n"
       << "resolution = " << c.grid.resolution << '\n'
       << "margin = " << format_double(c.grid.margin) << '\n';
    return os.str();
}

// ---------------------------------------------------------------- runs

struct Experiment {
    RunConfig config;
    Dataset data;
    MlpNetwork classifier;
    GeneratorPopulation population;
    TrainState state;
};

inline Dataset load_run_data(const RunConfig& c) {
    Dataset ds = c.source == DataSource::iris ? load_iris(c.iris_path, c.iris_features) : make_constructed(c.constructed);
    ds.validate();
    return c.standardize ? standardize(ds) : ds;
}

// Loads data and initializes every network; throws before any training when
// the config does not fit the data.
inline Experiment prepare(const RunConfig& c) {
    c.validate();
    Experiment ex{c, load_run_data(c), {}, {}, {}};
    if (c.d_dims.front() != ex.data.feature_dim)
        throw ConfigError("d_dims input " + std::to_string(c.d_dims.front()) + " differs from dataset features " +
                          std::to_string(ex.data.feature_dim));
    if (c.d_dims.back() != ex.data.class_count)
        throw ConfigError("d_dims output " + std::to_string(c.d_dims.back()) + " differs from class count " +
                          std::to_string(ex.data.class_count));
    if (c.bon.batch_size > ex.data.size()) throw ConfigError("batch_size exceeds dataset size");
    Rng rng(derive_seed(c.bon.seed, {100}));
    ex.classifier = make_mlp(c.d_dims, OutputMode::softmax, rng, c.dropout);
    if (c.bon.mode != Mode::baseline) ex.population = GeneratorPopulation::make(c.bon.K, c.g_dims, c.bon.seed);
    return ex;
}

inline void write_metrics_header(std::ostream& os) {
    os << "epoch,acc_real,acc_synth,mean_synth_mse,mean_mas_penalty,gated_fraction\n";
}

inline void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
    os << m.epoch << ',' << format_double(m.acc_real) << ',' << format_double(m.acc_synth) << ','
       << format_double(m.mean_synth_mse) << ',' << format_double(m.mean_mas_penalty) << ','
       << format_double(m.gated_fraction) << '\n';
}

// ---------------------------------------------------------------- exports

struct BoundaryGrid {
    std::vector<double> x1;  // raw units, length R
    std::vector<double> x2;
    std::size_t resolution = 0;
    std::size_t class_count = 0;
    // Cell (i, j) at x1[i], x2[j] is stored at i * R + j.
    std::vector<std::size_t> predicted;
    std::vector<std::vector<double>> probs;
};

// Grid over the raw data range plus margin on each side; cells are mapped
// through the dataset's standardization before reaching the classifier.
inline BoundaryGrid export_boundary(const MlpNetwork& d, const Dataset& data, const GridSpec& spec) {
    if (d.input_dim() != 2 || data.feature_dim != 2)
        throw ShapeError("boundary export supports 2-feature models only (model has " + std::to_string(d.input_dim()) +
                         ")");
    if (spec.resolution < 2) throw ConfigError("grid resolution must be at least 2");
    if (data.empty()) throw ConfigError("boundary export needs data to span the grid");
    const std::size_t R = spec.resolution;
    std::array<double, 2> lo{INFINITY, INFINITY}, hi{-INFINITY, -INFINITY};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto raw = data.raw_features(i);
        for (int f = 0; f < 2; ++f) {
            lo[f] = std::min(lo[f], raw[f]);
            hi[f] = std::max(hi[f], raw[f]);
        }
    }
    BoundaryGrid g;
    g.resolution = R;
    g.class_count = d.output_dim();
    auto axis = [&](int f) {
        double range = hi[f] - lo[f];
        if (range <= 0.0) range = 1.0;
        const double a = lo[f] - spec.margin * range, b = hi[f] + spec.margin * range;
        std::vector<double> v(R);
        for (std::size_t i = 0; i < R; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(R - 1);
        return v;
    };
    g.x1 = axis(0);
    g.x2 = axis(1);
    Matrix in(2, static_cast<Eigen::Index>(R * R));
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < R; ++j) {
            std::vector<double> p{g.x1[i], g.x2[j]};
            if (data.stats) p = data.stats->apply(p);
            in(0, static_cast<Eigen::Index>(i * R + j)) = p[0];
            in(1, static_cast<Eigen::Index>(i * R + j)) = p[1];
        }
    const Matrix probs = forward(d, in).output;
    g.predicted.resize(R * R);
    g.probs.resize(R * R);
    for (std::size_t c = 0; c < R * R; ++c) {
        g.predicted[c] = argmax_column(probs, static_cast<Eigen::Index>(c));
        g.probs[c] = detail::column(probs, static_cast<Eigen::Index>(c));
    }
    return g;
}

inline void write_boundary_csv(std::ostream& os, const BoundaryGrid& g) {
    os << "x1,x2,class";
    for (std::size_t c = 0; c < g.class_count; ++c) os << ",p" << c;
    os << '\n';
    for (std::size_t i = 0; i < g.resolution; ++i)
        for (std::size_t j = 0; j < g.resolution; ++j) {
            const auto cell = i * g.resolution + j;
            os << format_double(g.x1[i]) << ',' << format_double(g.x2[j]) << ',' << g.predicted[cell];
            for (double p : g.probs[cell]) os << ',' << format_double(p);
            os << '\n';
        }
}

struct CloudRow {
    std::size_t sample = 0;
    std::size_t generator = 0;
    std::vector<double> source;     // raw units
    std::vector<double> synthetic;  // raw units
    std::size_t label = 0;
    bool misclassified = false;
    std::size_t predicted = 0;
    double mse = 0.0;  // in model (possibly standardized) space, as in metrics.csv
};

// One row per (sample, generator), generator-major.
inline std::vector<CloudRow> export_synthetic_cloud(const GeneratorPopulation& pop, const Dataset& data,
                                                    const MlpNetwork& d) {
    std::vector<CloudRow> rows;
    rows.reserve(pop.size() * data.size());
    const Matrix real = detail::all_columns(data);
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const Matrix synth = forward(pop.generators[k], real).output;
        const Matrix probs = forward(d, synth).output;
        for (std::size_t j = 0; j < data.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            CloudRow r;
            r.sample = j;
            r.generator = k;
            r.source = data.raw_features(j);
            const auto model_space = detail::column(synth, jj);
            r.synthetic = data.stats ? data.stats->invert(model_space) : model_space;
            r.label = data.samples[j].label;
            r.predicted = argmax_column(probs, jj);
            r.misclassified = r.predicted != r.label;
            r.mse = (synth.col(jj) - real.col(jj)).squaredNorm() / static_cast<double>(data.feature_dim);
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

inline void write_cloud_csv(std::ostream& os, const std::vector<CloudRow>& rows, std::size_t dim) {
    os << "sample,generator,label";
    for (std::size_t f = 0; f < dim; ++f) os << ",src" << f;
    for (std::size_t f = 0; f < dim; ++f) os << ",syn" << f;
    os << ",misclassified,predicted,mse\n";
    for (const auto& r : rows) {
        os << r.sample << ',' << r.generator << ',' << r.label;
        for (double v : r.source) os << ',' << format_double(v);
        for (double v : r.synthetic) os << ',' << format_double(v);
        os << ',' << (r.misclassified ? 1 : 0) << ',' << r.predicted << ',' << format_double(r.mse) << '\n';
    }
}

// ---------------------------------------------------------------- run directory

inline fs::path default_output_root() {
    if (const char* env = std::getenv("BON_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

inline fs::path resolve_run_dir(const RunConfig& c) {
    return c.output_dir.empty() ? default_output_root() / c.name : c.output_dir;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

inline std::string epoch_tag(std::size_t epoch) {
    std::ostringstream ss;
    ss << std::setw(4) << std::setfill('0') << epoch;
    return ss.str();
}

inline std::string generator_file(std::size_t k) {
    std::ostringstream ss;
    ss << "generator_" << std::setw(3) << std::setfill('0') << k << ".mlp";
    return ss.str();
}

inline void save_models(const fs::path& dir, const Experiment& ex) {
    fs::create_directories(dir);
    save_mlp(dir / "classifier.mlp", ex.classifier);
    for (std::size_t k = 0; k < ex.population.size(); ++k) save_mlp(dir / generator_file(k), ex.population.generators[k]);
}

inline void write_feature_stats(const fs::path& path, const Dataset& ds) {
    std::ostringstream os;
    os << "feature,mean,std\n";
    if (ds.stats)
        for (std::size_t f = 0; f < ds.feature_dim; ++f)
            os << f << ',' << format_double(ds.stats->mean[f]) << ',' << format_double(ds.stats->stddev[f]) << '\n';
    write_text(path, os.str());
}

struct RunHooks {
    const EngineObserver* observer = nullptr;
    std::function<void(const Experiment&)> on_epoch_end;
};

struct RunResult {
    fs::path dir;
    Experiment experiment;
    double wall_seconds = 0.0;
};

// Trains per the config and writes the run directory. Config problems throw
// before the directory is touched. A numeric failure writes run_info.txt with
// status=aborted and the failing epoch, then rethrows.
inline RunResult run(const RunConfig& config, const RunHooks& hooks = {}) {
    Experiment ex = prepare(config);
    const fs::path dir = resolve_run_dir(config);
    fs::create_directories(dir);
    write_text(dir / "config.ini", write_config(config));
    {
        std::ostringstream os;
        write_dataset_csv(os, ex.data);
        write_text(dir / "dataset.csv", os.str());
    }
    write_feature_stats(dir / "feature_stats.csv", ex.data);

    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write metrics for " + dir.string());
    write_metrics_header(metrics);

    const std::set<std::size_t> snapshots(config.cloud_epochs.begin(), config.cloud_epochs.end());
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    auto write_info = [&](const std::string& status, const std::string& extra) {
        write_text(dir / "run_info.txt", "status=" + status + "\nepochs_completed=" +
                                             std::to_string(ex.state.history.size()) + "\n" + extra +
                                             "wall_time_s=" + format_double(elapsed()) + "\n");
    };

    while (ex.state.epoch < config.bon.epochs) {
        try {
            run_epoch(ex.classifier, ex.population, ex.data, config.bon, ex.state, hooks.observer);
        } catch (const NumericError& e) {
            metrics.flush();
            write_info("aborted", "failed_epoch=" + std::to_string(ex.state.epoch + 1) + "\nerror=" + e.what() + "\n");
            throw;
        }
        write_metrics_row(metrics, ex.state.history.back());
        metrics.flush();
        const std::size_t done = ex.state.epoch;
        if (snapshots.count(done) && config.bon.mode != Mode::baseline) {
            const fs::path snap = dir / ("epoch_" + epoch_tag(done));
            save_models(snap, ex);
            std::ostringstream os;
            write_cloud_csv(os, export_synthetic_cloud(ex.population, ex.data, ex.classifier), ex.data.feature_dim);
            write_text(dir / ("cloud_epoch_" + epoch_tag(done) + ".csv"), os.str());
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(ex);
    }
    metrics.close();
    save_models(dir, ex);
    {
        std::ostringstream os;
        write_boundary_csv(os, export_boundary(ex.classifier, ex.data, config.grid));
        write_text(dir / "boundary.csv", os.str());
    }
    write_info("completed", "");
    return RunResult{dir, std::move(ex), elapsed()};
}

// ---------------------------------------------------------------- reading runs back

// Rebuilds the training set of a run from dataset.csv and feature_stats.csv.
inline Dataset load_run_dataset(const fs::path& dir) {
    std::ifstream is(dir / "dataset.csv");
    if (!is) throw IoError("run " + dir.string() + " has no dataset.csv");
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line)) throw ParseError("empty dataset.csv", line_no);
    const auto header = detail::split(line, ',');
    if (header.size() < 2 || header.back() != "label") throw ParseError("dataset.csv header must end in label", line_no);
    Dataset ds;
    ds.feature_dim = header.size() - 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = detail::split(line, ',');
        if (fields.size() != header.size()) throw ParseError("wrong field count in dataset.csv", line_no);
        Sample s;
        s.features.resize(ds.feature_dim);
        for (std::size_t f = 0; f < ds.feature_dim; ++f)
            if (!parse_double(fields[f], s.features[f])) throw ParseError("bad feature value", line_no);
        if (!parse_size(fields.back(), s.label)) throw ParseError("bad label", line_no);
        ds.class_count = std::max(ds.class_count, s.label + 1);
        ds.samples.push_back(std::move(s));
    }
    std::ifstream st(dir / "feature_stats.csv");
    if (st) {
        std::getline(st, line);
        FeatureStats stats;
        while (std::getline(st, line)) {
            const auto fields = detail::split(line, ',');
            if (fields.size() != 3) continue;
            double m = 0, s = 0;
            if (!parse_double(fields[1], m) || !parse_double(fields[2], s)) throw ParseError("bad feature_stats.csv", 0);
            stats.mean.push_back(m);
            stats.stddev.push_back(s);
        }
        if (stats.mean.size() == ds.feature_dim) {
            for (auto& s : ds.samples) s.features = stats.apply(s.features);
            ds.stats = std::move(stats);
        }
    }
    return ds;
}

inline std::vector<EpochMetrics> read_metrics(const fs::path& dir) {
    std::ifstream is(dir / "metrics.csv");
    if (!is) throw IoError("run " + dir.string() + " has no metrics.csv");
    std::vector<EpochMetrics> rows;
    std::string line;
    std::size_t line_no = 1;
    std::getline(is, line);
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = detail::split(line, ',');
        EpochMetrics m;
        if (f.size() != 6 || !parse_size(f[0], m.epoch) || !parse_double(f[1], m.acc_real) ||
            !parse_double(f[2], m.acc_synth) || !parse_double(f[3], m.mean_synth_mse) ||
            !parse_double(f[4], m.mean_mas_penalty) || !parse_double(f[5], m.gated_fraction))
            throw ParseError("bad metrics row in " + (dir / "metrics.csv").string(), line_no);
        rows.push_back(m);
    }
    return rows;
}

inline std::map<std::string, std::string> read_run_info(const fs::path& dir) {
    std::map<std::string, std::string> info;
    std::ifstream is(dir / "run_info.txt");
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) info[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return info;
}

// Recomputes boundary.csv for a run directory from its classifier dump.
inline BoundaryGrid export_boundary_from_run(const fs::path& dir) {
    const RunConfig cfg = load_config(dir / "config.ini");
    const MlpNetwork d = load_mlp(dir / "classifier.mlp", OutputMode::softmax);
    return export_boundary(d, load_run_dataset(dir), cfg.grid);
}

// Cloud from the models saved at `epoch` (epoch_NNNN/), or the final models.
inline std::vector<CloudRow> export_cloud_from_run(const fs::path& dir, std::optional<std::size_t> epoch) {
    const RunConfig cfg = load_config(dir / "config.ini");
    if (cfg.bon.mode == Mode::baseline) throw ConfigError("baseline runs have no generators");
    const fs::path models = epoch ? dir / ("epoch_" + epoch_tag(*epoch)) : dir;
    if (!fs::exists(models / "classifier.mlp"))
        throw IoError("no models saved for epoch " + (epoch ? std::to_string(*epoch) : std::string("final")) + " in " +
                      dir.string());
    const MlpNetwork d = load_mlp(models / "classifier.mlp", OutputMode::softmax);
    std::vector<MlpNetwork> gens;
    for (std::size_t k = 0; k < cfg.bon.K; ++k) gens.push_back(load_mlp(models / generator_file(k), OutputMode::linear));
    return export_synthetic_cloud(GeneratorPopulation::from_networks(std::move(gens)), load_run_dataset(dir), d);
}

struct RunSummary {
    std::string run;
    std::string mode;
    std::size_t epochs = 0;
    double final_acc_real = 0.0;
    double final_acc_synth = 0.0;
    double final_mean_synth_mse = 0.0;
    double peak_mean_synth_mse = 0.0;
    double collapse_ratio = 0.0;  // final / peak mean synthetic MSE
    double wall_time_s = 0.0;
};

inline RunSummary summarize_run(const fs::path& dir) {
    if (!fs::exists(dir / "metrics.csv")) throw IoError("run " + dir.string() + " has no metrics.csv");
    const auto rows = read_metrics(dir);
    if (rows.empty()) throw IoError("run " + dir.string() + " has an empty metrics.csv");
    RunSummary s;
    s.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    const auto info = read_run_info(dir);
    if (fs::exists(dir / "config.ini")) s.mode = to_string(load_config(dir / "config.ini").bon.mode);
    s.epochs = rows.back().epoch;
    s.final_acc_real = rows.back().acc_real;
    s.final_acc_synth = rows.back().acc_synth;
    s.final_mean_synth_mse = rows.back().mean_synth_mse;
    for (const auto& r : rows) s.peak_mean_synth_mse = std::max(s.peak_mean_synth_mse, r.mean_synth_mse);
    s.collapse_ratio = s.peak_mean_synth_mse > 0.0 ? s.final_mean_synth_mse / s.peak_mean_synth_mse : NAN;
    if (auto it = info.find("wall_time_s"); it != info.end()) parse_double(it->second, s.wall_time_s);
    return s;
}

inline std::vector<RunSummary> compare_runs(const std::vector<fs::path>& dirs) {
    if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
    std::vector<RunSummary> out;
    for (const auto& d : dirs) out.push_back(summarize_run(d));
    return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<RunSummary>& rows) {
    os << "run,mode,epochs,final_acc_real,final_acc_synth,final_mean_synth_mse,peak_mean_synth_mse,collapse_ratio,"
          "wall_time_s\n";
    for (const auto& r : rows)
        os << r.run << ',' << r.mode << ',' << r.epochs << ',' << format_double(r.final_acc_real) << ','
           << format_double(r.final_acc_synth) << ',' << format_double(r.final_mean_synth_mse) << ','
           << format_double(r.peak_mean_synth_mse) << ',' << format_double(r.collapse_ratio) << ','
           << format_double(r.wall_time_s) << '\n';
}

} // namespace bon
