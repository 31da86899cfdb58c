#include <bon/experiment.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

using namespace bon;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "bon_experiment_test" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

RunConfig tiny(Mode mode, const std::string& name) {
    RunConfig c = constructed_preset(mode);
    c.name = name;
    c.constructed.points_per_class = 12;
    c.d_dims = {2, 8, 2};
    c.g_dims = {2, 6, 2};
    c.bon.K = 3;
    c.bon.lr_d = 0.05;
    c.bon.lr_g = 0.01;
    c.bon.epochs = 4;
    c.cloud_epochs = mode == Mode::baseline ? std::vector<std::size_t>{} : std::vector<std::size_t>{2, 4};
    c.grid.resolution = 20;
    c.output_dir = scratch(name);
    return c;
}

} // namespace

TEST(Config, PresetsRoundTripThroughText) {
    for (const auto& [name, make] : presets()) {
        const RunConfig c = make();
        EXPECT_NO_THROW(c.validate()) << name;
        std::istringstream is(write_config(c));
        EXPECT_EQ(write_config(parse_config(is)), write_config(c)) << name;
    }
}

TEST(Config, IrisPaperPresetValues) {
    const RunConfig c = preset("iris-paper");
    EXPECT_EQ(c.bon.mode, Mode::bonpp);
    EXPECT_EQ(c.bon.K, 100u);
    EXPECT_EQ(c.bon.batch_size, 10u);
    EXPECT_EQ(c.bon.alpha, 2.0);
    EXPECT_EQ(c.bon.beta, 1.025);
    EXPECT_EQ(c.bon.lr_d, 0.001);
    EXPECT_EQ(c.bon.lr_g, 0.0001);
    EXPECT_EQ(c.bon.epochs, 1000u);
    EXPECT_EQ(c.d_dims, (std::vector<std::size_t>{2, 100, 100, 50, 3}));
    EXPECT_EQ(c.g_dims, (std::vector<std::size_t>{2, 50, 50, 50, 2}));
    EXPECT_EQ(c.source, DataSource::iris);
}

TEST(Config, PresetWithOverridesAndErrors) {
    std::istringstream is("[run]\npreset = constructed-bonpp\nepochs = 7\n# comment\n[bon]\nK = 4\n");
    const RunConfig c = parse_config(is);
    EXPECT_EQ(c.bon.mode, Mode::bonpp);
    EXPECT_EQ(c.bon.epochs, 7u);
    EXPECT_EQ(c.bon.K, 4u);

    auto parse = [](const std::string& text) {
        std::istringstream s(text);
        return parse_config(s);
    };
    EXPECT_THROW(parse("[bon]\nKK = 3\n"), ConfigError);
    EXPECT_THROW(parse("[bon]\nlr_d = fast\n"), ConfigError);
    EXPECT_THROW(parse("[nonsense]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse("[run]\nmode = gan\n"), ConfigError);
    EXPECT_THROW(parse("[run]\npreset = nope\n"), ConfigError);

    RunConfig o = preset("constructed-bon");
    apply_override(o, "bon.lr_g=0.5");
    EXPECT_EQ(o.bon.lr_g, 0.5);
    EXPECT_THROW(apply_override(o, "lr_g=0.5"), ConfigError);
}

TEST(Config, InvalidConfigFailsBeforeTraining) {
    RunConfig c = tiny(Mode::bonpp, "invalid");
    c.bon.beta = 0.9;
    EXPECT_THROW(run(c), ConfigError);
    EXPECT_FALSE(fs::exists(c.output_dir));
    c = tiny(Mode::bon, "invalid");
    c.d_dims = {2, 8, 3};  // constructed data has 2 classes
    EXPECT_THROW(run(c), ConfigError);
    EXPECT_FALSE(fs::exists(c.output_dir));
}

TEST(Run, WritesSelfDescribingDirectory) {
    const RunConfig c = tiny(Mode::bonpp, "selfdescribing");
    const auto result = run(c);
    for (const char* f : {"config.ini", "metrics.csv", "classifier.mlp", "generator_000.mlp", "generator_002.mlp",
                          "dataset.csv", "feature_stats.csv", "boundary.csv", "cloud_epoch_0002.csv",
                          "cloud_epoch_0004.csv", "run_info.txt", "epoch_0002/classifier.mlp"})
        EXPECT_TRUE(fs::exists(result.dir / f)) << f;
    EXPECT_EQ(read_metrics(result.dir).size(), 4u);
    EXPECT_EQ(read_run_info(result.dir).at("status"), "completed");
    EXPECT_EQ(read_run_info(result.dir).at("epochs_completed"), "4");

    // Re-running from the copied config reproduces the metrics byte for byte.
    RunConfig again = load_config(result.dir / "config.ini");
    again.output_dir = scratch("selfdescribing_again");
    const auto second = run(again);
    EXPECT_EQ(slurp(result.dir / "metrics.csv"), slurp(second.dir / "metrics.csv"));
    EXPECT_EQ(slurp(result.dir / "boundary.csv"), slurp(second.dir / "boundary.csv"));
}

TEST(Run, NumericBlowUpIsRecorded) {
    RunConfig c = tiny(Mode::baseline, "blowup");
    c.bon.lr_d = 1e300;
    c.bon.epochs = 20;
    EXPECT_THROW(run(c), NumericError);
    const auto info = read_run_info(c.output_dir);
    EXPECT_EQ(info.at("status"), "aborted");
    EXPECT_TRUE(info.count("failed_epoch"));
}

TEST(Run, ExportsReadBackFromDirectory) {
    const auto result = run(tiny(Mode::bon, "readback"));
    const Experiment& ex = result.experiment;
    std::ostringstream direct, from_dir;
    write_boundary_csv(direct, export_boundary(ex.classifier, ex.data, ex.config.grid));
    write_boundary_csv(from_dir, export_boundary_from_run(result.dir));
    EXPECT_EQ(direct.str(), from_dir.str());
    EXPECT_EQ(from_dir.str(), slurp(result.dir / "boundary.csv"));

    std::ostringstream cloud_now, cloud_snap;
    write_cloud_csv(cloud_now, export_cloud_from_run(result.dir, std::nullopt), 2);
    write_cloud_csv(cloud_snap, export_cloud_from_run(result.dir, 4), 2);
    EXPECT_EQ(cloud_now.str(), cloud_snap.str());
    EXPECT_EQ(cloud_snap.str(), slurp(result.dir / "cloud_epoch_0004.csv"));
    EXPECT_THROW(export_cloud_from_run(result.dir, 3), IoError);
}

TEST(Boundary, UniformClassifierAndSmallGrid) {
    MlpNetwork d({2, 4, 3}, OutputMode::softmax);
    const Dataset data = make_constructed({});
    const auto grid = export_boundary(d, data, GridSpec{2, 0.15});
    EXPECT_EQ(grid.predicted.size(), 4u);
    for (auto c : grid.predicted) EXPECT_EQ(c, 0u);
    std::ostringstream os;
    write_boundary_csv(os, grid);
    const std::string text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,class,p0,p1,p2");
}

TEST(Boundary, GridMatchesDirectPredictionAndArgmax) {
    Rng rng(3);
    const MlpNetwork d = make_mlp({2, 10, 3}, OutputMode::softmax, rng);
    const Dataset data = standardize(load_iris(BON_IRIS_CSV, {0, 1}));
    const auto grid = export_boundary(d, data, GridSpec{25, 0.15});
    // Spans data range plus 15 % margin.
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < data.size(); ++i) {
        lo = std::min(lo, data.raw_features(i)[0]);
        hi = std::max(hi, data.raw_features(i)[0]);
    }
    EXPECT_NEAR(grid.x1.front(), lo - 0.15 * (hi - lo), 1e-12);
    EXPECT_NEAR(grid.x1.back(), hi + 0.15 * (hi - lo), 1e-12);
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 25; ++j) {
            const auto cell = i * 25 + j;
            const auto p = predict(d, data.stats->apply(std::vector<double>{grid.x1[i], grid.x2[j]}));
            EXPECT_EQ(grid.predicted[cell], p.predicted_class);
            EXPECT_EQ(grid.predicted[cell], argmax(grid.probs[cell]));
            EXPECT_NEAR(std::accumulate(grid.probs[cell].begin(), grid.probs[cell].end(), 0.0), 1.0, 1e-9);
        }
}

TEST(Boundary, RejectsNon2DModels) {
    MlpNetwork d({3, 2}, OutputMode::softmax);
    EXPECT_THROW(export_boundary(d, make_constructed({}), GridSpec{}), ShapeError);
}

TEST(Cloud, IdentityGeneratorsAndCardinality) {
    const Dataset data = make_constructed({});
    auto pop = GeneratorPopulation::from_networks(
        {make_identity_mlp({2, 4, 2}), make_identity_mlp({2, 4, 2}), make_identity_mlp({2, 4, 2})});
    MlpNetwork d({2, 3, 2}, OutputMode::softmax);
    const auto rows = export_synthetic_cloud(pop, data, d);
    EXPECT_EQ(rows.size(), 3 * data.size());
    for (const auto& r : rows) {
        EXPECT_EQ(r.synthetic, r.source);
        EXPECT_EQ(r.mse, 0.0);
        EXPECT_EQ(r.misclassified, r.label != 0u);
    }
}

TEST(Cloud, MeanSquaredDistanceMatchesMetrics) {
    const auto result = run(tiny(Mode::bonpp, "cloudmetrics"));
    const Experiment& ex = result.experiment;
    const auto rows = export_synthetic_cloud(ex.population, ex.data, ex.classifier);
    double from_coords = 0.0, from_column = 0.0;
    for (const auto& r : rows) {
        // The constructed preset is not standardized, so raw units are model units.
        from_coords += ((r.synthetic[0] - r.source[0]) * (r.synthetic[0] - r.source[0]) +
                        (r.synthetic[1] - r.source[1]) * (r.synthetic[1] - r.source[1])) /
                       2.0;
        from_column += r.mse;
    }
    EXPECT_NEAR(from_coords / rows.size(), ex.state.history.back().mean_synth_mse, 1e-9);
    EXPECT_NEAR(from_column / rows.size(), ex.state.history.back().mean_synth_mse, 1e-9);
}

TEST(Compare, SummaryRows) {
    const auto a = run(tiny(Mode::bon, "cmp_a")).dir;
    const auto b = run(tiny(Mode::bonpp, "cmp_b")).dir;
    const auto c = run(tiny(Mode::baseline, "cmp_c")).dir;

    const auto self = compare_runs({a, a});
    EXPECT_EQ(self[0].final_mean_synth_mse, self[1].final_mean_synth_mse);
    EXPECT_EQ(self[0].collapse_ratio, self[1].collapse_ratio);
    EXPECT_EQ(self[0].final_acc_real, self[1].final_acc_real);

    std::ostringstream os;
    write_summary_csv(os, compare_runs({a, b, c}));
    const std::string text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);

    const auto summary = summarize_run(a);
    const auto metrics = read_metrics(a);
    double peak = 0;
    for (const auto& m : metrics) peak = std::max(peak, m.mean_synth_mse);
    EXPECT_EQ(summary.collapse_ratio, metrics.back().mean_synth_mse / peak);

    try {
        compare_runs({a, scratch("missing_run")});
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("missing_run"), std::string::npos);
    }
    EXPECT_THROW(compare_runs({a}), ConfigError);
}
