#include <bon/datasets.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace bon;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / ("bon_datasets_test_" + name);
    std::ofstream(path) << content;
    return path;
}

} // namespace

TEST(LoadIris, StandardFile) {
    const Dataset ds = load_iris(BON_IRIS_CSV, {0, 1});
    EXPECT_EQ(ds.size(), 150u);
    EXPECT_EQ(ds.class_count, 3u);
    EXPECT_EQ(ds.feature_dim, 2u);
    std::vector<std::size_t> per_class(3, 0);
    for (const auto& s : ds.samples) ++per_class[s.label];
    EXPECT_EQ(per_class, (std::vector<std::size_t>{50, 50, 50}));
    EXPECT_EQ(ds.class_names.front(), "Iris-setosa");
    EXPECT_DOUBLE_EQ(ds.samples[0].features[0], 5.1);
    EXPECT_DOUBLE_EQ(ds.samples[0].features[1], 3.5);
}

TEST(LoadIris, FeatureSelection) {
    const Dataset ds = load_iris(BON_IRIS_CSV, {2, 3});
    EXPECT_EQ(ds.feature_dim, 2u);
    EXPECT_DOUBLE_EQ(ds.samples[0].features[0], 1.4);
    EXPECT_DOUBLE_EQ(ds.samples[0].features[1], 0.2);
}

TEST(LoadIris, TruncatedFile) {
    std::ifstream in(BON_IRIS_CSV);
    std::string line, text;
    for (int i = 0; i < 10 && std::getline(in, line); ++i) text += line + "\n";
    const Dataset ds = load_iris(temp_file("trunc.csv", text), {0, 1});
    EXPECT_EQ(ds.size(), 10u);
    EXPECT_EQ(ds.class_count, 1u);
}

TEST(LoadIris, MalformedRowReportsLine) {
    const auto path = temp_file("bad.csv", "5.1,3.5,1.4,0.2,Iris-setosa\n4.9,x,1.4,0.2,Iris-setosa\n");
    try {
        load_iris(path, {0, 1});
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(load_iris(temp_file("short.csv", "5.1,3.5,1.4,0.2,a\n5.1,3.5,b\n"), {0, 1}), ParseError);
}

TEST(LoadIris, MissingFile) {
    EXPECT_THROW(load_iris("/nonexistent/iris.csv", {0, 1}), IoError);
}

TEST(LoadIris, WriteBackRoundTrips) {
    const Dataset ds = load_iris(BON_IRIS_CSV, {0, 1});
    std::ostringstream os;
    write_iris_csv(os, ds);
    const Dataset back = load_iris(temp_file("roundtrip.csv", os.str()), {0, 1});
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back.samples[i].features, ds.samples[i].features);
        EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    }
}

TEST(MakeConstructed, DefaultSpec) {
    const Dataset ds = make_constructed(ConstructedSpec{});
    EXPECT_EQ(ds.size(), 101u);
    std::size_t at_outlier = 0;
    for (const auto& s : ds.samples)
        if (s.features == std::vector<double>{-1.2, -0.8}) {
            ++at_outlier;
            EXPECT_EQ(s.label, 1u);
        }
    EXPECT_EQ(at_outlier, 1u);
}

TEST(MakeConstructed, SeedDeterminism) {
    ConstructedSpec spec;
    spec.seed = 42;
    const Dataset a = make_constructed(spec), b = make_constructed(spec);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i].features, b.samples[i].features);
    spec.seed = 43;
    EXPECT_NE(make_constructed(spec).samples[0].features, a.samples[0].features);
}

TEST(MakeConstructed, ZeroSpreadCollapsesToCenters) {
    ConstructedSpec spec;
    spec.spreads = {0.0, 0.0};
    spec.outliers.clear();
    for (const auto& s : make_constructed(spec).samples) EXPECT_EQ(s.features, spec.centers[s.label]);
}

TEST(MakeConstructed, NegativeSpreadRejected) {
    ConstructedSpec spec;
    spec.spreads = {0.5, -0.1};
    EXPECT_THROW(make_constructed(spec), ConfigError);
}

TEST(Standardize, MomentsAndStats) {
    const Dataset ds = standardize(load_iris(BON_IRIS_CSV, {0, 1}));
    for (std::size_t f = 0; f < 2; ++f) {
        double mean = 0, var = 0;
        for (const auto& s : ds.samples) mean += s.features[f];
        mean /= ds.size();
        for (const auto& s : ds.samples) var += (s.features[f] - mean) * (s.features[f] - mean);
        var /= ds.size();
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(var, 1.0, 1e-9);
    }
    ASSERT_TRUE(ds.stats.has_value());
    EXPECT_NEAR(ds.raw_features(0)[0], 5.1, 1e-12);
}

TEST(Standardize, Idempotent) {
    const Dataset once = standardize(make_constructed({}));
    const Dataset twice = standardize(once);
    for (std::size_t i = 0; i < once.size(); ++i)
        for (std::size_t f = 0; f < 2; ++f) EXPECT_NEAR(once.samples[i].features[f], twice.samples[i].features[f], 1e-9);
    EXPECT_NEAR(twice.raw_features(3)[1], once.raw_features(3)[1], 1e-12);
}

TEST(Standardize, ShiftInvariant) {
    Dataset a = make_constructed({});
    Dataset b = a;
    for (auto& s : b.samples) {
        s.features[0] += 10.0;
        s.features[1] -= 3.0;
    }
    const Dataset sa = standardize(a), sb = standardize(b);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t f = 0; f < 2; ++f) EXPECT_NEAR(sa.samples[i].features[f], sb.samples[i].features[f], 1e-9);
}

TEST(Standardize, TwoPointSet) {
    Dataset ds;
    ds.feature_dim = 1;
    ds.class_count = 1;
    ds.samples = {{{0.0}, 0}, {{2.0}, 0}};
    const Dataset out = standardize(ds);
    EXPECT_DOUBLE_EQ(out.samples[0].features[0], -1.0);
    EXPECT_DOUBLE_EQ(out.samples[1].features[0], 1.0);
}

TEST(Standardize, Errors) {
    Dataset ds;
    ds.feature_dim = 2;
    ds.class_count = 1;
    ds.samples = {{{1.0, 0.0}, 0}, {{1.0, 2.0}, 0}};
    try {
        standardize(ds);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("feature 0"), std::string::npos);
    }
    ds.samples.resize(1);
    EXPECT_THROW(standardize(ds), ConfigError);
}

TEST(BatchIter, IrisBatches) {
    const Dataset ds = load_iris(BON_IRIS_CSV, {0, 1});
    const auto batches = batch_iter(ds, 10, 99);
    EXPECT_EQ(batches.size(), 15u);
    for (const auto& b : batches) EXPECT_EQ(b.size(), 10u);
}

TEST(BatchIter, FullBatchIsShuffledPermutation) {
    const Dataset ds = make_constructed({});
    const auto batches = batch_iter(ds, ds.size(), 5);
    ASSERT_EQ(batches.size(), 1u);
    std::vector<std::size_t> sorted = batches[0];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_NE(batches[0], sorted);
}

TEST(BatchIter, DeterministicAndCoversEverySampleOnce) {
    const Dataset ds = make_constructed({});
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto a = batch_iter(ds, 7, seed);
        EXPECT_EQ(a, batch_iter(ds, 7, seed));
        EXPECT_EQ(a.back().size(), 101u % 7);
        std::multiset<std::size_t> seen;
        for (const auto& b : a) seen.insert(b.begin(), b.end());
        EXPECT_EQ(seen.size(), ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(seen.count(i), 1u);
    }
}

TEST(BatchIter, Errors) {
    const Dataset ds = make_constructed({});
    EXPECT_THROW(batch_iter(ds, 0, 1), ConfigError);
    EXPECT_THROW(batch_iter(ds, 1000, 1), ConfigError);
}
