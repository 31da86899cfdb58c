#include <bon/model_io.hpp>

#include <gtest/gtest.h>

#include "test_util.hpp"

#include <sstream>

using namespace bon;

TEST(ModelDump, ExactLayout) {
    MlpNetwork net({1, 2}, OutputMode::linear);
    net.params = {0.5, -2.0, 0.1, 3.0};
    std::ostringstream os;
    write_mlp(os, net);
    EXPECT_EQ(os.str(), "mlp v1\n1 2\n0.5\n-2\n0.1\n3\n");
}

TEST(ModelDump, RoundTripsBitExactly) {
    Rng rng(4);
    const auto net = bon::testing::random_net({2, 7, 5, 3}, OutputMode::softmax, rng);
    std::stringstream ss;
    write_mlp(ss, net);
    const MlpNetwork back = read_mlp(ss, OutputMode::softmax);
    EXPECT_EQ(back.layer_dims, net.layer_dims);
    EXPECT_EQ(back.params, net.params);
}

TEST(ModelDump, RejectsMalformedInput) {
    auto parse = [](const std::string& text) {
        std::istringstream is(text);
        return read_mlp(is, OutputMode::linear);
    };
    EXPECT_THROW(parse("mlp v2\n1 1\n0\n0\n"), ParseError);
    EXPECT_THROW(parse("mlp v1\n1 1\n0\n"), ParseError);
    EXPECT_THROW(parse("mlp v1\n1 1\n0\nabc\n"), ParseError);
    EXPECT_THROW(parse("mlp v1\n1 1\n0\n0\n7\n"), ParseError);
    try {
        parse("mlp v1\n1 1\n0\nabc\n");
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(ModelDump, MissingFile) {
    EXPECT_THROW(load_mlp("/nonexistent/model.mlp", OutputMode::linear), IoError);
}
