#pragma once

// Text model dump, format version 1:
//
//   mlp v1
//   <dim_0> <dim_1> ... <dim_L>
//   <param_0>
//   <param_1>
//   ...
//
// Parameters follow the flat ordering documented in nn.hpp, one per line, in
// shortest round-trip decimal form, so a dump reloads bit-exactly. Output mode
// and dropout are not stored; the caller supplies the output mode on load.

#include "format.hpp"
#include "nn.hpp"

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace bon {

inline constexpr std::string_view kModelHeader = "mlp v1";

inline void write_mlp(std::ostream& os, const MlpNetwork& net) {
    net.validate();
    os << kModelHeader << '\n';
    for (std::size_t i = 0; i < net.layer_dims.size(); ++i) os << (i ? " " : "") << net.layer_dims[i];
    os << '\n';
    for (double p : net.params) os << format_double(p) << '\n';
}

inline MlpNetwork read_mlp(std::istream& is, OutputMode mode) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line) || trim(line) != kModelHeader) throw ParseError("expected header 'mlp v1'", line_no);
    ++line_no;
    if (!std::getline(is, line)) throw ParseError("missing layer dims", line_no);
    std::vector<std::size_t> dims;
    {
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) {
            std::size_t d = 0;
            if (!parse_size(tok, d) || d == 0) throw ParseError("bad layer dim '" + tok + "'", line_no);
            dims.push_back(d);
        }
    }
    if (dims.size() < 2) throw ParseError("need at least two layer dims", line_no);
    MlpNetwork net(dims, mode);
    for (auto& p : net.params) {
        ++line_no;
        if (!std::getline(is, line)) throw ParseError("truncated parameter list", line_no);
        if (!parse_double(line, p)) throw ParseError("bad parameter value '" + line + "'", line_no);
    }
    while (std::getline(is, line)) {
        ++line_no;
        if (!trim(line).empty()) throw ParseError("trailing data after parameters", line_no);
    }
    return net;
}

inline void save_mlp(const std::filesystem::path& path, const MlpNetwork& net) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write model file " + path.string());
    write_mlp(os, net);
    if (!os) throw IoError("write failed for " + path.string());
}

inline MlpNetwork load_mlp(const std::filesystem::path& path, OutputMode mode) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open model file " + path.string());
    return read_mlp(is, mode);
}

} // namespace bon
