#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "chargen/viz.hpp"

using namespace chargen;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "chargen_viz_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Trace over source "ab" with two hand-picked steps.
DecoderTrace sample_trace() {
    DecoderTrace trace;
    trace.source_length = 2;
    TraceStep s1;
    s1.attention = {1.0, 0.0};
    s1.p_gen = 0.25;
    s1.emitted = Alphabet::index_of('a');
    TraceStep s2;
    s2.attention = {0.5, 0.5};
    s2.p_gen = 0.75;
    s2.emitted = Alphabet::kEnd;
    trace.steps = {s1, s2};
    trace.hit_end_symbol = true;
    return trace;
}

}  // namespace

TEST_CASE("heatmap_from_trace") {
    auto trace = sample_trace();
    auto source = encode_text("ab");
    auto spec = heatmap_from_trace(trace, source);
    REQUIRE(spec.matrix.size() == 2);
    CHECK(spec.matrix[0] == std::vector<double>{1.0, 0.0});
    CHECK(spec.matrix[1] == std::vector<double>{0.5, 0.5});
    CHECK(spec.gate == std::vector<double>{0.25, 0.75});
    CHECK(spec.row_labels == std::vector<std::string>{"a", "</s>"});
    CHECK(spec.col_labels == std::vector<std::string>{"a", "b"});

    SECTION("reserved symbols get readable labels") {
        DecoderTrace t = trace;
        t.steps[0].emitted = Alphabet::kStart;
        t.steps[1].emitted = Alphabet::kUnknown;
        auto s = heatmap_from_trace(t, source);
        CHECK(s.row_labels == std::vector<std::string>{"<s>", "<u>"});
    }
    SECTION("errors") {
        DecoderTrace empty;
        empty.source_length = 2;
        CHECK_THROWS_AS(heatmap_from_trace(empty, source), ContractError);
        CHECK_THROWS_AS(heatmap_from_trace(trace, encode_text("abc")), ContractError);
        DecoderTrace ragged = trace;
        ragged.steps[1].attention.pop_back();
        CHECK_THROWS_AS(heatmap_from_trace(ragged, source), ContractError);
    }
}

TEST_CASE("pgm rendering") {
    auto trace = sample_trace();
    auto source = encode_text("ab");
    auto path = temp_path("heatmap.pgm");
    render(trace, source, path.string(), ImageFormat::PortableGraymap);
    auto img = read_pgm(path.string());

    SECTION("geometry: matrix rows, separator rule, gate strip") {
        REQUIRE(img.size() == 4);  // 2 matrix rows + rule + gate
        REQUIRE(img[0].size() == 2);
        // rule row is pure black
        CHECK(img[2] == std::vector<double>{0.0, 0.0});
    }
    SECTION("quantization stays within 1/255") {
        CHECK(std::abs(img[0][0] - 1.0) <= 1.0 / 255.0);
        CHECK(std::abs(img[0][1] - 0.0) <= 1.0 / 255.0);
        CHECK(std::abs(img[1][0] - 0.5) <= 1.0 / 255.0);
        // gate strip resamples the two gate values across the width
        CHECK(std::abs(img[3][0] - 0.25) <= 1.0 / 255.0);
        CHECK(std::abs(img[3][1] - 0.75) <= 1.0 / 255.0);
    }
    SECTION("out-of-range values clamp instead of wrapping") {
        auto spec = heatmap_from_trace(trace, source);
        spec.matrix[0][0] = 1.7;
        spec.matrix[0][1] = -0.3;
        auto p2 = temp_path("clamped.pgm");
        write_pgm(spec, p2.string());
        auto img2 = read_pgm(p2.string());
        CHECK(img2[0][0] == 1.0);
        CHECK(img2[0][1] == 0.0);
    }
    SECTION("rendering is byte-deterministic") {
        auto p2 = temp_path("heatmap2.pgm");
        render(trace, source, p2.string(), ImageFormat::PortableGraymap);
        CHECK(read_bytes(path) == read_bytes(p2));
    }
    SECTION("wide gate strips resample without going out of range") {
        DecoderTrace t;
        t.source_length = 7;
        for (int i = 0; i < 3; ++i) {
            TraceStep s;
            s.attention.assign(7, 1.0 / 7.0);
            s.p_gen = 0.1 * (i + 1);
            s.emitted = Alphabet::index_of('x');
            t.steps.push_back(s);
        }
        auto p3 = temp_path("wide.pgm");
        render(t, std::vector<std::size_t>(7, Alphabet::index_of('y')), p3.string(),
               ImageFormat::PortableGraymap);
        auto img3 = read_pgm(p3.string());
        REQUIRE(img3.size() == 5);
        REQUIRE(img3[4].size() == 7);
        for (double v : img3[4]) {
            CHECK(v >= 0.1 - 1.0 / 255.0);
            CHECK(v <= 0.3 + 1.0 / 255.0);
        }
    }
}

TEST_CASE("svg rendering") {
    auto trace = sample_trace();
    trace.steps[0].emitted = Alphabet::kStart;  // forces XML escaping of "<s>"
    auto source = encode_text("a\"");
    auto path = temp_path("heatmap.svg");
    render(trace, source, path.string(), ImageFormat::ScalableVector);
    auto svg = read_bytes(path);

    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("attention matrix 2x2") != std::string::npos);
    CHECK(svg.find("&lt;s&gt;") != std::string::npos);    // row label escaped
    CHECK(svg.find("&quot;") != std::string::npos);       // quote column label escaped
    CHECK(svg.find("</svg>") != std::string::npos);
    // cells: 2x2 matrix + 2 rule + 2 gate = 8 rects
    std::size_t rects = 0, pos = 0;
    while ((pos = svg.find("<rect", pos)) != std::string::npos) {
        ++rects;
        pos += 5;
    }
    CHECK(rects == 8);
    SECTION("byte-deterministic") {
        auto p2 = temp_path("heatmap2.svg");
        render(trace, source, p2.string(), ImageFormat::ScalableVector);
        CHECK(read_bytes(path) == read_bytes(p2));
    }
}

TEST_CASE("unwritable paths raise io errors") {
    auto trace = sample_trace();
    auto spec = heatmap_from_trace(trace, encode_text("ab"));
    CHECK_THROWS_AS(write_pgm(spec, "/nonexistent/dir/x.pgm"), IoError);
    CHECK_THROWS_AS(write_svg(spec, "/nonexistent/dir/x.svg"), IoError);
    CHECK_THROWS_AS(read_pgm("/nonexistent/dir/x.pgm"), IoError);
}
