// chargen: character-level data-to-text generation toolkit
//
// viz.hpp - renders a decode trace as an attention heatmap with the copy
// gate strip underneath (white = more attention / generating).

#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "chargen/data.hpp"
#include "chargen/model.hpp"

namespace chargen {

enum class ImageFormat { PortableGraymap, ScalableVector };

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Attention matrix plus gate strip, ready for rendering.
struct HeatmapSpec {
    std::vector<std::vector<double>> matrix;  // T_y rows of T_x values in [0,1]
    std::vector<double> gate;                 // T_y values in [0,1]
    std::vector<std::string> row_labels;      // output characters
    std::vector<std::string> col_labels;      // input characters
};

namespace detail {

inline std::string label_for_index(std::size_t index) {
    if (index == Alphabet::kStart) return "<s>";
    if (index == Alphabet::kEnd) return "</s>";
    if (index == Alphabet::kUnknown) return "<u>";
    return Alphabet::decode(index);
}

}  // namespace detail

inline HeatmapSpec heatmap_from_trace(const DecoderTrace& trace,
                                      const std::vector<std::size_t>& source_chars) {
    if (trace.steps.empty()) throw ContractError("heatmap_from_trace: empty trace");
    if (source_chars.size() != trace.source_length)
        throw ContractError("heatmap_from_trace: source length mismatch");
    HeatmapSpec spec;
    for (const auto& step : trace.steps) {
        if (step.attention.size() != trace.source_length)
            throw ContractError("heatmap_from_trace: ragged attention row");
        spec.matrix.push_back(step.attention);
        spec.gate.push_back(step.p_gen);
        spec.row_labels.push_back(detail::label_for_index(step.emitted));
    }
    for (std::size_t c : source_chars) spec.col_labels.push_back(detail::label_for_index(c));
    return spec;
}

namespace detail {

inline unsigned char quantize(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<unsigned char>(v * 255.0 + 0.5);
}

}  // namespace detail

/// Binary P5 graymap: the T_y x T_x matrix, a 1-pixel black rule, then the
/// gate strip. 8-bit quantization, lossless within 1/255 on read-back.
inline void write_pgm(const HeatmapSpec& spec, const std::string& path) {
    std::size_t width = spec.col_labels.size();
    std::size_t height = spec.matrix.size() + 2;  // rule + gate strip
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    for (const auto& row : spec.matrix)
        for (double v : row) out.put(static_cast<char>(detail::quantize(v)));
    for (std::size_t j = 0; j < width; ++j) out.put('\0');  // separator rule
    // gate strip: one row of matrix width, T_y gate values resampled across it
    for (std::size_t j = 0; j < width; ++j) {
        std::size_t idx = spec.gate.size() * j / width;
        if (idx >= spec.gate.size()) idx = spec.gate.size() - 1;
        out.put(static_cast<char>(detail::quantize(spec.gate[idx])));
    }
    if (!out) throw IoError("error while writing image: " + path);
}

/// Read a P5 graymap back as doubles in [0,1]; used by tests and inspect.
inline std::vector<std::vector<double>> read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read image: " + path);
    std::string magic;
    std::size_t w, h;
    int maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255) throw IoError("unsupported graymap: " + path);
    in.get();  // single whitespace after header
    std::vector<std::vector<double>> img(h, std::vector<double>(w));
    for (auto& row : img)
        for (double& v : row) {
            int c = in.get();
            if (c < 0) throw IoError("truncated graymap: " + path);
            v = static_cast<double>(c) / 255.0;
        }
    return img;
}

namespace detail {

inline std::string gray_fill(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", quantize(v), quantize(v), quantize(v));
    return buf;
}

}  // namespace detail

/// Minimal SVG: one rect per cell plus axis character labels.
inline void write_svg(const HeatmapSpec& spec, const std::string& path) {
    constexpr int cell = 12;
    constexpr int margin = 24;
    std::size_t T_y = spec.matrix.size();
    std::size_t T_x = spec.col_labels.size();
    std::size_t width = margin + T_x * cell + 4;
    std::size_t height = margin + (T_y + 2) * cell + 4;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<!-- attention matrix " << T_y << "x" << T_x << " -->\n";
    auto rect = [&](std::size_t x, std::size_t y, const std::string& fill) {
        out << "<rect x=\"" << margin + x * cell << "\" y=\"" << margin + y * cell
            << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << fill
            << "\"/>\n";
    };
    auto escape = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else if (c == '"') o += "&quot;";
            else o.push_back(c);
        }
        return o;
    };
    for (std::size_t j = 0; j < T_x; ++j)
        out << "<text x=\"" << margin + j * cell + cell / 2 << "\" y=\"" << margin - 6
            << "\" font-size=\"9\" text-anchor=\"middle\" font-family=\"monospace\">"
            << escape(spec.col_labels[j]) << "</text>\n";
    for (std::size_t i = 0; i < T_y; ++i) {
        out << "<text x=\"" << margin - 6 << "\" y=\"" << margin + i * cell + cell - 3
            << "\" font-size=\"9\" text-anchor=\"end\" font-family=\"monospace\">"
            << escape(spec.row_labels[i]) << "</text>\n";
        for (std::size_t j = 0; j < T_x; ++j)
            rect(j, i, detail::gray_fill(spec.matrix[i][j]));
    }
    for (std::size_t j = 0; j < T_x; ++j) rect(j, T_y, "#000000");  // separator rule
    for (std::size_t j = 0; j < T_x; ++j) {
        std::size_t idx = spec.gate.size() * j / T_x;
        if (idx >= spec.gate.size()) idx = spec.gate.size() - 1;
        rect(j, T_y + 1, detail::gray_fill(spec.gate[idx]));
    }
    out << "</svg>\n";
    if (!out) throw IoError("error while writing image: " + path);
}

inline void render(const DecoderTrace& trace, const std::vector<std::size_t>& source_chars,
                   const std::string& path, ImageFormat format) {
    auto spec = heatmap_from_trace(trace, source_chars);
    if (format == ImageFormat::PortableGraymap) write_pgm(spec, path);
    else write_svg(spec, path);
}

}  // namespace chargen
