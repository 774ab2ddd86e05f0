#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mmrec/error.hpp"
#include "mmrec/linalg.hpp"

namespace mmrec {

/// Per-item content features, one row per encoded item index.
using FeatureMatrix = DenseMatrix;

namespace binio {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
    const std::array<unsigned char, 2> b{static_cast<unsigned char>(v),
                                         static_cast<unsigned char>(v >> 8)};
    write_bytes(out, b.data(), b.size());
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    std::array<unsigned char, 4> b{};
    for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b.data(), b.size());
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b.data(), b.size());
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
}

inline std::uint16_t read_u16(std::istream& in, const char* what) {
    std::array<unsigned char, 2> b{};
    read_bytes(in, b.data(), b.size(), what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    read_bytes(in, b.data(), b.size(), what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    std::array<unsigned char, 8> b{};
    read_bytes(in, b.data(), b.size(), what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

inline float read_f32(std::istream& in, const char* what) {
    const std::uint32_t bits = read_u32(in, what);
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double read_f64(std::istream& in, const char* what) {
    const std::uint64_t bits = read_u64(in, what);
    double v = 0.0;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace binio

/// Scale each nonzero row to unit L2 norm; zero rows are left untouched.
inline void normalize_rows(FeatureMatrix& m) {
    for (std::int64_t r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : row) v *= inv;
    }
}

/// Write an MMF1 feature file: magic "MMF1", version u32=1, rows u64,
/// cols u64, then row-major 32-bit IEEE values, all little-endian.
inline void save_feature_matrix(const std::string& path, const FeatureMatrix& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open feature file for writing: " + path);
    binio::write_bytes(out, "MMF1", 4);
    binio::write_u32(out, 1);
    binio::write_u64(out, static_cast<std::uint64_t>(m.rows));
    binio::write_u64(out, static_cast<std::uint64_t>(m.cols));
    for (double v : m.data) binio::write_f32(out, static_cast<float>(v));
    if (!out) throw IoError("failed writing feature file: " + path);
}

namespace detail {

inline FeatureMatrix load_features_mmf1(std::istream& in, const std::string& path) {
    char magic[4];
    binio::read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, "MMF1", 4) != 0) throw FormatError(path + ": bad MMF1 magic");
    const std::uint32_t version = binio::read_u32(in, "version");
    if (version != 1) {
        throw FormatError(path + ": unsupported MMF1 version " + std::to_string(version));
    }
    const std::uint64_t rows = binio::read_u64(in, "rows");
    const std::uint64_t cols = binio::read_u64(in, "cols");
    if (rows > (1ULL << 32) || cols > (1ULL << 24)) {
        throw FormatError(path + ": implausible dimensions " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    FeatureMatrix m(static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols));
    for (std::size_t k = 0; k < m.data.size(); ++k) {
        m.data[k] = static_cast<double>(binio::read_f32(in, "payload"));
    }
    return m;
}

// Test-fixture fallback: plain text, one row per line, comma- or
// whitespace-separated reals.
inline FeatureMatrix load_features_csv(std::istream& in, const std::string& path) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line) {
            if (c == ',' || c == '\t' || c == '\r') c = ' ';
        }
        // strtod rather than stream extraction: it also consumes nan/inf
        // tokens, which the finite-value scan downstream must get to reject.
        std::vector<double> row;
        const char* p = line.c_str();
        const char* line_end = p + line.size();
        while (p < line_end) {
            while (p < line_end && *p == ' ') ++p;
            if (p >= line_end) break;
            char* after = nullptr;
            const double v = std::strtod(p, &after);
            if (after == p) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": malformed number");
            }
            row.push_back(v);
            p = after;
        }
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    FeatureMatrix m(static_cast<std::int64_t>(rows.size()),
                    rows.empty() ? 0 : static_cast<std::int64_t>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m.data[r * rows[r].size() + c] = rows[r][c];
        }
    }
    return m;
}

}  // namespace detail

/// Load item features from MMF1 (sniffed by magic) or text fallback. Enforces
/// the expected row count, rejects non-finite entries, and optionally scales
/// rows to unit L2 norm.
inline FeatureMatrix load_feature_matrix(const std::string& path, std::int64_t expected_rows,
                                         bool normalize) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path);

    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    const bool is_mmf1 = in.gcount() == 4 && std::memcmp(magic, "MMF1", 4) == 0;
    in.clear();
    in.seekg(0);

    FeatureMatrix m = is_mmf1 ? detail::load_features_mmf1(in, path)
                              : detail::load_features_csv(in, path);

    if (expected_rows >= 0 && m.rows != expected_rows) {
        throw ShapeError(path + ": expected " + std::to_string(expected_rows) + " rows, found " +
                         std::to_string(m.rows));
    }
    for (std::int64_t r = 0; r < m.rows; ++r) {
        for (double v : m.row(r)) {
            if (!std::isfinite(v)) {
                throw DataError(path + ": non-finite value in row " + std::to_string(r));
            }
        }
    }
    if (normalize) normalize_rows(m);
    return m;
}

}  // namespace mmrec
