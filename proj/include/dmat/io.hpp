#pragma once

#include "dmat/error.hpp"
#include "dmat/types.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dmat {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

namespace io_detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

// Splits a line into whitespace-separated tokens without allocating copies.
inline std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_space(line[j])) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool blank_or_comment(std::string_view line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!is_space(c)) return false;
    }
    return true;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& file, std::size_t line) {
    T value{};
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ParseError(file, line, "cannot parse '" + std::string(tok) + "' as a number");
    return value;
}

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& file) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(file + ": truncated binary file");
    return v;
}

}  // namespace io_detail

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Feature matrices.
//   text:  header "N d", then N rows of d decimals
//   GFM1:  "GFM1", u64 N, u64 d, N*d f32 row-major (widened to f64 on read)
//   GFM8:  "GFM8", u64 N, u64 d, N*d f64 row-major
enum class MatrixFormat { text, gfm1, gfm8 };

inline Matrix read_matrix_text(const std::string& path) {
    const std::string content = read_text_file(path);
    std::string_view rest(content);
    std::size_t line_no = 0;
    std::optional<std::size_t> rows, cols;
    Matrix m;
    std::size_t row = 0;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        ++line_no;
        if (io_detail::blank_or_comment(line)) continue;
        auto toks = io_detail::tokens(line);
        if (!rows) {
            if (toks.size() != 2) throw ParseError(path, line_no, "expected header 'N d'");
            rows = io_detail::parse_number<std::size_t>(toks[0], path, line_no);
            cols = io_detail::parse_number<std::size_t>(toks[1], path, line_no);
            m.resize(static_cast<Eigen::Index>(*rows), static_cast<Eigen::Index>(*cols));
            continue;
        }
        if (row >= *rows) throw DimensionError(path + ": more than " + std::to_string(*rows) + " feature rows");
        if (toks.size() != *cols)
            throw ParseError(path, line_no,
                             "expected " + std::to_string(*cols) + " values, found " + std::to_string(toks.size()));
        for (std::size_t j = 0; j < *cols; ++j)
            m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) =
                io_detail::parse_number<double>(toks[j], path, line_no);
        ++row;
    }
    if (!rows) throw ParseError(path, line_no, "missing header 'N d'");
    if (row != *rows)
        throw DimensionError(path + ": header says " + std::to_string(*rows) + " rows, found " + std::to_string(row));
    return m;
}

inline void write_matrix_text(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << m.rows() << ' ' << m.cols() << '\n';
    std::string line;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        line.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) line.push_back(' ');
            line += io_detail::format_double(m(i, j));
        }
        line.push_back('\n');
        out << line;
    }
    if (!out) throw IoError("write failed: " + path);
}

inline void write_matrix_binary(const std::string& path, const Matrix& m, MatrixFormat fmt = MatrixFormat::gfm8) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(fmt == MatrixFormat::gfm1 ? "GFM1" : "GFM8", 4);
    io_detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    io_detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    if (fmt == MatrixFormat::gfm1) {
        std::vector<float> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
            out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
    } else {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!out) throw IoError("write failed: " + path);
}

inline std::optional<MatrixFormat> sniff_matrix_format(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4) {
        if (std::memcmp(magic, "GFM1", 4) == 0) return MatrixFormat::gfm1;
        if (std::memcmp(magic, "GFM8", 4) == 0) return MatrixFormat::gfm8;
    }
    return MatrixFormat::text;
}

inline Matrix read_matrix_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    const bool f32 = std::memcmp(magic, "GFM1", 4) == 0;
    const bool f64 = std::memcmp(magic, "GFM8", 4) == 0;
    if (!f32 && !f64) throw IoError(path + ": bad magic, expected GFM1 or GFM8");
    const auto rows = io_detail::read_pod<std::uint64_t>(in, path);
    const auto cols = io_detail::read_pod<std::uint64_t>(in, path);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (f32) {
        std::vector<float> row(cols);
        for (std::uint64_t i = 0; i < rows; ++i) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(float)));
            if (!in) throw IoError(path + ": truncated binary file");
            for (std::uint64_t j = 0; j < cols; ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(row[j]);
        }
    } else {
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
        if (!in) throw IoError(path + ": truncated binary file");
    }
    return m;
}

inline Matrix read_matrix(const std::string& path) {
    return *sniff_matrix_format(path) == MatrixFormat::text ? read_matrix_text(path) : read_matrix_binary(path);
}

inline std::vector<int> read_labels(const std::string& path) {
    const std::string content = read_text_file(path);
    std::string_view rest(content);
    std::vector<int> labels;
    std::size_t line_no = 0;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        ++line_no;
        if (io_detail::blank_or_comment(line)) continue;
        auto toks = io_detail::tokens(line);
        if (toks.size() != 1) throw ParseError(path, line_no, "expected one class id per line");
        labels.push_back(io_detail::parse_number<int>(toks[0], path, line_no));
    }
    return labels;
}

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (int y : labels) out << y << '\n';
}

}  // namespace dmat
