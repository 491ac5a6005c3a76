#include <cginv/io.hpp>

#include <cctype>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cginv::io {

void write_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, std::size_t line) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("bad number '" + std::string(s) + "'", line);
    return v;
}

long parse_long(std::string_view s, std::size_t line) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("bad integer '" + std::string(s) + "'", line);
    return v;
}

std::string format_matrix_csv(const Matrix& m) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m.size()) * 24 + 32);
    out += std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

Matrix parse_matrix_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw FormatError("empty matrix file", 0);
    auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("header must be 'rows,cols'", lineno);
    long rows = parse_long(std::string_view(line).substr(0, comma), lineno);
    long cols = parse_long(std::string_view(line).substr(comma + 1), lineno);
    if (rows < 0 || cols < 0) throw FormatError("negative dimensions", lineno);
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        ++lineno;
        if (!std::getline(in, line)) throw FormatError("truncated matrix: missing row", lineno);
        std::string_view rest(line);
        for (long j = 0; j < cols; ++j) {
            auto pos = rest.find(',');
            if (j + 1 < cols && pos == std::string_view::npos)
                throw FormatError("row has too few columns", lineno);
            std::string_view cell = (j + 1 < cols) ? rest.substr(0, pos) : rest;
            if (j + 1 == cols && cell.find(',') != std::string_view::npos)
                throw FormatError("row has too many columns", lineno);
            m(i, j) = parse_double(cell, lineno);
            if (j + 1 < cols) rest.remove_prefix(pos + 1);
        }
    }
    return m;
}

void write_matrix_csv(const fs::path& path, const Matrix& m) { write_atomic(path, format_matrix_csv(m)); }

Matrix read_matrix_csv(const fs::path& path) { return parse_matrix_csv(read_file(path)); }

void write_vector_csv(const fs::path& path, const Vector& v) { write_matrix_csv(path, Matrix(v)); }

Vector read_vector_csv(const fs::path& path) {
    Matrix m = read_matrix_csv(path);
    if (m.cols() != 1) throw FormatError("expected a single-column vector in " + path.string(), 1);
    return m.col(0);
}

namespace {

// Skips whitespace and '#' comments in a PGM header.
void skip_pgm_space(const std::string& s, std::size_t& pos) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
}

long read_pgm_int(const std::string& s, std::size_t& pos) {
    skip_pgm_space(s, pos);
    std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (start == pos) throw FormatError("malformed PGM header", 1);
    return std::stol(s.substr(start, pos - start));
}

} // namespace

Image read_pgm(const fs::path& path) {
    std::string s = read_file(path);
    if (s.size() < 2 || s[0] != 'P' || s[1] != '5')
        throw FormatError("not a binary PGM (P5): " + path.string(), 1);
    std::size_t pos = 2;
    long w = read_pgm_int(s, pos);
    long h = read_pgm_int(s, pos);
    long maxval = read_pgm_int(s, pos);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError("bad PGM dimensions", 1);
    ++pos; // single whitespace after maxval
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(w * h) * bpp;
    if (s.size() < pos + need) throw FormatError("truncated PGM raster: " + path.string(), 0);
    Image img{static_cast<int>(w), static_cast<int>(h), Vector(w * h)};
    for (long i = 0; i < w * h; ++i) {
        unsigned v;
        if (bpp == 1) {
            v = static_cast<unsigned char>(s[pos + i]);
        } else {
            v = (static_cast<unsigned char>(s[pos + 2 * i]) << 8) | static_cast<unsigned char>(s[pos + 2 * i + 1]);
        }
        img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return img;
}

std::string encode_pgm(const Image& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (Index i = 0; i < img.pixels.size(); ++i) {
        double v = std::clamp(img.pixels[i], 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    return out;
}

void write_pgm(const fs::path& path, const Image& img) { write_atomic(path, encode_pgm(img)); }

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos) throw FormatError("expected key=value", lineno);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t matrix_hash(const Matrix& m) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    mix(shape, sizeof shape);
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace cginv::io
