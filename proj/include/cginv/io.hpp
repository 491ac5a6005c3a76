#pragma once

#include <cginv/types.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace cginv::io {

namespace fs = std::filesystem;

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& contents);
std::string read_file(const fs::path& path);

/// Headered CSV: first line "rows,cols", then one line per row.
/// Values use 17 significant digits so a round trip is bit-exact.
std::string format_matrix_csv(const Matrix& m);
Matrix parse_matrix_csv(const std::string& text);
void write_matrix_csv(const fs::path& path, const Matrix& m);
Matrix read_matrix_csv(const fs::path& path);

/// Vectors persist as an n×1 headered CSV.
void write_vector_csv(const fs::path& path, const Vector& v);
Vector read_vector_csv(const fs::path& path);

/// Grayscale image with values in [0,1], row-major.
struct Image {
    int width = 0;
    int height = 0;
    Vector pixels;
};

/// Binary PGM (P5). Reading maps samples linearly to [0,1] using the file's maxval;
/// writing clamps to [0,1] and quantizes to maxval 255.
Image read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Image& img);
std::string encode_pgm(const Image& img);

using KeyValues = std::map<std::string, std::string>;
/// "key=value" per line; '#' starts a comment.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

/// 64-bit FNV-1a over the raw bytes of the matrix entries and its shape.
std::uint64_t matrix_hash(const Matrix& m);
std::string hex64(std::uint64_t v);

std::string format_double(double v);

/// Strict parsers (surrounding blanks allowed); `line` is reported in FormatError.
double parse_double(std::string_view s, std::size_t line);
long parse_long(std::string_view s, std::size_t line);

} // namespace cginv::io
