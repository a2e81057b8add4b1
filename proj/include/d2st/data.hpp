#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "d2st/matrix.hpp"

namespace d2st::data {

enum class FileFormat { csv, d2b };

// csv: comma-separated decimal doubles, UTF-8, no header, one
//      observation per line; written with 17 significant digits.
// d2b: magic "D2ST", version byte 0x01, u32 LE rows, u32 LE cols,
//      then rows*cols little-endian IEEE-754 doubles, row-major.
Matrix load_matrix(const std::filesystem::path& path, FileFormat format);
void save_matrix(const Matrix& m, const std::filesystem::path& path, FileFormat format,
                 bool overwrite = false);

FileFormat parse_format(const std::string& name); // "csv" | "d2b"

enum class GeneratorKind { gaussian_shift, gaussian_scale, blobs };
enum class SampleRole { p, q, p_transfer, q_transfer };

// Synthetic two-sample families. gaussian_shift: p = N(0, I_d),
// q = N(shift * e1, I_d). gaussian_scale: q = N(0, scale^2 I_d).
// blobs (d = 2): grid mixture whose per-component covariance is
// stretched by `ratio` for q. Transfer roles perturb the defining
// parameter by a factor (1 + transfer_delta).
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::gaussian_shift;
    std::size_t dim = 1;
    double shift = 1.0;          // gaussian_shift
    double scale = 2.0;          // gaussian_scale
    std::size_t grid = 3;        // blobs
    double ratio = 4.0;          // blobs
    double transfer_delta = 0.0;

    void validate() const;
    // true when p and q coincide (the H0 family; no type-2 sweep exists)
    bool null_only() const;
};

GeneratorKind parse_generator_kind(const std::string& name);
SampleRole parse_sample_role(const std::string& name);
std::string to_string(GeneratorKind kind);
std::string to_string(SampleRole role);

// Pure function of (spec, n, role, seed).
Matrix generate(const GeneratorSpec& spec, std::size_t n, SampleRole role, std::uint64_t seed);

} // namespace d2st::data
