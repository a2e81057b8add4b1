#include "d2st/data.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include "d2st/errors.hpp"
#include "d2st/rng.hpp"

namespace d2st::data {

namespace {

constexpr char kMagic[4] = {'D', '2', 'S', 'T'};
constexpr unsigned char kVersion = 0x01;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

Matrix load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open " + path.string());

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) {
            // a single trailing newline is fine; anything else is malformed
            if (in.peek() != std::char_traits<char>::eof())
                throw io_error(path.string() + ":" + std::to_string(line_no) + ": empty line");
            break;
        }
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= t.size()) {
            const std::size_t comma = t.find(',', pos);
            const std::string field =
                trim(t.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec != std::errc{} || ptr != field.data() + field.size())
                throw io_error(path.string() + ":" + std::to_string(line_no) +
                               ": cannot parse '" + field + "' as a number");
            if (!std::isfinite(value))
                throw io_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-finite value '" + field + "'");
            row.push_back(value);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (width == 0) width = row.size();
        else if (row.size() != width)
            throw io_error(path.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                           std::to_string(row.size()) + " fields, expected " +
                           std::to_string(width) + ")");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw io_error(path.string() + ": no data rows");

    Matrix m(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
    return m;
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<double>(bits);
}

Matrix load_d2b(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    auto fail = [&](std::size_t offset, const std::string& what) -> io_error {
        return io_error(path.string() + ": " + what + " at byte " + std::to_string(offset));
    };
    if (bytes.size() < 13) throw fail(bytes.size(), "truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw fail(0, "bad magic");
    if (bytes[4] != kVersion) throw fail(4, "unsupported version");

    const std::uint32_t rows = read_u32_le(bytes.data() + 5);
    const std::uint32_t cols = read_u32_le(bytes.data() + 9);
    if (rows == 0 || cols == 0) throw fail(5, "zero dimension");
    const std::size_t expected = 13 + 8ull * rows * cols;
    if (bytes.size() != expected)
        throw fail(bytes.size(), "size mismatch (expected " + std::to_string(expected) + " bytes)");

    Matrix m(rows, cols);
    std::size_t off = 13;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j, off += 8) {
            const double v = read_f64_le(bytes.data() + off);
            if (!std::isfinite(v)) throw fail(off, "non-finite value");
            m(i, j) = v;
        }
    return m;
}

void save_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw io_error("cannot open " + path.string() + " for writing");
    char buf[40];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
    if (!out)
        throw io_error("write failed: " + path.string());
}

void save_d2b(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    put_u32(static_cast<std::uint32_t>(m.rows()));
    put_u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.flat()) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    if (!out)
        throw io_error("write failed: " + path.string());
}

} // namespace

Matrix load_matrix(const std::filesystem::path& path, FileFormat format) {
    return format == FileFormat::csv ? load_csv(path) : load_d2b(path);
}

void save_matrix(const Matrix& m, const std::filesystem::path& path, FileFormat format,
                 bool overwrite) {
    if (!overwrite && std::filesystem::exists(path))
        throw io_error(path.string() + " exists; pass overwrite to replace it");
    if (!m.all_finite())
        throw contract_error("save_matrix: non-finite entries");
    if (format == FileFormat::csv) save_csv(m, path);
    else save_d2b(m, path);
}

FileFormat parse_format(const std::string& name) {
    if (name == "csv") return FileFormat::csv;
    if (name == "d2b") return FileFormat::d2b;
    throw config_error("unknown matrix format '" + name + "' (expected csv or d2b)");
}

void GeneratorSpec::validate() const {
    if (dim < 1)
        throw config_error("generator: d must be >= 1");
    if (!std::isfinite(shift) || !std::isfinite(scale) || !std::isfinite(ratio) ||
        !std::isfinite(transfer_delta))
        throw config_error("generator: parameters must be finite");
    if (transfer_delta < 0.0)
        throw config_error("generator: transfer_delta must be >= 0");
    switch (kind) {
    case GeneratorKind::gaussian_scale:
        if (scale <= 0.0) throw config_error("generator: scale must be > 0");
        break;
    case GeneratorKind::blobs:
        if (dim != 2) throw config_error("generator: blobs requires d = 2");
        if (grid < 1) throw config_error("generator: blob grid must be >= 1");
        if (ratio <= 0.0) throw config_error("generator: blob ratio must be > 0");
        break;
    case GeneratorKind::gaussian_shift:
        break;
    }
}

bool GeneratorSpec::null_only() const {
    switch (kind) {
    case GeneratorKind::gaussian_shift: return shift == 0.0;
    case GeneratorKind::gaussian_scale: return scale == 1.0;
    case GeneratorKind::blobs: return ratio == 1.0;
    }
    return false;
}

GeneratorKind parse_generator_kind(const std::string& name) {
    if (name == "gaussian_shift") return GeneratorKind::gaussian_shift;
    if (name == "gaussian_scale") return GeneratorKind::gaussian_scale;
    if (name == "blobs") return GeneratorKind::blobs;
    throw config_error("unknown generator kind '" + name + "'");
}

SampleRole parse_sample_role(const std::string& name) {
    if (name == "p") return SampleRole::p;
    if (name == "q") return SampleRole::q;
    if (name == "p_transfer") return SampleRole::p_transfer;
    if (name == "q_transfer") return SampleRole::q_transfer;
    throw config_error("unknown sample role '" + name + "'");
}

std::string to_string(GeneratorKind kind) {
    switch (kind) {
    case GeneratorKind::gaussian_shift: return "gaussian_shift";
    case GeneratorKind::gaussian_scale: return "gaussian_scale";
    case GeneratorKind::blobs: return "blobs";
    }
    return "?";
}

std::string to_string(SampleRole role) {
    switch (role) {
    case SampleRole::p: return "p";
    case SampleRole::q: return "q";
    case SampleRole::p_transfer: return "p_transfer";
    case SampleRole::q_transfer: return "q_transfer";
    }
    return "?";
}

namespace {

Matrix generate_gaussian_shift(std::size_t n, std::size_t d, double shift, Rng& rng) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.normal();
    if (shift != 0.0)
        for (std::size_t i = 0; i < n; ++i) m(i, 0) += shift;
    return m;
}

Matrix generate_gaussian_scale(std::size_t n, std::size_t d, double sd, Rng& rng) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = sd * rng.normal();
    return m;
}

// Equal-weight mixture over a grid x grid lattice (spacing 5). The
// component covariance is I for ratio 1, otherwise stretched to
// diag(ratio, 1/ratio) rotated by 45 degrees.
Matrix generate_blobs(std::size_t n, std::size_t grid, double ratio, Rng& rng) {
    constexpr double spacing = 5.0;
    const double s1 = std::sqrt(ratio);
    const double s2 = std::sqrt(1.0 / ratio);
    const double c = std::numbers::sqrt2 / 2.0;

    Matrix m(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t cell = rng.below(grid * grid);
        const double cx = spacing * static_cast<double>(cell % grid);
        const double cy = spacing * static_cast<double>(cell / grid);
        const double u = s1 * rng.normal();
        const double v = s2 * rng.normal();
        m(i, 0) = cx + c * (u - v);
        m(i, 1) = cy + c * (u + v);
    }
    return m;
}

} // namespace

Matrix generate(const GeneratorSpec& spec, std::size_t n, SampleRole role, std::uint64_t seed) {
    spec.validate();
    if (n < 1)
        throw contract_error("generate: n must be >= 1");

    const bool is_q = role == SampleRole::q || role == SampleRole::q_transfer;
    const bool is_transfer = role == SampleRole::p_transfer || role == SampleRole::q_transfer;
    const double perturb = is_transfer ? 1.0 + spec.transfer_delta : 1.0;

    Rng rng(derive_stream(seed, static_cast<std::uint64_t>(role)));
    switch (spec.kind) {
    case GeneratorKind::gaussian_shift:
        return generate_gaussian_shift(n, spec.dim, is_q ? spec.shift * perturb : 0.0, rng);
    case GeneratorKind::gaussian_scale:
        return generate_gaussian_scale(n, spec.dim, is_q ? spec.scale * perturb : 1.0, rng);
    case GeneratorKind::blobs:
        return generate_blobs(n, spec.grid, is_q ? spec.ratio * perturb : 1.0, rng);
    }
    throw contract_error("generate: unknown kind");
}

} // namespace d2st::data
