#include "pguide/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "pguide/errors.hpp"

namespace pguide {

std::vector<ModeSpec> two_mode_specs() {
    std::vector<ModeSpec> specs;
    const double angles[] = {0.0, 4.0};
    for (int k = 0; k < 2; ++k) {
        specs.push_back({{kTwoModeRadius * std::cos(angles[k]), kTwoModeRadius * std::sin(angles[k])},
                         kTwoModeSigma,
                         k});
    }
    return specs;
}

std::vector<ModeSpec> ring_specs(int k, double radius, double sigma) {
    std::vector<ModeSpec> specs;
    for (int i = 0; i < k; ++i) {
        const double a = 2.0 * std::numbers::pi * i / k;
        specs.push_back({{radius * std::cos(a), radius * std::sin(a)}, sigma, i});
    }
    return specs;
}

LabeledBatch gen_k_mode(std::span<const ModeSpec> specs, std::size_t n, Rng& rng) {
    if (specs.empty()) throw DomainError("gen_k_mode: empty mode spec list");
    if (n < specs.size()) throw DomainError("gen_k_mode: fewer samples than modes");
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (!(specs[k].sigma > 0.0)) throw DomainError("gen_k_mode: sigma must be > 0");
        if (specs[k].label != static_cast<int>(k)) {
            throw DomainError("gen_k_mode: labels must be consecutive from 0");
        }
    }
    LabeledBatch batch;
    batch.num_classes = static_cast<int>(specs.size());
    batch.x = Tensor2(n, 2);
    batch.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) batch.y[i] = static_cast<int>(i % specs.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = specs[batch.y[i]];
        batch.x(i, 0) = s.center[0] + s.sigma * rng.normal();
        batch.x(i, 1) = s.center[1] + s.sigma * rng.normal();
    }
    return batch;
}

LabeledBatch gen_two_mode(std::size_t n, Rng& rng) {
    if (n < 2) throw DomainError("gen_two_mode: need at least 2 samples");
    const auto specs = two_mode_specs();
    return gen_k_mode(specs, n, rng);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("idx: truncated header in " + path.string());
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

IdxRaw idx_read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open " + path.string());
    IdxRaw raw;
    raw.magic = read_be32(in, path);
    std::size_t ndims = 0;
    if (raw.magic == kIdxImagesMagic) {
        ndims = 3;
    } else if (raw.magic == kIdxLabelsMagic) {
        ndims = 1;
    } else {
        throw FormatError("idx: bad magic " + hex32(raw.magic) + " in " + path.string());
    }
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        raw.dims.push_back(read_be32(in, path));
        total *= raw.dims.back();
    }
    raw.bytes.resize(total);
    in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::size_t>(in.gcount()) != total) {
        std::ostringstream os;
        os << "idx: payload length " << in.gcount() << " shorter than expected " << total
           << " in " << path.string();
        throw FormatError(os.str());
    }
    return raw;
}

void idx_write_raw(const std::filesystem::path& path, const IdxRaw& raw) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("idx: cannot write " + path.string());
    write_be32(out, raw.magic);
    for (auto d : raw.dims) write_be32(out, d);
    out.write(reinterpret_cast<const char*>(raw.bytes.data()),
              static_cast<std::streamsize>(raw.bytes.size()));
}

Tensor2 idx_load_images(const std::filesystem::path& path) {
    const IdxRaw raw = idx_read_raw(path);
    if (raw.magic != kIdxImagesMagic) {
        throw FormatError("idx: expected image magic, read " + hex32(raw.magic) + " in " +
                          path.string());
    }
    const std::size_t n = raw.dims[0];
    const std::size_t features = std::size_t{raw.dims[1]} * raw.dims[2];
    Tensor2 out(n, features);
    auto flat = out.flat();
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) flat[i] = raw.bytes[i] / 127.5 - 1.0;
    return out;
}

std::vector<int> idx_load_labels(const std::filesystem::path& path) {
    const IdxRaw raw = idx_read_raw(path);
    if (raw.magic != kIdxLabelsMagic) {
        throw FormatError("idx: expected label magic, read " + hex32(raw.magic) + " in " +
                          path.string());
    }
    return {raw.bytes.begin(), raw.bytes.end()};
}

}  // namespace pguide
