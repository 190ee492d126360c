#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pguide/rng.hpp"
#include "pguide/tensor.hpp"

namespace pguide {

/// One isotropic Gaussian cluster. Labels run 0..K-1; K itself is the null id.
struct ModeSpec {
    std::array<double, 2> center{};
    double sigma = 1.0;
    int label = 0;
};

struct LabeledBatch {
    Tensor2 x;            // n x d
    std::vector<int> y;   // length n, each in [0, num_classes)
    int num_classes = 0;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t dim() const noexcept { return x.cols(); }
};

constexpr double kTwoModeRadius = 5.0;
constexpr double kTwoModeSigma = 0.5;

/// The two clusters at radius 5 and angles 0 and 4 rad, sigma 0.5.
std::vector<ModeSpec> two_mode_specs();

/// Labels are assigned round-robin over the spec list before noise is drawn,
/// so classes are balanced to within one sample.
LabeledBatch gen_k_mode(std::span<const ModeSpec> specs, std::size_t n, Rng& rng);
LabeledBatch gen_two_mode(std::size_t n, Rng& rng);

/// Specs placed evenly on a circle, for stress tests.
std::vector<ModeSpec> ring_specs(int k, double radius, double sigma);

// IDX binary format (MNIST). Big-endian header: magic 0x00000803 followed by
// three u32 dims for images, or 0x00000801 and one u32 dim for labels, then
// the payload as unsigned bytes.
constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// One row per image, pixels rescaled to [-1, 1] via p / 127.5 - 1.
Tensor2 idx_load_images(const std::filesystem::path& path);
std::vector<int> idx_load_labels(const std::filesystem::path& path);

/// Raw byte payload (no rescale) with its dimension list.
struct IdxRaw {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;
};
IdxRaw idx_read_raw(const std::filesystem::path& path);
void idx_write_raw(const std::filesystem::path& path, const IdxRaw& raw);

}  // namespace pguide
