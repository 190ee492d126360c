#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>

#include "doctest.h"
#include "pguide/data.hpp"
#include "pguide/errors.hpp"

using namespace pguide;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pguide_test_data";
    fs::create_directories(dir);
    return dir / name;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("two-mode centers sit at radius 5, angles 0 and 4 rad") {
    const auto specs = two_mode_specs();
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].center[0] == doctest::Approx(5.0));
    CHECK(specs[0].center[1] == doctest::Approx(0.0));
    CHECK(specs[1].center[0] == doctest::Approx(-3.2682).epsilon(1e-4));
    CHECK(specs[1].center[1] == doctest::Approx(-3.7840).epsilon(1e-4));
    for (const auto& s : specs) CHECK(s.sigma == 0.5);
}

TEST_CASE("gen_two_mode is balanced and matches mode statistics") {
    Rng rng(1);
    const auto batch = gen_two_mode(10000, rng);
    CHECK(batch.size() == 10000);
    CHECK(batch.num_classes == 2);
    const auto specs = two_mode_specs();
    double count[2] = {0, 0}, mean[2][2] = {}, sq[2][2] = {};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.y[i];
        count[y] += 1;
        for (int j = 0; j < 2; ++j) {
            mean[y][j] += batch.x(i, j);
            sq[y][j] += batch.x(i, j) * batch.x(i, j);
        }
    }
    CHECK(count[0] == 5000);
    CHECK(count[1] == 5000);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j) {
            const double m = mean[k][j] / count[k];
            const double sd = std::sqrt(sq[k][j] / count[k] - m * m);
            CHECK(std::abs(m - specs[k].center[j]) < 0.03);
            CHECK(std::abs(sd - 0.5) < 0.02);
        }
}

TEST_CASE("odd sample counts differ by at most one per class") {
    Rng rng(2);
    const auto batch = gen_two_mode(7, rng);
    int ones = 0;
    for (int y : batch.y) ones += y;
    CHECK(ones == 3);
}

TEST_CASE("eight-mode ring has the expected means") {
    const auto specs = ring_specs(8, 3.0, 0.2);
    Rng rng(5);
    const auto batch = gen_k_mode(specs, 8000, rng);
    CHECK(batch.num_classes == 8);
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 8;
        double mx = 0, my = 0;
        int c = 0;
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (batch.y[i] == k) mx += batch.x(i, 0), my += batch.x(i, 1), ++c;
        CHECK(c == 1000);
        CHECK(std::abs(mx / c - 3.0 * std::cos(a)) < 0.03);
        CHECK(std::abs(my / c - 3.0 * std::sin(a)) < 0.03);
    }
}

TEST_CASE("gen_k_mode rejects bad specs") {
    Rng rng(0);
    std::vector<ModeSpec> none;
    CHECK_THROWS_AS(gen_k_mode(none, 10, rng), DomainError);
    auto specs = ring_specs(3, 1.0, 0.1);
    CHECK_THROWS_AS(gen_k_mode(specs, 2, rng), DomainError);
    specs[1].sigma = 0.0;
    CHECK_THROWS_AS(gen_k_mode(specs, 10, rng), DomainError);
    specs = ring_specs(3, 1.0, 0.1);
    specs[2].label = 5;
    CHECK_THROWS_AS(gen_k_mode(specs, 10, rng), DomainError);
    CHECK_THROWS_AS(gen_two_mode(1, rng), DomainError);
}

TEST_CASE("generation is deterministic per seed") {
    Rng a(42), b(42), c(43);
    const auto x = gen_two_mode(100, a);
    CHECK(x.x == gen_two_mode(100, b).x);
    CHECK_FALSE(x.x == gen_two_mode(100, c).x);
}

TEST_CASE("idx round trip and pixel rescaling") {
    IdxRaw images{kIdxImagesMagic, {3, 2, 2}, {0, 255, 128, 1, 2, 3, 4, 5, 6, 7, 8, 255}};
    IdxRaw labels{kIdxLabelsMagic, {3}, {7, 0, 9}};
    const auto pi = scratch("images.idx"), pl = scratch("labels.idx");
    idx_write_raw(pi, images);
    idx_write_raw(pl, labels);

    const auto back = idx_read_raw(pi);
    CHECK(back.magic == images.magic);
    CHECK(back.dims == images.dims);
    CHECK(back.bytes == images.bytes);

    const Tensor2 x = idx_load_images(pi);
    CHECK(x.rows() == 3);
    CHECK(x.cols() == 4);
    CHECK(x(0, 0) == -1.0);
    CHECK(x(0, 1) == 1.0);
    CHECK(x(0, 2) == doctest::Approx(128 / 127.5 - 1.0));
    CHECK(idx_load_labels(pl) == std::vector<int>{7, 0, 9});
}

TEST_CASE("idx bad magic reports the value read") {
    const auto p = scratch("bad_magic.idx");
    idx_write_raw(p, IdxRaw{0x00000802, {}, {}});
    const auto msg = message_of([&] { idx_read_raw(p); });
    CHECK(msg.find("0x00000802") != std::string::npos);
    CHECK_THROWS_AS(idx_read_raw(p), FormatError);
}

TEST_CASE("idx truncation reports expected and actual lengths") {
    const auto p = scratch("short.idx");
    idx_write_raw(p, IdxRaw{kIdxImagesMagic, {2, 2, 2}, {1, 2, 3}});
    const auto msg = message_of([&] { idx_read_raw(p); });
    CHECK(msg.find("3") != std::string::npos);
    CHECK(msg.find("8") != std::string::npos);
    CHECK_THROWS_AS(idx_load_images(p), FormatError);

    const auto h = scratch("short_header.idx");
    std::ofstream(h, std::ios::binary).write("\0\0\x08\x03\0\0", 6);
    CHECK_THROWS_AS(idx_read_raw(h), FormatError);
    CHECK_THROWS_AS(idx_read_raw(scratch("missing.idx")), IoError);
}

TEST_CASE("idx loaders check which kind of file they read") {
    const auto p = scratch("labels_as_images.idx");
    idx_write_raw(p, IdxRaw{kIdxLabelsMagic, {2}, {1, 2}});
    CHECK_THROWS_AS(idx_load_images(p), FormatError);
}
