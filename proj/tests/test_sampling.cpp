#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pguide/errors.hpp"
#include "pguide/sampling.hpp"

using namespace pguide;

namespace {

// v(x, t, y) = c[y]; label 2 is the null condition.
class LabelField final : public VelocityField {
public:
    int dim() const override { return 1; }
    int null_id() const override { return 2; }
    Tensor2 eval(const Tensor2& x, double, std::span<const int> y) const override {
        Tensor2 v(x.rows(), 1);
        for (std::size_t i = 0; i < x.rows(); ++i) v(i, 0) = c_[y[i]];
        return v;
    }

private:
    double c_[3] = {1.0, -1.0, 0.25};
};

PriorModel toy_prior() {
    PriorModel p = PriorModel::create(2, 1, VarianceMode::learnable);
    p.mu.value = Tensor2(3, 1, {2.0, -2.0, 0.0});
    p.log_sigma.value = Tensor2(3, 1, {std::log(0.5), std::log(0.5), std::log(2.0)});
    return p;
}

}  // namespace

TEST_CASE("constant field moves every seed by exactly c") {
    const ConstantField f({0.5, -1.25});
    Rng rng(1);
    const Tensor2 z0 = normal_sample(rng, 10, 2);
    const std::vector<int> y(10, 0);
    const auto traj = euler_integrate(f, z0, y, Vanilla{false}, 50, true);
    CHECK(traj.states.size() == 51);
    CHECK(traj.velocities.size() == 50);
    CHECK(traj.times.back() == 1.0);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(traj.final_state()(i, 0) == doctest::Approx(z0(i, 0) + 0.5).epsilon(1e-13));
        CHECK(traj.final_state()(i, 1) == doctest::Approx(z0(i, 1) - 1.25).epsilon(1e-13));
    }
}

TEST_CASE("Euler on v = x gives the (1 + 1/n)^n growth factor") {
    const LinearField f(Tensor2::identity(2));
    const Tensor2 z0(1, 2, {1.0, -3.0});
    const std::vector<int> y{0};
    for (int n : {1, 10, 50}) {
        const double g = std::pow(1.0 + 1.0 / n, n);
        const auto x1 = euler_integrate(f, z0, y, Vanilla{false}, n, false).final_state();
        CHECK(x1(0, 0) == doctest::Approx(g).epsilon(1e-13));
        CHECK(x1(0, 1) == doctest::Approx(-3.0 * g).epsilon(1e-13));
    }
}

TEST_CASE("flow_map stops at the requested time") {
    const ConstantField f({1.0});
    const Tensor2 z0(1, 1, {0.0});
    const std::vector<int> y{0};
    CHECK(flow_map(f, z0, y, 0.5, 50)(0, 0) == doctest::Approx(0.5));
    CHECK(flow_map(f, z0, y, 0.0, 50)(0, 0) == 0.0);
}

TEST_CASE("cfg velocity combines conditional and null fields") {
    const LabelField f;
    const Tensor2 z0(2, 1, {0.0, 0.0});
    const std::vector<int> y{0, 1};
    const auto x1 = euler_integrate(f, z0, y, DualCFG{2.0}, 10, false);
    CHECK(x1.final_state()(0, 0) == doctest::Approx(0.25 + 2.0 * 0.75));
    CHECK(x1.final_state()(1, 0) == doctest::Approx(0.25 + 2.0 * -1.25));
    CHECK(x1.eval_count == 20);
}

TEST_CASE("evaluation counts are single pass except for CFG") {
    const LabelField f;
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    const auto labels = balanced_labels(100, 2);
    Rng rng(0);
    CHECK(sample_batch(models, PGuide{2.0}, labels, 50, rng).eval_count_total == 5000);
    CHECK(sample_batch(models, PGuide{1.0, SeedVariant::mean_only}, labels, 50, rng).eval_count_total ==
          5000);
    CHECK(sample_batch(models, DistCFG{0.5}, labels, 50, rng).eval_count_total == 5000);
    CHECK(sample_batch(models, Vanilla{}, labels, 50, rng).eval_count_total == 5000);
    CHECK(sample_batch(models, DualCFG{1.5}, labels, 50, rng).eval_count_total == 10000);
    CHECK(sample_batch(models, DualCFG{1.0}, labels, 50, rng).eval_count_total == 5000);
    CHECK(sample_batch(models, Joint{1.5, 2.0}, labels, 50, rng).eval_count_total == 10000);
    CHECK(evals_per_step(DualCFG{3.0}) == 2);
    CHECK(evals_per_step(PGuide{3.0}) == 1);
}

TEST_CASE("P-Guide at w = 1 matches vanilla sampling from the conditional prior") {
    const LabelField f;
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    const auto labels = balanced_labels(40, 2);
    Rng a(5), b(5);
    const auto pg = sample_batch(models, PGuide{1.0}, labels, 20, a);
    const auto va = sample_batch(models, Vanilla{true}, labels, 20, b);
    CHECK(max_abs_diff(pg.samples, va.samples) < 1e-14);
}

TEST_CASE("sampling is deterministic per seed") {
    const LabelField f;
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    const auto labels = balanced_labels(30, 2);
    Rng a(9), b(9);
    CHECK(sample_batch(models, Joint{1.3, 1.7}, labels, 15, a).samples ==
          sample_batch(models, Joint{1.3, 1.7}, labels, 15, b).samples);
}

TEST_CASE("guided seeds follow the prior blend") {
    const LabelField f;
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    const std::vector<int> labels(20000, 0);
    Rng rng(2);
    // mean 0 + 1.5 * 2 = 3, scale 2 + 1.5 * (0.5 - 2) = -0.25 -> clamped to 0.
    int clamped = 0;
    const Tensor2 z = draw_seeds(models, PGuide{1.5}, labels, rng, &clamped);
    CHECK(clamped == 20000);
    for (double v : z.flat()) CHECK(v == doctest::Approx(3.0));
    const Tensor2 m = draw_seeds(models, PGuide{1.5, SeedVariant::mean_only}, labels, rng);
    double mean = 0, sq = 0;
    for (double v : m.flat()) mean += v, sq += v * v;
    mean /= 20000;
    CHECK(std::abs(mean - 3.0) < 0.02);
    CHECK(std::abs(std::sqrt(sq / 20000 - mean * mean) - 0.5) < 0.02);
}

TEST_CASE("invalid modes and missing priors are rejected") {
    const LabelField f;
    const SamplerModels no_prior{&f, nullptr};
    const std::vector<int> labels{0};
    Rng rng(0);
    CHECK_THROWS_AS(sample_batch(no_prior, PGuide{1.5}, labels, 5, rng), ConfigError);
    CHECK_THROWS_AS(sample_batch(no_prior, DualCFG{-1.0}, labels, 5, rng), DomainError);
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    CHECK_THROWS_AS(sample_batch(models, PGuide{1.5, SeedVariant::dist_cfg}, labels, 5, rng),
                    DomainError);
}

TEST_CASE("mode names") {
    CHECK(mode_name(Vanilla{}) == "vanilla");
    CHECK(mode_name(DualCFG{2}) == "dual_cfg");
    CHECK(mode_name(PGuide{2}) == "pguide");
    CHECK(mode_name(PGuide{2, SeedVariant::mean_only}) == "pguide_mean_only");
    CHECK(mode_name(DistCFG{2}) == "dist_cfg");
    CHECK(mode_name(Joint{2, 2}) == "joint");
    CHECK(mode_scale(Joint{1.25, 3.0}) == 1.25);
}

TEST_CASE("balanced labels cycle through classes") {
    CHECK(balanced_labels(5, 2) == std::vector<int>{0, 1, 0, 1, 0});
}

TEST_CASE("sample and trajectory CSV layout") {
    const LabelField f;
    const PriorModel prior = toy_prior();
    const SamplerModels models{&f, &prior};
    const auto labels = balanced_labels(3, 2);
    Rng rng(1);
    const auto res = sample_batch(models, PGuide{1.5, SeedVariant::mean_only}, labels, 4, rng, true);
    const auto dir = std::filesystem::temp_directory_path() / "pguide_test_sampling";
    std::filesystem::create_directories(dir);
    write_trajectory_csv(dir / "traj.csv", res.trajectory, res.labels, PGuide{1.5, SeedVariant::mean_only});
    write_samples_csv(dir / "samples.csv", res, PGuide{1.5, SeedVariant::mean_only});

    std::ifstream traj(dir / "traj.csv");
    std::string header, line;
    std::getline(traj, header);
    CHECK(header == "t,x0,label,mode,w");
    int rows = 0;
    while (std::getline(traj, line)) ++rows;
    CHECK(rows == 3 * 5);

    std::ifstream samples(dir / "samples.csv");
    std::getline(samples, header);
    CHECK(header == "t,x0,label,mode,w");
    std::getline(samples, line);
    CHECK(line.rfind("1,", 0) == 0);
    CHECK(line.find(",pguide_mean_only,1.5") != std::string::npos);
}
