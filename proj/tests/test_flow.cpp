#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pguide/data.hpp"
#include "pguide/errors.hpp"
#include "pguide/flow.hpp"
#include "pguide/verify.hpp"

using namespace pguide;

namespace {

VelocityNetConfig small_config() {
    VelocityNetConfig c;
    c.hidden = {16, 16};
    c.embed_dim = 4;
    c.fourier_pairs = 3;
    return c;
}

// Randomizes every parameter, including the zero-initialized head, so that
// gradient checks exercise every path.
void scramble(VelocityNet& net, Rng& rng) {
    for (auto* p : net.params())
        for (auto& v : p->value.flat()) v = 0.5 * rng.normal();
}

}  // namespace

TEST_CASE("fresh network outputs exactly zero velocity") {
    Rng rng(1);
    const VelocityNet net(VelocityNetConfig{}, rng);
    const Tensor2 x = normal_sample(rng, 5, 2);
    const std::vector<double> t{0.0, 0.2, 0.5, 0.9, 1.0};
    const std::vector<int> y{0, 1, 2, 0, 1};
    const Tensor2 v = net.forward(x, t, y);
    for (double e : v.flat()) CHECK(e == 0.0);
}

TEST_CASE("input width is state plus time features plus embedding") {
    VelocityNetConfig c;
    CHECK(c.input_width() == 2 + 17 + 16);
    std::vector<double> f(c.time_features());
    time_features(0.25, c.fourier_pairs, f);
    CHECK(f[0] == 0.25);
    CHECK(f[1] == doctest::Approx(std::sin(std::numbers::pi * 0.25)));
    CHECK(f[2] == doctest::Approx(std::cos(std::numbers::pi * 0.25)));
    CHECK(f[15] == doctest::Approx(std::sin(128 * std::numbers::pi * 0.25)));
}

TEST_CASE("path_interp endpoints and midpoint") {
    const std::vector<double> z{1.0, -2.0}, x1{3.0, 4.0};
    CHECK(path_interp(z, x1, 0.0) == z);
    CHECK(path_interp(z, x1, 1.0) == x1);
    CHECK(path_interp(z, x1, 0.5) == std::vector<double>{2.0, 1.0});
    CHECK_THROWS_AS(path_interp(z, x1, 1.5), DomainError);
    CHECK_THROWS_AS(path_interp(z, std::vector<double>{1.0}, 0.5), ShapeError);
}

TEST_CASE("fm_loss of the zero network is the mean squared displacement") {
    Rng rng(2);
    VelocityNet net(small_config(), rng);
    const Tensor2 z(2, 2, {0.0, 0.0, 1.0, 1.0});
    const Tensor2 x1(2, 2, {3.0, 4.0, 1.0, 2.0});
    const std::vector<int> y{0, 1};
    const std::vector<double> t{0.3, 0.7};
    // |(3,4)|^2 = 25 and |(0,1)|^2 = 1, averaged over rows.
    CHECK(fm_loss(net, z, x1, y, t) == doctest::Approx(13.0));
}

TEST_CASE("fm_loss parameter gradients match finite differences") {
    Rng rng(3);
    VelocityNet net(small_config(), rng);
    scramble(net, rng);
    const Tensor2 z = normal_sample(rng, 8, 2);
    const Tensor2 x1 = normal_sample(rng, 8, 2);
    const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
    std::vector<double> t(8);
    for (auto& v : t) v = rng.uniform();
    auto params = net.params();
    const auto res = gradient_check(params, [&] { return fm_loss(net, z, x1, y, t); }, 100, rng);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("velocity input gradient matches finite differences") {
    Rng rng(4);
    VelocityNet net(small_config(), rng);
    scramble(net, rng);
    ParamTensor x("x", normal_sample(rng, 6, 2));
    const Tensor2 c = normal_sample(rng, 6, 2);
    const std::vector<int> y{0, 1, 2, 2, 1, 0};
    const std::vector<double> t{0.0, 0.1, 0.4, 0.6, 0.95, 1.0};
    std::vector<ParamTensor*> params{&x};
    auto loss = [&] {
        VelocityNet::Cache cache;
        const Tensor2 v = net.forward(x.value, t, y, &cache);
        double l = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) l += c.flat()[i] * v.flat()[i];
        x.grad += net.backward(cache, c);
        return l;
    };
    const auto res = gradient_check(params, loss, 100, rng);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("forward validates time and condition ranges") {
    Rng rng(5);
    const VelocityNet net(small_config(), rng);
    const Tensor2 x(1, 2);
    CHECK_THROWS_AS(net.forward(x, std::vector<double>{1.5}, std::vector<int>{0}), DomainError);
    CHECK_THROWS_AS(net.forward(x, std::vector<double>{0.5}, std::vector<int>{3}), DomainError);
    CHECK_THROWS_AS(net.forward(Tensor2(1, 3), std::vector<double>{0.5}, std::vector<int>{0}),
                    ShapeError);
}

TEST_CASE("baseline condition dropout rate is 0.1") {
    Rng data_rng(6), rng(7);
    const auto data = gen_two_mode(1000, data_rng);
    FlowTrainConfig cfg;
    cfg.batch = 100000;
    const auto draw = draw_flow_batch(data, cfg, nullptr, rng);
    double dropped = 0;
    for (int y : draw.y) dropped += y == data.num_classes;
    CHECK(std::abs(dropped / 100000 - 0.1) < 0.01);
    for (double t : draw.t) CHECK((t >= 0.0 && t < 1.0));
}

TEST_CASE("stage-2 draws seeds from the prior and keeps labels by default") {
    Rng data_rng(6), rng(8);
    const auto data = gen_two_mode(1000, data_rng);
    PriorModel prior = PriorModel::create(2, 2, VarianceMode::learnable);
    prior.mu.value(0, 0) = 10.0;
    prior.log_sigma.value(0, 0) = std::log(0.01);
    FlowTrainConfig cfg;
    cfg.regime = FlowRegime::pguide_stage2;
    cfg.batch = 2000;
    const auto draw = draw_flow_batch(data, cfg, &prior, rng);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        CHECK(draw.y[i] < 2);
        if (draw.y[i] == 0) CHECK(std::abs(draw.z(i, 0) - 10.0) < 0.1);
    }
    CHECK_THROWS_AS(draw_flow_batch(data, cfg, nullptr, rng), ConfigError);
}

TEST_CASE("flow training is deterministic and reduces the loss") {
    Rng data_rng(0);
    const auto data = gen_two_mode(500, data_rng);
    FlowTrainConfig cfg;
    cfg.steps = 150;
    cfg.batch = 64;
    auto run = [&] {
        Rng rng(11);
        VelocityNet net(small_config(), rng);
        auto h = train_flow(net, data, cfg, rng);
        return std::make_pair(h, net.params()[1]->value);
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    double head = 0, tail = 0;
    for (int i = 0; i < 20; ++i) head += a.first[i], tail += a.first[a.first.size() - 1 - i];
    CHECK(tail < head);
}

TEST_CASE("zero training steps leave the network untouched") {
    Rng data_rng(0), rng(1);
    const auto data = gen_two_mode(50, data_rng);
    VelocityNet net(small_config(), rng);
    const Tensor2 before = net.params()[1]->value;
    FlowTrainConfig cfg;
    cfg.steps = 0;
    CHECK(train_flow(net, data, cfg, rng).empty());
    CHECK(net.params()[1]->value == before);
    cfg.regime = FlowRegime::pguide_stage2;
    CHECK_THROWS_AS(train_flow(net, data, cfg, rng), ConfigError);
}
