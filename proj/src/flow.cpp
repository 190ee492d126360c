#include "pguide/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pguide/adam.hpp"
#include "pguide/errors.hpp"
#include "pguide/layers.hpp"

namespace pguide {

std::string_view to_string(FlowRegime r) {
    return r == FlowRegime::cfm_baseline ? "cfm_baseline" : "pguide_stage2";
}

FlowRegime flow_regime_from_string(std::string_view s) {
    if (s == "cfm_baseline") return FlowRegime::cfm_baseline;
    if (s == "pguide_stage2") return FlowRegime::pguide_stage2;
    throw ConfigError("unknown flow regime '" + std::string(s) + "'");
}

void time_features(double t, int fourier_pairs, std::span<double> out) {
    out[0] = t;
    double freq = std::numbers::pi;
    for (int k = 0; k < fourier_pairs; ++k) {
        out[1 + 2 * k] = std::sin(freq * t);
        out[2 + 2 * k] = std::cos(freq * t);
        freq *= 2.0;
    }
}

VelocityNet::VelocityNet(const VelocityNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.dim < 1 || cfg.num_classes < 1 || cfg.embed_dim < 0 || cfg.fourier_pairs < 0) {
        throw DomainError("VelocityNet: invalid configuration");
    }
    Tensor2 emb = normal_sample(rng, cfg.num_classes + 1, cfg.embed_dim);
    embed_ = ParamTensor("flow.embed", std::move(emb));

    int fan_in = cfg.input_width();
    std::vector<int> widths = cfg.hidden;
    widths.push_back(cfg.dim);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const bool head = l + 1 == widths.size();
        Tensor2 w(fan_in, widths[l]);
        if (!head) {
            w = normal_sample(rng, fan_in, widths[l]);
            w *= 1.0 / std::sqrt(static_cast<double>(fan_in));
        }
        weights_.emplace_back("flow.W" + std::to_string(l), std::move(w));
        biases_.emplace_back("flow.b" + std::to_string(l), Tensor2(1, widths[l]));
        fan_in = widths[l];
    }
}

std::vector<ParamTensor*> VelocityNet::params() {
    std::vector<ParamTensor*> out{&embed_};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<const ParamTensor*> VelocityNet::params() const {
    std::vector<const ParamTensor*> out{&embed_};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

Tensor2 VelocityNet::forward(const Tensor2& x, std::span<const double> t, std::span<const int> y,
                             Cache* cache) const {
    const std::size_t n = x.rows();
    if (x.cols() != static_cast<std::size_t>(cfg_.dim) || t.size() != n || y.size() != n) {
        throw ShapeError("VelocityNet::forward: batch shapes disagree");
    }
    Tensor2 h(n, cfg_.input_width());
    const int tf = cfg_.time_features();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(t[i] >= 0.0 && t[i] <= 1.0)) {
            throw DomainError("VelocityNet::forward: t=" + std::to_string(t[i]) +
                              " outside [0, 1]");
        }
        if (y[i] < 0 || y[i] > cfg_.num_classes) {
            throw DomainError("VelocityNet::forward: condition id " + std::to_string(y[i]) +
                              " out of range");
        }
        auto row = h.row_span(i);
        std::copy_n(x.row_span(i).begin(), cfg_.dim, row.begin());
        time_features(t[i], cfg_.fourier_pairs, row.subspan(cfg_.dim, tf));
        const auto e = embed_.value.row_span(y[i]);
        std::copy(e.begin(), e.end(), row.begin() + cfg_.dim + tf);
    }
    if (cache) {
        cache->labels.assign(y.begin(), y.end());
        cache->inputs.clear();
        cache->activations.clear();
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (cache) cache->inputs.push_back(h);
        h = affine_forward(h, weights_[l], biases_[l]);
        if (l + 1 < weights_.size()) {
            h = tanh_forward(h);
            if (cache) cache->activations.push_back(h);
        }
    }
    return h;
}

Tensor2 VelocityNet::backward(const Cache& cache, const Tensor2& dv) {
    Tensor2 g = dv;
    for (std::size_t l = weights_.size(); l-- > 0;) {
        if (l + 1 < weights_.size()) g = tanh_backward(cache.activations[l], g);
        g = affine_backward(cache.inputs[l], g, weights_[l], biases_[l]);
    }
    const int offset = cfg_.dim + cfg_.time_features();
    Tensor2 dx(g.rows(), cfg_.dim);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        auto grow = g.row_span(i);
        std::copy_n(grow.begin(), cfg_.dim, dx.row_span(i).begin());
        auto erow = embed_.grad.row_span(cache.labels[i]);
        for (int j = 0; j < cfg_.embed_dim; ++j) erow[j] += grow[offset + j];
    }
    return dx;
}

Tensor2 velocity_forward(const VelocityNet& net, const Tensor2& x, std::span<const double> t,
                         std::span<const int> y) {
    return net.forward(x, t, y);
}

std::vector<double> path_interp(std::span<const double> z, std::span<const double> x1, double t) {
    if (z.size() != x1.size()) throw ShapeError("path_interp: length mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("path_interp: t outside [0, 1]");
    std::vector<double> out(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = (1.0 - t) * z[j] + t * x1[j];
    return out;
}

double fm_loss(VelocityNet& net, const Tensor2& z, const Tensor2& x1, std::span<const int> y,
               std::span<const double> t) {
    if (!z.same_shape(x1)) throw ShapeError("fm_loss: z and x1 shapes differ");
    const std::size_t n = z.rows();
    if (n == 0) throw DomainError("fm_loss: empty batch");
    Tensor2 xt(n, z.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = path_interp(z.row_span(i), x1.row_span(i), t[i]);
        std::copy(p.begin(), p.end(), xt.row_span(i).begin());
    }
    VelocityNet::Cache cache;
    Tensor2 v = net.forward(xt, t, y, &cache);
    Tensor2 dv(n, z.cols());
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double r = v(i, j) - (x1(i, j) - z(i, j));
            loss += r * r;
            dv(i, j) = 2.0 * r * inv_n;
        }
    }
    loss *= inv_n;
    if (!std::isfinite(loss)) throw TrainingError("fm_loss: non-finite loss");
    net.backward(cache, dv);
    return loss;
}

FlowDraw draw_flow_batch(const LabeledBatch& data, const FlowTrainConfig& cfg,
                         const PriorModel* prior, Rng& rng) {
    const std::size_t n = cfg.batch;
    const std::size_t d = data.dim();
    FlowDraw draw{Tensor2(n, d), Tensor2(n, d), std::vector<int>(n), std::vector<double>(n)};
    const bool stage2 = cfg.regime == FlowRegime::pguide_stage2;
    if (stage2 && !prior) throw ConfigError("train_flow: pguide_stage2 requires a frozen prior");
    const double drop_p = stage2 ? cfg.stage2_dropout_p : cfg.cond_dropout_p;
    const int null_id = data.num_classes;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = rng.uniform_index(data.size());
        const auto src = data.x.row_span(idx);
        std::copy(src.begin(), src.end(), draw.x1.row_span(i).begin());
        const int label = data.y[idx];
        draw.t[i] = rng.uniform();
        auto z = draw.z.row_span(i);
        if (stage2) {
            const auto p = prior_forward(*prior, label);
            for (std::size_t j = 0; j < d; ++j) z[j] = p.mu[j] + p.sigma[j] * rng.normal();
        } else {
            for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
        }
        draw.y[i] = label;
        if (drop_p > 0.0 && rng.uniform() < drop_p) draw.y[i] = null_id;
    }
    return draw;
}

std::vector<double> train_flow(VelocityNet& net, const LabeledBatch& data,
                               const FlowTrainConfig& cfg, Rng& rng, const PriorModel* prior) {
    std::vector<double> history;
    if (cfg.regime == FlowRegime::pguide_stage2 && !prior) {
        throw ConfigError("train_flow: pguide_stage2 requires a frozen prior");
    }
    if (cfg.steps <= 0) return history;
    if (data.size() == 0) throw DomainError("train_flow: empty dataset");
    if (net.config().num_classes != data.num_classes ||
        static_cast<std::size_t>(net.config().dim) != data.dim()) {
        throw ShapeError("train_flow: network does not match dataset");
    }
    history.reserve(cfg.steps);
    auto params = net.params();
    Adam adam(params);
    for (long step = 1; step <= cfg.steps; ++step) {
        const FlowDraw draw = draw_flow_batch(data, cfg, prior, rng);
        zero_grads(params);
        double loss = 0.0;
        try {
            loss = fm_loss(net, draw.z, draw.x1, draw.y, draw.t);
        } catch (const TrainingError& e) {
            throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step),
                                history);
        }
        history.push_back(loss);
        const double progress = static_cast<double>(step - 1) / static_cast<double>(cfg.steps);
        AdamConfig acfg;
        acfg.lr = progress < 0.5 ? cfg.lr : cfg.lr * (1.0 - 1.8 * (progress - 0.5));
        try {
            adam.step(params, acfg, step);
        } catch (const TrainingError& e) {
            throw TrainingError(e.what(), history);
        }
    }
    return history;
}

}  // namespace pguide
