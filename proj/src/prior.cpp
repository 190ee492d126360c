#include "pguide/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pguide/adam.hpp"
#include "pguide/errors.hpp"

namespace pguide {

std::string_view to_string(VarianceMode m) {
    return m == VarianceMode::learnable ? "learnable" : "fixed_unit";
}

VarianceMode variance_mode_from_string(std::string_view s) {
    if (s == "learnable") return VarianceMode::learnable;
    if (s == "fixed_unit") return VarianceMode::fixed_unit;
    throw ConfigError("unknown variance_mode '" + std::string(s) + "'");
}

std::string_view to_string(SeedVariant v) {
    switch (v) {
        case SeedVariant::full: return "full";
        case SeedVariant::mean_only: return "mean_only";
        case SeedVariant::dist_cfg: return "dist_cfg";
    }
    return "?";
}

SeedVariant seed_variant_from_string(std::string_view s) {
    if (s == "full") return SeedVariant::full;
    if (s == "mean_only") return SeedVariant::mean_only;
    if (s == "dist_cfg") return SeedVariant::dist_cfg;
    throw ConfigError("unknown seed variant '" + std::string(s) + "'");
}

PriorModel PriorModel::create(int num_classes, int dim, VarianceMode mode) {
    if (num_classes < 1 || dim < 1) throw DomainError("PriorModel: need >= 1 class and dim");
    PriorModel m;
    m.num_classes = num_classes;
    m.dim = dim;
    m.variance_mode = mode;
    m.mu = ParamTensor("prior.mu", Tensor2(num_classes + 1, dim));
    m.log_sigma = ParamTensor("prior.log_sigma", Tensor2(num_classes + 1, dim));
    return m;
}

std::vector<ParamTensor*> PriorModel::params() {
    if (variance_mode == VarianceMode::fixed_unit) return {&mu};
    return {&mu, &log_sigma};
}

namespace {

void check_condition(const PriorModel& model, int y, bool allow_null) {
    const int hi = allow_null ? model.num_classes : model.num_classes - 1;
    if (y < 0 || y > hi) {
        throw DomainError("prior: condition id " + std::to_string(y) + " out of range [0, " +
                          std::to_string(hi) + "]");
    }
}

}  // namespace

PriorOutput prior_forward(const PriorModel& model, int y) {
    check_condition(model, y, true);
    PriorOutput out;
    out.mu = model.mu.value.row_vector(y);
    out.sigma = model.log_sigma.value.row_vector(y);
    for (auto& s : out.sigma) s = std::exp(s);
    return out;
}

double nll_loss(PriorModel& model, const LabeledBatch& batch) {
    if (batch.dim() != static_cast<std::size_t>(model.dim)) {
        throw ShapeError("nll_loss: batch dim does not match prior dim");
    }
    if (batch.size() == 0) throw DomainError("nll_loss: empty batch");
    const double norm = 1.0 / static_cast<double>(batch.size() * batch.dim());
    const bool learn_var = model.variance_mode == VarianceMode::learnable;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.y[i];
        check_condition(model, y, true);
        for (int j = 0; j < model.dim; ++j) {
            const double s = model.log_sigma.value(y, j);
            const double inv_var = std::exp(-2.0 * s);
            const double r = batch.x(i, j) - model.mu.value(y, j);
            total += 0.5 * r * r * inv_var + s;
            model.mu.grad(y, j) += -r * inv_var * norm;
            if (learn_var) model.log_sigma.grad(y, j) += (1.0 - r * r * inv_var) * norm;
        }
    }
    const double loss = total * norm;
    if (!std::isfinite(loss)) throw TrainingError("nll_loss: non-finite loss");
    return loss;
}

std::vector<double> train_prior(PriorModel& model, const LabeledBatch& data,
                                const PriorTrainConfig& cfg, Rng& rng) {
    std::vector<double> history;
    if (cfg.epochs <= 0) return history;
    if (data.size() == 0) throw DomainError("train_prior: empty dataset");
    std::vector<int> seen(model.num_classes, 0);
    for (int y : data.y) {
        check_condition(model, y, false);
        ++seen[y];
    }
    for (int k = 0; k < model.num_classes; ++k) {
        if (seen[k] == 0) {
            throw DomainError("train_prior: no samples for class " + std::to_string(k));
        }
    }

    auto params = model.params();
    Adam adam(params);
    const std::size_t n = data.size();
    const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
    const std::size_t batches_per_epoch = (n + bs - 1) / bs;
    const long total_steps = static_cast<long>(batches_per_epoch) * cfg.epochs;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the project RNG so shuffles are reproducible.
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t m = std::min(bs, n - start);
            LabeledBatch cond{Tensor2(m, data.dim()), std::vector<int>(m), model.num_classes};
            for (std::size_t i = 0; i < m; ++i) {
                const auto src = data.x.row_span(order[start + i]);
                std::copy(src.begin(), src.end(), cond.x.row_span(i).begin());
                cond.y[i] = data.y[order[start + i]];
            }
            LabeledBatch null_batch{cond.x, std::vector<int>(m, model.null_id()),
                                    model.num_classes};
            zero_grads(params);
            double loss = 0.0;
            try {
                loss = nll_loss(model, cond) + nll_loss(model, null_batch);
            } catch (const TrainingError& e) {
                throw TrainingError(e.what(), history);
            }
            epoch_loss += loss * static_cast<double>(m);

            ++step;
            const double progress = static_cast<double>(step - 1) / static_cast<double>(total_steps);
            AdamConfig acfg;
            acfg.lr = cfg.lr * (0.01 + 0.99 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
            try {
                adam.step(params, acfg, step);
            } catch (const TrainingError& e) {
                throw TrainingError(e.what(), history);
            }
            if (model.variance_mode == VarianceMode::learnable) {
                for (auto& s : model.log_sigma.value.flat()) {
                    s = std::clamp(s, kLogSigmaMin, kLogSigmaMax);
                }
            }
        }
        history.push_back(epoch_loss / static_cast<double>(n));
    }
    return history;
}

SeedResult guided_seed(const PriorModel& model, int y, double w, std::span<const double> eps,
                       SeedVariant variant) {
    check_condition(model, y, false);
    if (!std::isfinite(w) || w < 0.0) throw DomainError("guided_seed: w must be finite and >= 0");
    if (eps.size() != static_cast<std::size_t>(model.dim)) {
        throw ShapeError("guided_seed: eps length does not match prior dim");
    }
    SeedResult out;
    out.z.resize(model.dim);
    if (variant == SeedVariant::dist_cfg) {
        const auto g = dist_cfg_params(model, y, w);
        for (int j = 0; j < model.dim; ++j) out.z[j] = g.mu[j] + g.sigma[j] * eps[j];
        return out;
    }
    const auto cond = prior_forward(model, y);
    const auto uncond = prior_forward(model, model.null_id());
    for (int j = 0; j < model.dim; ++j) {
        const double mean = uncond.mu[j] + w * (cond.mu[j] - uncond.mu[j]);
        double scale = variant == SeedVariant::full
                           ? uncond.sigma[j] + w * (cond.sigma[j] - uncond.sigma[j])
                           : cond.sigma[j];
        if (scale < 0.0) {
            scale = 0.0;
            ++out.clamped;
        }
        out.z[j] = mean + scale * eps[j];
    }
    return out;
}

GaussianParams dist_cfg_gaussian(std::span<const double> mu_u, std::span<const double> sigma_u,
                                 std::span<const double> mu_c, std::span<const double> sigma_c,
                                 double w) {
    const std::size_t d = mu_u.size();
    if (sigma_u.size() != d || mu_c.size() != d || sigma_c.size() != d) {
        throw ShapeError("dist_cfg: parameter lengths differ");
    }
    GaussianParams out{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t j = 0; j < d; ++j) {
        const double pu = (1.0 - w) / (sigma_u[j] * sigma_u[j]);
        const double pc = w / (sigma_c[j] * sigma_c[j]);
        const double precision = pu + pc;
        if (!(precision > 0.0) || !std::isfinite(precision)) {
            throw DomainError("dist_cfg: non-positive combined precision in dimension " +
                              std::to_string(j));
        }
        const double var = 1.0 / precision;
        out.sigma[j] = std::sqrt(var);
        out.mu[j] = var * (pu * mu_u[j] + pc * mu_c[j]);
    }
    return out;
}

GaussianParams dist_cfg_params(const PriorModel& model, int y, double w) {
    check_condition(model, y, false);
    const auto c = prior_forward(model, y);
    const auto u = prior_forward(model, model.null_id());
    return dist_cfg_gaussian(u.mu, u.sigma, c.mu, c.sigma, w);
}

}  // namespace pguide
