#include "pguide/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pguide/errors.hpp"

namespace pguide {

using nlohmann::json;

json CheckResult::to_json() const {
    return json{{"name", name},       {"inputs", inputs}, {"measured", measured},
                {"threshold", threshold}, {"pass", pass}, {"gated", gated}};
}

GradCheckResult gradient_check(std::span<ParamTensor* const> params,
                               const std::function<double()>& loss, int probes, Rng& rng,
                               double step, double floor) {
    zero_grads(params);
    loss();
    std::vector<Tensor2> analytic;
    std::size_t total = 0;
    for (const auto* p : params) {
        analytic.push_back(p->grad);
        total += p->value.size();
    }
    if (total == 0) throw DomainError("gradient_check: no parameters");

    GradCheckResult out;
    for (int probe = 0; probe < probes; ++probe) {
        std::size_t flat = rng.uniform_index(total);
        std::size_t k = 0;
        while (flat >= params[k]->value.size()) flat -= params[k++]->value.size();
        double& v = params[k]->value.flat()[flat];
        const double saved = v;
        v = saved + step;
        const double lp = loss();
        v = saved - step;
        const double lm = loss();
        v = saved;
        const double numeric = (lp - lm) / (2.0 * step);
        const double a = analytic[k].flat()[flat];
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        if (probe == 0 || rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst_param = params[k]->name;
        }
        ++out.probes;
    }
    zero_grads(params);
    return out;
}

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw DomainError("fit_loglog_slope: need >= 2 paired points");
    }
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
            throw DomainError("fit_loglog_slope: values must be positive");
        }
        mx += std::log(xs[i]);
        my += std::log(ys[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = std::log(xs[i]) - mx;
        sxy += dx * (std::log(ys[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace {

void validate_epsilons(std::span<const double> eps) {
    if (eps.size() < 3) throw DomainError("linear response: need >= 3 epsilon values");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) throw DomainError("linear response: epsilons must be positive");
        if (i > 0 && !(eps[i] < eps[i - 1])) {
            throw DomainError("linear response: epsilons must be strictly decreasing");
        }
    }
    if (eps.front() / eps.back() < 4.0) {
        throw DomainError("linear response: epsilons must span at least a factor of 4");
    }
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::optional<double> exponent_or_exact(std::span<const double> eps,
                                        std::span<const double> values) {
    const bool exact = std::all_of(values.begin(), values.end(),
                                   [](double r) { return r < kExactLinearThreshold; });
    if (exact) return std::nullopt;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > 0.0) {
            xs.push_back(eps[i]);
            ys.push_back(values[i]);
        }
    }
    if (xs.size() < 2) return std::nullopt;
    return fit_loglog_slope(xs, ys);
}

}  // namespace

Tensor2 flow_jacobian(const VelocityField& field, std::span<const double> z, int label, double t,
                      double h, int steps) {
    if (!(h > 0.0)) throw DomainError("flow_jacobian: h must be > 0");
    const std::size_t d = z.size();
    if (static_cast<int>(d) != field.dim()) throw ShapeError("flow_jacobian: dim mismatch");
    // Rows 2i and 2i+1 hold z + h e_i and z - h e_i.
    Tensor2 probes(2 * d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            probes(2 * i, j) = z[j];
            probes(2 * i + 1, j) = z[j];
        }
        probes(2 * i, i) += h;
        probes(2 * i + 1, i) -= h;
    }
    const std::vector<int> labels(2 * d, label);
    const Tensor2 mapped = flow_map(field, probes, labels, t, steps);
    Tensor2 jac(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t r = 0; r < d; ++r)
            jac(r, i) = (mapped(2 * i, r) - mapped(2 * i + 1, r)) / (2.0 * h);
    return jac;
}

LinearResponseReport linear_response_check(const VelocityField& field, std::span<const double> z,
                                           std::span<const double> dz, int label, double t,
                                           std::span<const double> epsilons, int steps,
                                           double h) {
    validate_epsilons(epsilons);
    if (dz.size() != z.size()) throw ShapeError("linear_response_check: dz length mismatch");
    if (norm(dz) == 0.0) throw DomainError("linear_response_check: dz must be nonzero");
    const std::size_t d = z.size();

    LinearResponseReport rep;
    rep.epsilons.assign(epsilons.begin(), epsilons.end());
    rep.jacobian = flow_jacobian(field, z, label, t, h, steps);

    Tensor2 batch(epsilons.size() + 1, d);
    for (std::size_t j = 0; j < d; ++j) batch(0, j) = z[j];
    for (std::size_t e = 0; e < epsilons.size(); ++e)
        for (std::size_t j = 0; j < d; ++j) batch(e + 1, j) = z[j] + epsilons[e] * dz[j];
    const std::vector<int> labels(batch.rows(), label);
    const Tensor2 mapped = flow_map(field, batch, labels, t, steps);

    std::vector<double> jdz(d, 0.0);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) jdz[r] += rep.jacobian(r, c) * dz[c];

    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        std::vector<double> rem(d);
        for (std::size_t j = 0; j < d; ++j)
            rem[j] = mapped(e + 1, j) - mapped(0, j) - epsilons[e] * jdz[j];
        rep.remainders.push_back(norm(rem));
    }
    rep.fitted_exponent = exponent_or_exact(rep.epsilons, rep.remainders);
    return rep;
}

VelocityResponseReport velocity_response_check(const VelocityField& field,
                                               std::span<const double> z,
                                               std::span<const double> dz, int label,
                                               std::span<const double> times,
                                               std::span<const double> epsilons, int steps) {
    validate_epsilons(epsilons);
    if (dz.size() != z.size()) throw ShapeError("velocity_response_check: dz length mismatch");
    if (norm(dz) == 0.0) throw DomainError("velocity_response_check: dz must be nonzero");
    if (times.empty()) throw DomainError("velocity_response_check: empty time grid");
    const std::size_t d = z.size();
    const std::size_t ne = epsilons.size();

    // Row 0: base; row 1 + 2e: z + eps dz; row 2 + 2e: z + (eps / 2) dz.
    Tensor2 batch(1 + 2 * ne, d);
    for (std::size_t j = 0; j < d; ++j) batch(0, j) = z[j];
    for (std::size_t e = 0; e < ne; ++e) {
        for (std::size_t j = 0; j < d; ++j) {
            batch(1 + 2 * e, j) = z[j] + epsilons[e] * dz[j];
            batch(2 + 2 * e, j) = z[j] + 0.5 * epsilons[e] * dz[j];
        }
    }
    const std::vector<int> labels(batch.rows(), label);
    const Trajectory traj = euler_integrate(field, batch, labels, Vanilla{false}, steps, true);

    VelocityResponseReport rep;
    rep.epsilons.assign(epsilons.begin(), epsilons.end());
    rep.aggregate.assign(ne, 0.0);
    for (double t : times) {
        if (!(t >= 0.0 && t <= 1.0)) throw DomainError("velocity_response_check: t outside [0, 1]");
        const int k = static_cast<int>(std::lround(t * steps));
        const double tk = static_cast<double>(k) / steps;
        rep.times.push_back(tk);
        const Tensor2 v = k < steps ? traj.velocities[k] : field.eval(traj.states[k], tk, labels);
        auto diff = [&](std::size_t row) {
            std::vector<double> out(d);
            for (std::size_t j = 0; j < d; ++j) out[j] = v(row, j) - v(0, j);
            return out;
        };
        std::vector<double> devs;
        for (std::size_t e = 0; e < ne; ++e) {
            const auto full = diff(1 + 2 * e);
            const auto half = diff(2 + 2 * e);
            std::vector<double> dev(d);
            for (std::size_t j = 0; j < d; ++j) dev[j] = full[j] - 2.0 * half[j];
            devs.push_back(norm(dev));
            rep.aggregate[e] += devs.back() * devs.back();
            if (e + 1 == ne) {
                std::vector<double> dir(d);
                for (std::size_t j = 0; j < d; ++j) dir[j] = full[j] / epsilons[e];
                rep.directions.push_back(std::move(dir));
            }
        }
        rep.per_time_exponent.push_back(exponent_or_exact(rep.epsilons, devs));
        rep.deviations.push_back(std::move(devs));
    }
    for (auto& a : rep.aggregate) a = std::sqrt(a);
    rep.aggregate_exponent = exponent_or_exact(rep.epsilons, rep.aggregate);
    return rep;
}

namespace {

double log_normal_iso(std::span<const double> x, std::span<const double> mean, double var) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - mean[j]) * (x[j] - mean[j]);
    const double d = static_cast<double>(x.size());
    return -0.5 * r2 / var - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

/// Posterior responsibilities p(k | xt), computed with log-sum-exp.
std::vector<double> responsibilities(std::span<const MixtureComponent> mix, double sigma_t,
                                     std::span<const double> xt) {
    std::vector<double> logw(mix.size());
    double wsum = 0.0;
    for (const auto& c : mix) wsum += c.weight;
    for (std::size_t k = 0; k < mix.size(); ++k) {
        const double var = mix[k].sigma * mix[k].sigma + sigma_t * sigma_t;
        logw[k] = std::log(mix[k].weight / wsum) + log_normal_iso(xt, mix[k].mean, var);
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double s = 0.0;
    for (double l : logw) s += std::exp(l - mx);
    const double lse = mx + std::log(s);
    for (auto& l : logw) l = std::exp(l - lse);
    return logw;
}

}  // namespace

ScoreIdentityPoint score_identity_at(std::span<const MixtureComponent> mixture, double sigma_t,
                                     std::span<const double> xt, int y) {
    if (mixture.empty()) throw DomainError("score check: empty mixture");
    if (!(sigma_t > 0.0)) throw DomainError("score check: sigma_t must be > 0");
    if (y < 0 || y >= static_cast<int>(mixture.size())) {
        throw DomainError("score check: condition out of range");
    }
    const std::size_t d = xt.size();
    for (const auto& c : mixture) {
        if (c.mean.size() != d) throw ShapeError("score check: component dim mismatch");
        if (!(c.sigma > 0.0) || !(c.weight > 0.0)) {
            throw DomainError("score check: component sigma and weight must be > 0");
        }
    }
    const double s2t = sigma_t * sigma_t;
    const auto r = responsibilities(mixture, sigma_t, xt);

    ScoreIdentityPoint out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    // Posterior-mean route: E[x0 | xt, k] = m_k + s_k^2 / (s_k^2 + sigma_t^2) (xt - m_k).
    auto posterior_mean = [&](std::size_t k, std::size_t j) {
        const double s2 = mixture[k].sigma * mixture[k].sigma;
        return mixture[k].mean[j] + s2 / (s2 + s2t) * (xt[j] - mixture[k].mean[j]);
    };
    // Score route: grad log N(xt; m_k, (s_k^2 + sigma_t^2) I).
    auto score = [&](std::size_t k, std::size_t j) {
        const double s2 = mixture[k].sigma * mixture[k].sigma;
        return -(xt[j] - mixture[k].mean[j]) / (s2 + s2t);
    };
    for (std::size_t j = 0; j < d; ++j) {
        double marginal_mean = 0.0, marginal_score = 0.0;
        for (std::size_t k = 0; k < mixture.size(); ++k) {
            marginal_mean += r[k] * posterior_mean(k, j);
            marginal_score += r[k] * score(k, j);
        }
        out.lhs[j] = posterior_mean(y, j) - marginal_mean;
        out.rhs[j] = s2t * (score(y, j) - marginal_score);
    }
    return out;
}

double score_connection_check(std::span<const MixtureComponent> mixture, double sigma_t,
                              std::span<const std::vector<double>> xt_grid) {
    double worst = 0.0;
    for (const auto& x : xt_grid) {
        for (int y = 0; y < static_cast<int>(mixture.size()); ++y) {
            const auto p = score_identity_at(mixture, sigma_t, x, y);
            for (std::size_t j = 0; j < p.lhs.size(); ++j)
                worst = std::max(worst, std::abs(p.lhs[j] - p.rhs[j]));
        }
    }
    return worst;
}

AttenuationReport grad_attenuation_check(Rng& rng, int probes, double tol) {
    constexpr int d = 2;
    AttenuationReport rep;
    for (int p = 0; p < probes; ++p) {
        PriorModel model = PriorModel::create(1, d, VarianceMode::learnable);
        LabeledBatch batch{Tensor2(1, d), {0}, 1};
        for (int j = 0; j < d; ++j) {
            model.mu.value(0, j) = -5.0 + 10.0 * rng.uniform();
            model.log_sigma.value(0, j) = -2.0 + 4.0 * rng.uniform();
            batch.x(0, j) = -5.0 + 10.0 * rng.uniform();
        }
        auto grad_mu = [&] {
            model.mu.zero_grad();
            model.log_sigma.zero_grad();
            nll_loss(model, batch);
            // nll_loss averages over the d coordinates of the single sample.
            std::vector<double> g(d);
            for (int j = 0; j < d; ++j) g[j] = model.mu.grad(0, j) * d;
            return g;
        };
        const auto g1 = grad_mu();
        for (int j = 0; j < d; ++j) {
            const double sigma = std::exp(model.log_sigma.value(0, j));
            const double closed = -(batch.x(0, j) - model.mu.value(0, j)) / (sigma * sigma);
            rep.max_identity_error = std::max(
                rep.max_identity_error, std::abs(g1[j] - closed) / std::max(1.0, std::abs(closed)));
        }
        for (int j = 0; j < d; ++j) model.log_sigma.value(0, j) += std::numbers::ln2;
        const auto g2 = grad_mu();
        for (int j = 0; j < d; ++j) {
            if (g1[j] == 0.0) continue;
            rep.max_scaling_error = std::max(rep.max_scaling_error, std::abs(g2[j] / g1[j] - 0.25));
        }
        ++rep.probes;
    }
    rep.pass = rep.max_identity_error <= tol && rep.max_scaling_error <= tol;
    return rep;
}

ModeAccuracyReport mode_accuracy(const Tensor2& samples, std::span<const int> labels,
                                 std::span<const ModeSpec> specs, double radius_mult) {
    if (samples.rows() != labels.size()) throw ShapeError("mode_accuracy: label count mismatch");
    if (specs.empty()) throw DomainError("mode_accuracy: no mode specs");
    if (samples.cols() != 2) throw ShapeError("mode_accuracy: samples must be 2-D");
    ModeAccuracyReport rep;
    rep.assignment_radius = radius_mult;
    rep.per_class_accuracy.assign(specs.size(), 0.0);
    rep.per_class_count.assign(specs.size(), 0);
    std::vector<std::size_t> correct(specs.size(), 0);
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(specs.size())) {
            throw DomainError("mode_accuracy: label " + std::to_string(y) + " has no mode spec");
        }
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < specs.size(); ++k) {
            const double dx = samples(i, 0) - specs[k].center[0];
            const double dy = samples(i, 1) - specs[k].center[1];
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist < best_d) {
                best_d = dist;
                best = k;
            }
        }
        ++rep.per_class_count[y];
        if (specs[best].label == y && best_d <= radius_mult * specs[best].sigma) {
            ++correct[y];
            ++total_correct;
        }
    }
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (rep.per_class_count[k] > 0) {
            rep.per_class_accuracy[k] =
                static_cast<double>(correct[k]) / static_cast<double>(rep.per_class_count[k]);
        }
    }
    rep.overall = labels.empty() ? 0.0
                                 : static_cast<double>(total_correct) /
                                       static_cast<double>(labels.size());
    return rep;
}

SeedStatReport seed_stat_check(const PriorModel& prior, int y, SeedVariant variant, double w,
                               std::size_t n, Rng& rng) {
    if (n < 2) throw DomainError("seed_stat_check: need n >= 2");
    const std::size_t d = prior.dim;
    SeedStatReport rep;
    rep.empirical_mean.assign(d, 0.0);
    rep.empirical_std.assign(d, 0.0);
    std::vector<double> m2(d, 0.0);
    std::vector<double> eps(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& e : eps) e = rng.normal();
        const auto z = guided_seed(prior, y, w, eps, variant).z;
        // Welford update.
        for (std::size_t j = 0; j < d; ++j) {
            const double delta = z[j] - rep.empirical_mean[j];
            rep.empirical_mean[j] += delta / static_cast<double>(i + 1);
            m2[j] += delta * (z[j] - rep.empirical_mean[j]);
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        rep.empirical_std[j] = std::sqrt(m2[j] / static_cast<double>(n - 1));

    const auto c = prior_forward(prior, y);
    const auto u = prior_forward(prior, prior.null_id());
    std::optional<GaussianParams> poe;
    try {
        poe = dist_cfg_params(prior, y, w);
    } catch (const DomainError&) {
    }
    rep.analytic_mean.resize(d);
    rep.analytic_std.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        const double full_scale = std::max(0.0, u.sigma[j] + w * (c.sigma[j] - u.sigma[j]));
        switch (variant) {
            case SeedVariant::full:
                rep.analytic_mean[j] = u.mu[j] + w * (c.mu[j] - u.mu[j]);
                rep.analytic_std[j] = full_scale;
                break;
            case SeedVariant::mean_only:
                rep.analytic_mean[j] = u.mu[j] + w * (c.mu[j] - u.mu[j]);
                rep.analytic_std[j] = c.sigma[j];
                break;
            case SeedVariant::dist_cfg:
                if (!poe) throw DomainError("seed_stat_check: distribution CFG is undefined here");
                rep.analytic_mean[j] = poe->mu[j];
                rep.analytic_std[j] = poe->sigma[j];
                break;
        }
        rep.max_mean_dev =
            std::max(rep.max_mean_dev, std::abs(rep.empirical_mean[j] - rep.analytic_mean[j]));
        rep.max_std_dev =
            std::max(rep.max_std_dev, std::abs(rep.empirical_std[j] - rep.analytic_std[j]));
        if (poe) rep.scale_gap.push_back(full_scale - poe->sigma[j]);
    }
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

json optional_exponent(const std::optional<double>& e) {
    return e ? json(*e) : json("exact-linear");
}

CheckResult score_identity_check() {
    const std::vector<MixtureComponent> mix = {{{-2.0}, 0.5, 0.3}, {{3.0}, 1.0, 0.7}};
    constexpr double sigma_t = 0.7;
    std::vector<std::vector<double>> grid;
    for (int i = 0; i < 100; ++i) grid.push_back({-6.0 + 12.0 * i / 99.0});
    const double worst = score_connection_check(mix, sigma_t, grid);
    CheckResult r;
    r.name = "score_connection_identity";
    r.inputs = {{"means", {-2.0, 3.0}}, {"sigmas", {0.5, 1.0}}, {"weights", {0.3, 0.7}},
                {"sigma_t", sigma_t},   {"grid", "100 points on [-6, 6]"},
                {"noising", "x_t = x_0 + sigma_t * eps"}};
    r.measured = {{"max_violation", worst}};
    r.threshold = {{"max_violation", 1e-8}};
    r.pass = worst < 1e-8;
    return r;
}

CheckResult dist_cfg_homoscedastic_check(Rng& rng) {
    double worst = 0.0;
    for (int p = 0; p < 100; ++p) {
        const std::vector<double> mu_u = {rng.normal(), rng.normal()};
        const std::vector<double> mu_c = {rng.normal(), rng.normal()};
        const double s = 0.2 + 2.0 * rng.uniform();
        const std::vector<double> sig = {s, s};
        const double w = 3.0 * rng.uniform();
        const auto g = dist_cfg_gaussian(mu_u, sig, mu_c, sig, w);
        for (int j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(g.mu[j] - ((1.0 - w) * mu_u[j] + w * mu_c[j])));
            worst = std::max(worst, std::abs(g.sigma[j] - s));
        }
    }
    CheckResult r;
    r.name = "dist_cfg_homoscedastic";
    r.inputs = {{"probes", 100}, {"w_range", {0.0, 3.0}}};
    r.measured = {{"max_abs_error", worst}};
    r.threshold = {{"max_abs_error", 1e-12}};
    r.pass = worst <= 1e-12;
    return r;
}

CheckResult dist_cfg_worked_example_check() {
    const std::vector<double> mu_u = {0.0}, sig_u = {1.0}, mu_c = {4.0}, sig_c = {2.0};
    const auto g = dist_cfg_gaussian(mu_u, sig_u, mu_c, sig_c, 0.5);
    const double var = g.sigma[0] * g.sigma[0];
    CheckResult r;
    r.name = "dist_cfg_worked_example";
    r.inputs = {{"mu_u", 0.0}, {"sigma_u", 1.0}, {"mu_c", 4.0}, {"sigma_c", 2.0}, {"w", 0.5}};
    r.measured = {{"sigma_cfg_sq", var}, {"mu_cfg", g.mu[0]}};
    r.threshold = {{"sigma_cfg_sq", 1.6}, {"mu_cfg", 0.8}, {"tolerance", 1e-12}};
    r.pass = std::abs(var - 1.6) <= 1e-12 && std::abs(g.mu[0] - 0.8) <= 1e-12;
    return r;
}

CheckResult attenuation_check(Rng& rng) {
    const auto rep = grad_attenuation_check(rng, 100, 1e-12);
    CheckResult r;
    r.name = "loss_attenuation";
    r.inputs = {{"probes", rep.probes}, {"sigma_scaling", 2.0}};
    r.measured = {{"max_identity_error", rep.max_identity_error},
                  {"max_scaling_error", rep.max_scaling_error}};
    r.threshold = {{"tolerance", 1e-12}, {"expected_scaling", 0.25}};
    r.pass = rep.pass;
    return r;
}

const std::vector<double> kResponseEpsilons = {0.1, 0.05, 0.025, 0.0125};

CheckResult linear_field_check() {
    const LinearField field(Tensor2(2, 2, {0.3, -0.2, 0.1, 0.4}));
    const std::vector<double> z = {0.7, -0.4}, dz = {0.6, 0.8};
    const auto state = linear_response_check(field, z, dz, 0, 1.0, kResponseEpsilons);
    const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
    const auto vel = velocity_response_check(field, z, dz, 0, times, kResponseEpsilons);
    // The Euler map of v = A x over n steps is (I + A / n)^n.
    Tensor2 expected = Tensor2::identity(2);
    const Tensor2 step = Tensor2::identity(2) + field.matrix() * (1.0 / 50.0);
    for (int k = 0; k < 50; ++k) expected = matmul(expected, step);
    const double jac_err = max_abs_diff(expected, state.jacobian);

    CheckResult r;
    r.name = "linear_field_response";
    r.inputs = {{"A", {{0.3, -0.2}, {0.1, 0.4}}}, {"z", z}, {"dz", dz},
                {"epsilons", kResponseEpsilons}, {"steps", 50}};
    r.measured = {{"state_remainders", state.remainders},
                  {"state_exponent", optional_exponent(state.fitted_exponent)},
                  {"velocity_exponent", optional_exponent(vel.aggregate_exponent)},
                  {"jacobian_error_vs_euler_product", jac_err}};
    r.threshold = {{"state_exponent", "exact-linear"},
                   {"velocity_exponent", "exact-linear"},
                   {"jacobian_error", 1e-9}};
    r.pass = !state.fitted_exponent && !vel.aggregate_exponent && jac_err <= 1e-9;
    return r;
}

}  // namespace

namespace {

double velocity_jacobian_frobenius(const VelocityField& field, const Tensor2& x, double t,
                                   int label, double h) {
    const std::size_t d = x.cols();
    Tensor2 probes(2 * d, d);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = 0; j < d; ++j) probes(2 * k, j) = probes(2 * k + 1, j) = x(0, j);
        probes(2 * k, k) += h;
        probes(2 * k + 1, k) -= h;
    }
    const std::vector<int> labels(2 * d, label);
    const Tensor2 v = field.eval(probes, t, labels);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < d; ++j) {
            const double g = (v(2 * k, j) - v(2 * k + 1, j)) / (2.0 * h);
            sq += g * g;
        }
    return std::sqrt(sq);
}

}  // namespace

GronwallReport gronwall_check(const VelocityField& field, std::span<const double> z_c,
                              std::span<const double> z_u, int label, int steps, double h) {
    if (z_c.size() != z_u.size() || z_c.size() != static_cast<std::size_t>(field.dim())) {
        throw ShapeError("gronwall_check: seed lengths must match the field dim");
    }
    if (steps < 1) throw DomainError("gronwall_check: steps must be >= 1");
    Tensor2 x(2, z_c.size());
    std::copy(z_c.begin(), z_c.end(), x.row_span(0).begin());
    std::copy(z_u.begin(), z_u.end(), x.row_span(1).begin());
    const std::vector<int> labels(2, label);
    const double dt = 1.0 / steps;
    auto separation = [&] {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) s += (x(0, j) - x(1, j)) * (x(0, j) - x(1, j));
        return std::sqrt(s);
    };
    GronwallReport rep;
    double bound = separation();
    rep.times.push_back(0.0);
    rep.deviation.push_back(bound);
    rep.bound.push_back(bound);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const Tensor2 row_c(1, x.cols(), x.row_vector(0)), row_u(1, x.cols(), x.row_vector(1));
        const double lip = std::max(velocity_jacobian_frobenius(field, row_c, t, label, h),
                                    velocity_jacobian_frobenius(field, row_u, t, label, h));
        rep.lipschitz.push_back(lip);
        x += field.eval(x, t, labels) * dt;
        bound *= 1.0 + dt * lip;
        rep.times.push_back(static_cast<double>(k + 1) / steps);
        rep.deviation.push_back(separation());
        rep.bound.push_back(bound);
    }
    rep.holds = true;
    for (std::size_t k = 0; k < rep.deviation.size(); ++k) {
        rep.max_deviation = std::max(rep.max_deviation, rep.deviation[k]);
        if (rep.deviation[k] > rep.bound[k] * (1.0 + 1e-9)) rep.holds = false;
    }
    return rep;
}

std::vector<CheckResult> run_analytic_checks(Rng& rng) {
    std::vector<CheckResult> out;
    out.push_back(score_identity_check());
    out.push_back(dist_cfg_homoscedastic_check(rng));
    out.push_back(dist_cfg_worked_example_check());
    out.push_back(attenuation_check(rng));
    out.push_back(linear_field_check());
    return out;
}

std::vector<CheckResult> run_model_checks(const ModelCheckInputs& in, const LabeledBatch* data,
                                          Rng& rng) {
    std::vector<CheckResult> out;
    if (in.net && in.prior) {
        const NetField field(*in.net);
        constexpr int y = 0;
        const auto c = prior_forward(*in.prior, y);
        const auto u = prior_forward(*in.prior, in.prior->null_id());
        // Perturb along the unit prior shift mu_y - mu_null, starting from a
        // conditional seed one sigma off the class mean.
        std::vector<double> z(c.mu.size()), dz(c.mu.size());
        double dn = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] = c.mu[j] + c.sigma[j] * (j == 0 ? 1.0 : -1.0);
            dz[j] = c.mu[j] - u.mu[j];
            dn += dz[j] * dz[j];
        }
        dn = std::sqrt(dn);
        if (dn == 0.0) {
            dz.assign(dz.size(), 0.0);
            dz[0] = 1.0;
        } else {
            for (auto& v : dz) v /= dn;
        }
        const auto state = linear_response_check(field, z, dz, y, 1.0, kResponseEpsilons, in.steps);
        CheckResult s;
        s.name = "state_linear_response";
        s.inputs = {{"z", z}, {"dz", dz}, {"label", y}, {"t", 1.0},
                    {"epsilons", kResponseEpsilons}, {"steps", in.steps}, {"h", 1e-4}};
        s.measured = {{"remainders", state.remainders},
                      {"fitted_exponent", optional_exponent(state.fitted_exponent)}};
        s.threshold = {{"exponent_range", {1.7, 2.3}}};
        s.pass = state.fitted_exponent && *state.fitted_exponent >= 1.7 &&
                 *state.fitted_exponent <= 2.3;
        out.push_back(std::move(s));

        const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
        const auto vel = velocity_response_check(field, z, dz, y, times, kResponseEpsilons, in.steps);
        CheckResult v;
        v.name = "velocity_linear_response";
        json per_time = json::array();
        for (const auto& e : vel.per_time_exponent) per_time.push_back(optional_exponent(e));
        v.inputs = {{"z", z}, {"dz", dz}, {"label", y}, {"times", vel.times},
                    {"epsilons", kResponseEpsilons}, {"steps", in.steps},
                    {"statement", "||D(eps) - 2 D(eps/2)|| = O(eps^2): first-order homogeneity "
                                  "of the velocity difference, not directional equality with dz"}};
        v.measured = {{"aggregate_deviation", vel.aggregate},
                      {"aggregate_exponent", optional_exponent(vel.aggregate_exponent)},
                      {"per_time_exponent", per_time},
                      {"first_order_direction", vel.directions}};
        v.threshold = {{"exponent_range", {1.7, 2.3}}};
        v.pass = vel.aggregate_exponent && *vel.aggregate_exponent >= 1.7 &&
                 *vel.aggregate_exponent <= 2.3;
        out.push_back(std::move(v));

        const std::vector<double> eps = {1.0, -1.0};
        const auto zc = guided_seed(*in.prior, y, 1.0, std::span(eps).first(z.size()), SeedVariant::full).z;
        const auto zu = guided_seed(*in.prior, y, 0.0, std::span(eps).first(z.size()), SeedVariant::full).z;
        const auto gw = gronwall_check(field, zc, zu, y, in.steps);
        CheckResult g;
        g.name = "gronwall_bound";
        g.gated = false;
        g.inputs = {{"z_c", zc}, {"z_u", zu}, {"label", y}, {"steps", in.steps},
                    {"lipschitz", "local Frobenius norm of the velocity Jacobian, larger of both paths"}};
        g.measured = {{"max_deviation", gw.max_deviation},
                      {"final_deviation", gw.deviation.back()},
                      {"final_bound", gw.bound.back()},
                      {"max_local_lipschitz", *std::max_element(gw.lipschitz.begin(), gw.lipschitz.end())}};
        g.threshold = {{"reported_only", true}};
        g.pass = gw.holds;
        out.push_back(std::move(g));
    }
    if (in.prior && data && !in.specs.empty()) {
        const PriorModel& p = *in.prior;
        double mu_err = 0.0, sigma_rel = 0.0;
        for (const auto& s : in.specs) {
            const auto f = prior_forward(p, s.label);
            for (int j = 0; j < 2; ++j) {
                mu_err = std::max(mu_err, std::abs(f.mu[j] - s.center[j]));
                if (p.variance_mode == VarianceMode::learnable) {
                    sigma_rel = std::max(sigma_rel, std::abs(f.sigma[j] - s.sigma) / s.sigma);
                }
            }
        }
        std::vector<double> global(data->dim(), 0.0);
        for (std::size_t i = 0; i < data->size(); ++i)
            for (std::size_t j = 0; j < data->dim(); ++j)
                global[j] += data->x(i, j) / static_cast<double>(data->size());
        const auto nul = prior_forward(p, p.null_id());
        double null_err = 0.0;
        for (std::size_t j = 0; j < global.size(); ++j)
            null_err = std::max(null_err, std::abs(nul.mu[j] - global[j]));
        CheckResult r;
        r.name = "prior_bayes_optimality";
        r.inputs = {{"variance_mode", std::string(to_string(p.variance_mode))},
                    {"n", data->size()}};
        r.measured = {{"max_mean_error", mu_err},
                      {"max_sigma_rel_error", sigma_rel},
                      {"null_mean_error", null_err}};
        r.threshold = {{"max_mean_error", 0.05}, {"max_sigma_rel_error", 0.10},
                       {"null_mean_error", 0.05}};
        r.pass = mu_err <= 0.05 && sigma_rel <= 0.10 && null_err <= 0.05;
        out.push_back(std::move(r));
    }
    if (in.prior) {
        constexpr std::size_t n = 20000;
        constexpr double w = 1.5;
        const auto rep = seed_stat_check(*in.prior, 0, SeedVariant::full, w, n, rng);
        double max_std = 0.0;
        for (double s : rep.analytic_std) max_std = std::max(max_std, s);
        const double mean_tol = 4.0 * max_std / std::sqrt(static_cast<double>(n)) + 1e-12;
        const double std_tol = 0.05 * max_std + 1e-12;
        CheckResult r;
        r.name = "guided_seed_moments";
        r.inputs = {{"class", 0}, {"w", w}, {"n", n}, {"variant", "full"}};
        r.measured = {{"empirical_mean", rep.empirical_mean}, {"analytic_mean", rep.analytic_mean},
                      {"empirical_std", rep.empirical_std},   {"analytic_std", rep.analytic_std},
                      {"scale_gap_vs_dist_cfg", rep.scale_gap}};
        r.threshold = {{"max_mean_dev", mean_tol}, {"max_std_dev", std_tol}};
        r.pass = rep.max_mean_dev <= mean_tol && rep.max_std_dev <= std_tol;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace pguide
