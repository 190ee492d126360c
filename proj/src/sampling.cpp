#include "pguide/sampling.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pguide/errors.hpp"

namespace pguide {

Tensor2 NetField::eval(const Tensor2& x, double t, std::span<const int> y) const {
    std::vector<double> ts(x.rows(), t);
    return net_->forward(x, ts, y);
}

LinearField::LinearField(Tensor2 a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw ShapeError("LinearField: matrix must be square");
}

Tensor2 LinearField::eval(const Tensor2& x, double, std::span<const int>) const {
    return matmul_nt(x, a_);
}

Tensor2 ConstantField::eval(const Tensor2& x, double, std::span<const int>) const {
    Tensor2 out(x.rows(), c_.size());
    for (std::size_t i = 0; i < x.rows(); ++i)
        std::copy(c_.begin(), c_.end(), out.row_span(i).begin());
    return out;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_scale(double w, const char* what) {
    if (!std::isfinite(w) || w < 0.0) {
        throw DomainError(std::string(what) + ": guidance scale must be finite and >= 0");
    }
}

}  // namespace

std::string mode_name(const GuidanceMode& mode) {
    return std::visit(overloaded{[](const Vanilla&) { return std::string("vanilla"); },
                                 [](const DualCFG&) { return std::string("dual_cfg"); },
                                 [](const PGuide& m) {
                                     return m.variant == SeedVariant::mean_only
                                                ? std::string("pguide_mean_only")
                                                : std::string("pguide");
                                 },
                                 [](const DistCFG&) { return std::string("dist_cfg"); },
                                 [](const Joint&) { return std::string("joint"); }},
                      mode);
}

double mode_scale(const GuidanceMode& mode) {
    return std::visit(overloaded{[](const Vanilla&) { return 1.0; },
                                 [](const DualCFG& m) { return m.w; },
                                 [](const PGuide& m) { return m.w; },
                                 [](const DistCFG& m) { return m.w; },
                                 [](const Joint& m) { return m.w_pg; }},
                      mode);
}

bool is_dual_pass(const GuidanceMode& mode) {
    return std::holds_alternative<DualCFG>(mode) || std::holds_alternative<Joint>(mode);
}

bool needs_prior(const GuidanceMode& mode) {
    return std::holds_alternative<PGuide>(mode) || std::holds_alternative<DistCFG>(mode) ||
           std::holds_alternative<Joint>(mode);
}

void validate_mode(const GuidanceMode& mode) {
    std::visit(overloaded{[](const Vanilla&) {},
                          [](const DualCFG& m) { check_scale(m.w, "dual_cfg"); },
                          [](const PGuide& m) {
                              check_scale(m.w, "pguide");
                              if (m.variant == SeedVariant::dist_cfg) {
                                  throw DomainError("pguide: use the dist_cfg mode for the "
                                                    "distribution-space variant");
                              }
                          },
                          [](const DistCFG& m) { check_scale(m.w, "dist_cfg"); },
                          [](const Joint& m) {
                              check_scale(m.w_pg, "joint");
                              check_scale(m.w_cfg, "joint");
                          }},
               mode);
}

int evals_per_step(const GuidanceMode& mode) {
    if (const auto* m = std::get_if<DualCFG>(&mode)) return m->w == 1.0 ? 1 : 2;
    if (const auto* m = std::get_if<Joint>(&mode)) return m->w_cfg == 1.0 ? 1 : 2;
    return 1;
}

Tensor2 cfg_velocity(const VelocityField& field, const Tensor2& x, double t,
                     std::span<const int> y, double w, long& eval_count) {
    check_scale(w, "cfg_velocity");
    Tensor2 cond = field.eval(x, t, y);
    ++eval_count;
    if (w == 1.0) return cond;
    std::vector<int> null_labels(y.size(), field.null_id());
    Tensor2 uncond = field.eval(x, t, null_labels);
    ++eval_count;
    // uncond + w (cond - uncond)
    auto c = cond.flat();
    auto u = uncond.flat();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = u[i] + w * (c[i] - u[i]);
    return cond;
}

Trajectory euler_integrate(const VelocityField& field, const Tensor2& z0, std::span<const int> y,
                           const GuidanceMode& mode, int steps, bool record) {
    if (steps < 1) throw DomainError("euler_integrate: steps must be >= 1");
    if (z0.rows() != y.size()) throw ShapeError("euler_integrate: label count != batch size");
    validate_mode(mode);
    const double dt = 1.0 / steps;
    double w_cfg = 1.0;
    if (const auto* m = std::get_if<DualCFG>(&mode)) w_cfg = m->w;
    if (const auto* m = std::get_if<Joint>(&mode)) w_cfg = m->w_cfg;
    const bool dual = is_dual_pass(mode);

    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(z0);
    Tensor2 x = z0;
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        Tensor2 v = dual ? cfg_velocity(field, x, t, y, w_cfg, traj.eval_count)
                         : field.eval(x, t, y);
        if (!dual) ++traj.eval_count;
        double step_disp = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double speed2 = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) {
                speed2 += v(i, j) * v(i, j);
                x(i, j) += v(i, j) * dt;
            }
            traj.max_speed = std::max(traj.max_speed, std::sqrt(speed2));
            step_disp = std::max(step_disp, std::sqrt(speed2) * dt);
        }
        traj.max_step_displacement = std::max(traj.max_step_displacement, step_disp);
        if (!x.all_finite()) {
            throw SamplingError("euler_integrate: non-finite state at step " + std::to_string(k),
                                k);
        }
        if (record) {
            traj.times.push_back(static_cast<double>(k + 1) / steps);
            traj.states.push_back(x);
            traj.velocities.push_back(std::move(v));
        }
    }
    if (!record) {
        traj.times.push_back(1.0);
        traj.states.push_back(std::move(x));
    }
    return traj;
}

Tensor2 flow_map(const VelocityField& field, const Tensor2& z0, std::span<const int> y, double t,
                 int steps) {
    if (steps < 1) throw DomainError("flow_map: steps must be >= 1");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("flow_map: t outside [0, 1]");
    const int n = static_cast<int>(std::lround(t * steps));
    const double dt = 1.0 / steps;
    Tensor2 x = z0;
    for (int k = 0; k < n; ++k) {
        const Tensor2 v = field.eval(x, static_cast<double>(k) / steps, y);
        auto xf = x.flat();
        auto vf = v.flat();
        for (std::size_t i = 0; i < xf.size(); ++i) xf[i] += vf[i] * dt;
        if (!x.all_finite()) {
            throw SamplingError("flow_map: non-finite state at step " + std::to_string(k), k);
        }
    }
    return x;
}

std::vector<int> balanced_labels(std::size_t n, int num_classes) {
    if (num_classes < 1) throw DomainError("balanced_labels: need >= 1 class");
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % num_classes);
    return out;
}

Tensor2 draw_seeds(const SamplerModels& models, const GuidanceMode& mode, std::span<const int> y,
                   Rng& rng, int* clamped) {
    if (!models.field) throw ConfigError("sample: missing velocity model");
    if (needs_prior(mode) && !models.prior) {
        throw ConfigError("sample: mode '" + mode_name(mode) + "' requires a prior model");
    }
    const std::size_t d = models.field->dim();
    if (models.prior && static_cast<std::size_t>(models.prior->dim) != d) {
        throw ShapeError("sample: prior and velocity model dims differ");
    }
    const Tensor2 eps = normal_sample(rng, y.size(), d);
    Tensor2 z(y.size(), d);
    int clamp_count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto e = eps.row_span(i);
        auto zi = z.row_span(i);
        std::vector<double> seed;
        std::visit(overloaded{[&](const Vanilla& m) {
                                  if (m.conditional_prior && models.prior) {
                                      const auto p = prior_forward(*models.prior, y[i]);
                                      seed.resize(d);
                                      for (std::size_t j = 0; j < d; ++j)
                                          seed[j] = p.mu[j] + p.sigma[j] * e[j];
                                  } else {
                                      seed.assign(e.begin(), e.end());
                                  }
                              },
                              [&](const DualCFG&) { seed.assign(e.begin(), e.end()); },
                              [&](const PGuide& m) {
                                  auto r = guided_seed(*models.prior, y[i], m.w, e, m.variant);
                                  clamp_count += r.clamped;
                                  seed = std::move(r.z);
                              },
                              [&](const DistCFG& m) {
                                  seed = guided_seed(*models.prior, y[i], m.w, e,
                                                     SeedVariant::dist_cfg)
                                             .z;
                              },
                              [&](const Joint& m) {
                                  auto r =
                                      guided_seed(*models.prior, y[i], m.w_pg, e, SeedVariant::full);
                                  clamp_count += r.clamped;
                                  seed = std::move(r.z);
                              }},
                   mode);
        std::copy(seed.begin(), seed.end(), zi.begin());
    }
    if (clamped) *clamped = clamp_count;
    return z;
}

SampleResult sample_batch(const SamplerModels& models, const GuidanceMode& mode,
                          std::span<const int> labels, int steps, Rng& rng, bool record) {
    validate_mode(mode);
    int clamped = 0;
    const Tensor2 z0 = draw_seeds(models, mode, labels, rng, &clamped);
    SampleResult out;
    out.trajectory = euler_integrate(*models.field, z0, labels, mode, steps, record);
    out.trajectory.clamped = clamped;
    out.samples = out.trajectory.final_state();
    out.labels.assign(labels.begin(), labels.end());
    out.eval_count_total = out.trajectory.eval_count * static_cast<long>(labels.size());
    return out;
}

namespace {

std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_rows(std::ofstream& out, double t, const Tensor2& states, std::span<const int> labels,
                const std::string& name, const std::string& scale) {
    for (std::size_t i = 0; i < states.rows(); ++i) {
        out << format_real(t);
        for (std::size_t j = 0; j < states.cols(); ++j) out << ',' << format_real(states(i, j));
        out << ',' << labels[i] << ',' << name << ',' << scale << '\n';
    }
}

std::ofstream open_csv(const std::filesystem::path& path, std::size_t d) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << 't';
    for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
    out << ",label,mode,w\n";
    return out;
}

}  // namespace

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                          std::span<const int> labels, const GuidanceMode& mode) {
    if (traj.states.empty()) throw DomainError("write_trajectory_csv: empty trajectory");
    auto out = open_csv(path, traj.states.front().cols());
    const std::string name = mode_name(mode);
    const std::string scale = format_real(mode_scale(mode));
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        write_rows(out, traj.times[k], traj.states[k], labels, name, scale);
    }
}

void write_samples_csv(const std::filesystem::path& path, const SampleResult& result,
                       const GuidanceMode& mode) {
    auto out = open_csv(path, result.samples.cols());
    write_rows(out, 1.0, result.samples, result.labels, mode_name(mode),
               format_real(mode_scale(mode)));
}

}  // namespace pguide
