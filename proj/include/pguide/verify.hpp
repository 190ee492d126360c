#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pguide/data.hpp"
#include "pguide/prior.hpp"
#include "pguide/rng.hpp"
#include "pguide/sampling.hpp"
#include "pguide/tensor.hpp"

namespace pguide {

/// One entry of a verification report: {name, inputs, measured, threshold, pass}.
struct CheckResult {
    std::string name;
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json measured = nlohmann::json::object();
    nlohmann::json threshold = nlohmann::json::object();
    bool pass = false;
    bool gated = true;

    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckResult {
    double max_rel_error = 0.0;
    int probes = 0;
    std::string worst_param;
};

/// Compares analytic grads against central differences at `probes` randomly
/// chosen parameter coordinates. `loss` recomputes the scalar loss from the
/// current parameter values and adds its gradient into each ParamTensor::grad;
/// grads are zeroed before the analytic pass and snapshotted before probing.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
/// the floor keeps coordinates with vanishing gradient from dividing round-off
/// by zero.
GradCheckResult gradient_check(std::span<ParamTensor* const> params,
                               const std::function<double()>& loss, int probes,
                               Rng& rng, double step = 1e-5, double floor = 1e-5);

// ---------------------------------------------------------------------------
// Linear response of the flow map

/// Least-squares slope of log(ys) against log(xs).
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

/// d x d Jacobian of Phi_t at z by central differences, two integrations per
/// column. `label` selects the conditional field.
Tensor2 flow_jacobian(const VelocityField& field, std::span<const double> z, int label, double t,
                      double h, int steps);

struct LinearResponseReport {
    std::vector<double> epsilons;
    std::vector<double> remainders;
    std::optional<double> fitted_exponent;  // nullopt: exact-linear
    Tensor2 jacobian;
};

/// R(eps) = Phi_t(z + eps dz) - Phi_t(z) - eps J dz for each eps.
LinearResponseReport linear_response_check(const VelocityField& field, std::span<const double> z,
                                           std::span<const double> dz, int label, double t,
                                           std::span<const double> epsilons, int steps = 50,
                                           double h = 1e-4);

struct VelocityResponseReport {
    std::vector<double> epsilons;
    std::vector<double> times;
    // deviations[k][e] = ||D(eps_e, t_k) - 2 D(eps_e / 2, t_k)||, which is
    // O(eps^2) exactly when D is first-order homogeneous in eps.
    std::vector<std::vector<double>> deviations;
    std::vector<std::optional<double>> per_time_exponent;
    // Root-sum-square of deviations over the time grid.
    std::vector<double> aggregate;
    std::optional<double> aggregate_exponent;
    // D(eps_min, t_k) / eps_min, the first-order direction J'_t dz.
    std::vector<std::vector<double>> directions;
};

/// D(eps, t) = v(Phi_t(z + eps dz), t) - v(Phi_t(z), t) on the Euler grid
/// points nearest to each entry of `times`.
VelocityResponseReport velocity_response_check(const VelocityField& field,
                                               std::span<const double> z,
                                               std::span<const double> dz, int label,
                                               std::span<const double> times,
                                               std::span<const double> epsilons, int steps = 50);

struct GronwallReport {
    std::vector<double> times;
    std::vector<double> deviation;  // ||x_c(t) - x_u(t)|| along both Euler paths
    std::vector<double> bound;      // ||z_c - z_u|| * prod(1 + dt L_k)
    std::vector<double> lipschitz;  // local estimate L_k at each step
    double max_deviation = 0.0;
    bool holds = false;
};

/// Integrates seeds z_c and z_u under label y and compares their separation with
/// a discrete Grönwall bound. L_k is the larger Frobenius norm of the velocity
/// Jacobian (central differences, step h) at the two current states. A local
/// estimate, not a certified Lipschitz constant.
GronwallReport gronwall_check(const VelocityField& field, std::span<const double> z_c,
                              std::span<const double> z_u, int label, int steps = 50,
                              double h = 1e-4);

constexpr double kExactLinearThreshold = 1e-12;

// ---------------------------------------------------------------------------
// Score connection for Gaussian mixtures under x_t = x_0 + sigma_t eps

struct MixtureComponent {
    std::vector<double> mean;
    double sigma = 1.0;
    double weight = 1.0;
};

struct ScoreIdentityPoint {
    std::vector<double> lhs;  // E[x0 | xt, y] - E[x0 | xt]
    std::vector<double> rhs;  // sigma_t^2 grad log p(y | xt)
};

/// Both sides for condition y at one point, each by its own closed form.
ScoreIdentityPoint score_identity_at(std::span<const MixtureComponent> mixture, double sigma_t,
                                     std::span<const double> xt, int y);

/// Max |lhs - rhs| over all grid points and all components y.
double score_connection_check(std::span<const MixtureComponent> mixture, double sigma_t,
                              std::span<const std::vector<double>> xt_grid);

// ---------------------------------------------------------------------------
// Prior checks

struct AttenuationReport {
    double max_identity_error = 0.0;  // |grad - (-(x - mu) / sigma^2)|, relative
    double max_scaling_error = 0.0;   // |grad(2 sigma) / grad(sigma) - 1/4|
    int probes = 0;
    bool pass = false;
};

/// Probes nll_loss at random (x, mu, sigma) with one-sample batches and
/// compares its mu-gradient with the closed form, then doubles sigma.
AttenuationReport grad_attenuation_check(Rng& rng, int probes = 100, double tol = 1e-12);

struct ModeAccuracyReport {
    std::vector<double> per_class_accuracy;
    std::vector<std::size_t> per_class_count;
    double overall = 0.0;
    double assignment_radius = 4.0;  // multiple of each mode's sigma
};

/// A sample is correct iff its nearest mode center carries its label and it
/// lies within radius_mult * sigma of that center.
ModeAccuracyReport mode_accuracy(const Tensor2& samples, std::span<const int> labels,
                                 std::span<const ModeSpec> specs, double radius_mult = 4.0);

struct SeedStatReport {
    std::vector<double> empirical_mean;
    std::vector<double> empirical_std;
    std::vector<double> analytic_mean;
    std::vector<double> analytic_std;
    double max_mean_dev = 0.0;
    double max_std_dev = 0.0;
    // Elementwise guided-seed scale minus the product-of-experts scale.
    std::vector<double> scale_gap;
};

/// Empirical moments of n seeds for class y under `variant` versus the
/// analytic Gaussian those seeds are drawn from.
SeedStatReport seed_stat_check(const PriorModel& prior, int y, SeedVariant variant, double w,
                               std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Suites driven by the CLI and the acceptance tests

/// Checks that need no trained model: score identity, closed-form
/// distribution CFG, loss attenuation, linear response of a linear field.
std::vector<CheckResult> run_analytic_checks(Rng& rng);

struct ModelCheckInputs {
    const VelocityNet* net = nullptr;
    const PriorModel* prior = nullptr;
    std::vector<ModeSpec> specs;
    int steps = 50;
};

/// Linear-response exponents on a trained flow, and prior Bayes-optimality
/// when the dataset specs are known.
std::vector<CheckResult> run_model_checks(const ModelCheckInputs& in, const LabeledBatch* data,
                                          Rng& rng);

}  // namespace pguide
