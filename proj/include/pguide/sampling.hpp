#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pguide/flow.hpp"
#include "pguide/prior.hpp"
#include "pguide/rng.hpp"
#include "pguide/tensor.hpp"

namespace pguide {

/// Anything that can be integrated: a trained net or an analytic field.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual int dim() const = 0;
    virtual int null_id() const = 0;
    /// One evaluation for the whole batch at a shared time t.
    virtual Tensor2 eval(const Tensor2& x, double t, std::span<const int> y) const = 0;
};

class NetField final : public VelocityField {
public:
    explicit NetField(const VelocityNet& net) : net_(&net) {}
    int dim() const override { return net_->config().dim; }
    int null_id() const override { return net_->null_id(); }
    Tensor2 eval(const Tensor2& x, double t, std::span<const int> y) const override;

private:
    const VelocityNet* net_;
};

/// v(x) = A x, independent of t and y. Used by the verification suite.
class LinearField final : public VelocityField {
public:
    explicit LinearField(Tensor2 a);
    int dim() const override { return static_cast<int>(a_.rows()); }
    int null_id() const override { return 0; }
    Tensor2 eval(const Tensor2& x, double t, std::span<const int> y) const override;
    const Tensor2& matrix() const noexcept { return a_; }

private:
    Tensor2 a_;
};

/// v(x) = c for every row.
class ConstantField final : public VelocityField {
public:
    explicit ConstantField(std::vector<double> c) : c_(std::move(c)) {}
    int dim() const override { return static_cast<int>(c_.size()); }
    int null_id() const override { return 0; }
    Tensor2 eval(const Tensor2& x, double t, std::span<const int> y) const override;

private:
    std::vector<double> c_;
};

// Guidance modes. Per-row conditions are passed alongside the mode, so a
// single batch can mix classes.
struct Vanilla {
    bool conditional_prior = true;  // seed from N(mu_y, sigma_y^2) when a prior is present
};
struct DualCFG {
    double w = 1.0;
};
struct PGuide {
    double w = 1.0;
    SeedVariant variant = SeedVariant::full;
};
struct DistCFG {
    double w = 1.0;
};
struct Joint {
    double w_pg = 1.0;
    double w_cfg = 1.0;
};

using GuidanceMode = std::variant<Vanilla, DualCFG, PGuide, DistCFG, Joint>;

std::string mode_name(const GuidanceMode& mode);
/// The scale written to CSV exports: w, or w_pg for the joint mode.
double mode_scale(const GuidanceMode& mode);
bool is_dual_pass(const GuidanceMode& mode);
bool needs_prior(const GuidanceMode& mode);
void validate_mode(const GuidanceMode& mode);

/// Number of field evaluations per integration step.
int evals_per_step(const GuidanceMode& mode);

/// v_null + w (v_cond - v_null). Two evaluations, or one when w == 1.
Tensor2 cfg_velocity(const VelocityField& field, const Tensor2& x, double t,
                     std::span<const int> y, double w, long& eval_count);

struct Trajectory {
    std::vector<double> times;
    std::vector<Tensor2> states;      // steps + 1 entries when recorded, else {x0, x1}
    std::vector<Tensor2> velocities;  // steps entries when recorded, else empty
    long eval_count = 0;              // field evaluations per sample
    int clamped = 0;                  // seed dimensions clamped to zero scale
    double max_step_displacement = 0.0;
    double max_speed = 0.0;

    const Tensor2& final_state() const { return states.back(); }
};

/// Euler on the uniform grid t_k = k / steps. Throws SamplingError with the
/// step index if the state becomes non-finite.
Trajectory euler_integrate(const VelocityField& field, const Tensor2& z0, std::span<const int> y,
                           const GuidanceMode& mode, int steps, bool record);

/// Flow map Phi_t(z) of the single-pass field with labels y, integrated with
/// the Euler step 1 / steps up to t (t must lie on the grid up to rounding).
Tensor2 flow_map(const VelocityField& field, const Tensor2& z0, std::span<const int> y, double t,
                 int steps);

struct SamplerModels {
    const VelocityField* field = nullptr;
    const PriorModel* prior = nullptr;
};

/// Initial states for `mode`. Noise is drawn row-major from rng.
Tensor2 draw_seeds(const SamplerModels& models, const GuidanceMode& mode,
                   std::span<const int> y, Rng& rng, int* clamped = nullptr);

struct SampleResult {
    Tensor2 samples;
    std::vector<int> labels;
    Trajectory trajectory;
    long eval_count_total = 0;  // summed over samples
};

/// Round-robin class labels 0..K-1 for n samples.
std::vector<int> balanced_labels(std::size_t n, int num_classes);

SampleResult sample_batch(const SamplerModels& models, const GuidanceMode& mode,
                          std::span<const int> labels, int steps, Rng& rng, bool record = false);

/// CSV with header `t,x0,...,x{d-1},label,mode,w`, one row per sample per
/// recorded time.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                          std::span<const int> labels, const GuidanceMode& mode);
/// Same schema restricted to the final states.
void write_samples_csv(const std::filesystem::path& path, const SampleResult& result,
                       const GuidanceMode& mode);

}  // namespace pguide
