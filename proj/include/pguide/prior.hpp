#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pguide/data.hpp"
#include "pguide/rng.hpp"
#include "pguide/tensor.hpp"

namespace pguide {

enum class VarianceMode { learnable, fixed_unit };

std::string_view to_string(VarianceMode m);
VarianceMode variance_mode_from_string(std::string_view s);

constexpr double kLogSigmaMin = -6.0;
constexpr double kLogSigmaMax = 3.0;

/// Lookup-table prior over K classes plus the null condition. Row k of `mu`
/// and `log_sigma` holds the Gaussian for class k; row K is the null row.
/// A fresh model is the standard normal for every condition.
struct PriorModel {
    int num_classes = 0;
    int dim = 0;
    VarianceMode variance_mode = VarianceMode::learnable;
    ParamTensor mu;
    ParamTensor log_sigma;

    static PriorModel create(int num_classes, int dim, VarianceMode mode);

    int null_id() const noexcept { return num_classes; }
    /// Trainable blocks. log_sigma is excluded in fixed-unit mode.
    std::vector<ParamTensor*> params();
};

struct PriorOutput {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Row y of the table with sigma exponentiated. y may be the null id.
PriorOutput prior_forward(const PriorModel& model, int y);

/// Mean over batch and dimensions of (x - mu)^2 / (2 sigma^2) + log sigma.
/// Labels may include the null id. Gradients are added to mu.grad and, for
/// learnable variance, log_sigma.grad.
double nll_loss(PriorModel& model, const LabeledBatch& batch);

struct PriorTrainConfig {
    int epochs = 200;
    double lr = 0.05;
    std::size_t batch_size = 256;
};

/// Minibatch Adam on the conditional rows plus the null row, which is fitted
/// to every sample regardless of label. The learning rate follows a cosine
/// decay to 1% of its initial value. Returns the mean loss of each epoch.
std::vector<double> train_prior(PriorModel& model, const LabeledBatch& data,
                                const PriorTrainConfig& cfg, Rng& rng);

enum class SeedVariant { full, mean_only, dist_cfg };

std::string_view to_string(SeedVariant v);
SeedVariant seed_variant_from_string(std::string_view s);

struct SeedResult {
    std::vector<double> z;
    int clamped = 0;  // dimensions whose combined scale went negative and was set to 0
};

/// Guided initial state for class y at scale w:
///   full:      mu_0 + w (mu_y - mu_0) + [sigma_0 + w (sigma_y - sigma_0)] * eps
///   mean_only: mu_0 + w (mu_y - mu_0) + sigma_y * eps
///   dist_cfg:  mu_cfg + sigma_cfg * eps   (see dist_cfg_params)
/// where index 0 denotes the null row.
SeedResult guided_seed(const PriorModel& model, int y, double w, std::span<const double> eps,
                       SeedVariant variant);

struct GaussianParams {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Elementwise product-of-experts p_u^(1-w) p_c^w for diagonal Gaussians:
///   1 / sigma_cfg^2 = (1 - w) / sigma_u^2 + w / sigma_c^2
///   mu_cfg = sigma_cfg^2 [(1 - w) mu_u / sigma_u^2 + w mu_c / sigma_c^2]
/// Throws DomainError naming the first dimension with non-positive precision.
GaussianParams dist_cfg_gaussian(std::span<const double> mu_u, std::span<const double> sigma_u,
                                 std::span<const double> mu_c, std::span<const double> sigma_c,
                                 double w);

GaussianParams dist_cfg_params(const PriorModel& model, int y, double w);

}  // namespace pguide
