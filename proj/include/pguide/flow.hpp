#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pguide/data.hpp"
#include "pguide/prior.hpp"
#include "pguide/rng.hpp"
#include "pguide/tensor.hpp"

namespace pguide {

struct VelocityNetConfig {
    int dim = 2;
    int num_classes = 2;
    int embed_dim = 16;
    int fourier_pairs = 8;
    std::vector<int> hidden = {128, 128, 128};

    int time_features() const noexcept { return 2 * fourier_pairs + 1; }
    int input_width() const noexcept { return dim + time_features() + embed_dim; }
};

/// v(x, t, y): MLP over [x, t, sin(2^k pi t), cos(2^k pi t), embed(y)] with
/// tanh hidden layers and a linear head. Embedding row K is the null token.
class VelocityNet {
public:
    VelocityNet() = default;
    /// Hidden layers use scaled-normal init (std 1/sqrt(fan_in)); the output
    /// head starts at zero so a fresh net predicts v = 0 everywhere.
    VelocityNet(const VelocityNetConfig& cfg, Rng& rng);

    const VelocityNetConfig& config() const noexcept { return cfg_; }
    int null_id() const noexcept { return cfg_.num_classes; }

    std::vector<ParamTensor*> params();
    std::vector<const ParamTensor*> params() const;

    struct Cache {
        std::vector<int> labels;
        std::vector<Tensor2> inputs;       // input to each affine layer
        std::vector<Tensor2> activations;  // tanh outputs of hidden layers
    };

    /// Batched forward. `t` holds one time per row. Throws DomainError for t
    /// outside [0, 1] or labels outside [0, K].
    Tensor2 forward(const Tensor2& x, std::span<const double> t, std::span<const int> y,
                    Cache* cache = nullptr) const;

    /// Accumulates parameter grads for upstream dL/dv; returns dL/dx.
    Tensor2 backward(const Cache& cache, const Tensor2& dv);

private:
    VelocityNetConfig cfg_;
    ParamTensor embed_;
    std::vector<ParamTensor> weights_;
    std::vector<ParamTensor> biases_;
};

/// Fills row r of `out` with [t, sin(2^k pi t), cos(2^k pi t) for k < F].
void time_features(double t, int fourier_pairs, std::span<double> out);

Tensor2 velocity_forward(const VelocityNet& net, const Tensor2& x, std::span<const double> t,
                         std::span<const int> y);

/// x_t = (1 - t) z + t x1.
std::vector<double> path_interp(std::span<const double> z, std::span<const double> x1, double t);

/// Mean over rows of ||v(x_t, t, y) - (x1 - z)||^2, accumulating net grads.
double fm_loss(VelocityNet& net, const Tensor2& z, const Tensor2& x1, std::span<const int> y,
               std::span<const double> t);

enum class FlowRegime { cfm_baseline, pguide_stage2 };

std::string_view to_string(FlowRegime r);
FlowRegime flow_regime_from_string(std::string_view s);

struct FlowTrainConfig {
    long steps = 20000;
    std::size_t batch = 256;
    double lr = 1e-3;
    double cond_dropout_p = 0.1;  // baseline only
    double stage2_dropout_p = 0.0;  // enables a null branch for joint PG + CFG
    FlowRegime regime = FlowRegime::cfm_baseline;
};

/// Draws the per-step (z, y) pairs. Exposed so the dropout and target
/// identities can be checked without a network.
struct FlowDraw {
    Tensor2 z;
    Tensor2 x1;
    std::vector<int> y;
    std::vector<double> t;
};

FlowDraw draw_flow_batch(const LabeledBatch& data, const FlowTrainConfig& cfg,
                         const PriorModel* prior, Rng& rng);

/// Adam on fm_loss. Returns the loss of every step. The learning rate is
/// constant for the first half and then decays linearly to 10%.
std::vector<double> train_flow(VelocityNet& net, const LabeledBatch& data,
                               const FlowTrainConfig& cfg, Rng& rng,
                               const PriorModel* prior = nullptr);

}  // namespace pguide
