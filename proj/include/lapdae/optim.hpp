#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lapdae/model.hpp"
#include "lapdae/pyramid.hpp"

namespace lapdae {

enum class TrainMode { lapdae, dae_spatial, dae_on_lap_noise, lapdae_on_spatial_noise };

TrainMode mode_from_string(const std::string& s);
std::string mode_to_string(TrainMode m);
/// Corruption used while training under this mode (lap or spatial).
bool mode_trains_on_lap(TrainMode m);
/// Corruption used when evaluating reconstructions under this mode.
bool mode_evals_on_lap(TrainMode m);

struct TrainConfig {
    double base_lr = 1e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_every_epochs = 20;
    int batch_size = 128;
    int epochs = 30;
    std::vector<CorruptionSpec> corruptions{CorruptionSpec{}};   // the set C, |C| >= 1
    int pyramid_levels = 5;
    TrainMode mode = TrainMode::lapdae;
    uint64_t seed = 0;
    bool hflip = false;
    int heldout_size = 256;     // tail images reserved for the clean-recon metric
    int checkpoint_every = 0;   // epochs between checkpoint callbacks; 0 = final only

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// One bias-corrected Adam update, in place. Moment buffers are created on
/// first use. Throws NumericError naming the parameter on NaN gradients.
void adam_step(ModelParams& params, const ag::GradMap& grads, AdamState& state, double lr);

/// base_lr * decay^floor(epoch / every).
double lr_at(int epoch, const TrainConfig& cfg);

struct LossLogRow {
    int64_t iter = 0;      // global iteration (one Adam step each)
    int epoch = 0;
    TrainMode mode = TrainMode::lapdae;
    double loss = 0.0;
    double lr = 0.0;
    double mean_level = -1.0;   // mean realized pyramid level; -1 for spatial noise
};

struct SampleLevelRow {
    int64_t iter = 0;
    int slot = 0;          // position within the sub-mini-batch
    int level = 0;
};

struct TrainResult {
    std::vector<LossLogRow> loss_log;
    std::vector<std::pair<int, double>> heldout_mse;   // (epoch, clean-recon MSE)
    std::vector<SampleLevelRow> sample_levels;
    bool halted = false;           // non-finite loss or gradient
    std::string halt_reason;
    int epochs_completed = 0;
};

/// Per-epoch hook: (epoch just finished, params, state).
using EpochCallback = std::function<void(int, const ModelParams&, const AdamState&)>;

/// Algorithm: per sample and per corruption c in C, pick a pyramid level at
/// random, corrupt, reconstruct, then minimize the summed sub-mini-batch
/// reconstruction error with one Adam step per mini-batch. Receives images
/// only; labels never reach the optimizer. On a non-finite loss the step is
/// not applied and training halts with the last good parameters intact.
TrainResult train(ModelParams& params, const Tensor& images, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

} // namespace lapdae
