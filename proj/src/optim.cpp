#include "lapdae/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lapdae/ops.hpp"
#include "lapdae/rng.hpp"

namespace lapdae {

TrainMode mode_from_string(const std::string& s) {
    if (s == "lapdae") return TrainMode::lapdae;
    if (s == "dae_spatial") return TrainMode::dae_spatial;
    if (s == "dae_on_lap_noise") return TrainMode::dae_on_lap_noise;
    if (s == "lapdae_on_spatial_noise") return TrainMode::lapdae_on_spatial_noise;
    throw UsageError("unknown mode '" + s +
                     "' (valid: lapdae, dae_spatial, dae_on_lap_noise, lapdae_on_spatial_noise)");
}

std::string mode_to_string(TrainMode m) {
    switch (m) {
        case TrainMode::lapdae: return "lapdae";
        case TrainMode::dae_spatial: return "dae_spatial";
        case TrainMode::dae_on_lap_noise: return "dae_on_lap_noise";
        case TrainMode::lapdae_on_spatial_noise: return "lapdae_on_spatial_noise";
    }
    return "?";
}

// The cross modes train one way and evaluate reconstructions the other
// way; plain lapdae/dae_spatial use the same noise space for both.
bool mode_trains_on_lap(TrainMode m) {
    return m == TrainMode::lapdae || m == TrainMode::lapdae_on_spatial_noise;
}

bool mode_evals_on_lap(TrainMode m) {
    return m == TrainMode::lapdae || m == TrainMode::dae_on_lap_noise;
}

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw ConfigError("train: base_lr must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (corruptions.empty()) throw ConfigError("train: corruption set C must be non-empty");
    if (pyramid_levels < 1) throw ConfigError("train: pyramid_levels must be >= 1");
    if (lr_decay_every_epochs < 1) throw ConfigError("train: lr_decay_every_epochs must be >= 1");
    for (const auto& c : corruptions)
        if (c.sigma <= 0.0f) throw ConfigError("train: corruption sigma must be > 0");
}

void adam_step(ModelParams& params, const ag::GradMap& grads, AdamState& state, double lr) {
    for (const auto& [name, g] : grads)
        if (!g.all_finite())
            throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& p : params.params) {
        auto it = grads.find(p.name());
        if (it == grads.end()) continue;
        const Tensor& g = it->second;
        Tensor& value = p.mutable_value();
        Tensor::check_same_shape(value, g, "adam");
        Tensor& m = state.m.try_emplace(p.name(), Tensor(value.shape())).first->second;
        Tensor& v = state.v.try_emplace(p.name(), Tensor(value.shape())).first->second;
        const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
        for (int64_t i = 0; i < value.numel(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            value[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw UsageError("lr_at: epoch must be >= 0");
    return cfg.base_lr * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every_epochs);
}

namespace {

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int epoch) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(mix_seed(seed, 0x7368756666ULL, static_cast<uint64_t>(epoch)));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

void copy_sample(const Tensor& src, int64_t src_idx, Tensor& dst, int64_t dst_idx, bool flip) {
    int64_t C = src.dim(1), H = src.dim(2), W = src.dim(3);
    const float* s = src.data() + src_idx * C * H * W;
    float* d = dst.data() + dst_idx * C * H * W;
    if (!flip) {
        std::copy(s, s + C * H * W, d);
        return;
    }
    for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H; ++h) {
            const float* srow = s + (c * H + h) * W;
            float* drow = d + (c * H + h) * W;
            for (int64_t w = 0; w < W; ++w) drow[w] = srow[W - 1 - w];
        }
}

} // namespace

TrainResult train(ModelParams& params, const Tensor& images, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (images.rank() != 4)
        throw DimensionError("train: images must be (N,C,H,W), got " + images.shape_str());
    int64_t n_total = images.dim(0);
    int64_t heldout = std::min<int64_t>(cfg.heldout_size, n_total > 1 ? n_total / 4 : 0);
    int64_t n = n_total - heldout;
    if (n < 1) throw UsageError("train: dataset empty");
    int64_t C = images.dim(1), H = images.dim(2), W = images.dim(3);

    int levels = std::min(cfg.pyramid_levels, max_pyramid_levels(H, W));
    bool lap = mode_trains_on_lap(cfg.mode);
    int n_corr = static_cast<int>(cfg.corruptions.size());

    Tensor heldout_batch;
    if (heldout > 0) {
        heldout_batch = Tensor({heldout, C, H, W});
        std::copy(images.data() + n * C * H * W, images.data() + n_total * C * H * W,
                  heldout_batch.data());
    }

    TrainResult res;
    AdamState state;
    int64_t iter = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at(epoch, cfg);
        std::vector<int64_t> order = epoch_order(n, cfg.seed, epoch);
        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            int64_t bsz = std::min<int64_t>(cfg.batch_size, n - start);
            int64_t sub = bsz * n_corr;
            Tensor clean({sub, C, H, W});
            Tensor corrupted({sub, C, H, W});
            std::vector<int> slot_levels(static_cast<size_t>(sub), -1);

            // clean targets (one copy per corruption type), flips decided per sample
            for (int64_t i = 0; i < bsz; ++i) {
                auto rng = make_rng(mix_seed(cfg.seed, 0x666c6970ULL,
                                             static_cast<uint64_t>(epoch),
                                             static_cast<uint64_t>(start + i)));
                bool flip = cfg.hflip && (rng() & 1u);
                for (int c = 0; c < n_corr; ++c)
                    copy_sample(images, order[static_cast<size_t>(start + i)], clean,
                                c * bsz + i, flip);
            }

#pragma omp parallel for schedule(static)
            for (int64_t s = 0; s < sub; ++s) {
                int c = static_cast<int>(s / bsz);
                Tensor one({1, C, H, W});
                std::copy(clean.data() + s * C * H * W, clean.data() + (s + 1) * C * H * W,
                          one.data());
                uint64_t draw = mix_seed(cfg.seed, static_cast<uint64_t>(epoch),
                                         static_cast<uint64_t>(iter), static_cast<uint64_t>(s));
                CorruptionSpec spec = cfg.corruptions[static_cast<size_t>(c)];
                Tensor out;
                if (lap) {
                    spec.seed = cfg.seed;
                    CorruptResult cr = lap_corrupt(one, spec, levels, draw);
                    out = std::move(cr.image);
                    slot_levels[static_cast<size_t>(s)] = cr.level;
                } else {
                    out = spatial_corrupt(one, spec.sigma, cfg.seed, draw);
                }
                std::copy(out.data(), out.data() + out.numel(), corrupted.data() + s * C * H * W);
            }

            ag::Var x_tilde = ag::Var::leaf(std::move(corrupted));
            ag::Var target = ag::Var::leaf(std::move(clean));
            ag::Var z = decode(params, encode(params, x_tilde));
            ag::Var loss = ag::mse_loss(z, target);
            if (n_corr > 1) loss = ag::scale(loss, static_cast<float>(n_corr));

            double loss_value = loss.value()[0];
            if (!std::isfinite(loss_value)) {
                res.halted = true;
                res.halt_reason = "non-finite loss at iteration " + std::to_string(iter) +
                                  "; last good parameters retained";
                res.epochs_completed = epoch;
                return res;
            }
            try {
                ag::GradMap grads = ag::backward(loss);
                adam_step(params, grads, state, lr);
            } catch (const NumericError& e) {
                res.halted = true;
                res.halt_reason = std::string(e.what()) + " at iteration " + std::to_string(iter) +
                                  "; last good parameters retained";
                res.epochs_completed = epoch;
                return res;
            }

            double mean_level = -1.0;
            if (lap) {
                double s = 0.0;
                for (int lv : slot_levels) s += lv;
                mean_level = s / static_cast<double>(sub);
                for (int64_t sl = 0; sl < sub; ++sl)
                    res.sample_levels.push_back(
                        {iter, static_cast<int>(sl), slot_levels[static_cast<size_t>(sl)]});
            }
            res.loss_log.push_back({iter, epoch, cfg.mode, loss_value, lr, mean_level});
            ++iter;
        }

        if (heldout > 0) {
            Tensor z = forward_reconstruct(params, heldout_batch);
            res.heldout_mse.emplace_back(epoch, ops::mse(z, heldout_batch));
        }
        res.epochs_completed = epoch + 1;
        if (on_epoch &&
            (cfg.checkpoint_every > 0 ? ((epoch + 1) % cfg.checkpoint_every == 0) : false))
            on_epoch(epoch, params, state);
    }
    if (on_epoch) on_epoch(cfg.epochs - 1, params, state);
    return res;
}

} // namespace lapdae
