#pragma once

#include <cstdint>
#include <vector>

#include "lapdae/tensor.hpp"

namespace lapdae {

enum class PyramidFlavor { Gaussian, Laplacian };

/// Image pyramid, finest level first. Built from (B,C,H,W) or (C,H,W)
/// tensors; every plane is filtered independently. Level l+1 spatial
/// extents are ceil(level_l / 2).
struct Pyramid {
    std::vector<Tensor> levels;
    PyramidFlavor flavor = PyramidFlavor::Gaussian;
    int requested_levels = 0;
    bool depth_clamped = false;    // true when requested_levels was infeasible

    int num_levels() const { return static_cast<int>(levels.size()); }
};

inline constexpr int kRandomLevel = -1;

enum class CorruptionKind { GaussianNoise };

/// One corruption draw. sigma is in normalized pixel units ([0,1] scale).
struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    int level = kRandomLevel;      // pyramid level, or kRandomLevel
    float sigma = 25.0f / 255.0f;
    uint64_t seed = 0;
};

/// Deepest feasible pyramid: floor(log2(min extent)) + 1.
int max_pyramid_levels(int64_t h, int64_t w);

/// Separable 5-tap binomial low-pass + factor-2 decimation (even indices,
/// keeping ceil(n/2) samples). Reflected borders.
Tensor pyr_down(const Tensor& x);

/// Zero-insertion upsample to the given spatial extents, interpolated with
/// the same binomial kernel at unit DC gain. Requires src extents equal to
/// ceil(target/2).
Tensor pyr_up(const Tensor& x, int64_t out_h, int64_t out_w);

Pyramid gaussian_pyramid(const Tensor& x, int num_levels);
Pyramid laplacian_pyramid(const Tensor& x, int num_levels);

/// Inverse of laplacian_pyramid: recursively adds each band to the
/// upsampled coarser estimate. Throws UsageError on Gaussian input.
Tensor reconstruct(const Pyramid& p);

struct CorruptResult {
    Tensor image;          // clamped to [0,1]
    int level = 0;         // level actually corrupted
    bool depth_clamped = false;
};

/// Builds the Laplacian pyramid of x, adds i.i.d. Gaussian noise to one
/// level (drawn uniformly over all levels when spec.level is random),
/// reconstructs and clamps. sample_index decorrelates parallel draws.
CorruptResult lap_corrupt(const Tensor& x, const CorruptionSpec& spec, int num_levels,
                          uint64_t sample_index = 0);

/// Conventional DAE corruption: additive pixel-space Gaussian noise,
/// clamped to [0,1].
Tensor spatial_corrupt(const Tensor& x, float sigma, uint64_t seed, uint64_t sample_index = 0);

} // namespace lapdae
