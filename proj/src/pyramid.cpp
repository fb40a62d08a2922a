#include "lapdae/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lapdae/rng.hpp"

namespace lapdae {
namespace {

// Burt-Adelson binomial kernel (1,4,6,4,1)/16.
constexpr float kTap0 = 6.0f / 16.0f;
constexpr float kTap1 = 4.0f / 16.0f;
constexpr float kTap2 = 1.0f / 16.0f;

// Reflect-101 indexing (no edge repeat): -1 -> 1, n -> n-2.
int64_t reflect(int64_t i, int64_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

void check_image(const Tensor& x) {
    if (x.rank() < 2)
        throw DimensionError("pyramid: expected an image tensor with spatial axes, got " +
                             x.shape_str());
}

struct Planes {
    int64_t count, h, w;
};

Planes planes_of(const Tensor& x) {
    int64_t h = x.dim(-2), w = x.dim(-1);
    return {x.numel() / (h * w), h, w};
}

std::vector<int64_t> with_spatial(const Tensor& x, int64_t h, int64_t w) {
    auto s = x.shape();
    s[s.size() - 2] = h;
    s[s.size() - 1] = w;
    return s;
}

// Low-pass + decimate one row of length n into ceil(n/2).
void down_axis(const float* src, int64_t n, int64_t src_stride, float* dst, int64_t dst_stride) {
    int64_t m = (n + 1) / 2;
    for (int64_t i = 0; i < m; ++i) {
        int64_t c = 2 * i;
        float acc = kTap0 * src[reflect(c, n) * src_stride];
        acc += kTap1 * (src[reflect(c - 1, n) * src_stride] + src[reflect(c + 1, n) * src_stride]);
        acc += kTap2 * (src[reflect(c - 2, n) * src_stride] + src[reflect(c + 2, n) * src_stride]);
        dst[i * dst_stride] = acc;
    }
}

// Polyphase zero-insertion upsample from m = ceil(n/2) to n. Even outputs
// take taps (1,6,1)/8, odd (4,4)/8; both rows of the 2x-scaled kernel sum
// to one, so constants are preserved exactly.
void up_axis(const float* src, int64_t m, int64_t src_stride, float* dst, int64_t n,
             int64_t dst_stride) {
    for (int64_t j = 0; j < n; ++j) {
        float acc;
        if ((j & 1) == 0) {
            int64_t i = j / 2;
            acc = 0.75f * src[reflect(i, m) * src_stride] +
                  0.125f * (src[reflect(i - 1, m) * src_stride] + src[reflect(i + 1, m) * src_stride]);
        } else {
            int64_t i = (j - 1) / 2;
            acc = 0.5f * (src[reflect(i, m) * src_stride] + src[reflect(i + 1, m) * src_stride]);
        }
        dst[j * dst_stride] = acc;
    }
}

} // namespace

int max_pyramid_levels(int64_t h, int64_t w) {
    int64_t m = std::min(h, w);
    if (m < 1) throw DimensionError("pyramid: spatial extents must be >= 1");
    return static_cast<int>(std::floor(std::log2(static_cast<double>(m)))) + 1;
}

Tensor pyr_down(const Tensor& x) {
    check_image(x);
    auto [count, h, w] = planes_of(x);
    int64_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor tmp(with_spatial(x, oh, w));
    Tensor out(with_spatial(x, oh, ow));
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < count; ++p) {
        const float* sp = x.data() + p * h * w;
        float* tp = tmp.data() + p * oh * w;
        for (int64_t col = 0; col < w; ++col) down_axis(sp + col, h, w, tp + col, w);
        float* op = out.data() + p * oh * ow;
        for (int64_t row = 0; row < oh; ++row) down_axis(tp + row * w, w, 1, op + row * ow, 1);
    }
    return out;
}

Tensor pyr_up(const Tensor& x, int64_t out_h, int64_t out_w) {
    check_image(x);
    auto [count, h, w] = planes_of(x);
    if (h != (out_h + 1) / 2 || w != (out_w + 1) / 2)
        throw DimensionError("pyr_up: source extents " + x.shape_str() + " are not ceil(target/2) of " +
                             std::to_string(out_h) + "x" + std::to_string(out_w));
    Tensor tmp(with_spatial(x, out_h, w));
    Tensor out(with_spatial(x, out_h, out_w));
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < count; ++p) {
        const float* sp = x.data() + p * h * w;
        float* tp = tmp.data() + p * out_h * w;
        for (int64_t col = 0; col < w; ++col) up_axis(sp + col, h, w, tp + col, out_h, w);
        float* op = out.data() + p * out_h * out_w;
        for (int64_t row = 0; row < out_h; ++row) up_axis(tp + row * w, w, 1, op + row * out_w, 1);
    }
    return out;
}

namespace {

std::pair<int, bool> clamp_levels(const Tensor& x, int num_levels) {
    if (num_levels < 1) throw UsageError("pyramid: num_levels must be >= 1");
    int feasible = max_pyramid_levels(x.dim(-2), x.dim(-1));
    if (num_levels > feasible) return {feasible, true};
    return {num_levels, false};
}

} // namespace

Pyramid gaussian_pyramid(const Tensor& x, int num_levels) {
    check_image(x);
    auto [levels, clamped] = clamp_levels(x, num_levels);
    Pyramid p;
    p.flavor = PyramidFlavor::Gaussian;
    p.requested_levels = num_levels;
    p.depth_clamped = clamped;
    p.levels.push_back(x);
    for (int l = 1; l < levels; ++l) p.levels.push_back(pyr_down(p.levels.back()));
    return p;
}

Pyramid laplacian_pyramid(const Tensor& x, int num_levels) {
    Pyramid g = gaussian_pyramid(x, num_levels);
    Pyramid p;
    p.flavor = PyramidFlavor::Laplacian;
    p.requested_levels = num_levels;
    p.depth_clamped = g.depth_clamped;
    for (int l = 0; l + 1 < g.num_levels(); ++l) {
        const Tensor& fine = g.levels[static_cast<size_t>(l)];
        Tensor up = pyr_up(g.levels[static_cast<size_t>(l + 1)], fine.dim(-2), fine.dim(-1));
        Tensor band(fine.shape());
        for (int64_t i = 0; i < band.numel(); ++i) band[i] = fine[i] - up[i];
        p.levels.push_back(std::move(band));
    }
    p.levels.push_back(g.levels.back());   // top level is the Gaussian residual
    return p;
}

Tensor reconstruct(const Pyramid& p) {
    if (p.flavor != PyramidFlavor::Laplacian)
        throw UsageError("reconstruct: requires a Laplacian pyramid");
    if (p.levels.empty()) throw UsageError("reconstruct: empty pyramid");
    Tensor acc = p.levels.back();
    for (int l = p.num_levels() - 2; l >= 0; --l) {
        const Tensor& band = p.levels[static_cast<size_t>(l)];
        Tensor up = pyr_up(acc, band.dim(-2), band.dim(-1));
        for (int64_t i = 0; i < up.numel(); ++i) up[i] += band[i];
        acc = std::move(up);
    }
    return acc;
}

CorruptResult lap_corrupt(const Tensor& x, const CorruptionSpec& spec, int num_levels,
                          uint64_t sample_index) {
    if (spec.sigma <= 0.0f) throw UsageError("lap_corrupt: sigma must be > 0");
    Pyramid p = laplacian_pyramid(x, num_levels);
    auto rng = make_rng(mix_seed(spec.seed, sample_index));
    int level = spec.level;
    if (level == kRandomLevel) {
        std::uniform_int_distribution<int> pick(0, p.num_levels() - 1);
        level = pick(rng);
    } else if (level < 0 || level >= p.num_levels()) {
        throw UsageError("lap_corrupt: level " + std::to_string(spec.level) + " out of range [0, " +
                         std::to_string(p.num_levels() - 1) + "]");
    }
    Tensor& target = p.levels[static_cast<size_t>(level)];
    std::normal_distribution<float> noise(0.0f, spec.sigma);
    for (int64_t i = 0; i < target.numel(); ++i) target[i] += noise(rng);
    CorruptResult res;
    res.image = reconstruct(p);
    res.level = level;
    res.depth_clamped = p.depth_clamped;
    for (int64_t i = 0; i < res.image.numel(); ++i)
        res.image[i] = std::clamp(res.image[i], 0.0f, 1.0f);
    return res;
}

Tensor spatial_corrupt(const Tensor& x, float sigma, uint64_t seed, uint64_t sample_index) {
    if (sigma <= 0.0f) throw UsageError("spatial_corrupt: sigma must be > 0");
    auto rng = make_rng(mix_seed(seed, sample_index));
    std::normal_distribution<float> noise(0.0f, sigma);
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::clamp(x[i] + noise(rng), 0.0f, 1.0f);
    return out;
}

} // namespace lapdae
