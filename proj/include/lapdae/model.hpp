#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lapdae/autograd.hpp"
#include "lapdae/tensor.hpp"

namespace lapdae {

struct ConvLayerSpec {
    int out_channels = 0;
    int stride = 1;
};

/// Four stride-chained 3x3 conv layers down, three up-conv layers back,
/// mirrored so decode(encode(x)) recovers the input shape exactly.
struct ArchConfig {
    int in_channels = 1;
    int in_h = 28;
    int in_w = 28;
    int kernel = 3;
    std::vector<ConvLayerSpec> encoder;   // ReLU after each
    std::vector<ConvLayerSpec> decoder;   // ReLU between, sigmoid after the last

    static ArchConfig make_default(int in_channels, int h, int w);

    /// Spatial extents after each encoder layer (index 0 = input).
    std::vector<std::pair<int64_t, int64_t>> encoder_shapes() const;
    /// Throws ConfigError naming the first layer whose shape chain breaks.
    void validate() const;

    bool operator==(const ArchConfig&) const = default;
};

enum class Layer { conv1, conv2, conv3, conv4, bottleneck };

Layer layer_from_string(const std::string& s);
std::string layer_to_string(Layer l);
std::vector<Layer> all_layers();

/// Named learnable tensors for the encoder F and decoder G. Parameters are
/// autograd leaves; each forward pass builds a fresh graph over them.
struct ModelParams {
    ArchConfig arch;
    std::vector<ag::Var> params;    // enc1.w, enc1.b, ..., dec3.w, dec3.b

    ag::Var& find(const std::string& name);
    const ag::Var& find(const std::string& name) const;
    std::vector<std::string> names() const;
    bool all_finite() const;
    uint64_t fingerprint() const;   // content hash of all parameter payloads
};

/// Kaiming fan-in normal kernels, zero biases; deterministic per seed.
ModelParams init_params(const ArchConfig& arch, uint64_t seed);

struct EncodedBatch {
    ag::Var bottleneck;              // (B, C, h, w), spatial resolution retained
    std::vector<ag::Var> features;   // post-activation output of each encoder layer
};

EncodedBatch encode(const ModelParams& p, const ag::Var& x);
EncodedBatch encode(const ModelParams& p, const Tensor& x);
ag::Var decode(const ModelParams& p, const EncodedBatch& y);

/// decode(encode(x)) with no gradient bookkeeping needed by the caller.
Tensor forward_reconstruct(const ModelParams& p, const Tensor& x);

/// Per-sample flattened feature rows (B, D). When budget > 0 and the raw
/// feature map exceeds it, channels are average-pooled onto the largest
/// g x g grid with C*g*g <= budget.
Tensor extract_embedding(const ModelParams& p, const Tensor& x, Layer layer, int64_t budget = 0);

/// Spatial average pooling onto a g x g grid (adaptive bins).
Tensor adaptive_avg_pool(const Tensor& x, int64_t g);

} // namespace lapdae
