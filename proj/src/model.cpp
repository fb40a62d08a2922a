#include "lapdae/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lapdae/ops.hpp"
#include "lapdae/rng.hpp"

namespace lapdae {

ArchConfig ArchConfig::make_default(int in_channels, int h, int w) {
    ArchConfig a;
    a.in_channels = in_channels;
    a.in_h = h;
    a.in_w = w;
    a.encoder = {{32, 1}, {32, 2}, {64, 1}, {64, 2}};
    a.decoder = {{32, 2}, {16, 2}, {in_channels, 1}};
    return a;
}

std::vector<std::pair<int64_t, int64_t>> ArchConfig::encoder_shapes() const {
    std::vector<std::pair<int64_t, int64_t>> shapes{{in_h, in_w}};
    int pad = kernel / 2;
    for (const auto& l : encoder) {
        auto [h, w] = shapes.back();
        shapes.emplace_back(ops::conv_out_size(h, kernel, l.stride, pad),
                            ops::conv_out_size(w, kernel, l.stride, pad));
    }
    return shapes;
}

void ArchConfig::validate() const {
    if (in_channels < 1 || in_h < 1 || in_w < 1)
        throw ConfigError("arch: input dims must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("arch: kernel size must be odd");
    if (encoder.empty() || decoder.empty()) throw ConfigError("arch: empty layer list");
    if (decoder.back().out_channels != in_channels)
        throw ConfigError("arch: decoder output channels " +
                          std::to_string(decoder.back().out_channels) + " != input channels " +
                          std::to_string(in_channels));
    int pad = kernel / 2;
    int64_t h = in_h, w = in_w;
    for (size_t i = 0; i < encoder.size(); ++i) {
        const auto& l = encoder[i];
        if (l.out_channels < 1 || l.stride < 1)
            throw ConfigError("arch: encoder layer " + std::to_string(i + 1) + " invalid");
        int64_t nh = ops::conv_out_size(h, kernel, l.stride, pad);
        int64_t nw = ops::conv_out_size(w, kernel, l.stride, pad);
        if (nh < 1 || nw < 1)
            throw ConfigError("arch: encoder layer " + std::to_string(i + 1) +
                              " collapses spatial extent to zero");
        h = nh;
        w = nw;
    }
    for (size_t i = 0; i < decoder.size(); ++i) {
        const auto& l = decoder[i];
        if (l.out_channels < 1 || l.stride < 1)
            throw ConfigError("arch: decoder layer " + std::to_string(i + 1) + " invalid");
        int op = l.stride - 1;
        h = ops::conv_transpose_out_size(h, kernel, l.stride, pad, op);
        w = ops::conv_transpose_out_size(w, kernel, l.stride, pad, op);
    }
    if (h != in_h || w != in_w)
        throw ConfigError("arch: decoder layer " + std::to_string(decoder.size()) +
                          " ends at " + std::to_string(h) + "x" + std::to_string(w) +
                          ", expected " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                          " (stride chain does not invert the encoder)");
}

Layer layer_from_string(const std::string& s) {
    if (s == "conv1") return Layer::conv1;
    if (s == "conv2") return Layer::conv2;
    if (s == "conv3") return Layer::conv3;
    if (s == "conv4") return Layer::conv4;
    if (s == "bottleneck") return Layer::bottleneck;
    throw UsageError("unknown layer '" + s + "' (valid: conv1, conv2, conv3, conv4, bottleneck)");
}

std::string layer_to_string(Layer l) {
    switch (l) {
        case Layer::conv1: return "conv1";
        case Layer::conv2: return "conv2";
        case Layer::conv3: return "conv3";
        case Layer::conv4: return "conv4";
        case Layer::bottleneck: return "bottleneck";
    }
    return "?";
}

std::vector<Layer> all_layers() {
    return {Layer::conv1, Layer::conv2, Layer::conv3, Layer::conv4, Layer::bottleneck};
}

ag::Var& ModelParams::find(const std::string& name) {
    for (auto& p : params)
        if (p.name() == name) return p;
    throw UsageError("no parameter named '" + name + "'");
}

const ag::Var& ModelParams::find(const std::string& name) const {
    for (const auto& p : params)
        if (p.name() == name) return p;
    throw UsageError("no parameter named '" + name + "'");
}

std::vector<std::string> ModelParams::names() const {
    std::vector<std::string> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.name());
    return out;
}

bool ModelParams::all_finite() const {
    return std::all_of(params.begin(), params.end(),
                       [](const ag::Var& v) { return v.value().all_finite(); });
}

uint64_t ModelParams::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.name().data(), p.name().size());
        mix(p.value().data(), sizeof(float) * static_cast<size_t>(p.value().numel()));
    }
    return h;
}

ModelParams init_params(const ArchConfig& arch, uint64_t seed) {
    arch.validate();
    ModelParams mp;
    mp.arch = arch;
    auto rng = make_rng(mix_seed(seed, 0x6d6f64656cULL));
    int64_t k = arch.kernel;
    auto make_layer = [&](const std::string& prefix, std::vector<int64_t> wshape, int64_t bias_len,
                          int64_t fan_in) {
        Tensor w(std::move(wshape));
        std::normal_distribution<float> dist(0.0f,
                                             std::sqrt(2.0f / static_cast<float>(fan_in)));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = dist(rng);
        mp.params.push_back(ag::Var::leaf(std::move(w), true, prefix + ".w"));
        mp.params.push_back(ag::Var::leaf(Tensor({bias_len}), true, prefix + ".b"));
    };
    int64_t c = arch.in_channels;
    for (size_t i = 0; i < arch.encoder.size(); ++i) {
        int64_t o = arch.encoder[i].out_channels;
        make_layer("enc" + std::to_string(i + 1), {o, c, k, k}, o, c * k * k);
        c = o;
    }
    for (size_t i = 0; i < arch.decoder.size(); ++i) {
        int64_t o = arch.decoder[i].out_channels;
        make_layer("dec" + std::to_string(i + 1), {c, o, k, k}, o, c * k * k);
        c = o;
    }
    return mp;
}

EncodedBatch encode(const ModelParams& p, const ag::Var& x) {
    if (x.value().rank() != 4)
        throw DimensionError("encode: input must be (B,C,H,W), got " + x.value().shape_str());
    if (x.value().dim(1) != p.arch.in_channels)
        throw DimensionError("encode: input channels (axis 1 = " + std::to_string(x.value().dim(1)) +
                             ") != configured " + std::to_string(p.arch.in_channels));
    int pad = p.arch.kernel / 2;
    EncodedBatch out;
    ag::Var h = x;
    for (size_t i = 0; i < p.arch.encoder.size(); ++i) {
        const std::string prefix = "enc" + std::to_string(i + 1);
        h = ag::conv2d(h, p.find(prefix + ".w"), p.find(prefix + ".b"), p.arch.encoder[i].stride, pad);
        h = ag::relu(h);
        out.features.push_back(h);
    }
    out.bottleneck = h;
    return out;
}

EncodedBatch encode(const ModelParams& p, const Tensor& x) { return encode(p, ag::Var::leaf(x)); }

ag::Var decode(const ModelParams& p, const EncodedBatch& y) {
    int pad = p.arch.kernel / 2;
    ag::Var h = y.bottleneck;
    for (size_t i = 0; i < p.arch.decoder.size(); ++i) {
        const std::string prefix = "dec" + std::to_string(i + 1);
        int stride = p.arch.decoder[i].stride;
        h = ag::conv_transpose2d(h, p.find(prefix + ".w"), p.find(prefix + ".b"), stride, pad,
                                 stride - 1);
        h = (i + 1 < p.arch.decoder.size()) ? ag::relu(h) : ag::sigmoid(h);
    }
    return h;
}

Tensor forward_reconstruct(const ModelParams& p, const Tensor& x) {
    return decode(p, encode(p, ag::Var::leaf(x))).value();
}

Tensor adaptive_avg_pool(const Tensor& x, int64_t g) {
    int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (g >= H && g >= W) return x;
    int64_t gh = std::min(g, H), gw = std::min(g, W);
    Tensor out({B, C, gh, gw});
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < gh; ++i) {
                int64_t h0 = i * H / gh, h1 = (i + 1) * H / gh;
                for (int64_t j = 0; j < gw; ++j) {
                    int64_t w0 = j * W / gw, w1 = (j + 1) * W / gw;
                    double s = 0.0;
                    for (int64_t hh = h0; hh < h1; ++hh)
                        for (int64_t ww = w0; ww < w1; ++ww) s += x.at(b, c, hh, ww);
                    out.at(b, c, i, j) =
                        static_cast<float>(s / static_cast<double>((h1 - h0) * (w1 - w0)));
                }
            }
    return out;
}

Tensor extract_embedding(const ModelParams& p, const Tensor& x, Layer layer, int64_t budget) {
    EncodedBatch enc = encode(p, x);
    size_t idx;
    switch (layer) {
        case Layer::conv1: idx = 0; break;
        case Layer::conv2: idx = 1; break;
        case Layer::conv3: idx = 2; break;
        case Layer::conv4: idx = 3; break;
        case Layer::bottleneck: idx = enc.features.size() - 1; break;
    }
    if (idx >= enc.features.size())
        throw UsageError("extract_embedding: layer " + layer_to_string(layer) +
                         " not present in this architecture");
    Tensor f = enc.features[idx].value();
    int64_t C = f.dim(1), H = f.dim(2), W = f.dim(3);
    if (budget > 0 && C * H * W > budget) {
        // largest grid fitting the element budget
        int64_t g = static_cast<int64_t>(std::sqrt(static_cast<double>(budget) / static_cast<double>(C)));
        g = std::max<int64_t>(1, std::min(g, std::max(H, W)));
        while (g > 1 && C * g * g > budget) --g;
        f = adaptive_avg_pool(f, g);
    }
    int64_t B = f.dim(0), D = f.numel() / f.dim(0);
    return Tensor({B, D}, std::move(f.vec()));
}

} // namespace lapdae
