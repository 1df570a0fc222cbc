#pragma once

// Small 3D convolutional network that classifies snippet stacks as waggle vs
// non-waggle: valid 3D convolutions with SELU, global average pooling,
// dropout, fully connected head and a sigmoid. Forward, backward and Adam are
// implemented here; Scalar is float for real use.
//
// Model file layout (little-endian):
//   u32 magic "WDDN", u32 version (1)
//   u32 sequence length, u32 snippet height, u32 snippet width, f32 dropout
//   u32 conv count, per conv: in, out, kt, kh, kw, st, sh, sw (u32 each)
//   u32 fc count, per fc: in, out (u32 each)
//   f32 parameters: per conv weights [out][in][kt][kh][kw] then biases,
//                   per fc weights [out][in] then biases

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "wdd/errors.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"

namespace wdd::filter {

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr std::uint32_t kModelMagic = 0x4E444457;  // "WDDN"
inline constexpr std::uint32_t kModelVersion = 1;

template <typename S>
S selu(S x) {
    return x > S(0) ? S(kSeluLambda) * x : S(kSeluLambda * kSeluAlpha) * (std::exp(x) - S(1));
}

/// Derivative of selu at x, written in terms of the output y = selu(x).
template <typename S>
S selu_grad_from_output(S x, S y) {
    return x > S(0) ? S(kSeluLambda) : y + S(kSeluLambda * kSeluAlpha);
}

/// Dense C x T x H x W volume.
template <typename S>
struct Volume {
    int c = 0, t = 0, h = 0, w = 0;
    std::vector<S> v;

    Volume() = default;
    Volume(int c_, int t_, int h_, int w_) : c(c_), t(t_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * t_ * h_ * w_, S(0)) {}

    std::size_t index(int ci, int ti, int yi, int xi) const {
        return ((static_cast<std::size_t>(ci) * t + ti) * h + yi) * w + xi;
    }
    S& at(int ci, int ti, int yi, int xi) { return v[index(ci, ti, yi, xi)]; }
    S at(int ci, int ti, int yi, int xi) const { return v[index(ci, ti, yi, xi)]; }
    bool same_shape(const Volume& o) const { return c == o.c && t == o.t && h == o.h && w == o.w; }
};

struct ConvSpec {
    int out_channels = 8;
    int kt = 3, kh = 5, kw = 5;
    int st = 2, sh = 2, sw = 2;
};

struct Architecture {
    int sequence_length = 128;
    int snippet_size = 50;
    std::vector<ConvSpec> convs{{8, 3, 5, 5, 2, 2, 2}, {16, 3, 3, 3, 2, 2, 2}};
    /// Hidden fully connected widths between pooling and the output unit.
    std::vector<int> hidden{};
    double dropout = 0.5;

    /// The three-convolution, two-dense variant.
    static Architecture deep() {
        Architecture a;
        a.convs = {{8, 3, 5, 5, 2, 2, 2}, {16, 3, 3, 3, 2, 2, 2}, {32, 3, 3, 3, 2, 2, 2}};
        a.hidden = {16};
        return a;
    }

    void validate() const {
        if (sequence_length < 1) throw ConfigError("filter.sequence_length", "must be >= 1");
        if (snippet_size < 1) throw ConfigError("filter.snippet_size", "must be >= 1");
        if (convs.empty()) throw ConfigError("filter.convs", "need at least one convolution");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("filter.dropout", "must lie in [0, 1)");
        int t = sequence_length, h = snippet_size, w = snippet_size;
        for (const auto& c : convs) {
            if (c.out_channels < 1 || c.kt < 1 || c.kh < 1 || c.kw < 1 || c.st < 1 || c.sh < 1 || c.sw < 1)
                throw ConfigError("filter.convs", "kernel sizes, strides and channels must be >= 1");
            if (t < c.kt || h < c.kh || w < c.kw)
                throw ConfigError("filter.convs", "input too small for the convolution stack");
            t = (t - c.kt) / c.st + 1;
            h = (h - c.kh) / c.sh + 1;
            w = (w - c.kw) / c.sw + 1;
        }
        for (int n : hidden)
            if (n < 1) throw ConfigError("filter.hidden", "widths must be >= 1");
    }
};

template <typename S>
struct ConvLayer {
    int in = 1, out = 1, kt = 1, kh = 1, kw = 1, st = 1, sh = 1, sw = 1;
    std::vector<S> weight;  // [out][in][kt][kh][kw]
    std::vector<S> bias;    // [out]

    std::size_t kernel_volume() const { return static_cast<std::size_t>(kt) * kh * kw; }
    std::size_t widx(int o, int i, int a, int b, int c) const {
        return (((static_cast<std::size_t>(o) * in + i) * kt + a) * kh + b) * kw + c;
    }
};

template <typename S>
struct DenseLayer {
    int in = 1, out = 1;
    std::vector<S> weight;  // [out][in]
    std::vector<S> bias;
};

template <typename S = float>
class Model {
public:
    Model() = default;

    /// LeCun-normal initialization (matched to SELU) from a seed.
    Model(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
        arch.validate();
        build_shapes();
        std::mt19937_64 rng(seed);
        for (auto& c : convs_) {
            std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / (c.in * c.kernel_volume())));
            for (auto& w : c.weight) w = static_cast<S>(nd(rng));
        }
        for (auto& d : dense_) {
            std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / d.in));
            for (auto& w : d.weight) w = static_cast<S>(nd(rng));
        }
    }

    const Architecture& architecture() const noexcept { return arch_; }
    std::vector<ConvLayer<S>>& convs() noexcept { return convs_; }
    const std::vector<ConvLayer<S>>& convs() const noexcept { return convs_; }
    std::vector<DenseLayer<S>>& dense() noexcept { return dense_; }
    const std::vector<DenseLayer<S>>& dense() const noexcept { return dense_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& c : convs_) n += c.weight.size() + c.bias.size();
        for (const auto& d : dense_) n += d.weight.size() + d.bias.size();
        return n;
    }

    /// Every parameter tensor in file order.
    std::vector<std::span<S>> parameters() {
        std::vector<std::span<S>> p;
        for (auto& c : convs_) {
            p.emplace_back(c.weight);
            p.emplace_back(c.bias);
        }
        for (auto& d : dense_) {
            p.emplace_back(d.weight);
            p.emplace_back(d.bias);
        }
        return p;
    }

    std::vector<std::span<const S>> parameters() const {
        std::vector<std::span<const S>> p;
        for (const auto& c : convs_) {
            p.emplace_back(c.weight);
            p.emplace_back(c.bias);
        }
        for (const auto& d : dense_) {
            p.emplace_back(d.weight);
            p.emplace_back(d.bias);
        }
        return p;
    }

    /// Zero-initialized model of the same shape, used as a gradient buffer.
    Model zeros_like() const {
        Model m = *this;
        for (auto p : m.parameters()) std::fill(p.begin(), p.end(), S(0));
        return m;
    }

    void set_zero() {
        for (auto p : parameters()) std::fill(p.begin(), p.end(), S(0));
    }

    friend bool operator==(const Model& a, const Model& b) {
        const auto pa = a.parameters(), pb = b.parameters();
        if (pa.size() != pb.size()) return false;
        for (std::size_t i = 0; i < pa.size(); ++i)
            if (!std::equal(pa[i].begin(), pa[i].end(), pb[i].begin(), pb[i].end())) return false;
        return true;
    }

private:
    void build_shapes() {
        convs_.clear();
        dense_.clear();
        int in = 1;
        for (const auto& s : arch_.convs) {
            ConvLayer<S> c;
            c.in = in;
            c.out = s.out_channels;
            c.kt = s.kt;
            c.kh = s.kh;
            c.kw = s.kw;
            c.st = s.st;
            c.sh = s.sh;
            c.sw = s.sw;
            c.weight.assign(static_cast<std::size_t>(c.out) * c.in * c.kernel_volume(), S(0));
            c.bias.assign(c.out, S(0));
            convs_.push_back(std::move(c));
            in = s.out_channels;
        }
        for (int n : arch_.hidden) {
            dense_.push_back({in, n, std::vector<S>(static_cast<std::size_t>(in) * n, S(0)), std::vector<S>(n, S(0))});
            in = n;
        }
        dense_.push_back({in, 1, std::vector<S>(in, S(0)), std::vector<S>(1, S(0))});
    }

public:
    /// Builds an all-zero model of the given architecture.
    static Model zero(const Architecture& arch) {
        arch.validate();
        Model m;
        m.arch_ = arch;
        m.build_shapes();
        return m;
    }

private:
    Architecture arch_;
    std::vector<ConvLayer<S>> convs_;
    std::vector<DenseLayer<S>> dense_;
};

// ---------------------------------------------------------------------------
// Input preparation

/// Random contiguous window of `target_len` frames for training; shorter
/// stacks are returned whole.
template <typename Rng>
std::vector<GrayImage> sample_window(std::span<const GrayImage> stack, int target_len, Rng& rng) {
    if (stack.empty()) throw DatasetError("sample_window: empty snippet stack");
    const auto n = static_cast<std::size_t>(target_len);
    if (stack.size() <= n) return {stack.begin(), stack.end()};
    std::uniform_int_distribution<std::size_t> pick(0, stack.size() - n);
    const std::size_t start = pick(rng);
    return {stack.begin() + static_cast<std::ptrdiff_t>(start), stack.begin() + static_cast<std::ptrdiff_t>(start + n)};
}

/// Deterministic variant for inference: the centered window.
inline std::vector<GrayImage> center_window(std::span<const GrayImage> stack, int target_len) {
    if (stack.empty()) throw DatasetError("center_window: empty snippet stack");
    const auto n = static_cast<std::size_t>(target_len);
    if (stack.size() <= n) return {stack.begin(), stack.end()};
    const std::size_t start = (stack.size() - n) / 2;
    return {stack.begin() + static_cast<std::ptrdiff_t>(start), stack.begin() + static_cast<std::ptrdiff_t>(start + n)};
}

/// Intensities standardized over the whole stack; SD below one grey level counts as one.
inline std::pair<double, double> stack_moments(std::span<const GrayImage> frames) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames)
        for (std::uint8_t px : f.pixels()) {
            sum += px;
            sq += static_cast<double>(px) * px;
            ++n;
        }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    return {mean, std::max(1.0, std::sqrt(var))};
}

/// Stack to a 1 x length x H x W volume. Frames are standardized to zero mean
/// and unit SD; slices past the end of the stack stay zero.
template <typename S>
Volume<S> to_volume(std::span<const GrayImage> frames, int length, bool flip_x = false, bool flip_y = false) {
    if (frames.empty()) throw DatasetError("empty snippet stack");
    if (static_cast<int>(frames.size()) > length) throw DimensionMismatchError("snippet stack longer than the input");
    const int h = frames.front().height(), w = frames.front().width();
    for (const auto& f : frames)
        if (f.width() != w || f.height() != h) throw DimensionMismatchError("snippet stack: inconsistent frame sizes");
    const auto [mean, sd] = stack_moments(frames);
    Volume<S> v(1, length, h, w);
    for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
        const auto& f = frames[t];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                v.at(0, t, y, x) = static_cast<S>((f(flip_x ? w - 1 - x : x, flip_y ? h - 1 - y : y) - mean) / sd);
    }
    return v;
}

/// Training input: random window of at most `length` frames, zero padded at the end.
template <typename S, typename Rng>
Volume<S> pad_or_sample(std::span<const GrayImage> stack, int length, Rng& rng, bool flip_x = false,
                        bool flip_y = false) {
    return to_volume<S>(sample_window(stack, length, rng), length, flip_x, flip_y);
}

/// Inference input: centered window, zero padded at the end.
template <typename S>
Volume<S> pad_or_center(std::span<const GrayImage> stack, int length) {
    return to_volume<S>(center_window(stack, length), length);
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename S>
struct ForwardCache {
    std::vector<Volume<S>> conv_in;   // input of each conv
    std::vector<Volume<S>> conv_pre;  // pre-activation output
    std::vector<Volume<S>> conv_out;  // post-SELU output
    std::vector<S> pooled;
    std::vector<S> mask;  // dropout multipliers, empty when inactive
    std::vector<std::vector<S>> dense_in;
    std::vector<std::vector<S>> dense_pre;
    double logit = 0.0;
};

namespace detail {

// Per (channel, time) flag telling whether the slice has any nonzero value.
template <typename S>
std::vector<char> nonzero_slices(const Volume<S>& v) {
    std::vector<char> nz(static_cast<std::size_t>(v.c) * v.t, 0);
    const std::size_t plane = static_cast<std::size_t>(v.h) * v.w;
    for (std::size_t s = 0; s < nz.size(); ++s) {
        const S* p = v.v.data() + s * plane;
        nz[s] = std::any_of(p, p + plane, [](S x) { return x != S(0); }) ? 1 : 0;
    }
    return nz;
}

template <typename S>
struct ConvGeometry {
    int ot, oh, ow;
};

template <typename S>
ConvGeometry<S> conv_geometry(const ConvLayer<S>& L, const Volume<S>& in) {
    if (in.c != L.in) throw DimensionMismatchError("conv: channel mismatch");
    if (in.t < L.kt || in.h < L.kh || in.w < L.kw) throw DimensionMismatchError("conv: input smaller than kernel");
    return {(in.t - L.kt) / L.st + 1, (in.h - L.kh) / L.sh + 1, (in.w - L.kw) / L.sw + 1};
}

// True when every input time slice under output frame t is zero (zero padding).
inline bool dead_frame(const std::vector<char>& nz, int in_c, int in_t, int t0, int kt) {
    for (int i = 0; i < in_c; ++i)
        for (int a = 0; a < kt; ++a)
            if (nz[static_cast<std::size_t>(i) * in_t + t0 + a]) return false;
    return true;
}

// Gathers the receptive field of one output position in weight order.
template <typename S>
void gather_patch(const ConvLayer<S>& L, const Volume<S>& in, int t0, int y0, int x0, S* patch) {
    for (int i = 0; i < L.in; ++i)
        for (int a = 0; a < L.kt; ++a)
            for (int b = 0; b < L.kh; ++b) {
                const S* src = in.v.data() + in.index(i, t0 + a, y0 + b, x0);
                for (int c = 0; c < L.kw; ++c) *patch++ = src[c];
            }
}

template <typename S>
void scatter_patch(const ConvLayer<S>& L, Volume<S>& din, int t0, int y0, int x0, const S* patch) {
    for (int i = 0; i < L.in; ++i)
        for (int a = 0; a < L.kt; ++a)
            for (int b = 0; b < L.kh; ++b) {
                S* dst = din.v.data() + din.index(i, t0 + a, y0 + b, x0);
                for (int c = 0; c < L.kw; ++c) dst[c] += *patch++;
            }
}

template <typename S>
Volume<S> conv_forward(const ConvLayer<S>& L, const Volume<S>& in) {
    const auto g = conv_geometry(L, in);
    Volume<S> out(L.out, g.ot, g.oh, g.ow);
    const auto nz = nonzero_slices(in);
    const std::size_t K = static_cast<std::size_t>(L.in) * L.kernel_volume();
    const std::size_t plane = static_cast<std::size_t>(g.ot) * g.oh * g.ow;
    std::vector<S> patch(K), wt(K * L.out), acc(L.out);
    for (int o = 0; o < L.out; ++o)
        for (std::size_t k = 0; k < K; ++k) wt[k * L.out + o] = L.weight[o * K + k];
    for (int t = 0; t < g.ot; ++t) {
        const bool dead = dead_frame(nz, in.c, in.t, t * L.st, L.kt);
        for (int y = 0; y < g.oh; ++y)
            for (int x = 0; x < g.ow; ++x) {
                const std::size_t pos = (static_cast<std::size_t>(t) * g.oh + y) * g.ow + x;
                if (dead) {
                    for (int o = 0; o < L.out; ++o) out.v[o * plane + pos] = L.bias[o];
                    continue;
                }
                gather_patch(L, in, t * L.st, y * L.sh, x * L.sw, patch.data());
                std::copy(L.bias.begin(), L.bias.end(), acc.begin());
                for (std::size_t k = 0; k < K; ++k) {
                    const S p = patch[k];
                    const S* w = wt.data() + k * L.out;
                    for (int o = 0; o < L.out; ++o) acc[o] += w[o] * p;
                }
                for (int o = 0; o < L.out; ++o) out.v[o * plane + pos] = acc[o];
            }
    }
    return out;
}

// Accumulates weight/bias gradients into G and, when din is given, the input gradient.
template <typename S>
void conv_backward(const ConvLayer<S>& L, const Volume<S>& in, const Volume<S>& dout, ConvLayer<S>& G,
                   Volume<S>* din) {
    const auto g = conv_geometry(L, in);
    const auto nz = nonzero_slices(in);
    const std::size_t K = static_cast<std::size_t>(L.in) * L.kernel_volume();
    const std::size_t plane = static_cast<std::size_t>(g.ot) * g.oh * g.ow;
    if (din) *din = Volume<S>(in.c, in.t, in.h, in.w);
    std::vector<S> patch(K), dpatch(K);
    for (int o = 0; o < L.out; ++o) {
        S sb = 0;
        for (std::size_t k = 0; k < plane; ++k) sb += dout.v[o * plane + k];
        G.bias[o] += sb;
    }
    for (int t = 0; t < g.ot; ++t) {
        const bool dead = dead_frame(nz, in.c, in.t, t * L.st, L.kt);
        if (dead && !din) continue;
        for (int y = 0; y < g.oh; ++y)
            for (int x = 0; x < g.ow; ++x) {
                const std::size_t pos = (static_cast<std::size_t>(t) * g.oh + y) * g.ow + x;
                if (!dead) {
                    gather_patch(L, in, t * L.st, y * L.sh, x * L.sw, patch.data());
                    for (int o = 0; o < L.out; ++o) {
                        const S d = dout.v[o * plane + pos];
                        S* gw = G.weight.data() + o * K;
                        for (std::size_t k = 0; k < K; ++k) gw[k] += d * patch[k];
                    }
                }
                if (din) {
                    std::fill(dpatch.begin(), dpatch.end(), S(0));
                    for (int o = 0; o < L.out; ++o) {
                        const S d = dout.v[o * plane + pos];
                        const S* w = L.weight.data() + o * K;
                        for (std::size_t k = 0; k < K; ++k) dpatch[k] += d * w[k];
                    }
                    scatter_patch(L, *din, t * L.st, y * L.sh, x * L.sw, dpatch.data());
                }
            }
    }
}

} // namespace detail

/// Forward pass. A non-null `dropout_rng` enables training-mode dropout.
template <typename S, typename Rng = std::mt19937_64>
double forward_logit(const Model<S>& model, const Volume<S>& input, ForwardCache<S>* cache = nullptr,
                     Rng* dropout_rng = nullptr) {
    const auto& arch = model.architecture();
    if (input.c != 1) throw DimensionMismatchError("filter input must have one channel");
    ForwardCache<S> local;
    ForwardCache<S>& fc = cache ? *cache : local;
    fc = ForwardCache<S>{};

    Volume<S> x = input;
    for (const auto& L : model.convs()) {
        Volume<S> pre = detail::conv_forward(L, x);
        Volume<S> post = pre;
        for (auto& v : post.v) v = selu(v);
        if (cache) {
            fc.conv_in.push_back(std::move(x));
            fc.conv_pre.push_back(std::move(pre));
            fc.conv_out.push_back(post);
        }
        x = std::move(post);
    }
    std::vector<S> h(x.c, S(0));
    const std::size_t plane = static_cast<std::size_t>(x.t) * x.h * x.w;
    for (int c = 0; c < x.c; ++c) {
        double s = 0.0;
        const S* p = x.v.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t k = 0; k < plane; ++k) s += p[k];
        h[c] = static_cast<S>(s / static_cast<double>(plane));
    }
    fc.pooled = h;
    if (dropout_rng && arch.dropout > 0.0) {
        std::bernoulli_distribution keep(1.0 - arch.dropout);
        fc.mask.resize(h.size());
        const S scale = static_cast<S>(1.0 / (1.0 - arch.dropout));
        for (std::size_t k = 0; k < h.size(); ++k) {
            fc.mask[k] = keep(*dropout_rng) ? scale : S(0);
            h[k] *= fc.mask[k];
        }
    }
    const auto& dense = model.dense();
    for (std::size_t l = 0; l < dense.size(); ++l) {
        const auto& D = dense[l];
        if (static_cast<int>(h.size()) != D.in) throw DimensionMismatchError("dense: width mismatch");
        std::vector<S> pre(D.out);
        for (int o = 0; o < D.out; ++o) {
            S s = D.bias[o];
            for (int i = 0; i < D.in; ++i) s += D.weight[static_cast<std::size_t>(o) * D.in + i] * h[i];
            pre[o] = s;
        }
        fc.dense_in.push_back(h);
        fc.dense_pre.push_back(pre);
        if (l + 1 < dense.size()) {
            h.resize(D.out);
            for (int o = 0; o < D.out; ++o) h[o] = selu(pre[o]);
        } else {
            fc.logit = static_cast<double>(pre[0]);
        }
    }
    return fc.logit;
}

/// Sigmoid of the logit, kept strictly inside (0, 1).
inline double probability_from_logit(double z) {
    double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    constexpr double lo = std::numeric_limits<double>::min();
    return std::clamp(p, lo, std::nextafter(1.0, 0.0));
}

template <typename S>
void check_input_shape(const Model<S>& model, const Volume<S>& input) {
    const auto& a = model.architecture();
    if (input.c != 1 || input.t != a.sequence_length || input.h != a.snippet_size || input.w != a.snippet_size)
        throw DimensionMismatchError("filter input is " + std::to_string(input.t) + "x" + std::to_string(input.h) +
                                     "x" + std::to_string(input.w) + ", model expects " +
                                     std::to_string(a.sequence_length) + "x" + std::to_string(a.snippet_size) +
                                     "x" + std::to_string(a.snippet_size));
}

/// Inference: deterministic, dropout off.
template <typename S>
double forward(const Model<S>& model, const Volume<S>& input) {
    check_input_shape(model, input);
    return probability_from_logit(forward_logit(model, input));
}

/// Probability for a raw snippet stack (centered window or zero padding to the model length).
template <typename S>
double predict(const Model<S>& model, std::span<const GrayImage> stack) {
    const int len = model.architecture().sequence_length;
    return forward(model, pad_or_center<S>(stack, len));
}

/// Binary cross-entropy from a logit, computed stably.
inline double bce_from_logit(double z, double label) {
    return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

/// Gradient of the BCE loss w.r.t. every parameter, accumulated into `grad`
/// (same shape as the model). Returns the loss. Uses the dropout mask stored
/// in `cache` if the forward pass was run in training mode.
template <typename S>
double backward(const Model<S>& model, const ForwardCache<S>& cache, double label, Model<S>& grad) {
    const double z = cache.logit;
    const double loss = bce_from_logit(z, label);
    const auto& dense = model.dense();
    auto& gdense = grad.dense();
    std::vector<S> dh{static_cast<S>(probability_from_logit(z) - label)};
    for (std::size_t l = dense.size(); l-- > 0;) {
        const auto& D = dense[l];
        auto& G = gdense[l];
        std::vector<S> dpre = dh;
        if (l + 1 < dense.size())
            for (int o = 0; o < D.out; ++o) {
                const S x = cache.dense_pre[l][o];
                dpre[o] *= selu_grad_from_output(x, selu(x));
            }
        const auto& in = cache.dense_in[l];
        std::vector<S> din(D.in, S(0));
        for (int o = 0; o < D.out; ++o) {
            G.bias[o] += dpre[o];
            for (int i = 0; i < D.in; ++i) {
                G.weight[static_cast<std::size_t>(o) * D.in + i] += dpre[o] * in[i];
                din[i] += D.weight[static_cast<std::size_t>(o) * D.in + i] * dpre[o];
            }
        }
        dh = std::move(din);
    }
    if (!cache.mask.empty())
        for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= cache.mask[k];

    const auto& convs = model.convs();
    auto& gconvs = grad.convs();
    const auto& last = cache.conv_out.back();
    Volume<S> dout(last.c, last.t, last.h, last.w);
    const std::size_t plane = static_cast<std::size_t>(last.t) * last.h * last.w;
    for (int c = 0; c < last.c; ++c) {
        const S g = dh[c] / static_cast<S>(plane);
        std::fill(dout.v.begin() + static_cast<std::ptrdiff_t>(c * plane),
                  dout.v.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane), g);
    }
    for (std::size_t l = convs.size(); l-- > 0;) {
        const auto& pre = cache.conv_pre[l];
        const auto& post = cache.conv_out[l];
        for (std::size_t k = 0; k < dout.v.size(); ++k) dout.v[k] *= selu_grad_from_output(pre.v[k], post.v[k]);
        Volume<S> din;
        detail::conv_backward(convs[l], cache.conv_in[l], dout, gconvs[l], l > 0 ? &din : nullptr);
        if (l > 0) dout = std::move(din);
    }
    return loss;
}

/// Convenience: forward (inference mode) + backward for one sample.
template <typename S>
double loss_and_gradient(const Model<S>& model, const Volume<S>& input, double label, Model<S>& grad) {
    ForwardCache<S> cache;
    forward_logit(model, input, &cache);
    return backward(model, cache, label, grad);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename S>
class Adam {
public:
    Adam(const Model<S>& model, AdamConfig cfg) : cfg_(cfg), m_(model.zeros_like()), v_(model.zeros_like()) {}

    void step(Model<S>& model, const Model<S>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        auto p = model.parameters();
        const auto g = grad.parameters();
        auto m = m_.parameters();
        auto v = v_.parameters();
        for (std::size_t k = 0; k < p.size(); ++k)
            for (std::size_t i = 0; i < p[k].size(); ++i) {
                const double gi = g[k][i];
                m[k][i] = static_cast<S>(cfg_.beta1 * m[k][i] + (1.0 - cfg_.beta1) * gi);
                v[k][i] = static_cast<S>(cfg_.beta2 * v[k][i] + (1.0 - cfg_.beta2) * gi * gi);
                const double mh = m[k][i] / c1, vh = v[k][i] / c2;
                p[k][i] = static_cast<S>(p[k][i] - cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.epsilon));
            }
    }

private:
    AdamConfig cfg_;
    Model<S> m_;
    Model<S> v_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct Sample {
    std::vector<GrayImage> stack;
    int label = 0;  // 1 = waggle
};

struct TrainConfig {
    Architecture architecture;
    int batch_size = 8;
    int epochs = 10;
    AdamConfig adam;
    double validation_fraction = 0.2;
    bool augment = true;
    std::uint64_t seed = 0;
    /// Precision the decision threshold must reach on the validation split.
    double target_precision = 0.95;
    /// Worker threads for per-sample gradients; results do not depend on it.
    int threads = 0;

    void validate() const {
        architecture.validate();
        if (batch_size < 1) throw ConfigError("filter.batch_size", "must be >= 1");
        if (epochs < 0) throw ConfigError("filter.epochs", "must be >= 0");
        if (!(adam.learning_rate >= 0)) throw ConfigError("filter.learning_rate", "must be >= 0");
        if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw ConfigError("filter.beta1", "must lie in [0, 1)");
        if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw ConfigError("filter.beta2", "must lie in [0, 1)");
        if (!(adam.epsilon > 0)) throw ConfigError("filter.epsilon", "must be positive");
        if (!(validation_fraction > 0 && validation_fraction < 1))
            throw ConfigError("filter.validation_fraction", "must lie in (0, 1)");
        if (!(target_precision > 0 && target_precision <= 1))
            throw ConfigError("filter.target_precision", "must lie in (0, 1]");
        if (threads < 0) throw ConfigError("filter.threads", "must be >= 0");
    }
};

struct EpochMetrics {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
};

struct TrainResult {
    Model<float> model;
    std::vector<EpochMetrics> epochs;
    double threshold = 0.5;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> validation_indices;
};

struct Confusion {
    int tp = 0, fp = 0, tn = 0, fn = 0;
    double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 1.0; }
    double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
    double accuracy() const {
        const int n = tp + fp + tn + fn;
        return n ? static_cast<double>(tp + tn) / n : 0.0;
    }
};

inline Confusion confusion(std::span<const double> probs, std::span<const int> labels, double threshold) {
    Confusion c;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pos = probs[i] >= threshold;
        if (labels[i]) (pos ? c.tp : c.fn)++;
        else (pos ? c.fp : c.tn)++;
    }
    return c;
}

/// Lowest threshold whose precision reaches `target`; falls back to 0.5 when
/// no threshold does.
inline double choose_threshold(std::span<const double> probs, std::span<const int> labels, double target) {
    std::vector<double> cands(probs.begin(), probs.end());
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    for (double t : cands) {
        const auto c = confusion(probs, labels, t);
        if (c.tp > 0 && c.precision() >= target) return t;
    }
    return 0.5;
}

template <typename S>
std::vector<double> predict_all(const Model<S>& model, std::span<const Sample> data,
                                std::span<const std::size_t> idx, int threads = 0) {
    std::vector<double> out(idx.size());
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, std::max(1, static_cast<int>(idx.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t k = w; k < idx.size(); k += workers) out[k] = predict(model, data[idx[k]].stack);
        });
    for (auto& t : pool) t.join();
    return out;
}

/// Seeded stratified split; both classes appear in the training part.
inline void split_dataset(std::span<const Sample> data, double validation_fraction, std::uint64_t seed,
                          std::vector<std::size_t>& train, std::vector<std::size_t>& validation) {
    train.clear();
    validation.clear();
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            if ((data[i].label != 0) == (cls == 1)) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * idx.size() + 0.5));
        const std::size_t keep = idx.size() > 1 ? std::min(n_val, idx.size() - 1) : 0;
        validation.insert(validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
        train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(validation.begin(), validation.end());
}

/// Trains a fresh model. Deterministic for a given seed regardless of thread count.
/// With `train_on_all` the validation split is still reported but also trained on.
inline TrainResult train(std::span<const Sample> data, const TrainConfig& cfg, bool train_on_all = false) {
    cfg.validate();
    int pos = 0, neg = 0;
    for (const auto& s : data) (s.label ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DatasetError("training needs both waggle and non-waggle samples");
    for (const auto& s : data)
        if (s.stack.empty()) throw DatasetError("training sample with an empty snippet stack");

    TrainResult res;
    split_dataset(data, cfg.validation_fraction, cfg.seed, res.train_indices, res.validation_indices);
    std::vector<std::size_t> fit_idx = res.train_indices;
    if (train_on_all) {
        fit_idx.resize(data.size());
        std::iota(fit_idx.begin(), fit_idx.end(), std::size_t{0});
    }

    Model<float> model(cfg.architecture, cfg.seed);
    Adam<float> adam(model, cfg.adam);
    std::mt19937_64 rng(cfg.seed + 1);
    const int seq = cfg.architecture.sequence_length;
    int workers = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, cfg.batch_size);

    auto eval = [&](std::span<const std::size_t> idx) {
        if (idx.empty()) return 0.0;
        const auto probs = predict_all(model, data, idx, cfg.threads);
        int correct = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) correct += (probs[k] >= 0.5) == (data[idx[k]].label != 0);
        return static_cast<double>(correct) / idx.size();
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = fit_idx;
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - b0);
            struct Job {
                Volume<float> input;
                std::uint64_t dropout_seed;
                double label;
            };
            std::vector<Job> jobs(n);
            for (std::size_t k = 0; k < n; ++k) {
                const auto& s = data[order[b0 + k]];
                const auto frames = sample_window(s.stack, seq, rng);
                bool fx = false, fy = false;
                if (cfg.augment) {
                    std::bernoulli_distribution coin(0.5);
                    fx = coin(rng);
                    fy = coin(rng);
                }
                jobs[k] = {to_volume<float>(frames, seq, fx, fy), rng(), static_cast<double>(s.label != 0)};
            }
            std::vector<Model<float>> grads(n, model.zeros_like());
            std::vector<double> losses(n, 0.0);
            std::vector<std::thread> pool;
            const int nw = std::min<int>(workers, static_cast<int>(n));
            for (int w = 0; w < nw; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t k = w; k < n; k += nw) {
                        std::mt19937_64 drop(jobs[k].dropout_seed);
                        ForwardCache<float> cache;
                        forward_logit(model, jobs[k].input, &cache, &drop);
                        losses[k] = backward(model, cache, jobs[k].label, grads[k]);
                    }
                });
            for (auto& t : pool) t.join();

            Model<float> total = model.zeros_like();
            auto tp = total.parameters();
            for (std::size_t k = 0; k < n; ++k) {
                const auto gp = grads[k].parameters();
                for (std::size_t a = 0; a < tp.size(); ++a)
                    for (std::size_t i = 0; i < tp[a].size(); ++i) tp[a][i] += gp[a][i];
                loss_sum += losses[k];
            }
            for (auto p : tp)
                for (auto& x : p) x /= static_cast<float>(n);
            adam.step(model, total);
        }
        EpochMetrics m;
        m.train_loss = order.empty() ? 0.0 : loss_sum / order.size();
        m.train_accuracy = eval(res.train_indices);
        m.validation_accuracy = eval(res.validation_indices);
        res.epochs.push_back(m);
    }

    if (!res.validation_indices.empty()) {
        const auto probs = predict_all(model, data, res.validation_indices, cfg.threads);
        std::vector<int> labels;
        for (std::size_t i : res.validation_indices) labels.push_back(data[i].label != 0);
        res.threshold = choose_threshold(probs, labels, cfg.target_precision);
    }
    res.model = std::move(model);
    return res;
}

/// Indices of the stacks whose probability reaches `threshold`.
template <typename S>
std::vector<std::size_t> filter_runs(const Model<S>& model, std::span<const std::vector<GrayImage>> stacks,
                                     double threshold, std::vector<double>* probabilities = nullptr) {
    std::vector<std::size_t> kept;
    if (probabilities) probabilities->clear();
    for (std::size_t i = 0; i < stacks.size(); ++i) {
        const double p = predict(model, stacks[i]);
        if (probabilities) probabilities->push_back(p);
        if (p >= threshold) kept.push_back(i);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Model file

inline void write_model(std::ostream& os, const Model<float>& model) {
    const auto& a = model.architecture();
    wdd::detail::put_u32(os, kModelMagic);
    wdd::detail::put_u32(os, kModelVersion);
    wdd::detail::put_u32(os, static_cast<std::uint32_t>(a.sequence_length));
    wdd::detail::put_u32(os, static_cast<std::uint32_t>(a.snippet_size));
    wdd::detail::put_u32(os, static_cast<std::uint32_t>(a.snippet_size));
    wdd::detail::put_f32(os, static_cast<float>(a.dropout));
    wdd::detail::put_u32(os, static_cast<std::uint32_t>(model.convs().size()));
    for (const auto& c : model.convs())
        for (int v : {c.in, c.out, c.kt, c.kh, c.kw, c.st, c.sh, c.sw}) wdd::detail::put_u32(os, static_cast<std::uint32_t>(v));
    wdd::detail::put_u32(os, static_cast<std::uint32_t>(model.dense().size()));
    for (const auto& d : model.dense()) {
        wdd::detail::put_u32(os, static_cast<std::uint32_t>(d.in));
        wdd::detail::put_u32(os, static_cast<std::uint32_t>(d.out));
    }
    for (auto p : model.parameters())
        for (float x : p) wdd::detail::put_f32(os, x);
}

inline void save_model(const std::filesystem::path& path, const Model<float>& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UnreadableSourceError("cannot write " + path.string());
    write_model(os, model);
}

inline Model<float> read_model(std::istream& is, const std::string& name) {
    try {
        if (wdd::detail::get_u32(is) != kModelMagic) throw FormatError(name + ": not a filter model file");
        if (const auto v = wdd::detail::get_u32(is); v != kModelVersion)
            throw FormatError(name + ": unsupported model version " + std::to_string(v));
        Architecture a;
        a.sequence_length = static_cast<int>(wdd::detail::get_u32(is));
        a.snippet_size = static_cast<int>(wdd::detail::get_u32(is));
        if (static_cast<int>(wdd::detail::get_u32(is)) != a.snippet_size) throw FormatError(name + ": non-square snippets");
        a.dropout = wdd::detail::get_f32(is);
        const auto n_conv = wdd::detail::get_u32(is);
        if (n_conv == 0 || n_conv > 64) throw FormatError(name + ": bad conv layer count");
        a.convs.clear();
        int in = 1;
        for (std::uint32_t k = 0; k < n_conv; ++k) {
            std::array<int, 8> f{};
            for (auto& v : f) v = static_cast<int>(wdd::detail::get_u32(is));
            if (f[0] != in) throw FormatError(name + ": conv channel chain broken");
            a.convs.push_back({f[1], f[2], f[3], f[4], f[5], f[6], f[7]});
            in = f[1];
        }
        const auto n_dense = wdd::detail::get_u32(is);
        if (n_dense == 0 || n_dense > 64) throw FormatError(name + ": bad dense layer count");
        a.hidden.clear();
        for (std::uint32_t k = 0; k < n_dense; ++k) {
            const int din = static_cast<int>(wdd::detail::get_u32(is));
            const int dout = static_cast<int>(wdd::detail::get_u32(is));
            if (din != in) throw FormatError(name + ": dense width chain broken");
            if (k + 1 < n_dense) a.hidden.push_back(dout);
            else if (dout != 1) throw FormatError(name + ": output layer must have one unit");
            in = dout;
        }
        try {
            a.validate();
        } catch (const ConfigError& e) {
            throw FormatError(name + ": " + e.what());
        }
        auto m = Model<float>::zero(a);
        for (auto p : m.parameters())
            for (auto& x : p) x = wdd::detail::get_f32(is);
        if (is.peek() != std::char_traits<char>::eof()) throw FormatError(name + ": trailing bytes after parameters");
        return m;
    } catch (const FormatError& e) {
        const std::string what = e.what();
        if (what.rfind(name, 0) == 0) throw;
        throw FormatError(name + ": " + what);
    }
}

inline Model<float> load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UnreadableSourceError("cannot open " + path.string());
    return read_model(is, path.string());
}

/// Copies a model into another scalar type (used for double-precision checks).
template <typename To, typename From>
Model<To> convert(const Model<From>& src) {
    auto dst = Model<To>::zero(src.architecture());
    auto d = dst.parameters();
    const auto s = src.parameters();
    for (std::size_t k = 0; k < d.size(); ++k)
        for (std::size_t i = 0; i < d[k].size(); ++i) d[k][i] = static_cast<To>(s[k][i]);
    return dst;
}

} // namespace wdd::filter
