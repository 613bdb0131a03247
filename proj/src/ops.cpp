#include "specrec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "specrec/error.hpp"

namespace specrec::ad {

namespace {

// Upper bound on im2col tile elements (rows x columns).
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
    std::size_t N, C, D, H, W, O;
    Index3 k, s, p;
    std::size_t OD, OH, OW;

    std::size_t spatial() const { return OD * OH * OW; }
    std::size_t rows() const { return C * k.d * k.h * k.w; }
    std::size_t columns() const { return N * spatial(); }
    // Whole output lines per tile.
    std::size_t tile() const { return std::max<std::size_t>(1, kColumnBudget / (rows() * OW)) * OW; }
};

ConvGeom conv_geometry(const Shape& in, const Shape& w, Index3 stride, Index3 pad) {
    ConvGeom g{in[0], in[1], in[2], in[3], in[4], w[0], {w[2], w[3], w[4]}, stride, pad, 0, 0, 0};
    g.OD = output_extent(g.D, g.k.d, stride.d, pad.d);
    g.OH = output_extent(g.H, g.k.h, stride.h, pad.h);
    g.OW = output_extent(g.W, g.k.w, stride.w, pad.w);
    return g;
}

// Per-thread grow-only work buffers; avoids faulting in fresh pages on every call.
template <typename T>
std::vector<T>& scratch(int slot) {
    thread_local std::vector<T> buffers[3];
    return buffers[slot];
}

template <typename T>
void grow(std::vector<T>& v, std::size_t n) {
    if (v.size() < n) v.resize(n);
}

// Invokes f(row, c, a, b, e) for every row of the column matrix.
template <typename F>
void for_each_row(const ConvGeom& g, F&& f) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.C; ++c)
        for (std::size_t a = 0; a < g.k.d; ++a)
            for (std::size_t b = 0; b < g.k.h; ++b)
                for (std::size_t e = 0; e < g.k.w; ++e) f(row++, c, a, b, e);
}

struct WidthSpan {
    std::size_t lo, hi;  // output columns [lo, hi) that land inside the input row
    std::ptrdiff_t iw0; // input column of output column 0 (may be negative)
};

WidthSpan width_span(const ConvGeom& g, std::size_t e) {
    const auto sw = static_cast<std::ptrdiff_t>(g.s.w);
    const auto W = static_cast<std::ptrdiff_t>(g.W);
    const auto iw0 = static_cast<std::ptrdiff_t>(e) - static_cast<std::ptrdiff_t>(g.p.w);
    const std::ptrdiff_t lo = iw0 >= 0 ? 0 : (-iw0 + sw - 1) / sw;
    const std::ptrdiff_t hi = iw0 >= W ? 0 : (W - iw0 + sw - 1) / sw;
    const auto h = std::min<std::size_t>(g.OW, static_cast<std::size_t>(hi));
    return {std::min<std::size_t>(static_cast<std::size_t>(lo), h), h, iw0};
}

// One output line (fixed n, od, oh) of a tile.
struct Line {
    std::size_t n;
    std::ptrdiff_t id0, ih0; // input depth/row for kernel offset 0
};

std::vector<Line> tile_lines(const ConvGeom& g, std::size_t j0, std::size_t j1) {
    std::vector<Line> lines;
    lines.reserve((j1 - j0) / g.OW);
    std::size_t t = j0 / g.OW;
    std::size_t oh = t % g.OH;
    t /= g.OH;
    std::size_t od = t % g.OD, n = t / g.OD;
    for (std::size_t j = j0; j < j1; j += g.OW) {
        lines.push_back({n, static_cast<std::ptrdiff_t>(od * g.s.d) - static_cast<std::ptrdiff_t>(g.p.d),
                         static_cast<std::ptrdiff_t>(oh * g.s.h) - static_cast<std::ptrdiff_t>(g.p.h)});
        if (++oh == g.OH) {
            oh = 0;
            if (++od == g.OD) {
                od = 0;
                ++n;
            }
        }
    }
    return lines;
}

// Tiles cover whole output lines; cols is [rows][j1 - j0], row-major.
template <typename T>
void im2col(const T* x, const ConvGeom& g, std::size_t j0, std::size_t j1, T* cols) {
    const std::size_t nc = j1 - j0, OW = g.OW;
    const auto lines = tile_lines(g, j0, j1);
    const auto D = static_cast<std::ptrdiff_t>(g.D), H = static_cast<std::ptrdiff_t>(g.H);
    for_each_row(g, [&](std::size_t row, std::size_t c, std::size_t a, std::size_t b, std::size_t e) {
        const auto [lo, hi, iw0] = width_span(g, e);
        T* out = cols + row * nc;
        for (const auto& ln : lines) {
            const auto id = ln.id0 + static_cast<std::ptrdiff_t>(a), ih = ln.ih0 + static_cast<std::ptrdiff_t>(b);
            if (id < 0 || id >= D || ih < 0 || ih >= H || lo == hi) {
                std::fill_n(out, OW, T(0));
            } else {
                const T* src = x + ((ln.n * g.C + c) * g.D + std::size_t(id)) * g.H * g.W + std::size_t(ih) * g.W;
                std::fill_n(out, lo, T(0));
                if (g.s.w == 1) {
                    std::copy_n(src + iw0 + static_cast<std::ptrdiff_t>(lo), hi - lo, out + lo);
                } else {
                    const T* p = src + iw0 + static_cast<std::ptrdiff_t>(lo * g.s.w);
                    for (std::size_t t = lo; t < hi; ++t, p += g.s.w) out[t] = *p;
                }
                std::fill(out + hi, out + OW, T(0));
            }
            out += OW;
        }
    });
}

// Adjoint of im2col: scatters columns back onto dx with accumulation.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, std::size_t j0, std::size_t j1, T* dx) {
    const std::size_t nc = j1 - j0, OW = g.OW;
    const auto lines = tile_lines(g, j0, j1);
    const auto D = static_cast<std::ptrdiff_t>(g.D), H = static_cast<std::ptrdiff_t>(g.H);
    for_each_row(g, [&](std::size_t row, std::size_t c, std::size_t a, std::size_t b, std::size_t e) {
        const auto [lo, hi, iw0] = width_span(g, e);
        const T* src = cols + row * nc;
        for (const auto& ln : lines) {
            const auto id = ln.id0 + static_cast<std::ptrdiff_t>(a), ih = ln.ih0 + static_cast<std::ptrdiff_t>(b);
            if (id >= 0 && id < D && ih >= 0 && ih < H) {
                T* dst = dx + ((ln.n * g.C + c) * g.D + std::size_t(id)) * g.H * g.W + std::size_t(ih) * g.W;
                T* p = dst + iw0 + static_cast<std::ptrdiff_t>(lo * g.s.w);
                for (std::size_t t = lo; t < hi; ++t, p += g.s.w) *p += src[t];
            }
            src += OW;
        }
    });
}

// Moves a [O][j1 - j0] tile to/from the [N][O][spatial] tensor layout.
template <typename T, bool ToTensor>
void transfer_tile(T* tile, T* tensor, const ConvGeom& g, std::size_t j0, std::size_t j1) {
    const std::size_t S = g.spatial(), nc = j1 - j0;
    for (std::size_t j = j0; j < j1;) {
        const std::size_t n = j / S, s = j % S, len = std::min(S - s, j1 - j);
        for (std::size_t o = 0; o < g.O; ++o) {
            T* t = tile + o * nc + (j - j0);
            T* v = tensor + (n * g.O + o) * S + s;
            if constexpr (ToTensor) std::copy_n(t, len, v);
            else std::copy_n(v, len, t);
        }
        j += len;
    }
}

void accumulate(std::span<float> dst, std::span<const float> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
void accumulate(std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void accumulate_into(Node<T>& parent, std::span<const T> g) {
    if (parent.requires_grad) accumulate(parent.grad_buffer(), g);
}

struct ConvGradMask {
    bool input = true, weight = true, bias = true;
};

template <typename T>
Conv3dGrads<T> conv_backward_impl(const Conv3dContext<T>& ctx, std::span<const T> grad_output, ConvGradMask mask) {
    if (!ctx.input.defined() || !ctx.weight.defined() || ctx.output_shape.empty()) {
        throw UsageError("conv3d_backward: no saved forward context");
    }
    if (grad_output.size() != numel(ctx.output_shape)) {
        throw ShapeError("conv3d_backward: upstream gradient has " + std::to_string(grad_output.size()) +
                         " elements, output shape is " + to_string(ctx.output_shape));
    }
    const ConvGeom g = conv_geometry(ctx.input.shape(), ctx.weight.shape(), ctx.stride, ctx.padding);
    const std::size_t K = g.rows(), tile = g.tile();

    Conv3dGrads<T> grads;
    RowMat<T> dW;
    if (mask.weight) dW = RowMat<T>::Zero(static_cast<Eigen::Index>(g.O), static_cast<Eigen::Index>(K));
    if (mask.input) grads.input.assign(ctx.input.numel(), T(0));
    std::vector<double> db(ctx.has_bias && mask.bias ? g.O : 0, 0.0);

    Eigen::Map<const RowMat<T>> Wm(ctx.weight.values().data(), static_cast<Eigen::Index>(g.O),
                                   static_cast<Eigen::Index>(K));
    auto& cols = scratch<T>(0);
    auto& dy = scratch<T>(1);
    auto& dcols = scratch<T>(2);
    auto* gout = const_cast<T*>(grad_output.data());
    for (std::size_t j0 = 0; j0 < g.columns(); j0 += tile) {
        const std::size_t j1 = std::min(g.columns(), j0 + tile), nc = j1 - j0;
        grow(dy, g.O * nc);
        transfer_tile<T, false>(dy.data(), gout, g, j0, j1);
        Eigen::Map<const RowMat<T>> dYm(dy.data(), static_cast<Eigen::Index>(g.O), static_cast<Eigen::Index>(nc));
        if (mask.weight) {
            grow(cols, K * nc);
            im2col(ctx.input.values().data(), g, j0, j1, cols.data());
            Eigen::Map<const RowMat<T>> Cm(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(nc));
            dW.noalias() += dYm * Cm.transpose();
        }
        if (mask.input) {
            grow(dcols, K * nc);
            Eigen::Map<RowMat<T>> dCm(dcols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(nc));
            dCm.noalias() = Wm.transpose() * dYm;
            col2im(dcols.data(), g, j0, j1, grads.input.data());
        }
        for (std::size_t o = 0; o < db.size(); ++o) {
            const T* row = dy.data() + o * nc;
            for (std::size_t t = 0; t < nc; ++t) db[o] += row[t];
        }
    }
    if (mask.weight) grads.weight.assign(dW.data(), dW.data() + dW.size());
    if (!db.empty()) {
        grads.bias.resize(db.size());
        for (std::size_t o = 0; o < db.size(); ++o) grads.bias[o] = static_cast<T>(db[o]);
    }
    return grads;
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
    if (s.size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
    }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

} // namespace

std::string to_string(const Index3& v) {
    return std::to_string(v.d) + "x" + std::to_string(v.h) + "x" + std::to_string(v.w);
}

template <typename T>
void Conv3dParams<T>::validate() const {
    const Shape expect{out_channels, in_channels, kernel.d, kernel.h, kernel.w};
    if (!weight.defined() || weight.shape() != expect) {
        throw ShapeError("conv3d weight shape " + (weight.defined() ? to_string(weight.shape()) : std::string("<none>")) +
                         " does not match " + to_string(expect));
    }
    if (bias && bias->shape() != Shape{out_channels}) {
        throw ShapeError("conv3d bias shape " + to_string(bias->shape()) + " does not match [" +
                         std::to_string(out_channels) + "]");
    }
    if (stride.d == 0 || stride.h == 0 || stride.w == 0) throw ShapeError("conv3d stride must be positive");
}

template <typename T>
Conv3dParams<T> make_conv3d(std::size_t in_channels, std::size_t out_channels, Index3 kernel, Index3 stride,
                            Index3 padding, std::mt19937_64& rng, bool with_bias, double gain) {
    Conv3dParams<T> p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.kernel = kernel;
    p.stride = stride;
    p.padding = padding;
    const std::size_t fan_in = in_channels * kernel.d * kernel.h * kernel.w;
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / double(fan_in)));
    std::vector<T> w(out_channels * fan_in);
    for (auto& v : w) v = static_cast<T>(dist(rng));
    p.weight = Tensor<T>({out_channels, in_channels, kernel.d, kernel.h, kernel.w}, std::move(w), true);
    if (with_bias) p.bias = Tensor<T>::zeros({out_channels}, true);
    return p;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Conv3dParams<T>& params) {
    params.validate();
    const auto& in = input.shape();
    if (in.size() != 5 || in[1] != params.in_channels) {
        throw ShapeError("conv3d: input shape " + to_string(in) + " incompatible with weight " +
                         to_string(params.weight.shape()));
    }
    const ConvGeom g = conv_geometry(in, params.weight.shape(), params.stride, params.padding);
    if (g.OD == 0 || g.OH == 0 || g.OW == 0) {
        throw ShapeError("conv3d: input shape " + to_string(in) + " with padding " + to_string(params.padding) +
                         " is smaller than kernel " + to_string(params.kernel) + " (weight " +
                         to_string(params.weight.shape()) + ")");
    }
    const std::size_t K = g.rows(), tile = g.tile();
    std::vector<T> out(g.N * g.O * g.spatial());
    Eigen::Map<const RowMat<T>> Wm(params.weight.values().data(), static_cast<Eigen::Index>(g.O),
                                   static_cast<Eigen::Index>(K));
    auto& cols = scratch<T>(0);
    auto& res = scratch<T>(1);
    for (std::size_t j0 = 0; j0 < g.columns(); j0 += tile) {
        const std::size_t j1 = std::min(g.columns(), j0 + tile), nc = j1 - j0;
        grow(cols, K * nc);
        grow(res, g.O * nc);
        im2col(input.values().data(), g, j0, j1, cols.data());
        Eigen::Map<const RowMat<T>> Cm(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(nc));
        Eigen::Map<RowMat<T>> Rm(res.data(), static_cast<Eigen::Index>(g.O), static_cast<Eigen::Index>(nc));
        Rm.noalias() = Wm * Cm;
        transfer_tile<T, true>(res.data(), out.data(), g, j0, j1);
    }
    if (params.bias) {
        const auto b = params.bias->values();
        const std::size_t S = g.spatial();
        for (std::size_t n = 0; n < g.N; ++n)
            for (std::size_t o = 0; o < g.O; ++o) {
                T* row = out.data() + (n * g.O + o) * S;
                for (std::size_t s = 0; s < S; ++s) row[s] += b[o];
            }
    }

    Shape out_shape{g.N, g.O, g.OD, g.OH, g.OW};
    Conv3dContext<T> ctx{input, params.weight, params.bias.has_value(), params.stride, params.padding, out_shape};
    std::vector<Tensor<T>> inputs{input, params.weight};
    if (params.bias) inputs.push_back(*params.bias);
    return make_result<T>(
        out_shape, std::move(out), std::move(inputs),
        [ctx](Node<T>& self) {
            ConvGradMask mask{self.parents[0]->requires_grad, self.parents[1]->requires_grad,
                              self.parents.size() > 2 && self.parents[2]->requires_grad};
            auto grads = conv_backward_impl(ctx, std::span<const T>(self.grad), mask);
            if (mask.input) accumulate_into<T>(*self.parents[0], grads.input);
            if (mask.weight) accumulate_into<T>(*self.parents[1], grads.weight);
            if (mask.bias) accumulate_into<T>(*self.parents[2], grads.bias);
        },
        "conv3d");
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3dContext<T>& ctx, std::span<const T> grad_output) {
    return conv_backward_impl(ctx, grad_output, ConvGradMask{true, true, ctx.has_bias});
}

template <typename T>
BatchNorm3d<T>::BatchNorm3d(std::size_t c)
    : channels(c),
      gamma(Tensor<T>::full({c}, T(1), true)),
      beta(Tensor<T>::zeros({c}, true)),
      running_mean(c, 0.0),
      running_var(c, 1.0) {}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, BatchNorm3d<T>& bn, Mode mode) {
    const auto& shape = input.shape();
    if (shape.size() < 2 || shape[1] != bn.channels) {
        throw ShapeError("batchnorm: input " + to_string(shape) + " has no channel axis of size " +
                         std::to_string(bn.channels));
    }
    const std::size_t N = shape[0], C = shape[1], inner = numel(shape) / (N * C), M = N * inner;
    const auto x = input.values();
    const auto gamma = bn.gamma.values();
    const auto beta = bn.beta.values();

    std::vector<T> xhat(x.size()), y(x.size());
    std::vector<double> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x.data() + (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) s += p[i];
            }
            mean = s / double(M);
            double ss = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x.data() + (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = p[i] - mean;
                    ss += d * d;
                }
            }
            var = ss / double(M);
            const double unbiased = M > 1 ? ss / double(M - 1) : var;
            bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean;
            bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * unbiased;
        } else {
            mean = bn.running_mean[c];
            var = bn.running_var[c];
        }
        inv_std[c] = 1.0 / std::sqrt(var + bn.eps);
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const double h = (x[base + i] - mean) * inv_std[c];
                xhat[base + i] = static_cast<T>(h);
                y[base + i] = static_cast<T>(double(gamma[c]) * h + double(beta[c]));
            }
        }
    }

    std::vector<T> gamma_copy(gamma.begin(), gamma.end());
    return make_result<T>(
        shape, std::move(y), {input, bn.gamma, bn.beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), gamma_copy = std::move(gamma_copy), N, C, inner, M,
         mode](Node<T>& self) {
            const auto& dy = self.grad;
            std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (n * C + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        sum_dy[c] += dy[base + i];
                        sum_dy_xhat[c] += double(dy[base + i]) * xhat[base + i];
                    }
                }
            auto& in = *self.parents[0];
            if (in.requires_grad) {
                auto dx = in.grad_buffer();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (n * C + c) * inner;
                        const double g = gamma_copy[c] * inv_std[c];
                        for (std::size_t i = 0; i < inner; ++i) {
                            double v;
                            if (mode == Mode::train) {
                                v = g * (double(dy[base + i]) - sum_dy[c] / double(M) -
                                         double(xhat[base + i]) * sum_dy_xhat[c] / double(M));
                            } else {
                                v = g * double(dy[base + i]);
                            }
                            dx[base + i] += static_cast<T>(v);
                        }
                    }
            }
            if (self.parents[1]->requires_grad) {
                auto dg = self.parents[1]->grad_buffer();
                for (std::size_t c = 0; c < C; ++c) dg[c] += static_cast<T>(sum_dy_xhat[c]);
            }
            if (self.parents[2]->requires_grad) {
                auto db = self.parents[2]->grad_buffer();
                for (std::size_t c = 0; c < C; ++c) db[c] += static_cast<T>(sum_dy[c]);
            }
        },
        "batchnorm");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    const auto v = x.values();
    std::vector<T> y(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] > T(0) ? v[i] : T(0);
    return make_result<T>(
        x.shape(), std::move(y), {x},
        [](Node<T>& self) {
            auto& in = *self.parents[0];
            auto dx = in.grad_buffer();
            for (std::size_t i = 0; i < dx.size(); ++i) {
                if (in.value[i] > T(0)) dx[i] += self.grad[i];
            }
        },
        "relu");
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, Index3 kernel, Index3 stride, Index3 padding) {
    const auto& s = input.shape();
    require_rank(s, 5, "maxpool3d");
    const std::size_t N = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
    const std::size_t OD = output_extent(D, kernel.d, stride.d, padding.d);
    const std::size_t OH = output_extent(H, kernel.h, stride.h, padding.h);
    const std::size_t OW = output_extent(W, kernel.w, stride.w, padding.w);
    if (OD == 0 || OH == 0 || OW == 0) {
        throw ShapeError("maxpool3d: input " + to_string(s) + " smaller than window " + to_string(kernel));
    }
    const auto x = input.values();
    std::vector<T> y(N * C * OD * OH * OW);
    std::vector<std::size_t> argmax(y.size());
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const std::size_t base = nc * D * H * W;
        for (std::size_t od = 0; od < OD; ++od)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = base;
                    bool found = false;
                    for (std::size_t a = 0; a < kernel.d; ++a) {
                        const auto id = static_cast<std::ptrdiff_t>(od * stride.d + a) - static_cast<std::ptrdiff_t>(padding.d);
                        if (id < 0 || id >= static_cast<std::ptrdiff_t>(D)) continue;
                        for (std::size_t b = 0; b < kernel.h; ++b) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * stride.h + b) - static_cast<std::ptrdiff_t>(padding.h);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t e = 0; e < kernel.w; ++e) {
                                const auto iw = static_cast<std::ptrdiff_t>(ow * stride.w + e) - static_cast<std::ptrdiff_t>(padding.w);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                const std::size_t idx = base + (std::size_t(id) * H + std::size_t(ih)) * W + std::size_t(iw);
                                if (!found || x[idx] > best) {
                                    best = x[idx];
                                    best_i = idx;
                                    found = true;
                                }
                            }
                        }
                    }
                    y[o] = best;
                    argmax[o] = best_i;
                }
    }
    return make_result<T>(
        {N, C, OD, OH, OW}, std::move(y), {input},
        [argmax = std::move(argmax)](Node<T>& self) {
            auto dx = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
        },
        "maxpool3d");
}

template <typename T>
Tensor<T> avgpool3d_global(const Tensor<T>& input) {
    const auto& s = input.shape();
    require_rank(s, 5, "avgpool3d_global");
    const std::size_t NC = s[0] * s[1], inner = s[2] * s[3] * s[4];
    const auto x = input.values();
    std::vector<T> y(NC);
    for (std::size_t i = 0; i < NC; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < inner; ++k) acc += x[i * inner + k];
        y[i] = static_cast<T>(acc / double(inner));
    }
    return make_result<T>(
        {s[0], s[1], 1, 1, 1}, std::move(y), {input},
        [NC, inner](Node<T>& self) {
            auto dx = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < NC; ++i) {
                const T g = static_cast<T>(double(self.grad[i]) / double(inner));
                for (std::size_t k = 0; k < inner; ++k) dx[i * inner + k] += g;
            }
        },
        "avgpool3d_global");
}

template <typename T>
LinearParams<T> make_linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng, double gain) {
    LinearParams<T> p;
    p.in_features = in_features;
    p.out_features = out_features;
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(1.0 / double(in_features)));
    std::vector<T> w(in_features * out_features);
    for (auto& v : w) v = static_cast<T>(dist(rng));
    p.weight = Tensor<T>({out_features, in_features}, std::move(w), true);
    p.bias = Tensor<T>::zeros({out_features}, true);
    return p;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const LinearParams<T>& params) {
    const auto& s = input.shape();
    if (s.empty() || numel(s) != s[0] * params.in_features) {
        throw ShapeError("linear: input " + to_string(s) + " does not flatten to [N][" +
                         std::to_string(params.in_features) + "]");
    }
    if (params.weight.shape() != Shape{params.out_features, params.in_features} ||
        params.bias.shape() != Shape{params.out_features}) {
        throw ShapeError("linear: weight " + to_string(params.weight.shape()) + " / bias " +
                         to_string(params.bias.shape()) + " inconsistent with " + std::to_string(params.in_features) +
                         " -> " + std::to_string(params.out_features));
    }
    const auto N = static_cast<Eigen::Index>(s[0]);
    const auto F = static_cast<Eigen::Index>(params.in_features);
    const auto O = static_cast<Eigen::Index>(params.out_features);
    Eigen::Map<const RowMat<T>> X(input.values().data(), N, F);
    Eigen::Map<const RowMat<T>> Wm(params.weight.values().data(), O, F);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(params.bias.values().data(), O);
    RowMat<T> Y = X * Wm.transpose();
    Y.rowwise() += b;
    std::vector<T> y(Y.data(), Y.data() + Y.size());
    return make_result<T>(
        {s[0], params.out_features}, std::move(y), {input, params.weight, params.bias},
        [N, F, O](Node<T>& self) {
            Eigen::Map<const RowMat<T>> dY(self.grad.data(), N, O);
            auto& in = *self.parents[0];
            auto& w = *self.parents[1];
            auto& b = *self.parents[2];
            if (in.requires_grad) {
                Eigen::Map<RowMat<T>> dX(in.grad_buffer().data(), N, F);
                Eigen::Map<const RowMat<T>> Wm(w.value.data(), O, F);
                dX.noalias() += dY * Wm;
            }
            if (w.requires_grad) {
                Eigen::Map<RowMat<T>> dW(w.grad_buffer().data(), O, F);
                Eigen::Map<const RowMat<T>> X(in.value.data(), N, F);
                dW.noalias() += dY.transpose() * X;
            }
            if (b.requires_grad) {
                auto db = b.grad_buffer();
                for (Eigen::Index o = 0; o < O; ++o) {
                    double acc = 0.0;
                    for (Eigen::Index n = 0; n < N; ++n) acc += dY(n, o);
                    db[static_cast<std::size_t>(o)] += static_cast<T>(acc);
                }
            }
        },
        "linear");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    const auto x = a.values(), y = b.values();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_result<T>(
        a.shape(), std::move(out), {a, b},
        [](Node<T>& self) {
            for (auto& p : self.parents) accumulate_into<T>(*p, self.grad);
        },
        "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    const auto x = a.values(), y = b.values();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return make_result<T>(
        a.shape(), std::move(out), {a, b},
        [](Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            // Read both operands before writing: a and b may be the same node.
            std::vector<T> ga(self.grad.size()), gb(self.grad.size());
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] = self.grad[i] * pb.value[i];
                gb[i] = self.grad[i] * pa.value[i];
            }
            accumulate_into<T>(pa, ga);
            accumulate_into<T>(pb, gb);
        },
        "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    const auto x = a.values();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
    return make_result<T>(
        a.shape(), std::move(out), {a},
        [factor](Node<T>& self) {
            auto dx = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
        },
        "scale");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.values()) acc += v;
    return make_result<T>(
        {1}, {static_cast<T>(acc)}, {a},
        [](Node<T>& self) {
            auto dx = self.parents[0]->grad_buffer();
            for (auto& v : dx) v += self.grad[0];
        },
        "sum");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    std::vector<T> v(a.values().begin(), a.values().end());
    return make_result<T>(
        std::move(shape), std::move(v), {a},
        [](Node<T>& self) { accumulate_into<T>(*self.parents[0], self.grad); }, "reshape");
}

#define SPECREC_INSTANTIATE_OPS(T)                                                                         \
    template struct Conv3dParams<T>;                                                                       \
    template struct BatchNorm3d<T>;                                                                        \
    template Conv3dParams<T> make_conv3d<T>(std::size_t, std::size_t, Index3, Index3, Index3, std::mt19937_64&, \
                                            bool, double);                                                         \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Conv3dParams<T>&);                                \
    template Conv3dGrads<T> conv3d_backward<T>(const Conv3dContext<T>&, std::span<const T>);               \
    template Tensor<T> batchnorm<T>(const Tensor<T>&, BatchNorm3d<T>&, Mode);                              \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                          \
    template Tensor<T> maxpool3d<T>(const Tensor<T>&, Index3, Index3, Index3);                             \
    template Tensor<T> avgpool3d_global<T>(const Tensor<T>&);                                              \
    template LinearParams<T> make_linear<T>(std::size_t, std::size_t, std::mt19937_64&, double);                    \
    template Tensor<T> linear<T>(const Tensor<T>&, const LinearParams<T>&);                                \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                      \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                           \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);

SPECREC_INSTANTIATE_OPS(float)
SPECREC_INSTANTIATE_OPS(double)

#undef SPECREC_INSTANTIATE_OPS

} // namespace specrec::ad
