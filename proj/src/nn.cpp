#include "pyag/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "pyag/common.hpp"

namespace pyag::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

const char* to_string(Group g) {
    switch (g) {
        case Group::Encoder: return "encoder";
        case Group::DecoderTrunk: return "decoder";
        case Group::Gate: return "gate";
        case Group::Head: return "head";
    }
    return "?";
}

namespace {

void check_channels(const Tensor& x, int expected, const char* who) {
    if (x.c() != expected)
        fail(ErrorKind::ShapeMismatch, std::string(who) + ": expected " + std::to_string(expected) +
                                           " input channels, got " + x.shape_string());
}

void init_normal(Tensor& t, double stddev, Rng& rng) {
    for (double& v : t.values()) v = stddev * normal(rng);
}

// Column matrix [in*k*k, H*W] for a same-padded k×k convolution of batch item b.
void im2col(const Tensor& x, int b, int k, int pad, RowMat& col) {
    const int C = x.c(), H = x.h(), W = x.w();
    col.resize(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < C; ++c) {
        const double* src = x.plane(b, c);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * H * W;
                for (int y = 0; y < H; ++y) {
                    const int iy = y + ky - pad;
                    double* row = dst + static_cast<std::size_t>(y) * W;
                    if (iy < 0 || iy >= H) {
                        std::fill(row, row + W, 0.0);
                        continue;
                    }
                    const double* srow = src + static_cast<std::size_t>(iy) * W;
                    for (int xo = 0; xo < W; ++xo) {
                        const int ix = xo + kx - pad;
                        row[xo] = (ix < 0 || ix >= W) ? 0.0 : srow[ix];
                    }
                }
            }
    }
}

void col2im_add(const RowMat& col, Tensor& dx, int b, int k, int pad) {
    const int C = dx.c(), H = dx.h(), W = dx.w();
    for (int c = 0; c < C; ++c) {
        double* dst = dx.plane(b, c);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * H * W;
                for (int y = 0; y < H; ++y) {
                    const int iy = y + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const double* row = src + static_cast<std::size_t>(y) * W;
                    double* drow = dst + static_cast<std::size_t>(iy) * W;
                    for (int xo = 0; xo < W; ++xo) {
                        const int ix = xo + kx - pad;
                        if (ix >= 0 && ix < W) drow[ix] += row[xo];
                    }
                }
            }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, std::string name, Group group, Rng& rng, double init_gain)
    : in_(in_ch), out_(out_ch), k_(kernel), pad_(kernel / 2) {
    if (kernel % 2 == 0) fail(ErrorKind::InvalidArgument, "Conv2d supports odd kernels only");
    weight_ = {name + ".weight", group, Tensor(out_ch, in_ch, kernel, kernel), Tensor(out_ch, in_ch, kernel, kernel)};
    bias_ = {name + ".bias", group, Tensor(1, out_ch, 1, 1), Tensor(1, out_ch, 1, 1)};
    init_normal(weight_.value, std::sqrt(init_gain / (in_ch * kernel * kernel)), rng);
}

void Conv2d::collect(std::vector<Param*>& params, std::vector<Buffer*>&) {
    params.push_back(&weight_);
    params.push_back(&bias_);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
    check_channels(x, in_, weight_.name.c_str());
    const int N = x.n(), H = x.h(), W = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
    Tensor out(N, out_, H, W);
    ConstMapMat w(weight_.value.data(), out_, static_cast<Eigen::Index>(in_) * k_ * k_);
    RowMat col;
    for (int b = 0; b < N; ++b) {
        MapMat o(out.plane(b, 0), out_, hw);
        if (k_ == 1) {
            o.noalias() = w * ConstMapMat(x.plane(b, 0), in_, hw);
        } else {
            im2col(x, b, k_, pad_, col);
            o.noalias() = w * col;
        }
        for (int c = 0; c < out_; ++c) o.row(c).array() += bias_.value.data()[c];
    }
    if (train) input_ = x;
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    if (input_.empty()) fail(ErrorKind::InvalidArgument, weight_.name + ": backward without a training forward");
    const Tensor& x = input_;
    const int N = x.n(), H = x.h(), W = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
    const Eigen::Index kk = static_cast<Eigen::Index>(in_) * k_ * k_;
    Tensor dx(N, in_, H, W);
    ConstMapMat w(weight_.value.data(), out_, kk);
    MapMat dw(weight_.grad.data(), out_, kk);
    RowMat col, dcol;
    for (int b = 0; b < N; ++b) {
        ConstMapMat go(grad_out.plane(b, 0), out_, hw);
        if (k_ == 1) {
            ConstMapMat xb(x.plane(b, 0), in_, hw);
            if (accumulate) dw.noalias() += go * xb.transpose();
            MapMat(dx.plane(b, 0), in_, hw).noalias() = w.transpose() * go;
        } else {
            im2col(x, b, k_, pad_, col);
            if (accumulate) dw.noalias() += go * col.transpose();
            dcol.noalias() = w.transpose() * go;
            col2im_add(dcol, dx, b, k_, pad_);
        }
        if (accumulate)
            for (int c = 0; c < out_; ++c) bias_.grad.data()[c] += go.row(c).sum();
    }
    return dx;
}

// ---------------------------------------------------------------------------

ConvTranspose2x2::ConvTranspose2x2(int in_ch, int out_ch, std::string name, Group group, Rng& rng)
    : in_(in_ch), out_(out_ch) {
    weight_ = {name + ".weight", group, Tensor(in_ch, out_ch, 2, 2), Tensor(in_ch, out_ch, 2, 2)};
    bias_ = {name + ".bias", group, Tensor(1, out_ch, 1, 1), Tensor(1, out_ch, 1, 1)};
    init_normal(weight_.value, std::sqrt(2.0 / in_ch), rng);
}

void ConvTranspose2x2::collect(std::vector<Param*>& params, std::vector<Buffer*>&) {
    params.push_back(&weight_);
    params.push_back(&bias_);
}

Tensor ConvTranspose2x2::forward(const Tensor& x, bool train) {
    check_channels(x, in_, weight_.name.c_str());
    const int N = x.n(), H = x.h(), W = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
    Tensor out(N, out_, 2 * H, 2 * W);
    ConstMapMat w(weight_.value.data(), in_, static_cast<Eigen::Index>(out_) * 4);
    RowMat t;
    for (int b = 0; b < N; ++b) {
        t.noalias() = w.transpose() * ConstMapMat(x.plane(b, 0), in_, hw);  // [out*4, HW]
        for (int o = 0; o < out_; ++o)
            for (int ij = 0; ij < 4; ++ij) {
                const double* row = t.data() + (static_cast<std::size_t>(o) * 4 + ij) * hw;
                const int di = ij / 2, dj = ij % 2;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx)
                        out(b, o, 2 * y + di, 2 * xx + dj) = row[y * W + xx] + bias_.value.data()[o];
            }
    }
    if (train) input_ = x;
    return out;
}

Tensor ConvTranspose2x2::backward(const Tensor& grad_out) {
    if (input_.empty()) fail(ErrorKind::InvalidArgument, weight_.name + ": backward without a training forward");
    const Tensor& x = input_;
    const int N = x.n(), H = x.h(), W = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
    Tensor dx(N, in_, H, W);
    ConstMapMat w(weight_.value.data(), in_, static_cast<Eigen::Index>(out_) * 4);
    MapMat dw(weight_.grad.data(), in_, static_cast<Eigen::Index>(out_) * 4);
    RowMat dt(static_cast<Eigen::Index>(out_) * 4, hw);
    for (int b = 0; b < N; ++b) {
        for (int o = 0; o < out_; ++o)
            for (int ij = 0; ij < 4; ++ij) {
                double* row = dt.data() + (static_cast<std::size_t>(o) * 4 + ij) * hw;
                const int di = ij / 2, dj = ij % 2;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) row[y * W + xx] = grad_out(b, o, 2 * y + di, 2 * xx + dj);
            }
        ConstMapMat xb(x.plane(b, 0), in_, hw);
        if (accumulate) {
            dw.noalias() += xb * dt.transpose();
            for (int o = 0; o < out_; ++o)
                bias_.grad.data()[o] += dt.middleRows(static_cast<Eigen::Index>(o) * 4, 4).sum();
        }
        MapMat(dx.plane(b, 0), in_, hw).noalias() = w * dt;
    }
    return dx;
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, std::string name, Group group, double momentum, double eps)
    : ch_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = {name + ".gamma", group, Tensor(1, channels, 1, 1, 1.0), Tensor(1, channels, 1, 1)};
    beta_ = {name + ".beta", group, Tensor(1, channels, 1, 1), Tensor(1, channels, 1, 1)};
    running_mean_ = {name + ".running_mean", Tensor(1, channels, 1, 1)};
    running_var_ = {name + ".running_var", Tensor(1, channels, 1, 1, 1.0)};
}

void BatchNorm2d::collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) {
    params.push_back(&gamma_);
    params.push_back(&beta_);
    buffers.push_back(&running_mean_);
    buffers.push_back(&running_var_);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    check_channels(x, ch_, gamma_.name.c_str());
    const int N = x.n();
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    const double count = static_cast<double>(N) * hw;
    Tensor out(x.n(), x.c(), x.h(), x.w());
    if (train) {
        xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
        inv_std_.assign(ch_, 0.0);
    }
    for (int c = 0; c < ch_; ++c) {
        double mean, var;
        if (train) {
            double s = 0;
            for (int b = 0; b < N; ++b) {
                const double* p = x.plane(b, c);
                for (std::size_t i = 0; i < hw; ++i) s += p[i];
            }
            mean = s / count;
            double ss = 0;
            for (int b = 0; b < N; ++b) {
                const double* p = x.plane(b, c);
                for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
            }
            var = ss / count;
            const double unbiased = count > 1 ? ss / (count - 1) : var;
            running_mean_.value.data()[c] = (1 - momentum_) * running_mean_.value.data()[c] + momentum_ * mean;
            running_var_.value.data()[c] = (1 - momentum_) * running_var_.value.data()[c] + momentum_ * unbiased;
        } else {
            mean = running_mean_.value.data()[c];
            var = running_var_.value.data()[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps_);
        const double g = gamma_.value.data()[c], be = beta_.value.data()[c];
        for (int b = 0; b < N; ++b) {
            const double* p = x.plane(b, c);
            double* o = out.plane(b, c);
            double* xh = train ? xhat_.plane(b, c) : nullptr;
            for (std::size_t i = 0; i < hw; ++i) {
                const double h = (p[i] - mean) * inv;
                if (xh) xh[i] = h;
                o[i] = g * h + be;
            }
        }
        if (train) inv_std_[c] = inv;
    }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    if (xhat_.empty()) fail(ErrorKind::InvalidArgument, gamma_.name + ": backward without a training forward");
    const int N = grad_out.n();
    const std::size_t hw = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
    const double count = static_cast<double>(N) * hw;
    Tensor dx(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
    for (int c = 0; c < ch_; ++c) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int b = 0; b < N; ++b) {
            const double* g = grad_out.plane(b, c);
            const double* xh = xhat_.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) {
                sum_dy += g[i];
                sum_dy_xhat += g[i] * xh[i];
            }
        }
        if (accumulate) {
            gamma_.grad.data()[c] += sum_dy_xhat;
            beta_.grad.data()[c] += sum_dy;
        }
        const double gamma = gamma_.value.data()[c];
        const double scale = gamma * inv_std_[c] / count;
        for (int b = 0; b < N; ++b) {
            const double* g = grad_out.plane(b, c);
            const double* xh = xhat_.plane(b, c);
            double* d = dx.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) d[i] = scale * (count * g[i] - sum_dy - xh[i] * sum_dy_xhat);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool train) {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0 ? v : 0.0;
    if (train) output_ = out;
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    auto o = output_.values();
    auto d = dx.values();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(o[i] > 0)) d[i] = 0.0;
    return dx;
}

Tensor MaxPool2x2::forward(const Tensor& x, bool train) {
    if (x.h() % 2 || x.w() % 2) fail(ErrorKind::ShapeMismatch, "max-pool input must have even spatial size");
    Tensor out(x.n(), x.c(), x.h() / 2, x.w() / 2);
    if (train) {
        argmax_.assign(out.size(), 0);
        in_h_ = x.h();
        in_w_ = x.w();
    }
    std::size_t o = 0;
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int xx = 0; xx < out.w(); ++xx, ++o) {
                    std::size_t best = x.index(b, c, 2 * y, 2 * xx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t i = x.index(b, c, 2 * y + dy, 2 * xx + dx);
                            if (x.data()[i] > x.data()[best]) best = i;
                        }
                    out.data()[o] = x.data()[best];
                    if (train) argmax_[o] = best;
                }
    return out;
}

Tensor MaxPool2x2::backward(const Tensor& grad_out) {
    Tensor dx(grad_out.n(), grad_out.c(), in_h_, in_w_);
    for (std::size_t o = 0; o < grad_out.size(); ++o) dx.data()[argmax_[o]] += grad_out.data()[o];
    return dx;
}

Tensor UpsampleNearest2x::forward(const Tensor& x, bool) {
    Tensor out(x.n(), x.c(), 2 * x.h(), 2 * x.w());
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int xx = 0; xx < out.w(); ++xx) out(b, c, y, xx) = x(b, c, y / 2, xx / 2);
    return out;
}

Tensor UpsampleNearest2x::backward(const Tensor& grad_out) {
    Tensor dx(grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2);
    for (int b = 0; b < grad_out.n(); ++b)
        for (int c = 0; c < grad_out.c(); ++c)
            for (int y = 0; y < grad_out.h(); ++y)
                for (int xx = 0; xx < grad_out.w(); ++xx) dx(b, c, y / 2, xx / 2) += grad_out(b, c, y, xx);
    return dx;
}

// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Sequential::collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) {
    for (auto& l : layers_) l->collect(params, buffers);
}

void Sequential::set_accumulate(bool on) {
    accumulate = on;
    for (auto& l : layers_) {
        l->accumulate = on;
        if (auto* s = dynamic_cast<Sequential*>(l.get())) s->set_accumulate(on);
    }
}

std::unique_ptr<Sequential> double_conv(int in_ch, int out_ch, const std::string& name, Group group, Rng& rng) {
    auto seq = std::make_unique<Sequential>();
    seq->add(std::make_unique<Conv2d>(in_ch, out_ch, 3, name + ".conv1", group, rng));
    seq->add(std::make_unique<BatchNorm2d>(out_ch, name + ".bn1", group));
    seq->add(std::make_unique<ReLU>());
    seq->add(std::make_unique<Conv2d>(out_ch, out_ch, 3, name + ".conv2", group, rng));
    seq->add(std::make_unique<BatchNorm2d>(out_ch, name + ".bn2", group));
    seq->add(std::make_unique<ReLU>());
    return seq;
}

// ---------------------------------------------------------------------------

Tensor softmax_channels(const Tensor& logits) {
    Tensor p(logits.n(), logits.c(), logits.h(), logits.w());
    const std::size_t hw = static_cast<std::size_t>(logits.h()) * logits.w();
    const int C = logits.c();
    for (int b = 0; b < logits.n(); ++b)
        for (std::size_t i = 0; i < hw; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) mx = std::max(mx, logits.plane(b, c)[i]);
            double s = 0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(logits.plane(b, c)[i] - mx);
                p.plane(b, c)[i] = e;
                s += e;
            }
            for (int c = 0; c < C; ++c) p.plane(b, c)[i] /= s;
        }
    return p;
}

Tensor softmax_channels_backward(const Tensor& probs, const Tensor& grad_probs) {
    Tensor dz(probs.n(), probs.c(), probs.h(), probs.w());
    const std::size_t hw = static_cast<std::size_t>(probs.h()) * probs.w();
    const int C = probs.c();
    for (int b = 0; b < probs.n(); ++b)
        for (std::size_t i = 0; i < hw; ++i) {
            double dot = 0;
            for (int c = 0; c < C; ++c) dot += probs.plane(b, c)[i] * grad_probs.plane(b, c)[i];
            for (int c = 0; c < C; ++c)
                dz.plane(b, c)[i] = probs.plane(b, c)[i] * (grad_probs.plane(b, c)[i] - dot);
        }
    return dz;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        fail(ErrorKind::ShapeMismatch, "concat " + a.shape_string() + " with " + b.shape_string());
    Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t hw = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        std::copy_n(a.plane(n, 0), hw * a.c(), out.plane(n, 0));
        std::copy_n(b.plane(n, 0), hw * b.c(), out.plane(n, a.c()));
    }
    return out;
}

void split_channels(const Tensor& g, int a_channels, Tensor& ga, Tensor& gb) {
    const std::size_t hw = static_cast<std::size_t>(g.h()) * g.w();
    ga = Tensor(g.n(), a_channels, g.h(), g.w());
    gb = Tensor(g.n(), g.c() - a_channels, g.h(), g.w());
    for (int n = 0; n < g.n(); ++n) {
        std::copy_n(g.plane(n, 0), hw * a_channels, ga.plane(n, 0));
        std::copy_n(g.plane(n, a_channels), hw * gb.c(), gb.plane(n, 0));
    }
}

}  // namespace pyag::nn
