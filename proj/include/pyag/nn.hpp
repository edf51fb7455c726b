#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pyag/rng.hpp"
#include "pyag/tensor.hpp"

// Minimal layer library with hand-written backward passes. Every layer caches what its
// backward needs during a training-mode forward; backward may be called more than once
// per forward (gradients accumulate into Param::grad).
namespace pyag::nn {

// Which part of the segmentor a parameter belongs to. Used to route gradients.
enum class Group { Encoder, DecoderTrunk, Gate, Head };

const char* to_string(Group g);

struct Param {
    std::string name;
    Group group = Group::Encoder;
    Tensor value;
    Tensor grad;
};

// Non-trainable state persisted with parameters (batch-norm running statistics).
struct Buffer {
    std::string name;
    Tensor value;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) {
        (void)params;
        (void)buffers;
    }
    // When false, backward still propagates input gradients but leaves Param::grad untouched.
    bool accumulate = true;
};

class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int kernel, std::string name, Group group, Rng& rng, double init_gain = 2.0);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) override;

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    Param& weight() { return weight_; }
    Param& bias() { return bias_; }
    const Param& weight() const { return weight_; }
    const Param& bias() const { return bias_; }

private:
    int in_, out_, k_, pad_;
    Param weight_, bias_;  // weight [out, in, k, k], bias [1, out, 1, 1]
    Tensor input_;
};

// 2×2 stride-2 transposed convolution.
class ConvTranspose2x2 : public Layer {
public:
    ConvTranspose2x2(int in_ch, int out_ch, std::string name, Group group, Rng& rng);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) override;

private:
    int in_, out_;
    Param weight_, bias_;  // weight [in, out, 2, 2]
    Tensor input_;
};

class BatchNorm2d : public Layer {
public:
    BatchNorm2d(int channels, std::string name, Group group, double momentum = 0.1, double eps = 1e-5);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) override;

private:
    int ch_;
    double momentum_, eps_;
    Param gamma_, beta_;
    Buffer running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor output_;
};

class MaxPool2x2 : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    int in_h_ = 0, in_w_ = 0;
    std::vector<std::size_t> argmax_;
};

class UpsampleNearest2x : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
};

// Layers applied in order; backward runs them in reverse.
class Sequential : public Layer {
public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect(std::vector<Param*>& params, std::vector<Buffer*>& buffers) override;
    void set_accumulate(bool on);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// conv3×3 → BN → ReLU, twice.
std::unique_ptr<Sequential> double_conv(int in_ch, int out_ch, const std::string& name, Group group, Rng& rng);

/// Per-pixel softmax over channels.
Tensor softmax_channels(const Tensor& logits);
/// Gradient w.r.t. logits given probabilities and the gradient w.r.t. probabilities.
Tensor softmax_channels_backward(const Tensor& probs, const Tensor& grad_probs);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int a_channels, Tensor& ga, Tensor& gb);

}  // namespace pyag::nn
