#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace pyag {

// Vectorized reductions group terms by pointer alignment, so storage is always 64-byte
// aligned to keep results identical from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

/// Dense NCHW tensor of doubles. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, double fill = 0.0);

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
    double operator()(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }

    std::size_t index(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    // Contiguous H*W plane of one (batch, channel) pair.
    double* plane(int b, int ch) { return data_.data() + index(b, ch, 0, 0); }
    const double* plane(int b, int ch) const { return data_.data() + index(b, ch, 0, 0); }

    bool same_shape(const Tensor& other) const {
        return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
    }
    std::string shape_string() const;

    void fill(double v);
    Tensor& operator+=(const Tensor& other);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double, AlignedAllocator<double>> data_;
};

}  // namespace pyag
