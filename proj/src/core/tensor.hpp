#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace prism {

/// Dense row-major tensor of doubles, rank 0..4. Images are (C,H,W),
/// conv weights (Cout,Cin,Kh,Kw). Everything in the pipeline runs in
/// double so that finite-difference gradient checks and the metric
/// oracles stay well below their tolerances.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims);

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
    static Tensor full(std::vector<int> dims, double value);
    static Tensor from(std::vector<int> dims, std::vector<double> values);
    static Tensor scalar(double value) { return from({1}, {value}); }

    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(dims_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool defined() const { return !dims_.empty(); }
    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (C,H,W) accessors; tensor must be rank 3.
    int channels() const { return dims_[0]; }
    int height() const { return dims_[1]; }
    int width() const { return dims_[2]; }
    double& at(int c, int y, int x) {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * dims_[1] + y) * dims_[2] + x)];
    }
    double at(int c, int y, int x) const {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * dims_[1] + y) * dims_[2] + x)];
    }

    void fill(double value);
    bool all_finite() const;
    double min_value() const;
    double max_value() const;
    double mean_value() const;

    /// Exact elementwise equality (shapes included).
    bool bit_equal(const Tensor& o) const;

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

/// 2x area downsampling of a (C,H,W) grid; each output pixel is the mean
/// of its 2x2 block (odd trailing row/col averaged over what remains).
Tensor area_downsample2x(const Tensor& t);

/// Repeated area downsampling: pyramid[s] has dims (C, ceil(H/2^s), ceil(W/2^s)).
std::vector<Tensor> build_pyramid(const Tensor& t, int levels);

/// Bilinear resize of a (C,H,W) grid to (C,out_h,out_w); pixel-center mapping.
/// Returns an identical copy when the size already matches.
Tensor resize_bilinear(const Tensor& t, int out_h, int out_w);

} // namespace prism
