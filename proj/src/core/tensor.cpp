#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/check.hpp"

namespace prism {

namespace {
std::int64_t product(const std::vector<int>& dims) {
    std::int64_t n = 1;
    for (int d : dims) {
        PRISM_CHECK(d >= 0, "negative tensor dimension");
        n *= d;
    }
    return n;
}
} // namespace

Tensor::Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
    PRISM_CHECK(dims_.size() <= 4, "tensor rank > 4 unsupported");
    data_.assign(static_cast<size_t>(product(dims_)), 0.0);
}

Tensor Tensor::full(std::vector<int> dims, double value) {
    Tensor t(std::move(dims));
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::vector<int> dims, std::vector<double> values) {
    Tensor t;
    t.dims_ = std::move(dims);
    PRISM_CHECK(product(t.dims_) == static_cast<std::int64_t>(values.size()),
                "tensor data size does not match dims");
    t.data_ = std::move(values);
    return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min_value() const {
    PRISM_CHECK(numel() > 0, "min of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max_value() const {
    PRISM_CHECK(numel() > 0, "max of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
}

double Tensor::mean_value() const {
    PRISM_CHECK(numel() > 0, "mean of empty tensor");
    return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(numel());
}

bool Tensor::bit_equal(const Tensor& o) const {
    return dims_ == o.dims_ && data_ == o.data_;
}

Tensor area_downsample2x(const Tensor& t) {
    PRISM_CHECK(t.rank() == 3, "area_downsample2x expects (C,H,W)");
    const int c = t.channels(), h = t.height(), w = t.width();
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            const int y0 = 2 * y, y1 = std::min(2 * y + 1, h - 1);
            for (int x = 0; x < ow; ++x) {
                const int x0 = 2 * x, x1 = std::min(2 * x + 1, w - 1);
                double sum = 0.0;
                int count = 0;
                for (int yy = y0; yy <= y1; ++yy) {
                    for (int xx = x0; xx <= x1; ++xx) {
                        sum += t.at(ch, yy, xx);
                        ++count;
                    }
                }
                out.at(ch, y, x) = sum / count;
            }
        }
    }
    return out;
}

std::vector<Tensor> build_pyramid(const Tensor& t, int levels) {
    PRISM_CHECK(levels >= 1, "pyramid needs at least one level");
    std::vector<Tensor> pyr;
    pyr.reserve(static_cast<size_t>(levels));
    pyr.push_back(t);
    for (int s = 1; s < levels; ++s) pyr.push_back(area_downsample2x(pyr.back()));
    return pyr;
}

Tensor resize_bilinear(const Tensor& t, int out_h, int out_w) {
    PRISM_CHECK(t.rank() == 3, "resize_bilinear expects (C,H,W)");
    const int c = t.channels(), h = t.height(), w = t.width();
    if (out_h == h && out_w == w) return t;
    PRISM_CHECK(out_h >= 1 && out_w >= 1, "invalid resize target");
    Tensor out({c, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = t.at(ch, y0, x0), v01 = t.at(ch, y0, x1);
                const double v10 = t.at(ch, y1, x0), v11 = t.at(ch, y1, x1);
                out.at(ch, y, x) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                   wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

} // namespace prism
