#include "skyseg/preprocessing/window.hpp"

#include <algorithm>
#include <vector>

#include "skyseg/core/error.hpp"

namespace skyseg {

WindowModel::WindowModel(int rows, int cols, std::size_t capacity)
    : capacity_(capacity), median_(rows, cols, 0.0) {
    if (capacity_ == 0) throw ConfigError("window model capacity must be positive");
}

void WindowModel::update(const KelvinGrid& clear_sky) {
    if (!clear_sky.same_shape(median_)) throw DataError("window model: frame shape mismatch");
    if (buffer_.size() == capacity_) buffer_.pop_front();
    buffer_.push_back(clear_sky);
    recompute();
}

void WindowModel::recompute() {
    const std::size_t n = buffer_.size();
    std::vector<double> column(n);
    for (std::size_t k = 0; k < median_.size(); ++k) {
        for (std::size_t b = 0; b < n; ++b) column[b] = buffer_[b][k];
        const std::size_t mid = n / 2;
        std::nth_element(column.begin(), column.begin() + mid, column.end());
        double m = column[mid];
        if (n % 2 == 0) {
            const double lower = *std::max_element(column.begin(), column.begin() + mid);
            m = 0.5 * (m + lower);
        }
        median_[k] = m;
    }
}

KelvinGrid WindowModel::apply(const KelvinGrid& frame) const {
    if (!frame.same_shape(median_)) throw DataError("window model: frame shape mismatch");
    KelvinGrid out = frame;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= median_[k];
    return out;
}

WindowModel update_window(WindowModel model, const KelvinGrid& clear_sky) {
    model.update(clear_sky);
    return model;
}

}  // namespace skyseg
