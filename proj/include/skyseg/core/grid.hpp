#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace skyseg {

inline constexpr int kFrameRows = 60;
inline constexpr int kFrameCols = 80;

/// Dense row-major 2-D array. Row index i runs top to bottom, column index j
/// left to right.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int i, int j) {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<std::size_t>(i) * cols_ + j];
    }
    const T& operator()(int i, int j) const {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<std::size_t>(i) * cols_ + j];
    }

    /// Replicate-padded access: out-of-range indices clamp to the border.
    const T& clamped(int i, int j) const {
        return (*this)(std::clamp(i, 0, rows_ - 1), std::clamp(j, 0, cols_ - 1));
    }

    T& operator[](std::size_t k) { return data_[k]; }
    const T& operator[](std::size_t k) const { return data_[k]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool same_shape(const auto& other) const {
        return rows_ == other.rows() && cols_ == other.cols();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using KelvinGrid = Grid<double>;
using LabelMask = Grid<std::uint8_t>;

/// Elementwise map into a new grid.
template <class T, class F>
auto map_grid(const Grid<T>& g, F&& f) {
    using R = decltype(f(g[0]));
    Grid<R> out(g.rows(), g.cols());
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = f(g[k]);
    return out;
}

}  // namespace skyseg
