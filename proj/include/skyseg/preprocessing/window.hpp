#pragma once

#include <cstddef>
#include <deque>

#include "skyseg/core/grid.hpp"

namespace skyseg {

/// Rolling set of clear-sky residual images whose per-pixel median models the
/// stains and dust on the camera window. Single writer; the published median
/// is a value and may be read concurrently once copied out.
class WindowModel {
public:
    static constexpr std::size_t kDefaultCapacity = 250;

    explicit WindowModel(int rows = kFrameRows, int cols = kFrameCols,
                         std::size_t capacity = kDefaultCapacity);

    /// Pushes one clear-sky image (FIFO; the oldest is forgotten at capacity)
    /// and recomputes the median.
    void update(const KelvinGrid& clear_sky);

    /// Per-pixel median of the buffer; all zeros while the buffer is empty.
    const KelvinGrid& median() const { return median_; }

    /// T' = T - W.
    KelvinGrid apply(const KelvinGrid& frame) const;

    std::size_t size() const { return buffer_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<KelvinGrid>& buffer() const { return buffer_; }

private:
    void recompute();

    std::size_t capacity_;
    std::deque<KelvinGrid> buffer_;
    KelvinGrid median_;
};

/// Functional form of WindowModel::update.
WindowModel update_window(WindowModel model, const KelvinGrid& clear_sky);

}  // namespace skyseg
