#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace emseg::metrics {

inline constexpr double kIouEpsilon = 1e-7;

// Dataset-level foreground IoU over streaming pixel totals. 64-bit integer
// counters; merge() lets per-worker accumulators combine by addition.
class IouAccumulator {
public:
    IouAccumulator() = default;
    explicit IouAccumulator(std::string dataset_id) : dataset_id_(std::move(dataset_id)) {}

    // Rasters are collapsed to foreground indicators (value > 0) before
    // counting; shapes must match.
    void update(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
    void merge(const IouAccumulator& other);

    double finalize() const { return static_cast<double>(intersection_px_) / (static_cast<double>(union_px_) + kIouEpsilon); }

    std::uint64_t intersection_px() const { return intersection_px_; }
    std::uint64_t union_px() const { return union_px_; }
    const std::string& dataset_id() const { return dataset_id_; }

private:
    std::string dataset_id_;
    std::uint64_t intersection_px_ = 0;
    std::uint64_t union_px_ = 0;
};

// Unweighted mean of per-dataset scores.
double macro_average(std::span<const double> per_dataset_iou);

} // namespace emseg::metrics
