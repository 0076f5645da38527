#include "metrics/iou.hpp"

#include "core/errors.hpp"

namespace emseg::metrics {

void IouAccumulator::update(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size())
        throw ShapeError("iou update: raster size mismatch (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(gt.size()) + ")");
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > 0;
        const bool m = gt[i] > 0;
        inter += p && m;
        uni += p || m;
    }
    intersection_px_ += inter;
    union_px_ += uni;
}

void IouAccumulator::merge(const IouAccumulator& other) {
    intersection_px_ += other.intersection_px_;
    union_px_ += other.union_px_;
}

double macro_average(std::span<const double> per_dataset_iou) {
    if (per_dataset_iou.empty()) throw Error("macro_average: no dataset scores");
    double sum = 0.0;
    for (double v : per_dataset_iou) sum += v;
    return sum / static_cast<double>(per_dataset_iou.size());
}

} // namespace emseg::metrics
