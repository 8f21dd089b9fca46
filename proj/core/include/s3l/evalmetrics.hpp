#pragma once

#include <cstdint>
#include <vector>

#include "s3l/tensor.hpp"

namespace s3l {

/// Half-open pixel box: x0 <= x < x1, y0 <= y < y1.
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool valid() const { return x0 < x1 && y0 < y1; }
    int64_t area() const { return static_cast<int64_t>(x1 - x0) * (y1 - y0); }
    bool operator==(const Box&) const = default;
};

/// |a intersect b| / |a union b|.
double iou(const Box& a, const Box& b);

/// Fraction of aligned pred/gt pairs with IoU >= 0.5 (a boundary hit counts).
double gt_known_loc(const std::vector<Box>& pred, const std::vector<Box>& gt);

/// Mean of argmax(logits) == label; ties break toward the lowest class index.
double top1_accuracy(const Tensor& logits, const std::vector<int64_t>& labels);

}  // namespace s3l
