#include "s3l/evalmetrics.hpp"

#include <algorithm>

namespace s3l {

double iou(const Box& a, const Box& b) {
    S3L_CHECK(a.valid() && b.valid(), "iou: boxes must have positive area");
    int64_t ix = std::max<int64_t>(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    int64_t iy = std::max<int64_t>(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    int64_t inter = ix * iy;
    int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double gt_known_loc(const std::vector<Box>& pred, const std::vector<Box>& gt) {
    S3L_CHECK(pred.size() == gt.size(), "gt_known_loc: list length mismatch (", pred.size(), " vs ",
              gt.size(), ")");
    S3L_CHECK(!pred.empty(), "gt_known_loc: empty lists");
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (iou(pred[i], gt[i]) >= 0.5) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double top1_accuracy(const Tensor& logits, const std::vector<int64_t>& labels) {
    S3L_CHECK(logits.defined() && logits.rank() == 2, "top1_accuracy: want [N,C] logits");
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    S3L_CHECK(rows >= 1, "top1_accuracy: need at least one row");
    S3L_CHECK(static_cast<int64_t>(labels.size()) == rows, "top1_accuracy: label count mismatch");
    int64_t correct = 0;
    for (int64_t r = 0; r < rows; ++r) {
        int64_t best = 0;
        double best_v = logits.get(r * cols);
        for (int64_t c = 1; c < cols; ++c) {
            double v = logits.get(r * cols + c);
            if (v > best_v) {  // strict: ties keep the lowest index
                best_v = v;
                best = c;
            }
        }
        if (best == labels[static_cast<size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows);
}

}  // namespace s3l
