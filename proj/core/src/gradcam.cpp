#include "s3l/gradcam.hpp"

#include <algorithm>
#include <deque>

#include "s3l/augment.hpp"
#include "s3l/ops.hpp"

namespace s3l {

CamMap grad_cam(Network& net, const Tensor& image, int class_id) {
    S3L_CHECK(image.defined() && image.rank() == 3 && image.dim(0) == 3,
              "grad_cam: want a [3,H,W] image");
    S3L_CHECK(has_head(net, HeadKind::Classifier), "grad_cam: classifier head required");
    int64_t img_h = image.dim(1), img_w = image.dim(2);

    // Marking the input keeps the graph alive through the feature map even
    // when the backbone parameters are frozen.
    Tensor x = reshape(image.clone().set_requires_grad(true), {1, 3, img_h, img_w});
    BackboneOutput out = forward_backbone(net, x, /*train=*/false);
    Tensor logits = apply_classifier(net, out.pooled);
    S3L_CHECK(class_id >= 0 && class_id < logits.dim(1), "grad_cam: class ", class_id,
              " out of range [0, ", logits.dim(1), ")");
    pick(logits, {0, class_id}).backward();

    Tensor fmap = out.feature_map;
    Tensor grad = fmap.grad();
    int64_t c = fmap.dim(1), h = fmap.dim(2), w = fmap.dim(3);
    Tensor raw = Tensor::zeros({1, h, w});
    if (grad.defined()) {
        for (int64_t ci = 0; ci < c; ++ci) {
            double weight = 0;
            for (int64_t p = 0; p < h * w; ++p) weight += grad.get(ci * h * w + p);
            weight /= static_cast<double>(h * w);
            for (int64_t p = 0; p < h * w; ++p)
                raw.set(p, raw.get(p) + weight * fmap.get(ci * h * w + p));
        }
        for (int64_t p = 0; p < h * w; ++p) raw.set(p, std::max(0.0, raw.get(p)));
    }

    Tensor up = resize_bilinear(raw, static_cast<int>(img_h), static_cast<int>(img_w));
    double mx = 0;
    for (int64_t p = 0; p < img_h * img_w; ++p) mx = std::max(mx, up.get(p));
    CamMap cam;
    cam.map = Tensor::zeros({img_h, img_w});
    for (int64_t p = 0; p < img_h * img_w; ++p)
        cam.map.set(p, mx > 0 ? up.get(p) / mx : 0.0);
    cam.class_id = class_id;
    return cam;
}

Box cam_to_box(const CamMap& cam, double threshold) {
    S3L_CHECK(cam.map.defined() && cam.map.rank() == 2, "cam_to_box: want a [H,W] map");
    int64_t h = cam.map.dim(0), w = cam.map.dim(1);
    double mx = 0;
    for (int64_t p = 0; p < h * w; ++p) mx = std::max(mx, cam.map.get(p));
    S3L_CHECK(mx > 0, "cam_to_box: no activation");

    double cut = threshold * mx;
    std::vector<char> on(static_cast<size_t>(h * w)), seen(static_cast<size_t>(h * w));
    for (int64_t p = 0; p < h * w; ++p) on[static_cast<size_t>(p)] = cam.map.get(p) >= cut;

    Box best;
    int64_t best_count = 0;
    std::deque<int64_t> frontier;
    for (int64_t start = 0; start < h * w; ++start) {
        if (!on[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        int64_t count = 0;
        int64_t min_x = w, max_x = -1, min_y = h, max_y = -1;
        frontier.push_back(start);
        seen[static_cast<size_t>(start)] = 1;
        while (!frontier.empty()) {
            int64_t p = frontier.front();
            frontier.pop_front();
            int64_t y = p / w, x = p % w;
            ++count;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            const int64_t dy[4] = {-1, 1, 0, 0};
            const int64_t dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int64_t ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                int64_t np = ny * w + nx;
                if (on[static_cast<size_t>(np)] && !seen[static_cast<size_t>(np)]) {
                    seen[static_cast<size_t>(np)] = 1;
                    frontier.push_back(np);
                }
            }
        }
        if (count > best_count) {
            best_count = count;
            best = Box{static_cast<int>(min_x), static_cast<int>(min_y),
                       static_cast<int>(max_x + 1), static_cast<int>(max_y + 1)};
        }
    }
    return best;
}

double cam_mass_fraction(const CamMap& cam, const Box& region) {
    S3L_CHECK(cam.map.defined() && cam.map.rank() == 2, "cam_mass_fraction: want a [H,W] map");
    S3L_CHECK(region.valid(), "cam_mass_fraction: degenerate region");
    int64_t h = cam.map.dim(0), w = cam.map.dim(1);
    double total = 0, inside = 0;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double v = cam.map.get(y * w + x);
            total += v;
            if (x >= region.x0 && x < region.x1 && y >= region.y0 && y < region.y1) inside += v;
        }
    return total > 0 ? inside / total : 0.0;
}

}  // namespace s3l
