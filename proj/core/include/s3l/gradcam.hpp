#pragma once

#include "s3l/backbone.hpp"
#include "s3l/evalmetrics.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

/// Class-attribution heat map: non-negative, max-normalized to 1 unless the
/// map is all-zero, at image resolution.
struct CamMap {
    Tensor map;  // [H,W]
    int64_t source_id = 0;
    int class_id = 0;
};

/// Gradient-weighted activation map at the final convolutional stage:
/// channel weights are the spatial mean of d logit_class / d feature map,
/// the map is ReLU(sum_c w_c A_c) upsampled bilinearly to the image size.
CamMap grad_cam(Network& net, const Tensor& image, int class_id);

/// Binarize at threshold * max, flood-fill 4-connected components, return
/// the tight box of the largest. All-zero maps are an error.
Box cam_to_box(const CamMap& cam, double threshold = 0.2);

/// Fraction of total heat inside a box (for quadrant-mass checks).
double cam_mass_fraction(const CamMap& cam, const Box& region);

}  // namespace s3l
