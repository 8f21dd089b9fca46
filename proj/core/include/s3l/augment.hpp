#pragma once

#include <array>
#include <optional>
#include <vector>

#include "s3l/rng.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

/// Stochastic view-generation policy, parameterized by target resolution.
/// Defaults follow the SimCLR recipe (crop, flip, color distortion,
/// grayscale, blur) with MoCo-v2's (0.2, 1.0) crop scale.
struct AugPolicy {
    int resolution = 224;
    double scale_lo = 0.2, scale_hi = 1.0;
    double aspect_lo = 3.0 / 4.0, aspect_hi = 4.0 / 3.0;
    double hflip_p = 0.5;
    double brightness = 0.4, contrast = 0.4, saturation = 0.4;
    double grayscale_p = 0.2;
    double blur_p = 0.5;
    double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;  // at 224; scaled by resolution/224
    std::array<double, 3> norm_mean{0.485, 0.456, 0.406};
    std::array<double, 3> norm_std{0.229, 0.224, 0.225};

    void validate() const;
    AugPolicy at_resolution(int r) const {
        AugPolicy p = *this;
        p.resolution = r;
        return p;
    }
};

struct ViewPair {
    Tensor first;
    Tensor second;
    int64_t source_id = 0;
};

/// Bilinear resize with half-pixel centers (src = (dst+0.5)*scale - 0.5).
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

Tensor hflip(const Tensor& img);
Tensor normalize(const Tensor& img, const std::array<double, 3>& mean,
                 const std::array<double, 3>& std);
/// Separable Gaussian; kernel normalized to sum 1, replicate padding.
Tensor gaussian_blur(const Tensor& img, double sigma);
/// Brightness/contrast/saturation jitter plus random grayscale; clamps to [0,1].
Tensor color_distort(const Tensor& img, const AugPolicy& policy, SeededRng& rng);

/// Area/aspect-sampled crop resized to policy.resolution; falls back to a
/// center crop after 10 rejected proposals.
Tensor random_resized_crop(const Tensor& img, const AugPolicy& policy, SeededRng& rng);

/// Full SSL view: crop -> flip -> color distortion -> blur -> normalize.
Tensor make_view(const Tensor& img, const AugPolicy& policy, SeededRng& rng);

/// Two views of one source with independent randomness, keyed off `rng`
/// by view index.
ViewPair make_view_pair(const Tensor& img, const AugPolicy& policy, const SeededRng& rng,
                        int64_t source_id = 0);

/// Supervised-transform pair: train = shorter-side resize to
/// ceil(256/224 * R), random R-crop, flip, normalize; eval = deterministic
/// resize + center crop + normalize.
Tensor finetune_transform(const Tensor& img, bool train, int r, SeededRng& rng,
                          const std::array<double, 3>& mean, const std::array<double, 3>& std);

struct MixupBatch {
    Tensor x;                    // lam*x + (1-lam)*x[perm]
    Tensor y;                    // soft labels, rows sum to 1
    std::vector<int64_t> perm;   // pairing used
    double lambda = 1.0;
};

/// lambda ~ Beta(alpha, alpha) unless forced; permutation is a seeded shuffle.
MixupBatch mixup_batch(const Tensor& x, const Tensor& y_onehot, double alpha, SeededRng& rng,
                       std::optional<double> forced_lambda = std::nullopt);

}  // namespace s3l
