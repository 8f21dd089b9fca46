#include "s3l/augment.hpp"

#include <algorithm>
#include <cmath>

#include "s3l/common.hpp"

namespace s3l {

namespace {

void require_image(const Tensor& img, const char* op) {
    S3L_CHECK(img.defined() && img.rank() == 3 && img.dim(1) >= 1 && img.dim(2) >= 1, op,
              ": want CxHxW image");
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Tensor crop_resize(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w, int out) {
    int64_t c = img.dim(0), src_w = img.dim(2);
    Tensor patch = Tensor::zeros({c, h, w}, img.dtype());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                patch.set((ci * h + y) * w + x,
                          img.get((ci * img.dim(1) + y0 + y) * src_w + x0 + x));
    return resize_bilinear(patch, out, out);
}

}  // namespace

void AugPolicy::validate() const {
    S3L_CONFIG_CHECK(resolution > 0, "aug policy: resolution must be positive");
    S3L_CONFIG_CHECK(scale_lo > 0 && scale_lo <= scale_hi && scale_hi <= 1.0,
                     "aug policy: crop scale range must lie in (0, 1]");
    S3L_CONFIG_CHECK(aspect_lo > 0 && aspect_lo <= aspect_hi, "aug policy: bad aspect range");
    for (double p : {hflip_p, grayscale_p, blur_p})
        S3L_CONFIG_CHECK(p >= 0.0 && p <= 1.0, "aug policy: probabilities must lie in [0, 1]");
    S3L_CONFIG_CHECK(blur_sigma_lo > 0 && blur_sigma_lo <= blur_sigma_hi,
                     "aug policy: bad blur sigma range");
    for (double s : norm_std) S3L_CONFIG_CHECK(s > 0, "aug policy: std must be positive");
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    require_image(img, "resize_bilinear");
    S3L_CHECK(out_h >= 1 && out_w >= 1, "resize_bilinear: bad output size");
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out = Tensor::zeros({c, out_h, out_w}, img.dtype());
    double sy = static_cast<double>(h) / out_h;
    double sx = static_cast<double>(w) / out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        int64_t y1 = std::min(y0 + 1, h - 1);
        double wy = fy - y0;
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            int64_t x1 = std::min(x0 + 1, w - 1);
            double wx = fx - x0;
            for (int64_t ci = 0; ci < c; ++ci) {
                double v00 = img.get((ci * h + y0) * w + x0);
                double v01 = img.get((ci * h + y0) * w + x1);
                double v10 = img.get((ci * h + y1) * w + x0);
                double v11 = img.get((ci * h + y1) * w + x1);
                double top = v00 + (v01 - v00) * wx;
                double bot = v10 + (v11 - v10) * wx;
                out.set((ci * out_h + oy) * out_w + ox, top + (bot - top) * wy);
            }
        }
    }
    return out;
}

Tensor hflip(const Tensor& img) {
    require_image(img, "hflip");
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out = Tensor::zeros(img.shape(), img.dtype());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out.set((ci * h + y) * w + x, img.get((ci * h + y) * w + (w - 1 - x)));
    return out;
}

Tensor normalize(const Tensor& img, const std::array<double, 3>& mean,
                 const std::array<double, 3>& std) {
    require_image(img, "normalize");
    S3L_CHECK(img.dim(0) == 3, "normalize: want 3 channels");
    int64_t plane = img.dim(1) * img.dim(2);
    Tensor out = Tensor::zeros(img.shape(), img.dtype());
    for (int64_t ci = 0; ci < 3; ++ci)
        for (int64_t p = 0; p < plane; ++p)
            out.set(ci * plane + p, (img.get(ci * plane + p) - mean[static_cast<size_t>(ci)]) /
                                        std[static_cast<size_t>(ci)]);
    detail::check_finite(out, "normalize");
    return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    require_image(img, "gaussian_blur");
    S3L_CHECK(sigma > 0, "gaussian_blur: sigma must be positive");
    int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(2.5 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double total = 0;
    for (int64_t i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : kernel) v /= total;

    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor tmp = Tensor::zeros(img.shape(), img.dtype());
    // horizontal pass, replicate padding
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0;
                for (int64_t k = -radius; k <= radius; ++k) {
                    int64_t sx = std::min(std::max<int64_t>(x + k, 0), w - 1);
                    acc += kernel[static_cast<size_t>(k + radius)] * img.get((ci * h + y) * w + sx);
                }
                tmp.set((ci * h + y) * w + x, acc);
            }
    Tensor out = Tensor::zeros(img.shape(), img.dtype());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0;
                for (int64_t k = -radius; k <= radius; ++k) {
                    int64_t sy = std::min(std::max<int64_t>(y + k, 0), h - 1);
                    acc += kernel[static_cast<size_t>(k + radius)] * tmp.get((ci * h + sy) * w + x);
                }
                out.set((ci * h + y) * w + x, acc);
            }
    return out;
}

Tensor color_distort(const Tensor& img, const AugPolicy& policy, SeededRng& rng) {
    require_image(img, "color_distort");
    S3L_CHECK(img.dim(0) == 3, "color_distort: want RGB");
    int64_t plane = img.dim(1) * img.dim(2);

    // draw order is fixed: brightness, contrast, saturation, grayscale
    double fb = rng.uniform(std::max(0.0, 1.0 - policy.brightness), 1.0 + policy.brightness);
    double fc = rng.uniform(std::max(0.0, 1.0 - policy.contrast), 1.0 + policy.contrast);
    double fs = rng.uniform(std::max(0.0, 1.0 - policy.saturation), 1.0 + policy.saturation);
    bool to_gray = rng.uniform() < policy.grayscale_p;

    Tensor out = img.clone();
    auto px = [&](int64_t ci, int64_t p) { return out.get(ci * plane + p); };

    for (int64_t i = 0; i < 3 * plane; ++i) out.set(i, clamp01(out.get(i) * fb));

    double gray_mean = 0;
    for (int64_t p = 0; p < plane; ++p) gray_mean += luma(px(0, p), px(1, p), px(2, p));
    gray_mean /= static_cast<double>(plane);
    for (int64_t i = 0; i < 3 * plane; ++i)
        out.set(i, clamp01((1.0 - fc) * gray_mean + fc * out.get(i)));

    for (int64_t p = 0; p < plane; ++p) {
        double g = luma(px(0, p), px(1, p), px(2, p));
        for (int64_t ci = 0; ci < 3; ++ci)
            out.set(ci * plane + p, clamp01((1.0 - fs) * g + fs * px(ci, p)));
    }

    if (to_gray)
        for (int64_t p = 0; p < plane; ++p) {
            double g = luma(px(0, p), px(1, p), px(2, p));
            for (int64_t ci = 0; ci < 3; ++ci) out.set(ci * plane + p, g);
        }
    return out;
}

Tensor random_resized_crop(const Tensor& img, const AugPolicy& policy, SeededRng& rng) {
    require_image(img, "random_resized_crop");
    int64_t h = img.dim(1), w = img.dim(2);
    double area = static_cast<double>(h) * static_cast<double>(w);
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target = area * rng.uniform(policy.scale_lo, policy.scale_hi);
        double aspect = std::exp(rng.uniform(std::log(policy.aspect_lo), std::log(policy.aspect_hi)));
        int64_t cw = static_cast<int64_t>(std::lround(std::sqrt(target * aspect)));
        int64_t ch = static_cast<int64_t>(std::lround(std::sqrt(target / aspect)));
        if (cw >= 1 && ch >= 1 && cw <= w && ch <= h) {
            int64_t y0 = rng.below(h - ch + 1);
            int64_t x0 = rng.below(w - cw + 1);
            return crop_resize(img, y0, x0, ch, cw, policy.resolution);
        }
    }
    int64_t side = std::min(h, w);
    return crop_resize(img, (h - side) / 2, (w - side) / 2, side, side, policy.resolution);
}

Tensor make_view(const Tensor& img, const AugPolicy& policy, SeededRng& rng) {
    Tensor v = random_resized_crop(img, policy, rng);
    if (rng.uniform() < policy.hflip_p) v = hflip(v);
    v = color_distort(v, policy, rng);
    if (rng.uniform() < policy.blur_p) {
        double s = policy.resolution / 224.0;
        double sigma = rng.uniform(policy.blur_sigma_lo * s, policy.blur_sigma_hi * s);
        sigma = std::max(sigma, 1e-3);
        v = gaussian_blur(v, sigma);
    }
    return normalize(v, policy.norm_mean, policy.norm_std);
}

ViewPair make_view_pair(const Tensor& img, const AugPolicy& policy, const SeededRng& rng,
                        int64_t source_id) {
    ViewPair pair;
    pair.source_id = source_id;
    SeededRng r0 = rng.stream({0});
    SeededRng r1 = rng.stream({1});
    pair.first = make_view(img, policy, r0);
    pair.second = make_view(img, policy, r1);
    S3L_CHECK(pair.first.shape() == pair.second.shape(), "view pair shape mismatch");
    return pair;
}

Tensor finetune_transform(const Tensor& img, bool train, int r, SeededRng& rng,
                          const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    require_image(img, "finetune_transform");
    int target = static_cast<int>(std::ceil(256.0 / 224.0 * r));
    S3L_CHECK(r <= target, "finetune_transform: crop larger than resize target");
    int64_t h = img.dim(1), w = img.dim(2);
    int64_t short_side = std::min(h, w);
    int new_h = static_cast<int>(std::lround(static_cast<double>(h) * target / short_side));
    int new_w = static_cast<int>(std::lround(static_cast<double>(w) * target / short_side));
    Tensor resized = resize_bilinear(img, new_h, new_w);
    int64_t y0, x0;
    if (train) {
        y0 = rng.below(new_h - r + 1);
        x0 = rng.below(new_w - r + 1);
    } else {
        y0 = (new_h - r) / 2;
        x0 = (new_w - r) / 2;
    }
    Tensor crop = crop_resize(resized, y0, x0, r, r, r);
    if (train && rng.uniform() < 0.5) crop = hflip(crop);
    return normalize(crop, mean, std);
}

MixupBatch mixup_batch(const Tensor& x, const Tensor& y_onehot, double alpha, SeededRng& rng,
                       std::optional<double> forced_lambda) {
    S3L_CHECK(x.defined() && y_onehot.defined(), "mixup_batch: undefined input");
    S3L_CHECK(alpha > 0, "mixup_batch: alpha must be positive");
    int64_t n = x.dim(0);
    S3L_CHECK(n >= 2, "mixup_batch: batch must have at least 2 samples");
    S3L_CHECK(y_onehot.rank() == 2 && y_onehot.dim(0) == n, "mixup_batch: label batch mismatch");

    MixupBatch out;
    out.lambda = forced_lambda ? *forced_lambda : rng.beta(alpha, alpha);
    out.perm.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out.perm[static_cast<size_t>(i)] = i;
    rng.shuffle(out.perm);

    int64_t xs = x.numel() / n;
    int64_t c = y_onehot.dim(1);
    out.x = Tensor::zeros(x.shape(), x.dtype());
    out.y = Tensor::zeros(y_onehot.shape(), y_onehot.dtype());
    double lam = out.lambda;
    for (int64_t i = 0; i < n; ++i) {
        int64_t j = out.perm[static_cast<size_t>(i)];
        for (int64_t k = 0; k < xs; ++k)
            out.x.set(i * xs + k, lam * x.get(i * xs + k) + (1.0 - lam) * x.get(j * xs + k));
        for (int64_t k = 0; k < c; ++k)
            out.y.set(i * c + k,
                      lam * y_onehot.get(i * c + k) + (1.0 - lam) * y_onehot.get(j * c + k));
    }
    return out;
}

}  // namespace s3l
