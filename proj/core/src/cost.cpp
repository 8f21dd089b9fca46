#include "s3l/cost.hpp"

#include <sstream>

#include "s3l/ops.hpp"

namespace s3l {

namespace {

struct Counter {
    CostBreakdown c;
    int64_t h = 0;  // current square spatial extent

    void conv(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad) {
        int64_t ho = detail::conv_out_extent(h, k, stride, pad);
        S3L_CHECK(ho > 0, "count_macs: resolution produces a non-positive feature map");
        c.conv += static_cast<uint64_t>(cout * cin * k * k * ho * ho);
        c.norm += static_cast<uint64_t>(2 * cout * ho * ho);
        h = ho;
    }
    void relu(int64_t ch) { c.act += static_cast<uint64_t>(ch * h * h); }
    void residual_add(int64_t ch) { c.add += static_cast<uint64_t>(ch * h * h); }
    void max_pool(int64_t ch, int64_t k, int64_t stride, int64_t pad) {
        int64_t ho = detail::conv_out_extent(h, k, stride, pad);
        S3L_CHECK(ho > 0, "count_macs: resolution produces a non-positive feature map");
        c.pool += static_cast<uint64_t>(k * k * ch * ho * ho);
        h = ho;
    }
    void global_avg(int64_t ch) {
        c.pool += static_cast<uint64_t>(ch * h * h + ch);
        h = 1;
    }
    void fc(int64_t in, int64_t out) { c.linear += static_cast<uint64_t>(in * out); }
    void bn1d(int64_t ch) { c.norm += static_cast<uint64_t>(2 * ch); }
    void relu1d(int64_t ch) { c.act += static_cast<uint64_t>(ch); }
};

}  // namespace

CostBreakdown count_macs_breakdown(const BackboneSpec& spec, int resolution,
                                   const std::vector<HeadSpec>& heads) {
    spec.validate();
    S3L_CHECK(resolution >= 1, "count_macs: resolution must be positive");
    Counter ctr;
    ctr.h = resolution;
    ctr.conv(3, spec.stem.channels, spec.stem.kernel, spec.stem.stride, spec.stem.kernel / 2);
    ctr.relu(spec.stem.channels);
    if (spec.stem.pool) ctr.max_pool(spec.stem.channels, 3, 2, 1);

    int64_t in_ch = spec.stem.channels;
    for (const auto& stage : spec.stages) {
        for (int b = 0; b < stage.blocks; ++b) {
            int64_t stride = b == 0 ? stage.stride : 1;
            int64_t block_in = b == 0 ? in_ch : stage.channels;
            int64_t save_h = ctr.h;
            if (stage.kind == BlockKind::Basic) {
                ctr.conv(block_in, stage.channels, 3, stride, 1);
                ctr.relu(stage.channels);
                ctr.conv(stage.channels, stage.channels, 3, 1, 1);
            } else {
                int64_t mid = stage.channels / 4;
                ctr.conv(block_in, mid, 1, 1, 0);
                ctr.relu(mid);
                ctr.conv(mid, mid, 3, stride, 1);
                ctr.relu(mid);
                ctr.conv(mid, stage.channels, 1, 1, 0);
            }
            int64_t out_h = ctr.h;
            if (stride != 1 || block_in != stage.channels) {
                ctr.h = save_h;
                ctr.conv(block_in, stage.channels, 1, stride, 0);
                ctr.h = out_h;
            }
            ctr.residual_add(stage.channels);
            ctr.relu(stage.channels);
        }
        in_ch = stage.channels;
    }
    ctr.global_avg(in_ch);

    for (const auto& head : heads) {
        head.validate();
        int64_t in = in_ch;
        for (int hdim : head.hidden) {
            ctr.fc(in, hdim);
            ctr.bn1d(hdim);
            ctr.relu1d(hdim);
            in = hdim;
        }
        ctr.fc(in, head.out_dim);
    }
    return ctr.c;
}

uint64_t count_macs(const BackboneSpec& spec, int resolution, const std::vector<HeadSpec>& heads) {
    return count_macs_breakdown(spec, resolution, heads).total();
}

double weighted_mean_macs(const std::vector<std::pair<double, int>>& stages) {
    S3L_CHECK(!stages.empty(), "weighted_mean_macs: no stages");
    double num = 0, den = 0;
    for (const auto& [macs, epochs] : stages) {
        S3L_CHECK(epochs > 0, "weighted_mean_macs: epochs must be positive");
        num += macs * epochs;
        den += epochs;
    }
    return num / den;
}

std::string CostReport::to_csv() const {
    std::ostringstream os;
    os << "stage,resolution,epochs,macs,weighted_mean\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.0f", r.macs);
        os << r.stage << "," << r.resolution << "," << r.epochs << "," << buf << ",\n";
    }
    std::snprintf(buf, sizeof(buf), "%.3f", weighted_mean);
    os << "total,,"
       << [&] {
              int e = 0;
              for (const auto& r : rows) e += r.epochs;
              return e;
          }()
       << ",," << buf << "\n";
    return os.str();
}

CostReport plan_cost(const BackboneSpec& spec, const std::vector<StagePlan>& plan,
                     const std::vector<HeadSpec>& heads) {
    S3L_CHECK(!plan.empty(), "plan_cost: empty plan");
    CostReport report;
    std::vector<std::pair<double, int>> stages;
    for (size_t i = 0; i < plan.size(); ++i) {
        double macs = static_cast<double>(count_macs(spec, plan[i].resolution, heads));
        report.rows.push_back(
            {static_cast<int>(i) + 1, plan[i].resolution, plan[i].epochs, macs});
        stages.emplace_back(macs, plan[i].epochs);
        report.total_mac_epochs += macs * plan[i].epochs;
    }
    report.weighted_mean = weighted_mean_macs(stages);
    return report;
}

}  // namespace s3l
