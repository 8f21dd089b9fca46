#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s3l/backbone.hpp"
#include "s3l/schedule.hpp"

namespace s3l {

/// Per-op-class multiply-accumulate / elementwise-op counts for one forward
/// pass of one image. Convolutions and linear layers dominate; the cheap
/// per-element terms (BN, ReLU, residual adds, pooling) are what published
/// per-architecture totals include on top of the kernel MACs.
struct CostBreakdown {
    uint64_t conv = 0;    // Cout*Cin*kh*kw*Hout*Wout per conv
    uint64_t linear = 0;  // in*out per fully-connected layer
    uint64_t norm = 0;    // 2*numel per batch norm
    uint64_t act = 0;     // numel per ReLU
    uint64_t add = 0;     // numel per residual add
    uint64_t pool = 0;    // k*k*numel_out per max pool; numel_in+numel_out per global avg

    uint64_t total() const { return conv + linear + norm + act + add + pool; }
    uint64_t conv_linear() const { return conv + linear; }
};

/// Exact integer spatial arithmetic, layer by layer. Throws when the
/// resolution produces a non-positive feature map anywhere.
CostBreakdown count_macs_breakdown(const BackboneSpec& spec, int resolution,
                                   const std::vector<HeadSpec>& heads = {});

uint64_t count_macs(const BackboneSpec& spec, int resolution,
                    const std::vector<HeadSpec>& heads = {});

/// Epoch-weighted mean: sum(macs_i * epochs_i) / sum(epochs_i).
double weighted_mean_macs(const std::vector<std::pair<double, int>>& stages);

struct CostReportRow {
    int stage = 0;  // 1-based
    int resolution = 0;
    int epochs = 0;
    double macs = 0;
};

struct CostReport {
    std::vector<CostReportRow> rows;
    double weighted_mean = 0;
    double total_mac_epochs = 0;

    /// CSV with header stage,resolution,epochs,macs,weighted_mean. The
    /// weighted mean appears on the trailing summary row.
    std::string to_csv() const;
};

CostReport plan_cost(const BackboneSpec& spec, const std::vector<StagePlan>& plan,
                     const std::vector<HeadSpec>& heads = {});

}  // namespace s3l
