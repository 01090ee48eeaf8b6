#pragma once

#include <string>
#include <vector>

#include "axwin/model.hpp"

namespace axwin {

// Per-layer parameter and multiply-accumulate accounting. Counting
// convention (1 MAC = 1 FLOP, stamped into every report):
//   conv     kh*kw*(c_in/groups)*c_out per output element
//   linear   tokens*c_in*c_out
//   attention per group and head: T*d*T for QK^T and for AV, padded token
//            counts included
//   layer_norm / softmax / gelu   one per element
//   bilinear upsampling           four per output element
//   additions, pooling, reshapes, index moves  zero
// Each entry folds the activation and normalization cost of its submodule.
// The totals must match the instrumented kernel counter exactly.
struct CostEntry {
    std::string name;
    std::int64_t params = 0;
    std::int64_t flops = 0;
};

struct CostReport {
    std::string variant;
    std::int64_t res_h = 0, res_w = 0;
    std::string convention = "MAC";
    std::vector<CostEntry> entries;
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;

    const CostEntry* find(const std::string& name) const;
};

// Parameter counts only (flops left zero); independent of resolution.
CostReport count_params(const VariantConfig& cfg);
// Full accounting for a batch-1 forward at the given resolution.
CostReport count_flops(const VariantConfig& cfg, std::int64_t h, std::int64_t w);

// Pure attention matmul cost (QK^T + AV, no projections) of the four
// mechanisms on c channels, padded token counts included. Head count does
// not change these totals; it is accepted for interface completeness.
struct AttentionCostTable {
    std::int64_t global = 0;
    std::int64_t window = 0;
    std::int64_t axial = 0;
    std::int64_t axwin = 0;
};

AttentionCostTable attention_flops_compare(std::int64_t h, std::int64_t w, std::int64_t c,
                                           std::int64_t window_size, std::int64_t axial_size,
                                           int heads = 1);

enum class ReportFormat { Json, Csv, Table };
ReportFormat parse_report_format(const std::string& name);
std::string emit_report(const CostReport& report, ReportFormat format);

}  // namespace axwin
