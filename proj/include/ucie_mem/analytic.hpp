#pragma once

#include "ucie_mem/core_model.hpp"

#include <optional>

namespace ucie_mem {

struct ParameterIdentityError : Error {
    using Error::Error;
};

/// Busy time and lane-UI power terms of an asymmetric lane map over one xRyW window.
struct AsymBreakdown {
    double t_ui = 0;          ///< window length, max over directions
    double s2m_data_mask = 0; ///< data + write-mask lanes
    double s2m_cmd = 0;
    double s2m_crc = 0;
    double m2s_data_crc = 0;

    double total() const { return s2m_data_mask + s2m_cmd + s2m_crc + m2s_data_crc; }
};

/// Slot positions needed per direction for one xRyW window.
struct SlotBreakdown {
    double s2m = 0;
    double m2s = 0;
    double max = 0;
};

struct MetricsResult {
    ApproachId approach{};
    double bw_eff = 0;
    double bw_density_linear = 0; ///< GB/s/mm
    double bw_density_areal = 0;  ///< GB/s/mm^2
    double p_data = 0;
    double power_eff = 0;         ///< pJ/b
    std::optional<AsymBreakdown> lanes;
    std::optional<SlotBreakdown> slots;
};

struct PowerResult {
    double p_data;
    double power_eff;
};

// ----------------------------------------------------------------------------
// LPDDR6 over the 74-lane asymmetric module
// ----------------------------------------------------------------------------

double lpddr6_time_ui(TrafficMix const &mix);
double lpddr6_bw_eff(TrafficMix const &mix);
AsymBreakdown lpddr6_power_terms(TrafficMix const &mix, double idle_fraction);
/// p_data = 512(x+y) / sum of lane-group power terms; power_eff = peak / p_data.
PowerResult lpddr6_power(TrafficMix const &mix, LinkVariant const &link);

// ----------------------------------------------------------------------------
// HBM over the 138-lane asymmetric module
// ----------------------------------------------------------------------------

/// Command bits per read or write on the HBM command lanes.
inline constexpr double kHbmCommandBitsPerOp = 96.0;

double hbm_asym_time_ui(TrafficMix const &mix);
double hbm_asym_bw_eff(TrafficMix const &mix);
AsymBreakdown hbm_asym_power_terms(TrafficMix const &mix, double idle_fraction,
                                   double command_bits_per_op = kHbmCommandBitsPerOp);
PowerResult hbm_asym_power(TrafficMix const &mix, LinkVariant const &link,
                           double command_bits_per_op = kHbmCommandBitsPerOp);

// ----------------------------------------------------------------------------
// CXL.Mem over symmetric UCIe
// ----------------------------------------------------------------------------

SlotBreakdown cxl_unopt_slots(TrafficMix const &mix);
MetricsResult cxl_unopt_metrics(TrafficMix const &mix, LinkVariant const &link);

struct CxlOptOptions {
    /// Pack two requests into a G-slot. Off reproduces the published analysis.
    bool two_requests_per_gslot = false;
};

SlotBreakdown cxl_opt_slots(TrafficMix const &mix, CxlOptOptions opts = {});
MetricsResult cxl_opt_metrics(TrafficMix const &mix, LinkVariant const &link, CxlOptOptions opts = {});

// ----------------------------------------------------------------------------
// CHI Format-X over symmetric UCIe
// ----------------------------------------------------------------------------

struct ChiModelParams {
    int granules_per_flit = 12;
    int granule_bytes = 20;
    int header_bytes_per_flit = 16;
    int granules_per_cacheline = 4;   ///< 16B of payload per 20B granule
    int requests_per_granule = 1;
    int responses_per_granule = 2;
    int header_region_granules = 0;   ///< message capacity of the header region, in granules

    /// Throws ParameterIdentityError unless granules * bytes + header = 256.
    void validate() const;
};

/// Granule positions per direction, in units of (granules_per_flit + header_region_granules) per flit.
SlotBreakdown chi_slots(TrafficMix const &mix, ChiModelParams const &params = {});
MetricsResult chi_metrics(TrafficMix const &mix, LinkVariant const &link, ChiModelParams const &params = {});

// ----------------------------------------------------------------------------
// Dispatch
// ----------------------------------------------------------------------------

MetricsResult baseline_metrics(ApproachId which, TrafficMix const &mix);

struct EvaluateOptions {
    CxlOptOptions cxl_opt;
    ChiModelParams chi;
    double hbm_command_bits_per_op = kHbmCommandBitsPerOp;
};

/// Evaluates any approach; baselines ignore the link.
MetricsResult evaluate(ApproachSpec const &approach, TrafficMix const &mix, LinkVariant const &link,
                       EvaluateOptions const &opts = {});
MetricsResult evaluate(ApproachId approach, TrafficMix const &mix, LinkVariant const &link,
                       EvaluateOptions const &opts = {});

} // namespace ucie_mem
