#include "ucie_mem/analytic.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace ucie_mem {

namespace {

MetricsResult with_density(MetricsResult r, LinkVariant const &link) {
    r.bw_density_linear = r.bw_eff * link.shoreline_density;
    r.bw_density_areal = r.bw_eff * link.areal_density;
    return r;
}

} // namespace

// ============================================================================
// LPDDR6 asymmetric
// ============================================================================

// A cache line is 576 bits (two 288-bit LPDDR6 granules): 16 UI on the 36
// read lanes, 24 UI on the 24 write lanes.
double lpddr6_time_ui(TrafficMix const &mix) {
    return 8.0 * std::max(2.0 * mix.reads(), 3.0 * mix.writes());
}

double lpddr6_bw_eff(TrafficMix const &mix) {
    return 32.0 * mix.total() / (37.0 * std::max(2.0 * mix.reads(), 3.0 * mix.writes()));
}

AsymBreakdown lpddr6_power_terms(TrafficMix const &mix, double p) {
    double const x = mix.reads(), y = mix.writes();
    double const t = lpddr6_time_ui(mix);
    double const cmd_bits = 96.0 * (x + y);
    AsymBreakdown b;
    b.t_ui = t;
    b.s2m_data_mask = 26.0 * (24.0 * y + (t - 24.0 * y) * p);
    b.s2m_cmd = cmd_bits + (10.0 * t - cmd_bits) * p;
    // CRC lane runs while either the data or the command lanes are busy.
    b.s2m_crc = std::max(24.0 * y, cmd_bits / 10.0) * (1.0 - p) + t * p;
    b.m2s_data_crc = 37.0 * (16.0 * x * (1.0 - p) + t * p);
    return b;
}

PowerResult lpddr6_power(TrafficMix const &mix, LinkVariant const &link) {
    double const p_data = mix.data_bits() / lpddr6_power_terms(mix, link.idle_fraction).total();
    return {p_data, link.peak_power_eff / p_data};
}

// ============================================================================
// HBM asymmetric
// ============================================================================

// 8 UI per line on 72 read lanes, 16 UI per line on 36 write lanes.
double hbm_asym_time_ui(TrafficMix const &mix) {
    return 8.0 * std::max(mix.reads(), 2.0 * mix.writes());
}

double hbm_asym_bw_eff(TrafficMix const &mix) { return mix.data_bits() / (138.0 * hbm_asym_time_ui(mix)); }

AsymBreakdown hbm_asym_power_terms(TrafficMix const &mix, double p, double command_bits_per_op) {
    double const x = mix.reads(), y = mix.writes();
    double const t = hbm_asym_time_ui(mix);
    double const cmd_bits = command_bits_per_op * (x + y);
    AsymBreakdown b;
    b.t_ui = t;
    b.s2m_data_mask = 40.0 * (16.0 * y + (t - 16.0 * y) * p);
    b.s2m_cmd = cmd_bits + (24.0 * t - cmd_bits) * p;
    b.s2m_crc = std::max(16.0 * y, cmd_bits / 24.0) * (1.0 - p) + t * p;
    b.m2s_data_crc = 73.0 * (8.0 * x * (1.0 - p) + t * p);
    return b;
}

PowerResult hbm_asym_power(TrafficMix const &mix, LinkVariant const &link, double command_bits_per_op) {
    double const p_data =
        mix.data_bits() / hbm_asym_power_terms(mix, link.idle_fraction, command_bits_per_op).total();
    return {p_data, link.peak_power_eff / p_data};
}

// ============================================================================
// CXL.Mem unoptimized
// ============================================================================

SlotBreakdown cxl_unopt_slots(TrafficMix const &mix) {
    double const x = mix.reads(), y = mix.writes();
    SlotBreakdown s;
    s.s2m = x + 5.0 * y;
    s.m2s = (9.0 * x + y) / 2.0;
    s.max = std::max(s.s2m, s.m2s);
    return s;
}

MetricsResult cxl_unopt_metrics(TrafficMix const &mix, LinkVariant const &link) {
    auto const slots = cxl_unopt_slots(mix);
    MetricsResult r;
    r.approach = ApproachId::CxlUnopt;
    r.bw_eff = (15.0 / 16.0) * 4.0 * mix.total() / (2.0 * slots.max);
    // No gating term: every lane is charged for the whole window.
    r.p_data = r.bw_eff;
    r.power_eff = link.peak_power_eff / r.p_data;
    r.slots = slots;
    return with_density(r, link);
}

// ============================================================================
// CXL.Mem optimized
// ============================================================================

SlotBreakdown cxl_opt_slots(TrafficMix const &mix, CxlOptOptions opts) {
    double const x = mix.reads(), y = mix.writes();
    double const req_per_gslot = opts.two_requests_per_gslot ? 2.0 : 1.0;
    SlotBreakdown s;
    // One HS-slot rides along with every 15 data G-slots.
    s.s2m = (16.0 / 15.0) * 4.0 * y + std::max((x + y) - 4.0 * y / 15.0, 0.0) / req_per_gslot;
    s.m2s = (16.0 / 15.0) * 4.0 * x + std::max((x + y) / 4.0 - 4.0 * x / 15.0, 0.0);
    s.max = std::max(s.s2m, s.m2s);
    return s;
}

MetricsResult cxl_opt_metrics(TrafficMix const &mix, LinkVariant const &link, CxlOptOptions opts) {
    auto const s = cxl_opt_slots(mix, opts);
    double const p = link.idle_fraction;
    MetricsResult r;
    r.approach = ApproachId::CxlOpt;
    r.bw_eff = 4.0 * mix.total() / (2.0 * s.max);
    r.p_data = 4.0 * mix.total() / (s.s2m + s.m2s + (2.0 * s.max - s.s2m - s.m2s) * p);
    r.power_eff = link.peak_power_eff / r.p_data;
    r.slots = s;
    return with_density(r, link);
}

// ============================================================================
// CHI
// ============================================================================

void ChiModelParams::validate() const {
    if (granules_per_flit <= 0 || granule_bytes <= 0 || header_bytes_per_flit < 0 || granules_per_cacheline <= 0 ||
        requests_per_granule <= 0 || responses_per_granule <= 0 || header_region_granules < 0) {
        throw ParameterIdentityError("CHI model parameters must be positive");
    }
    if (granules_per_flit * granule_bytes + header_bytes_per_flit != 256) {
        throw ParameterIdentityError(fmt::format("{} granules x {}B + {}B header != 256B", granules_per_flit,
                                                 granule_bytes, header_bytes_per_flit));
    }
}

SlotBreakdown chi_slots(TrafficMix const &mix, ChiModelParams const &params) {
    params.validate();
    double const x = mix.reads(), y = mix.writes();
    double const g = params.granules_per_flit;
    double const hc = params.header_region_granules;
    double const per_line = params.granules_per_cacheline;

    auto direction = [&](double data_lines, double headers) {
        double const data = per_line * data_lines;
        return data * (g + hc) / g + std::max(headers - hc * data / g, 0.0);
    };

    SlotBreakdown s;
    s.s2m = direction(y, (x + y) / params.requests_per_granule);
    s.m2s = direction(x, (x + y) / params.responses_per_granule);
    s.max = std::max(s.s2m, s.m2s);
    return s;
}

MetricsResult chi_metrics(TrafficMix const &mix, LinkVariant const &link, ChiModelParams const &params) {
    auto const s = chi_slots(mix, params);
    double const positions_per_flit = params.granules_per_flit + params.header_region_granules;
    double const flits = s.max / positions_per_flit;
    MetricsResult r;
    r.approach = ApproachId::ChiSym;
    r.bw_eff = 64.0 * mix.total() / (2.0 * 256.0 * flits);
    r.p_data = r.bw_eff;
    r.power_eff = link.peak_power_eff / r.p_data;
    r.slots = s;
    return with_density(r, link);
}

// ============================================================================
// Dispatch
// ============================================================================

MetricsResult baseline_metrics(ApproachId which, TrafficMix const &) {
    BaselineMemory const *m = nullptr;
    if (which == ApproachId::BaselineLpddr6) {
        m = &baseline_lpddr6();
    } else if (which == ApproachId::BaselineHbm4) {
        m = &baseline_hbm4();
    } else {
        throw Error(fmt::format("{} is not a baseline", to_string(which)));
    }
    MetricsResult r;
    r.approach = which;
    r.bw_eff = 1.0;
    r.bw_density_linear = m->shoreline_density;
    r.bw_density_areal = m->areal_density;
    r.p_data = 1.0;
    r.power_eff = m->power_eff;
    return r;
}

MetricsResult evaluate(ApproachSpec const &approach, TrafficMix const &mix, LinkVariant const &link,
                       EvaluateOptions const &opts) {
    switch (approach.id) {
    case ApproachId::BaselineLpddr6:
    case ApproachId::BaselineHbm4: return baseline_metrics(approach.id, mix);
    case ApproachId::CxlUnopt: return cxl_unopt_metrics(mix, link);
    case ApproachId::CxlOpt: return cxl_opt_metrics(mix, link, opts.cxl_opt);
    case ApproachId::ChiSym: return chi_metrics(mix, link, opts.chi);
    case ApproachId::Lpddr6Asym: {
        MetricsResult r;
        r.approach = approach.id;
        r.bw_eff = lpddr6_bw_eff(mix);
        auto const pw = lpddr6_power(mix, link);
        r.p_data = pw.p_data;
        r.power_eff = pw.power_eff;
        r.lanes = lpddr6_power_terms(mix, link.idle_fraction);
        return with_density(r, link);
    }
    case ApproachId::HbmAsym: {
        MetricsResult r;
        r.approach = approach.id;
        r.bw_eff = hbm_asym_bw_eff(mix);
        auto const pw = hbm_asym_power(mix, link, opts.hbm_command_bits_per_op);
        r.p_data = pw.p_data;
        r.power_eff = pw.power_eff;
        r.lanes = hbm_asym_power_terms(mix, link.idle_fraction, opts.hbm_command_bits_per_op);
        return with_density(r, link);
    }
    }
    throw Error("unhandled approach");
}

MetricsResult evaluate(ApproachId approach, TrafficMix const &mix, LinkVariant const &link,
                       EvaluateOptions const &opts) {
    return evaluate(make_approach(approach), mix, link, opts);
}

} // namespace ucie_mem
