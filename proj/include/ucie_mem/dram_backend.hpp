#pragma once

#include "ucie_mem/analytic.hpp"
#include "ucie_mem/core_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ucie_mem {

struct RatioViolation : Error {
    using Error::Error;
};

struct ScheduleConflict : Error {
    using Error::Error;
};

// ============================================================================
// Devices and clocks
// ============================================================================

struct DeviceSignal {
    std::string name;
    int count;
    double rate; ///< fraction of the DQ rate
};

/// x24 LPDDR6 device: two x12 sub-channels, BL24.
struct Lpddr6DeviceModel {
    int subchannel_width = 12;
    int subchannels = 2;
    int burst_length = 24;
    int payload_bits_per_subchannel = 288; ///< 256 data + 32 meta/ECC
    std::uint32_t act_to_cmd_dev_ui = 8;   ///< ACT to RD/WR spacing
    std::uint32_t read_latency_dev_ui = 8;  ///< RD to first DQ beat
    std::uint32_t write_latency_dev_ui = 8; ///< WR to first DQ beat

    static std::vector<DeviceSignal> const &signals();
    static int signal_count();
    int dq_width() const { return subchannel_width * subchannels; }
    int line_bits() const { return payload_bits_per_subchannel * subchannels; }
};

struct ClockRatioConfig {
    double dram_gts = 16;
    double link_gts = 32;

    /// Link UI per device UI.
    int ratio() const;
};

/// Throws RatioViolation unless link = k x dram with k in {1, 2, 4}.
void validate_ratio(ClockRatioConfig const &cfg);

/// HBM stack behind the logic die: a slower clock domain with no bank model.
struct HbmClockDomain {
    double stack_gts = 2.0;
    double link_gts = 32.0;

    void validate() const;
    /// Link UI spanned by `stack_ui` stack UI; may be fractional.
    double link_ui(double stack_ui) const { return stack_ui * link_gts / stack_gts; }
};

/// Link UI to return `lines` cache lines through the pass-through path (72 read lanes).
double hbm_passthrough_read_ui(std::uint64_t lines);

// ============================================================================
// Pipelined schedule
// ============================================================================

struct DramRequest {
    bool write = false;
    int device = 0;
    std::uint64_t arrival_clk = 0;
};

/// Device-interleaved xRyW stream: reads and writes each rotate over the devices.
std::vector<DramRequest> interleaved_stream(TrafficMix const &mix, std::uint64_t transactions, int devices = 4);
/// Every request goes to one device.
std::vector<DramRequest> single_device_stream(std::uint64_t reads, int device = 0);

enum class CommandKind : std::uint8_t { Activate, Read, Write };
char to_char(CommandKind k);

struct CommandBeat {
    std::uint64_t clk;
    int device;
    CommandKind kind;
};

/// Timing of one request, in link clocks (two link UI each).
struct ScheduledAccess {
    DramRequest req;
    std::uint64_t act_clk = 0;
    std::uint64_t cmd_clk = 0;
    std::uint64_t burst_start = 0; ///< device DQ, contiguous
    std::uint64_t burst_end = 0;
    std::uint64_t slot_start = 0;  ///< link data lanes
    std::uint64_t slot_end = 0;
};

struct PipelineSchedule {
    ClockRatioConfig clocks;
    Lpddr6DeviceModel device;
    int devices = 4;
    std::vector<ScheduledAccess> accesses;
    std::vector<CommandBeat> commands;

    std::uint64_t end_clk() const;
    /// Throws ScheduleConflict on any shared-resource or spacing violation.
    void verify() const;
    /// Busy fraction of the read-data lanes over [from, to).
    double read_lane_occupancy(std::uint64_t from_clk, std::uint64_t to_clk) const;
    std::string render(std::uint64_t from_clk, std::uint64_t to_clk) const;
};

struct ScheduleOptions {
    ClockRatioConfig clocks{};
    Lpddr6DeviceModel device{};
    int devices = 4;
};

/// Link clocks a 576-bit line spends on the 36 read lanes and on the 24 write lanes.
inline constexpr std::uint64_t kReadSlotClk = 8;
inline constexpr std::uint64_t kWriteSlotClk = 12;

PipelineSchedule schedule_stream(std::vector<DramRequest> const &requests, ScheduleOptions const &opts = {});

struct BridgeMetrics {
    MetricsResult metrics;
    bool degenerate = false; ///< nothing was scheduled
};

/// Link-side bandwidth efficiency over the 74-lane module for the schedule's active span.
BridgeMetrics bridge_metrics(PipelineSchedule const &schedule, LinkVariant const &link);

} // namespace ucie_mem
