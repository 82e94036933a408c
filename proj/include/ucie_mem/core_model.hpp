#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ucie_mem {

// ============================================================================
// Errors
// ============================================================================

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PresetNotFound : Error {
    explicit PresetNotFound(std::string const &name);
};

struct InvalidMix : Error {
    using Error::Error;
};

struct UnknownApproach : Error {
    using Error::Error;
};

struct InvalidTopology : Error {
    using Error::Error;
};

// ============================================================================
// Traffic mix
// ============================================================================

/// x cache-line reads and y cache-line writes (xRyW).
class TrafficMix {
  public:
    TrafficMix(double reads, double writes);

    /// Parses "<x>R<y>W" (case-insensitive R/W, non-negative integers).
    static TrafficMix parse(std::string_view text);

    double reads() const { return reads_; }
    double writes() const { return writes_; }
    double total() const { return reads_ + writes_; }
    /// Useful data bits moved: 512 per 64-byte cache line.
    double data_bits() const { return 512.0 * total(); }
    double read_share() const { return reads_ / total(); }

    TrafficMix scaled(double k) const { return {reads_ * k, writes_ * k}; }
    std::string label() const;

    friend bool operator==(TrafficMix const &, TrafficMix const &) = default;

  private:
    double reads_;
    double writes_;
};

/// The nine-mix grid used by convergence and fidelity checks.
std::vector<TrafficMix> nine_mix_grid();
/// Read-heavy to write-heavy grid used for figure tables.
std::vector<TrafficMix> figure_mix_grid();

// ============================================================================
// Link variants
// ============================================================================

enum class LinkKind : std::uint8_t { Standard2D, Advanced25D, AsymmetricCustom };

std::string_view to_string(LinkKind k);

/// Peak pJ/b for a UCIe package class at a given data rate.
double peak_power_efficiency(LinkKind kind, double data_rate_gts);

/// Idle fraction of peak power for a gated lane group.
inline constexpr double kIdleFraction = 0.15;

struct LinkVariant {
    std::string name;
    LinkKind kind = LinkKind::Standard2D;
    double data_rate_gts = 32.0;
    double bump_pitch_um = 110.0;
    int lanes_per_direction = 32;     ///< data lanes, both stacked modules included
    double raw_bandwidth_gbps = 256;  ///< 2 dirs x lanes x rate / 8
    double density_basis_gbps = 256;  ///< bandwidth the density figures are normalized to
    double die_edge_mm = 1.143;
    double depth_mm = 1.54;
    double shoreline_density = 224;   ///< GB/s/mm
    double areal_density = 145.44;    ///< GB/s/mm^2
    double peak_power_eff = 0.6;      ///< pJ/b
    double idle_fraction = kIdleFraction;
    bool derived = false;             ///< interpolated or back-solved, not a printed value

    double ui_ns() const { return 1.0 / data_rate_gts; }
    double footprint_mm2() const { return die_edge_mm * depth_mm; }
    void validate() const;
};

/// Looks up a named preset. Throws PresetNotFound.
LinkVariant preset_link(std::string_view name);
std::vector<std::string> preset_names();

/// Preset registry in the CLI's ini config format ([link.<name>] sections).
void write_presets(std::ostream &os, std::vector<LinkVariant> const &links);
std::vector<LinkVariant> read_presets(std::istream &is);

// ============================================================================
// Baseline memories
// ============================================================================

struct BaselineMemory {
    std::string name;
    double shoreline_density; ///< GB/s/mm
    double areal_density;     ///< GB/s/mm^2
    double power_eff;         ///< pJ/b
    double latency_ns;        ///< measured round trip of the predecessor generation
};

BaselineMemory const &baseline_lpddr5();
BaselineMemory const &baseline_lpddr6();
BaselineMemory const &baseline_hbm4();

// ============================================================================
// Approaches and lane topology
// ============================================================================

enum class ApproachId : std::uint8_t {
    Lpddr6Asym,
    HbmAsym,
    ChiSym,
    CxlUnopt,
    CxlOpt,
    BaselineLpddr6,
    BaselineHbm4,
};

std::string_view to_string(ApproachId id);
ApproachId parse_approach(std::string_view text);
std::vector<ApproachId> all_approaches();
std::vector<std::string> approach_names();

bool is_baseline(ApproachId id);
bool is_asymmetric(ApproachId id);
bool is_symmetric(ApproachId id);

enum class Direction : std::uint8_t { S2M, M2S };
std::string_view to_string(Direction d);

enum class LaneRole : std::uint8_t { Data, WriteMask, Command, Crc, ClockTrackValid };

struct LaneGroup {
    std::string name;
    Direction direction;
    int lane_count;
    LaneRole role;

    bool counts_for_power() const { return role != LaneRole::ClockTrackValid; }
};

/// Slot geometry of the flit-based symmetric mappings.
struct SlotGeometry {
    double usable_fraction;    ///< usable slot positions / total positions per flit
    int request_capacity;      ///< requests per header-capable slot
    int response_capacity;     ///< responses per header-capable slot
};

struct ApproachSpec {
    ApproachId id;
    std::vector<LaneGroup> lane_groups; ///< asymmetric approaches only
    SlotGeometry slots{};               ///< symmetric approaches only
    double read_write_lane_ratio = 1.0;

    /// Lanes that carry data, mask, command or CRC.
    int countable_lanes() const;
    int countable_lanes(Direction d) const;
    int lanes(Direction d, LaneRole role) const;
};

/// Builds an approach, validating lane totals (74 / 138 for the asymmetric maps).
ApproachSpec make_approach(ApproachId id);
/// Rejects asymmetric topologies whose countable lanes deviate from the mapping.
void validate_topology(ApproachSpec const &spec);

// ============================================================================
// Latency
// ============================================================================

struct LatencyModel {
    double phy_roundtrip_ns = 1.0;
    double adapter_roundtrip_ns = 2.0;  ///< bump to FDI and back
    double protocol_roundtrip_ns = 3.0; ///< from the memory protocol layer
    double baseline_lpddr_ns = 7.5;
    double baseline_hbm_ns = 6.0;

    /// Fixed round trip charged to an approach, excluding serialization.
    double fixed_roundtrip_ns(ApproachId id) const;
};

} // namespace ucie_mem
