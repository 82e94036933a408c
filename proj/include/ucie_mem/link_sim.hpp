#pragma once

#include "ucie_mem/analytic.hpp"
#include "ucie_mem/core_model.hpp"
#include "ucie_mem/flit_codec.hpp"

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ucie_mem {

struct SimConfig {
    ApproachId approach = ApproachId::CxlOpt;
    LinkVariant link = preset_link("ucie-a-55");
    TrafficMix mix{1, 1};
    std::uint64_t duration_ui = 1'000'000; ///< measurement window
    std::uint64_t seed = 1;
    double error_rate = 0.0;               ///< per-flit corruption probability
    bool gating = true;
    std::uint32_t gate_latency_ui = 0;

    /// Stop generating after this many transactions (zero-load and exactly-once runs).
    std::optional<std::uint64_t> transaction_limit;
    /// S2M sequence numbers whose first transmission is corrupted.
    std::vector<std::uint64_t> forced_error_sequences;

    std::uint32_t outstanding_limit = 256; ///< transactions in flight
    std::uint32_t replay_window = 64;      ///< unacknowledged flits
    std::uint32_t ack_every = 4;
    std::uint32_t feedback_delay_flits = 2;
    /// A partly filled flit is sent once its oldest content has waited this many flit times.
    std::uint32_t flush_after_flits = 32;

    EvaluateOptions model{};
    LatencyModel latency{};
    std::ostream *trace = nullptr;

    void validate() const;
};

struct GroupActivity {
    std::string name;
    Direction direction;
    int lanes = 0;
    double active_lane_ui = 0; ///< lane-UI at full power
    double idle_lane_ui = 0;   ///< lane-UI at the idle fraction

    double weighted(double p) const { return active_lane_ui + idle_lane_ui * p; }
};

struct LatencyHistogram {
    double bin_ns = 0.25;
    std::vector<std::uint64_t> counts;
    std::uint64_t samples = 0;
    double min_ns = 0;
    double max_ns = 0;
    double mean_ns = 0;
    double fixed_ns = 0;              ///< constant round trip included in every sample
    double min_serialization_ns = 0;  ///< smallest sample minus the constant

    void add(double ns);
};

struct SimMetrics {
    std::uint64_t elapsed_ui = 0;       ///< measurement window
    std::uint64_t drained_ui = 0;       ///< time at which the last transaction completed
    std::uint64_t generated_reads = 0;
    std::uint64_t generated_writes = 0;
    std::uint64_t delivered_reads = 0;  ///< cache lines returned M2S
    std::uint64_t delivered_writes = 0; ///< cache lines written S2M
    double window_data_bits = 0;
    double bw_eff = 0;
    double p_data = 0;
    double idle_fraction = 1.0;         ///< weight applied to idle lane-UI
    std::vector<GroupActivity> groups;

    std::uint64_t flits_sent[2] = {0, 0};
    std::uint64_t retried_flits = 0;
    std::uint64_t naks = 0;
    std::uint64_t crc_errors = 0;
    /// Delivered messages match generated ones, in order, per direction.
    bool exactly_once = true;
    bool converged = true;
    LatencyHistogram latency;

    double generated_bits() const { return 512.0 * static_cast<double>(generated_reads + generated_writes); }
    double delivered_bits() const { return 512.0 * static_cast<double>(delivered_reads + delivered_writes); }
    friend bool operator==(SimMetrics const &a, SimMetrics const &b);
};

/// Runs the link under open-loop xRyW traffic. Deterministic for a given config.
SimMetrics run(SimConfig const &config);
/// run() with per-flit error injection; requires a flit-based approach and an error rate below 0.1.
SimMetrics inject_and_recover(SimConfig const &config);
/// Per-transaction latency: fixed round trip plus measured serialization.
LatencyHistogram latency_report(SimConfig const &config);

/// Whether the analytic model of an approach applies the idle fraction.
bool supports_gating(ApproachId id);
/// Serialization time of one 256B flit on `lanes` lanes, in UI.
double flit_serialization_ui(int lanes);

// ============================================================================
// Replay buffer
// ============================================================================

/// Go-back-N retry buffer: flits stay until acknowledged; a NAK rewinds
/// transmission to the failed sequence number.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t window) : window_(window) {}

    bool full() const { return entries_.size() >= window_; }
    bool replaying() const { return cursor_ < entries_.size(); }
    std::size_t size() const { return entries_.size(); }

    void push(std::uint64_t seq, Flit const &f);
    /// Next flit to resend; advances the replay cursor.
    std::pair<std::uint64_t, Flit const *> next_replay();
    /// Releases every flit with sequence <= seq.
    void ack(std::uint64_t seq);
    /// Rewinds so that `seq` is retransmitted next. Earlier flits are released.
    void nak(std::uint64_t seq);
    /// Timeout path: resend everything still held.
    void rewind() { cursor_ = 0; }

  private:
    struct Entry {
        std::uint64_t seq;
        Flit flit;
    };
    std::size_t window_;
    std::deque<Entry> entries_;
    std::size_t cursor_ = 0; ///< index of the next entry to resend; == size when not replaying
};

} // namespace ucie_mem
