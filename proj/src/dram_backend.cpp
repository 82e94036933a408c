#include "ucie_mem/dram_backend.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace ucie_mem {

std::vector<DeviceSignal> const &Lpddr6DeviceModel::signals() {
    static std::vector<DeviceSignal> const list{
        {"CA", 8, 0.5}, {"CS", 2, 0.5}, {"WCK", 4, 0.5}, {"RDQS", 4, 0.5}, {"CK", 4, 0.25}, {"DQ", 24, 1.0},
    };
    return list;
}

int Lpddr6DeviceModel::signal_count() {
    int n = 0;
    for (auto const &s : signals()) n += s.count;
    return n;
}

int ClockRatioConfig::ratio() const {
    validate_ratio(*this);
    return static_cast<int>(std::lround(link_gts / dram_gts));
}

void validate_ratio(ClockRatioConfig const &cfg) {
    if (!(cfg.dram_gts > 0) || !(cfg.link_gts > 0)) throw RatioViolation("clock rates must be positive");
    double const k = cfg.link_gts / cfg.dram_gts;
    for (int allowed : {1, 2, 4}) {
        if (std::abs(k - allowed) < 1e-9) return;
    }
    throw RatioViolation(fmt::format("link {} GT/s over DRAM {} GT/s is a {:.4g}x ratio; need 1x, 2x or 4x",
                                     cfg.link_gts, cfg.dram_gts, k));
}

void HbmClockDomain::validate() const {
    if (stack_gts < 1.0 || stack_gts > 2.0) throw RatioViolation(fmt::format("HBM stack rate {} GT/s outside 1-2", stack_gts));
    if (link_gts < stack_gts) throw RatioViolation("link must run at least as fast as the HBM stack");
}

double hbm_passthrough_read_ui(std::uint64_t lines) { return 8.0 * static_cast<double>(lines); }

char to_char(CommandKind k) {
    switch (k) {
    case CommandKind::Activate: return 'A';
    case CommandKind::Read: return 'R';
    case CommandKind::Write: return 'W';
    }
    return '?';
}

std::vector<DramRequest> interleaved_stream(TrafficMix const &mix, std::uint64_t transactions, int devices) {
    auto const x = static_cast<std::uint64_t>(std::llround(mix.reads()));
    auto const y = static_cast<std::uint64_t>(std::llround(mix.writes()));
    if (x + y == 0 || std::abs(mix.reads() - x) > 1e-9 || std::abs(mix.writes() - y) > 1e-9) {
        throw InvalidMix(fmt::format("schedule needs whole counts, got {}", mix.label()));
    }
    std::vector<DramRequest> out;
    out.reserve(transactions);
    std::uint64_t reads = 0, writes = 0;
    while (out.size() < transactions) {
        for (std::uint64_t i = 0; i < x + y && out.size() < transactions; ++i) {
            bool const w = i >= x;
            auto &n = w ? writes : reads;
            out.push_back({w, static_cast<int>(n++ % devices), 0});
        }
    }
    return out;
}

std::vector<DramRequest> single_device_stream(std::uint64_t reads, int device) {
    return std::vector<DramRequest>(reads, DramRequest{false, device, 0});
}

// ============================================================================
// Scheduler
// ============================================================================

namespace {

/// Busy intervals on one device's DQ bus.
class IntervalSet {
  public:
    std::uint64_t earliest_fit(std::uint64_t from, std::uint64_t len) const {
        std::uint64_t t = from;
        for (auto it = busy_.upper_bound(from); it != busy_.begin();) {
            --it;
            if (it->second > t) t = it->second;
            break;
        }
        for (auto it = busy_.lower_bound(t); it != busy_.end(); ++it) {
            if (t + len <= it->first) break;
            t = std::max(t, it->second);
        }
        return t;
    }
    void insert(std::uint64_t start, std::uint64_t len) { busy_[start] = start + len; }

  private:
    std::map<std::uint64_t, std::uint64_t> busy_;
};

struct DeviceState {
    std::vector<bool> cmd_used; ///< indexed by clk / devices
    IntervalSet dq;
    std::uint64_t next_read_slot = 0;
    std::uint64_t next_write_slot = 0;
    std::uint64_t last_read_burst = 0;
    std::uint64_t last_read_slot = 0;
};

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

} // namespace

PipelineSchedule schedule_stream(std::vector<DramRequest> const &requests, ScheduleOptions const &opts) {
    validate_ratio(opts.clocks);
    if (opts.devices <= 0) throw Error("need at least one device");
    auto const D = static_cast<std::uint64_t>(opts.devices);
    int const k = opts.clocks.ratio();
    // One link clock carries two link UI; one device UI spans k link UI.
    auto dev_clk = [k](std::uint64_t dev_ui) { return ceil_div(dev_ui * k, 2); };
    std::uint64_t const burst_clk = dev_clk(opts.device.burst_length);
    std::uint64_t const spacing = dev_clk(opts.device.act_to_cmd_dev_ui);
    std::uint64_t const rl = dev_clk(opts.device.read_latency_dev_ui);
    std::uint64_t const wl = dev_clk(opts.device.write_latency_dev_ui);

    PipelineSchedule s;
    s.clocks = opts.clocks;
    s.device = opts.device;
    s.devices = opts.devices;
    std::vector<DeviceState> dev(D);

    // Command beats: device d owns link clocks with clk % D == d.
    auto take_cmd = [&](int d, std::uint64_t from, CommandKind kind) {
        auto &st = dev[d];
        std::uint64_t idx = from <= static_cast<std::uint64_t>(d) ? 0 : ceil_div(from - d, D);
        while (idx < st.cmd_used.size() && st.cmd_used[idx]) ++idx;
        if (idx >= st.cmd_used.size()) st.cmd_used.resize(idx + 1, false);
        st.cmd_used[idx] = true;
        std::uint64_t const clk = idx * D + d;
        s.commands.push_back({clk, d, kind});
        return clk;
    };
    // Data slots: slot index i belongs to device i % D.
    auto owned_slot = [&](int d, std::uint64_t min_index) {
        std::uint64_t i = min_index;
        while (i % D != static_cast<std::uint64_t>(d)) ++i;
        return i;
    };

    for (auto const &req : requests) {
        if (req.device < 0 || static_cast<std::uint64_t>(req.device) >= D) {
            throw Error(fmt::format("request targets device {} of {}", req.device, D));
        }
        auto &st = dev[req.device];
        ScheduledAccess a;
        a.req = req;
        if (!req.write) {
            // The next activate overlaps the previous burst; the logic die holds one line per device.
            a.act_clk = take_cmd(req.device, std::max(req.arrival_clk, st.last_read_burst), CommandKind::Activate);
            a.cmd_clk = take_cmd(req.device, a.act_clk + spacing, CommandKind::Read);
            a.burst_start = st.dq.earliest_fit(std::max(a.cmd_clk + 1 + rl, st.last_read_slot), burst_clk);
            a.burst_end = a.burst_start + burst_clk;
            st.dq.insert(a.burst_start, burst_clk);
            auto const slot = owned_slot(req.device, std::max(st.next_read_slot, ceil_div(a.burst_end, kReadSlotClk)));
            st.next_read_slot = slot + 1;
            a.slot_start = slot * kReadSlotClk;
            a.slot_end = a.slot_start + kReadSlotClk;
            st.last_read_burst = a.burst_start;
            st.last_read_slot = a.slot_start;
        } else {
            auto const slot =
                owned_slot(req.device, std::max(st.next_write_slot, ceil_div(req.arrival_clk, kWriteSlotClk)));
            st.next_write_slot = slot + 1;
            a.slot_start = slot * kWriteSlotClk;
            a.slot_end = a.slot_start + kWriteSlotClk;
            a.act_clk = take_cmd(req.device, req.arrival_clk, CommandKind::Activate);
            a.cmd_clk = take_cmd(req.device, a.act_clk + spacing, CommandKind::Write);
            a.burst_start = st.dq.earliest_fit(std::max(a.cmd_clk + 1 + wl, a.slot_end), burst_clk);
            a.burst_end = a.burst_start + burst_clk;
            st.dq.insert(a.burst_start, burst_clk);
        }
        s.accesses.push_back(a);
    }
    std::sort(s.commands.begin(), s.commands.end(), [](auto const &l, auto const &r) { return l.clk < r.clk; });
    return s;
}

std::uint64_t PipelineSchedule::end_clk() const {
    std::uint64_t e = 0;
    for (auto const &a : accesses) e = std::max({e, a.slot_end, a.burst_end});
    return e;
}

void PipelineSchedule::verify() const {
    int const k = clocks.ratio();
    auto dev_clk = [k](std::uint64_t dev_ui) { return (dev_ui * k + 1) / 2; };
    std::uint64_t const burst_clk = dev_clk(device.burst_length);
    auto const D = static_cast<std::uint64_t>(devices);

    for (std::size_t i = 0; i < commands.size(); ++i) {
        auto const &c = commands[i];
        if (c.clk % D != static_cast<std::uint64_t>(c.device)) {
            throw ScheduleConflict(fmt::format("device {} drove a command beat in clock {} it does not own", c.device, c.clk));
        }
        if (i > 0 && commands[i - 1].clk == c.clk) throw ScheduleConflict(fmt::format("two commands in clock {}", c.clk));
    }

    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> dq(D);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> rd_slots, wr_slots;
    std::vector<ScheduledAccess const *> last_read(D, nullptr);
    for (auto const &a : accesses) {
        auto const d = static_cast<std::size_t>(a.req.device);
        auto const lat = dev_clk(a.req.write ? device.write_latency_dev_ui : device.read_latency_dev_ui);
        if (a.cmd_clk < a.act_clk + dev_clk(device.act_to_cmd_dev_ui)) {
            throw ScheduleConflict(fmt::format("device {} command at clock {} violates activate spacing", d, a.cmd_clk));
        }
        if (a.burst_start < a.cmd_clk + 1 + lat || a.burst_end - a.burst_start != burst_clk) {
            throw ScheduleConflict(fmt::format("device {} burst at clock {} breaks BL{} timing", d, a.burst_start,
                                               device.burst_length));
        }
        if (a.req.write ? a.burst_start < a.slot_end : a.slot_start < a.burst_end) {
            throw ScheduleConflict(fmt::format("device {} line forwarded before it was buffered", d));
        }
        if (!a.req.write) {
            if (last_read[d] && a.burst_start < last_read[d]->slot_start) {
                throw ScheduleConflict(fmt::format("device {} overran its line buffer", d));
            }
            last_read[d] = &a;
        }
        dq[d].push_back({a.burst_start, a.burst_end});
        (a.req.write ? wr_slots : rd_slots).push_back({a.slot_start, a.slot_end});
    }
    auto check_disjoint = [](auto v, std::string const &what) {
        std::sort(v.begin(), v.end());
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i].first < v[i - 1].second) throw ScheduleConflict(fmt::format("{} overlap at clock {}", what, v[i].first));
        }
    };
    for (std::size_t d = 0; d < D; ++d) check_disjoint(dq[d], fmt::format("device {} DQ bursts", d));
    check_disjoint(rd_slots, "read-data slots");
    check_disjoint(wr_slots, "write-data slots");
}

double PipelineSchedule::read_lane_occupancy(std::uint64_t from, std::uint64_t to) const {
    if (to <= from) return 0.0;
    std::uint64_t busy = 0;
    for (auto const &a : accesses) {
        if (a.req.write) continue;
        auto const lo = std::max(from, a.slot_start), hi = std::min(to, a.slot_end);
        if (hi > lo) busy += hi - lo;
    }
    return static_cast<double>(busy) / static_cast<double>(to - from);
}

std::string PipelineSchedule::render(std::uint64_t from, std::uint64_t to) const {
    auto const width = static_cast<std::size_t>(to > from ? to - from : 0);
    auto row = [&] { return std::string(width, '.'); };
    auto put = [&](std::string &r, std::uint64_t clk, char c) {
        if (clk >= from && clk < to) r[clk - from] = c;
    };
    auto digit = [](int d) { return static_cast<char>('0' + d % 10); };

    std::string ruler(width, ' ');
    for (std::uint64_t c = from; c < to; ++c) {
        if (c % 8 == 0) ruler[c - from] = '|';
    }
    std::string cmd_dev = row(), cmd_kind = row(), rdata = row(), wdata = row();
    std::vector<std::string> dq(static_cast<std::size_t>(devices), row());
    for (auto const &c : commands) {
        put(cmd_dev, c.clk, digit(c.device));
        put(cmd_kind, c.clk, to_char(c.kind));
    }
    for (auto const &a : accesses) {
        for (auto c = a.burst_start; c < a.burst_end; ++c) put(dq[a.req.device], c, a.req.write ? 'w' : 'r');
        auto &lanes = a.req.write ? wdata : rdata;
        for (auto c = a.slot_start; c < a.slot_end; ++c) put(lanes, c, digit(a.req.device));
    }

    std::string out = fmt::format("{:<7}{}\n", "clk", ruler);
    out += fmt::format("{:<7}{}\n", "CMD", cmd_dev);
    out += fmt::format("{:<7}{}\n", "KIND", cmd_kind);
    for (int d = 0; d < devices; ++d) out += fmt::format("{:<7}{}\n", fmt::format("DQ{}", d), dq[d]);
    out += fmt::format("{:<7}{}\n", "RDATA", rdata);
    out += fmt::format("{:<7}{}\n", "WDATA", wdata);
    return out;
}

BridgeMetrics bridge_metrics(PipelineSchedule const &schedule, LinkVariant const &link) {
    BridgeMetrics b;
    b.metrics.approach = ApproachId::Lpddr6Asym;
    if (schedule.accesses.empty()) {
        b.degenerate = true;
        return b;
    }
    std::uint64_t lo = schedule.accesses.front().slot_start, hi = 0;
    for (auto const &a : schedule.accesses) {
        lo = std::min(lo, a.slot_start);
        hi = std::max(hi, a.slot_end);
    }
    // Two link UI per clock across the 74 countable lanes.
    double const ui = 2.0 * static_cast<double>(hi - lo);
    double const bits = 512.0 * static_cast<double>(schedule.accesses.size());
    auto const lanes = make_approach(ApproachId::Lpddr6Asym).countable_lanes();
    b.metrics.bw_eff = bits / (lanes * ui);
    b.metrics.bw_density_linear = b.metrics.bw_eff * link.shoreline_density;
    b.metrics.bw_density_areal = b.metrics.bw_eff * link.areal_density;
    return b;
}

} // namespace ucie_mem
