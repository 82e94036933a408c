// One line per acceptance criterion; exit status is the number of failures.
#include "ucie_mem/analytic.hpp"
#include "ucie_mem/dram_backend.hpp"
#include "ucie_mem/flit_codec.hpp"
#include "ucie_mem/link_sim.hpp"
#include "ucie_mem/report.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include <fmt/format.h>

using namespace ucie_mem;

namespace {

struct Check {
    bool ok = true;
    std::string why;

    void expect(bool cond, std::string const &what) {
        if (!cond && ok) why = what;
        ok = ok && cond;
    }
    void near(double got, double want, double tol, std::string const &what) {
        expect(std::abs(got - want) <= tol, fmt::format("{}: {:.9g} vs {:.9g}", what, got, want));
    }
};

// Slot counts in sixtieths, walked message by message.
struct Sixtieths {
    long s2m = 0, m2s = 0;
};

Sixtieths unopt_units(long x, long y) {
    Sixtieths u;
    u.s2m = 60 * x + 300 * y; // read request; write request + 4 data slots
    u.m2s = 270 * x + 30 * y; // data + half a response slot; half a completion slot
    return u;
}

Sixtieths opt_units(long x, long y) {
    auto dir = [](long lines, long headers, long per_hs) {
        long const data = 240 * lines;   // 4 G-slots per line
        long const hs = data / 15;       // one HS-slot per 15 data G-slots
        long const left = std::max(60 * headers - hs * per_hs, 0L);
        return data + hs + left / per_hs;
    };
    return {dir(y, x + y, 1), dir(x, x + y, 4)};
}

Check formulas() {
    Check c;
    double const tol = 1e-9;
    c.near(lpddr6_bw_eff(TrafficMix(1, 0)), 32.0 / 74, tol, "lpddr6 1R0W");
    c.near(lpddr6_bw_eff(TrafficMix(1, 1)), 64.0 / 111, tol, "lpddr6 1R1W");
    c.near(lpddr6_bw_eff(TrafficMix(3, 2)), 160.0 / 222, tol, "lpddr6 3R2W");
    auto const link = preset_link("ucie-a-55");
    c.near(cxl_unopt_metrics(TrafficMix(1, 1), link).bw_eff, 0.625, tol, "cxl-unopt 1R1W");
    c.near(cxl_unopt_metrics(TrafficMix(1, 0), link).bw_eff, 5.0 / 12, tol, "cxl-unopt 1R0W");
    c.near(cxl_opt_metrics(TrafficMix(1, 1), link).bw_eff, 2.0 / 3, tol, "cxl-opt 1R1W");
    c.near(cxl_opt_metrics(TrafficMix(0, 1), link).bw_eff, 0.4, tol, "cxl-opt 0R1W");
    for (auto const &m : nine_mix_grid()) {
        auto const x = std::lround(m.reads()), y = std::lround(m.writes());
        auto const u = unopt_units(x, y);
        auto const un = cxl_unopt_slots(m);
        c.near(un.s2m, u.s2m / 60.0, tol, "unopt S2M slots " + m.label());
        c.near(un.m2s, u.m2s / 60.0, tol, "unopt M2S slots " + m.label());
        c.near(un.max, std::max(u.s2m, u.m2s) / 60.0, tol, "unopt max slots " + m.label());
        auto const o = opt_units(x, y);
        auto const op = cxl_opt_slots(m);
        c.near(op.s2m, o.s2m / 60.0, tol, "opt S2M slots " + m.label());
        c.near(op.m2s, o.m2s / 60.0, tol, "opt M2S slots " + m.label());
        c.near(op.max, std::max(o.s2m, o.m2s) / 60.0, tol, "opt max slots " + m.label());
    }
    return c;
}

Check constants() {
    Check c;
    auto eq = [&](double got, double want, std::string const &what) { c.near(got, want, 1e-12, what); };
    eq(baseline_lpddr6().shoreline_density, 35.3, "LPDDR6 GB/s/mm");
    eq(baseline_lpddr6().areal_density, 20.2, "LPDDR6 GB/s/mm2");
    eq(baseline_lpddr6().power_eff, 2.8, "LPDDR6 pJ/b");
    eq(baseline_hbm4().shoreline_density, 204.8, "HBM4 GB/s/mm");
    eq(baseline_hbm4().areal_density, 81.9, "HBM4 GB/s/mm2");
    eq(baseline_hbm4().power_eff, 0.9, "HBM4 pJ/b");
    auto const s = preset_link("ucie-s-110");
    eq(s.shoreline_density, 224, "UCIe-S GB/s/mm");
    eq(s.areal_density, 145.44, "UCIe-S GB/s/mm2");
    auto const a = preset_link("ucie-a-55");
    eq(a.shoreline_density, 658.44, "UCIe-A GB/s/mm");
    eq(a.areal_density, 416.27, "UCIe-A GB/s/mm2");
    eq(s.idle_fraction, 0.15, "idle fraction");
    eq(a.idle_fraction, 0.15, "idle fraction");
    return c;
}

Check orderings() {
    Check c;
    auto const f = build_figures();
    for (auto const &v : f.verdicts) {
        if (v.asserted) c.expect(v.pass, v.claim + ": " + v.detail);
    }
    auto const link = preset_link("ucie-a-55");
    double const gain = cxl_opt_metrics(TrafficMix(1, 1), link).bw_eff / cxl_unopt_metrics(TrafficMix(1, 1), link).bw_eff;
    c.near(gain - 1, 1.0 / 15, 1e-9, "cxl-opt gain at 1R1W");
    return c;
}

Check convergence(double &seconds) {
    Check c;
    auto const t0 = std::chrono::steady_clock::now();
    SweepSpec s;
    s.approaches = all_approaches();
    s.links = {preset_link("ucie-a-55")};
    s.mixes = nine_mix_grid();
    s.mode = SweepMode::Simulate;
    s.duration_ui = 500'000;
    s.seed = 1;
    auto const rows = sweep(s);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(rows.size() == 63, fmt::format("{} rows, expected 63", rows.size()));
    double worst = 0;
    for (auto const &r : rows) {
        auto const a = analytic_row(parse_approach(r.approach), s.links[0], TrafficMix(r.reads, r.writes));
        double const db = std::abs(r.bw_eff - a.bw_eff) / a.bw_eff;
        double const dp = std::abs(r.p_data - a.p_data) / a.p_data;
        worst = std::max({worst, db, dp});
        c.expect(db <= 0.01 && dp <= 0.01,
                 fmt::format("{} {}R{}W: bw {:.4f}/{:.4f} p {:.4f}/{:.4f}", r.approach, r.reads, r.writes, r.bw_eff,
                             a.bw_eff, r.p_data, a.p_data));
        c.expect(r.sim && r.sim->generated == r.sim->delivered, r.approach + " lost transactions");
    }
    c.expect(seconds < 300, fmt::format("took {:.1f} s", seconds));
    if (c.ok) c.why = fmt::format("worst relative gap {:.3f}%", 100 * worst);
    return c;
}

Check codec() {
    Check c;
    std::mt19937_64 rng(2024);
    constexpr std::array<FlitLayout, 3> layouts{FlitLayout::CxlUnopt, FlitLayout::CxlOpt, FlitLayout::Chi};
    int trips = 0;
    for (; trips < 10'000 && c.ok; ++trips) {
        auto const layout = layouts[trips % 3];
        bool const s2m = trips % 2 == 0;
        std::vector<Message> q(1 + rng() % 10);
        for (auto &m : q) {
            CacheLine line;
            for (auto &b : line) b = static_cast<std::uint8_t>(rng());
            if (s2m) {
                auto const w = request_widths(layout);
                RequestHeader h{static_cast<std::uint8_t>(rng() % 2 ? opcode::kMemWr : opcode::kMemRd),
                                static_cast<std::uint8_t>(rng() % (1U << w.meta)),
                                static_cast<std::uint16_t>(rng() % (1U << w.tag)), rng() % (1ULL << 46), false};
                m = make_request(h, h.carries_data() ? std::optional(line) : std::nullopt);
            } else {
                auto const w = response_widths(layout);
                ResponseHeader h{static_cast<std::uint8_t>(rng() % 2 ? opcode::kMemData : opcode::kCmp),
                                 static_cast<std::uint8_t>(rng() % (1U << w.meta)),
                                 static_cast<std::uint8_t>(w.devload ? rng() % (1U << w.devload) : 0),
                                 static_cast<std::uint16_t>(rng() % (1U << w.tag)), rng() % 2 == 0};
                m = make_response(h, h.carries_data() ? std::optional(line) : std::nullopt);
            }
        }
        auto const dir = s2m ? Direction::S2M : Direction::M2S;
        c.expect(unpack_flits(pack_flits(q, layout, dir), layout, dir) == q,
                 fmt::format("round trip {} lost messages", trips));
    }

    for (auto layout : layouts) {
        Flit f;
        f.layout = layout;
        for (auto &b : f.bytes) b = static_cast<std::uint8_t>(rng());
        seal(f);
        for (int bit = 0; bit < 8 * static_cast<int>(kFlitBytes); ++bit) {
            auto g = f;
            g.bytes[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
            c.expect(failed_regions(g).size() == 1, fmt::format("{} bit {} undetected", to_string(layout), bit));
        }
    }

    auto count = [](FlitLayout l) {
        std::map<ByteRole, int> n;
        for (auto r : byte_roles(l)) ++n[r];
        return n;
    };
    auto u = count(FlitLayout::CxlUnopt), o = count(FlitLayout::CxlOpt), h = count(FlitLayout::Chi);
    c.expect(u[ByteRole::FlitHdr] == 2 && u[ByteRole::HeaderSlot] == 14 && u[ByteRole::GSlot] == 224 &&
                 u[ByteRole::Reserved] == 10 && u[ByteRole::Credit] == 2 && u[ByteRole::Crc0] == 2 &&
                 u[ByteRole::Crc1] == 2,
             "unoptimized byte roles");
    c.expect(o[ByteRole::GSlot] == 240 && o[ByteRole::HeaderSlot] == 10 && o[ByteRole::FlitHdr] == 2 &&
                 o[ByteRole::Credit] == 2 && o[ByteRole::Crc] == 2,
             "optimized byte roles");
    c.expect(h[ByteRole::Granule] == 240 && h[ByteRole::LinkHdr] + h[ByteRole::ProtHdr] == 16, "CHI byte roles");
    if (c.ok) c.why = fmt::format("{} round trips, 3x2048 flips", trips);
    return c;
}

Check pipeline() {
    Check c;
    auto const s = schedule_stream(interleaved_stream(TrafficMix(1, 0), 400));
    try {
        s.verify();
    } catch (ScheduleConflict const &e) {
        c.expect(false, e.what());
    }
    double const occ = s.read_lane_occupancy(400, s.end_clk() - 64);
    c.expect(occ >= 0.99, fmt::format("occupancy {:.4f}", occ));
    auto const link = preset_link("ucie-s-110");
    double const bw = bridge_metrics(s, link).metrics.bw_eff;
    c.expect(std::abs(bw / lpddr6_bw_eff(TrafficMix(1, 0)) - 1) <= 0.02, fmt::format("bridge bw_eff {:.4f}", bw));
    auto const one = schedule_stream(single_device_stream(400));
    double const ratio = bridge_metrics(one, link).metrics.bw_eff / bw;
    c.expect(std::abs(ratio - 0.25) <= 0.005, fmt::format("single device at {:.4f} of four", ratio));
    if (c.ok) c.why = fmt::format("occupancy {:.4f}, bw_eff {:.4f}, one device {:.4f}", occ, bw, ratio);
    return c;
}

Check retry() {
    Check c;
    SimConfig cfg;
    cfg.approach = ApproachId::CxlOpt;
    cfg.mix = TrafficMix(1, 1);
    cfg.error_rate = 0.01;
    cfg.seed = 11;
    cfg.duration_ui = 100'000 * static_cast<std::uint64_t>(flit_serialization_ui(cfg.link.lanes_per_direction));
    auto const m = inject_and_recover(cfg);
    auto const flits = m.flits_sent[0] + m.flits_sent[1];
    c.expect(flits >= 100'000, fmt::format("only {} flits", flits));
    c.expect(m.retried_flits > 0, "no retries happened");
    c.expect(m.exactly_once, "delivered stream differs from generated stream");
    c.expect(m.delivered_reads == m.generated_reads && m.delivered_writes == m.generated_writes, "counts differ");
    if (c.ok) {
        c.why = fmt::format("{} flits, {} CRC errors, {} retried, {} transactions", flits, m.crc_errors,
                            m.retried_flits, m.generated_reads + m.generated_writes);
    }
    return c;
}

Check latency() {
    Check c;
    SimConfig cfg;
    cfg.approach = ApproachId::CxlOpt;
    cfg.mix = TrafficMix(1, 0);
    cfg.duration_ui = 10'000;
    cfg.transaction_limit = 1;
    auto const h = latency_report(cfg);
    double const ser = 2 * flit_serialization_ui(cfg.link.lanes_per_direction) * cfg.link.ui_ns();
    c.near(h.fixed_ns, 3.0, 1e-12, "protocol round trip");
    c.near(h.min_ns, 3.0 + ser, 1e-9, "zero-load read");
    for (auto [id, ns] : {std::pair{ApproachId::BaselineLpddr6, 7.5}, std::pair{ApproachId::BaselineHbm4, 6.0}}) {
        cfg.approach = id;
        c.near(latency_report(cfg).min_ns, ns, 1e-12, std::string(to_string(id)));
    }
    LatencyModel const lat;
    c.expect(lat.baseline_lpddr_ns / lat.protocol_roundtrip_ns >= 2.0, "UCIe not 2x below LPDDR5");
    if (c.ok) c.why = fmt::format("zero-load {:.3f} ns = 3 + {:.3f}; LPDDR5 7.5 ns; HBM 6 ns", h.min_ns, ser);
    return c;
}

} // namespace

int main() {
    double sim_seconds = 0;
    std::vector<std::pair<std::string, std::function<Check()>>> const criteria{
        {"formula fidelity", formulas},
        {"published constants", constants},
        {"ordering claims", orderings},
        {"simulator matches analytic model", [&] { return convergence(sim_seconds); }},
        {"flit codec properties", codec},
        {"DRAM read pipeline", pipeline},
        {"retry delivers exactly once", retry},
        {"latency constants", latency},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        try {
            c = criteria[i].second();
        } catch (std::exception const &e) {
            c.ok = false;
            c.why = e.what();
        }
        failures += c.ok ? 0 : 1;
        fmt::print("{} {} {}{}\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, c.why.empty() ? "" : " (" + c.why + ")");
    }
    return failures;
}
