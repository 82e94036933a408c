#include "ucie_mem/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace ucie_mem {

PresetNotFound::PresetNotFound(std::string const &name)
    : Error(fmt::format("preset not found: {} (one of: {})", name, fmt::join(preset_names(), ", "))) {}

// ============================================================================
// TrafficMix
// ============================================================================

TrafficMix::TrafficMix(double reads, double writes) : reads_(reads), writes_(writes) {
    if (!std::isfinite(reads) || !std::isfinite(writes) || reads < 0 || writes < 0) {
        throw InvalidMix("traffic mix counts must be finite and non-negative");
    }
    if (reads + writes <= 0) {
        throw InvalidMix("traffic mix needs at least one read or write");
    }
}

namespace {

bool parse_count(std::string_view s, unsigned long long &out) {
    if (s.empty()) return false;
    auto const *end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

} // namespace

TrafficMix TrafficMix::parse(std::string_view text) {
    auto const r = text.find_first_of("Rr");
    if (r == std::string_view::npos || text.empty() || std::toupper(text.back()) != 'W') {
        throw InvalidMix(fmt::format("bad mix '{}', expected <x>R<y>W", text));
    }
    unsigned long long x = 0, y = 0;
    if (!parse_count(text.substr(0, r), x) || !parse_count(text.substr(r + 1, text.size() - r - 2), y)) {
        throw InvalidMix(fmt::format("bad mix '{}', expected <x>R<y>W", text));
    }
    return {static_cast<double>(x), static_cast<double>(y)};
}

std::string TrafficMix::label() const { return fmt::format("{:g}R{:g}W", reads_, writes_); }

std::vector<TrafficMix> nine_mix_grid() {
    return {{1, 0}, {0, 1}, {1, 1}, {2, 1}, {3, 1}, {3, 2}, {4, 1}, {1, 2}, {1, 3}};
}

std::vector<TrafficMix> figure_mix_grid() {
    return {{1, 0}, {3, 1}, {2, 1}, {1, 1}, {1, 2}, {1, 3}, {0, 1}};
}

// ============================================================================
// Link presets
// ============================================================================

std::string_view to_string(LinkKind k) {
    switch (k) {
    case LinkKind::Standard2D: return "standard-2d";
    case LinkKind::Advanced25D: return "advanced-2.5d";
    case LinkKind::AsymmetricCustom: return "asymmetric-custom";
    }
    return "unknown";
}

namespace {

LinkKind parse_link_kind(std::string_view s) {
    for (auto k : {LinkKind::Standard2D, LinkKind::Advanced25D, LinkKind::AsymmetricCustom}) {
        if (to_string(k) == s) return k;
    }
    throw Error(fmt::format("unknown link kind '{}'", s));
}

} // namespace

double peak_power_efficiency(LinkKind kind, double data_rate_gts) {
    bool const fast = data_rate_gts > 16.0;
    switch (kind) {
    case LinkKind::Standard2D: return fast ? 0.6 : 0.5;
    case LinkKind::Advanced25D: return fast ? 0.3 : 0.25;
    case LinkKind::AsymmetricCustom: break;
    }
    throw Error("no tabulated power efficiency for custom link kinds");
}

void LinkVariant::validate() const {
    if (!(idle_fraction > 0 && idle_fraction < 1)) throw Error(name + ": idle fraction must lie in (0,1)");
    if (!(data_rate_gts > 0)) throw Error(name + ": data rate must be positive");
    if (lanes_per_direction <= 0) throw Error(name + ": lane count must be positive");
    if (!(shoreline_density > 0 && areal_density > 0 && peak_power_eff > 0)) {
        throw Error(name + ": densities and power must be positive");
    }
    if (!(die_edge_mm > 0 && depth_mm > 0)) throw Error(name + ": footprint must be positive");
}

namespace {

LinkVariant make_link(std::string name, LinkKind kind, double rate, double pitch, int lanes, double basis,
                      double edge, double depth, double shoreline, double areal, bool derived) {
    LinkVariant v;
    v.name = std::move(name);
    v.kind = kind;
    v.data_rate_gts = rate;
    v.bump_pitch_um = pitch;
    v.lanes_per_direction = lanes;
    v.raw_bandwidth_gbps = 2.0 * lanes * rate / 8.0;
    v.density_basis_gbps = basis;
    v.die_edge_mm = edge;
    v.depth_mm = depth;
    v.shoreline_density = shoreline;
    v.areal_density = areal;
    v.peak_power_eff = peak_power_efficiency(kind, rate);
    v.derived = derived;
    return v;
}

// UCIe-A die edge is fixed across bump pitches.
constexpr double kAdvancedEdgeMm = 0.3888;
constexpr double kStandardEdgeMm = 1.143;

std::vector<LinkVariant> const &registry() {
    static std::vector<LinkVariant> const links = [] {
        using K = LinkKind;
        std::vector<LinkVariant> v;
        // Doubly-stacked x32 UCIe-S: the default 2D preset.
        v.push_back(make_link("ucie-s-110", K::Standard2D, 32, 110, 32, 256, kStandardEdgeMm, 1.54, 224, 145.44, false));
        v.push_back(make_link("ucie-s-110-single", K::Standard2D, 32, 110, 16, 128, kStandardEdgeMm, 0.77, 112, 145.44,
                              true));
        v.push_back(make_link("ucie-a-55", K::Advanced25D, 32, 55, 64, 256, kAdvancedEdgeMm, 1.585, 658.44, 416.27,
                              false));
        v.push_back(make_link("ucie-a-45", K::Advanced25D, 32, 45, 64, 256, kAdvancedEdgeMm, 1.043, 658.44,
                              256.0 / (kAdvancedEdgeMm * 1.043), true));
        v.push_back(make_link("ucie-a-25", K::Advanced25D, 32, 25, 64, 512, kAdvancedEdgeMm,
                              512.0 / (1350.0 * kAdvancedEdgeMm), 1317, 1350, true));
        // Table range endpoints; footprint depth back-solved from the tabulated areal density.
        v.push_back(make_link("ucie-s-table-min", K::Standard2D, 4, 110, 32, 32, kStandardEdgeMm,
                              32.0 / (22.0 * kStandardEdgeMm), 28, 22, true));
        v.push_back(make_link("ucie-s-table-max", K::Standard2D, 32, 110, 32, 256, kStandardEdgeMm,
                              256.0 / (125.0 * kStandardEdgeMm), 224, 125, true));
        v.push_back(make_link("ucie-a-table-min", K::Advanced25D, 4, 45, 64, 64, kAdvancedEdgeMm,
                              64.0 / (188.0 * kAdvancedEdgeMm), 165, 188, true));
        v.push_back(make_link("ucie-a-table-max", K::Advanced25D, 32, 45, 64, 512, kAdvancedEdgeMm,
                              512.0 / (1350.0 * kAdvancedEdgeMm), 1317, 1350, true));
        return v;
    }();
    return links;
}

} // namespace

LinkVariant preset_link(std::string_view name) {
    auto const &links = registry();
    auto it = std::find_if(links.begin(), links.end(), [&](auto const &l) { return l.name == name; });
    if (it == links.end()) throw PresetNotFound(std::string(name));
    return *it;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (auto const &l : registry()) out.push_back(l.name);
    return out;
}

void write_presets(std::ostream &os, std::vector<LinkVariant> const &links) {
    for (auto const &l : links) {
        os << fmt::format("[link.{}]\n", l.name);
        os << fmt::format("kind = {}\n", to_string(l.kind));
        os << fmt::format("data_rate_gts = {:.17g}\n", l.data_rate_gts);
        os << fmt::format("bump_pitch_um = {:.17g}\n", l.bump_pitch_um);
        os << fmt::format("lanes_per_direction = {}\n", l.lanes_per_direction);
        os << fmt::format("raw_bandwidth_gbps = {:.17g}\n", l.raw_bandwidth_gbps);
        os << fmt::format("density_basis_gbps = {:.17g}\n", l.density_basis_gbps);
        os << fmt::format("die_edge_mm = {:.17g}\n", l.die_edge_mm);
        os << fmt::format("depth_mm = {:.17g}\n", l.depth_mm);
        os << fmt::format("shoreline_density = {:.17g}\n", l.shoreline_density);
        os << fmt::format("areal_density = {:.17g}\n", l.areal_density);
        os << fmt::format("peak_power_eff = {:.17g}\n", l.peak_power_eff);
        os << fmt::format("idle_fraction = {:.17g}\n", l.idle_fraction);
        os << fmt::format("derived = {}\n\n", l.derived ? 1 : 0);
    }
}

std::vector<LinkVariant> read_presets(std::istream &is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (pt::ini_parser_error const &e) {
        throw Error(std::string("config parse error: ") + e.what());
    }
    std::vector<LinkVariant> out;
    for (auto const &[section, body] : tree) {
        if (section.rfind("link.", 0) != 0) continue;
        try {
            LinkVariant l;
            l.name = section.substr(5);
            l.kind = parse_link_kind(body.get<std::string>("kind"));
            l.data_rate_gts = body.get<double>("data_rate_gts");
            l.bump_pitch_um = body.get<double>("bump_pitch_um");
            l.lanes_per_direction = body.get<int>("lanes_per_direction");
            l.raw_bandwidth_gbps = body.get<double>("raw_bandwidth_gbps");
            l.density_basis_gbps = body.get<double>("density_basis_gbps");
            l.die_edge_mm = body.get<double>("die_edge_mm");
            l.depth_mm = body.get<double>("depth_mm");
            l.shoreline_density = body.get<double>("shoreline_density");
            l.areal_density = body.get<double>("areal_density");
            l.peak_power_eff = body.get<double>("peak_power_eff");
            l.idle_fraction = body.get<double>("idle_fraction", kIdleFraction);
            l.derived = body.get<int>("derived", 0) != 0;
            l.validate();
            out.push_back(std::move(l));
        } catch (pt::ptree_error const &e) {
            throw Error(fmt::format("[{}]: {}", section, e.what()));
        }
    }
    return out;
}

// ============================================================================
// Baselines
// ============================================================================

BaselineMemory const &baseline_lpddr5() {
    static BaselineMemory const m{"lpddr5", 26.5, 15.1, 2.8, 7.5};
    return m;
}

BaselineMemory const &baseline_lpddr6() {
    static BaselineMemory const m{"lpddr6", 35.3, 20.2, 2.8, 7.5};
    return m;
}

BaselineMemory const &baseline_hbm4() {
    static BaselineMemory const m{"hbm4", 204.8, 81.9, 0.9, 6.0};
    return m;
}

// ============================================================================
// Approaches
// ============================================================================

std::string_view to_string(ApproachId id) {
    switch (id) {
    case ApproachId::Lpddr6Asym: return "lpddr6-asym";
    case ApproachId::HbmAsym: return "hbm-asym";
    case ApproachId::ChiSym: return "chi-sym";
    case ApproachId::CxlUnopt: return "cxl-unopt";
    case ApproachId::CxlOpt: return "cxl-opt";
    case ApproachId::BaselineLpddr6: return "baseline-lpddr6";
    case ApproachId::BaselineHbm4: return "baseline-hbm4";
    }
    return "unknown";
}

std::vector<ApproachId> all_approaches() {
    return {ApproachId::Lpddr6Asym, ApproachId::HbmAsym,        ApproachId::ChiSym,      ApproachId::CxlUnopt,
            ApproachId::CxlOpt,     ApproachId::BaselineLpddr6, ApproachId::BaselineHbm4};
}

std::vector<std::string> approach_names() {
    std::vector<std::string> out;
    for (auto id : all_approaches()) out.emplace_back(to_string(id));
    return out;
}

ApproachId parse_approach(std::string_view text) {
    for (auto id : all_approaches()) {
        if (to_string(id) == text) return id;
    }
    throw UnknownApproach(fmt::format("unknown approach '{}' (one of: {})", text, fmt::join(approach_names(), ", ")));
}

bool is_baseline(ApproachId id) { return id == ApproachId::BaselineLpddr6 || id == ApproachId::BaselineHbm4; }
bool is_asymmetric(ApproachId id) { return id == ApproachId::Lpddr6Asym || id == ApproachId::HbmAsym; }
bool is_symmetric(ApproachId id) {
    return id == ApproachId::ChiSym || id == ApproachId::CxlUnopt || id == ApproachId::CxlOpt;
}

std::string_view to_string(Direction d) { return d == Direction::S2M ? "S2M" : "M2S"; }

int ApproachSpec::countable_lanes() const {
    return countable_lanes(Direction::S2M) + countable_lanes(Direction::M2S);
}

int ApproachSpec::countable_lanes(Direction d) const {
    int n = 0;
    for (auto const &g : lane_groups) {
        if (g.direction == d && g.counts_for_power()) n += g.lane_count;
    }
    return n;
}

int ApproachSpec::lanes(Direction d, LaneRole role) const {
    int n = 0;
    for (auto const &g : lane_groups) {
        if (g.direction == d && g.role == role) n += g.lane_count;
    }
    return n;
}

void validate_topology(ApproachSpec const &spec) {
    int expected = 0;
    switch (spec.id) {
    case ApproachId::Lpddr6Asym: expected = 74; break;
    case ApproachId::HbmAsym: expected = 138; break;
    default: return;
    }
    for (auto const &g : spec.lane_groups) {
        if (g.lane_count <= 0) throw InvalidTopology(fmt::format("lane group {} is empty", g.name));
    }
    if (spec.countable_lanes() != expected) {
        throw InvalidTopology(fmt::format("{} needs {} countable lanes, got {}", to_string(spec.id), expected,
                                          spec.countable_lanes()));
    }
}

ApproachSpec make_approach(ApproachId id) {
    using D = Direction;
    using R = LaneRole;
    ApproachSpec s{id, {}, {}, 1.0};
    switch (id) {
    case ApproachId::Lpddr6Asym:
        s.lane_groups = {
            {"s2m-data", D::S2M, 24, R::Data},    {"s2m-wmask", D::S2M, 2, R::WriteMask},
            {"s2m-cmd", D::S2M, 10, R::Command},  {"s2m-crc", D::S2M, 1, R::Crc},
            {"s2m-ctv", D::S2M, 4, R::ClockTrackValid},
            {"m2s-data", D::M2S, 36, R::Data},    {"m2s-crc", D::M2S, 1, R::Crc},
            {"m2s-ctv", D::M2S, 4, R::ClockTrackValid},
        };
        s.read_write_lane_ratio = 36.0 / 24.0;
        break;
    case ApproachId::HbmAsym:
        s.lane_groups = {
            {"s2m-data", D::S2M, 36, R::Data},    {"s2m-wmask", D::S2M, 4, R::WriteMask},
            {"s2m-cmd", D::S2M, 24, R::Command},  {"s2m-crc", D::S2M, 1, R::Crc},
            {"s2m-ctv", D::S2M, 4, R::ClockTrackValid},
            {"m2s-data", D::M2S, 72, R::Data},    {"m2s-crc", D::M2S, 1, R::Crc},
            {"m2s-ctv", D::M2S, 4, R::ClockTrackValid},
        };
        s.read_write_lane_ratio = 2.0;
        break;
    case ApproachId::CxlUnopt: s.slots = {15.0 / 16.0, 1, 2}; break;
    case ApproachId::CxlOpt: s.slots = {1.0, 1, 4}; break;
    case ApproachId::ChiSym: s.slots = {240.0 / 256.0, 1, 2}; break;
    case ApproachId::BaselineLpddr6:
    case ApproachId::BaselineHbm4: break;
    }
    validate_topology(s);
    return s;
}

double LatencyModel::fixed_roundtrip_ns(ApproachId id) const {
    switch (id) {
    case ApproachId::BaselineLpddr6: return baseline_lpddr_ns;
    case ApproachId::BaselineHbm4: return baseline_hbm_ns;
    case ApproachId::Lpddr6Asym:
    case ApproachId::HbmAsym: return adapter_roundtrip_ns;
    default: return protocol_roundtrip_ns;
    }
}

} // namespace ucie_mem
