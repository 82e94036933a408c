#include "ucie_mem/report.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace ucie_mem {

// ============================================================================
// CSV
// ============================================================================

std::vector<std::string> const &csv_columns() {
    static std::vector<std::string> const cols{"approach", "link",    "reads",     "writes", "bw_eff",
                                               "bw_linear", "bw_areal", "p_data", "power_eff", "source"};
    return cols;
}

std::vector<std::string> const &sim_csv_columns() {
    static std::vector<std::string> const cols = [] {
        auto c = csv_columns();
        for (auto const *extra : {"delta_bw_eff", "delta_p_data", "retried_flits", "generated", "delivered"}) {
            c.emplace_back(extra);
        }
        return c;
    }();
    return cols;
}

std::vector<std::string> const &verdict_columns() {
    static std::vector<std::string> const cols{"claim", "asserted", "pass", "detail"};
    return cols;
}

namespace {

std::string join(std::vector<std::string> const &v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

bool parse_finite(std::string const &s) {
    if (s.empty()) return false;
    char *end = nullptr;
    double const v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(v);
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

} // namespace

std::string to_csv(std::vector<CsvRow> const &rows, bool with_sim) {
    std::string out = join(with_sim ? sim_csv_columns() : csv_columns(), ',') + "\n";
    for (auto const &r : rows) {
        out += fmt::format("{},{},{:g},{:g},{},{},{},{},{},{}", r.approach, r.link, r.reads, r.writes, num(r.bw_eff),
                           num(r.bw_linear), num(r.bw_areal), num(r.p_data), num(r.power_eff), r.source);
        if (with_sim) {
            SimExtras const e = r.sim.value_or(SimExtras{});
            out += fmt::format(",{},{},{},{},{}", num(e.delta_bw_eff), num(e.delta_p_data), e.retried_flits,
                               e.generated, e.delivered);
        }
        out += "\n";
    }
    return out;
}

void validate_csv(std::string const &text, std::vector<std::string> const &columns) {
    if (text.find('\r') != std::string::npos) throw CsvSchemaError("CSV must use LF line endings");
    if (text.empty() || text.back() != '\n') throw CsvSchemaError("CSV must end with a newline");
    auto lines = split(text, '\n');
    lines.pop_back();
    if (lines.empty() || split(lines[0], ',') != columns) {
        throw CsvSchemaError(fmt::format("header must be '{}'", join(columns, ',')));
    }
    std::vector<std::size_t> numeric;
    std::optional<std::size_t> source;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        auto const &c = columns[i];
        if (c == "source") {
            source = i;
        } else if (c == "pass" || c == "asserted") {
            continue;
        } else if (c != "approach" && c != "link" && c != "claim" && c != "detail") {
            numeric.push_back(i);
        }
    }
    for (std::size_t n = 1; n < lines.size(); ++n) {
        auto const fields = split(lines[n], ',');
        if (fields.size() != columns.size()) {
            throw CsvSchemaError(fmt::format("line {}: {} fields, expected {}", n + 1, fields.size(), columns.size()));
        }
        for (auto i : numeric) {
            if (!parse_finite(fields[i])) {
                throw CsvSchemaError(fmt::format("line {}: {} '{}' is not a finite number", n + 1, columns[i], fields[i]));
            }
        }
        if (source && fields[*source] != "analytic" && fields[*source] != "sim") {
            throw CsvSchemaError(fmt::format("line {}: unknown source '{}'", n + 1, fields[*source]));
        }
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if ((columns[i] == "pass" || columns[i] == "asserted") && fields[i] != "true" && fields[i] != "false") {
                throw CsvSchemaError(fmt::format("line {}: {} must be true or false", n + 1, columns[i]));
            }
        }
    }
}

CsvRow analytic_row(ApproachId approach, LinkVariant const &link, TrafficMix const &mix, EvaluateOptions const &opts) {
    auto const m = evaluate(approach, mix, link, opts);
    CsvRow r;
    r.approach = std::string(to_string(approach));
    r.link = is_baseline(approach) ? kNativeLink : link.name;
    r.reads = mix.reads();
    r.writes = mix.writes();
    r.bw_eff = m.bw_eff;
    r.bw_linear = m.bw_density_linear;
    r.bw_areal = m.bw_density_areal;
    r.p_data = m.p_data;
    r.power_eff = m.power_eff;
    return r;
}

// ============================================================================
// Sweeps
// ============================================================================

void SweepSpec::validate() const {
    if (approaches.empty() || links.empty() || mixes.empty()) throw Error("sweep needs approaches, links and mixes");
    if (mode != SweepMode::Analytic && duration_ui == 0) throw Error("simulation sweeps need a duration");
}

namespace {

BaselineMemory const &baseline_of(ApproachId id) {
    return id == ApproachId::BaselineHbm4 ? baseline_hbm4() : baseline_lpddr6();
}

/// Runs `jobs` on a small worker pool; results land at their own index.
template <class T, class F> std::vector<T> fan_out(std::size_t jobs, F &&work) {
    std::vector<T> out(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs;) {
            try {
                out[i] = work(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    auto const n = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 8);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(n, jobs); ++t) pool.emplace_back(worker);
    worker();
    for (auto &t : pool) t.join();
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

} // namespace

std::vector<CsvRow> simulate_rows(SimConfig const &config) {
    auto const m = run(config);
    auto analytic = analytic_row(config.approach, config.link, config.mix, config.model);
    CsvRow r = analytic;
    r.source = "sim";
    r.bw_eff = m.bw_eff;
    r.p_data = m.p_data;
    if (is_baseline(config.approach)) {
        auto const &b = baseline_of(config.approach);
        r.bw_linear = m.bw_eff * b.shoreline_density;
        r.bw_areal = m.bw_eff * b.areal_density;
        r.power_eff = m.p_data > 0 ? b.power_eff / m.p_data : 0.0;
    } else {
        r.bw_linear = m.bw_eff * config.link.shoreline_density;
        r.bw_areal = m.bw_eff * config.link.areal_density;
        r.power_eff = m.p_data > 0 ? config.link.peak_power_eff / m.p_data : 0.0;
    }
    SimExtras e;
    e.delta_bw_eff = m.bw_eff - analytic.bw_eff;
    e.delta_p_data = m.p_data - analytic.p_data;
    e.retried_flits = m.retried_flits;
    e.generated = m.generated_reads + m.generated_writes;
    e.delivered = m.delivered_reads + m.delivered_writes;
    r.sim = e;
    analytic.sim = SimExtras{};
    return {analytic, r};
}

std::vector<CsvRow> sweep(SweepSpec const &spec) {
    spec.validate();
    struct Tuple {
        ApproachId approach;
        LinkVariant const *link;
        TrafficMix mix;
    };
    std::vector<Tuple> tuples;
    for (auto a : spec.approaches) {
        auto const links = is_baseline(a) ? std::size_t{1} : spec.links.size();
        for (std::size_t l = 0; l < links; ++l) {
            for (auto const &mix : spec.mixes) tuples.push_back({a, &spec.links[l], mix});
        }
    }
    auto per_tuple = fan_out<std::vector<CsvRow>>(tuples.size(), [&](std::size_t i) {
        auto const &t = tuples[i];
        if (spec.mode == SweepMode::Analytic) return std::vector<CsvRow>{analytic_row(t.approach, *t.link, t.mix, spec.model)};
        SimConfig cfg;
        cfg.approach = t.approach;
        cfg.link = *t.link;
        cfg.mix = t.mix;
        cfg.duration_ui = spec.duration_ui;
        cfg.seed = spec.seed;
        cfg.error_rate = spec.error_rate;
        cfg.model = spec.model;
        auto rows = simulate_rows(cfg);
        if (spec.mode == SweepMode::Simulate) rows.erase(rows.begin());
        return rows;
    });
    std::vector<CsvRow> out;
    for (auto &rows : per_tuple) {
        for (auto &r : rows) out.push_back(std::move(r));
    }
    return out;
}

// ============================================================================
// Figures
// ============================================================================

namespace {

CsvRow const *find_row(std::vector<CsvRow> const &rows, ApproachId a, std::string const &link, TrafficMix const &mix) {
    for (auto const &r : rows) {
        if (r.approach == to_string(a) && r.link == link && r.reads == mix.reads() && r.writes == mix.writes()) return &r;
    }
    return nullptr;
}

std::vector<CsvRow> figure_rows(std::vector<std::string> const &links) {
    SweepSpec s;
    s.approaches = all_approaches();
    for (auto const &l : links) s.links.push_back(preset_link(l));
    s.mixes = figure_mix_grid();
    return sweep(s);
}

std::vector<Verdict> compute_verdicts(FigureSet const &f) {
    std::vector<Verdict> v;
    auto const grid = figure_mix_grid();
    std::string const a55 = "ucie-a-55";

    {
        Verdict d{"cxl-opt bw_eff >= cxl-unopt on every fig10 row", true, true, ""};
        for (auto const &m : grid) {
            auto const *o = find_row(f.fig10, ApproachId::CxlOpt, a55, m);
            auto const *u = find_row(f.fig10, ApproachId::CxlUnopt, a55, m);
            if (!(o && u && o->bw_eff >= u->bw_eff)) {
                d.pass = false;
                d.detail += m.label() + " ";
            }
        }
        if (d.pass) d.detail = "all mixes";
        v.push_back(d);
    }
    {
        Verdict band{"cxl-opt gain over cxl-unopt within 6-10% where writes are at least half the mix", true, true, ""};
        Verdict read_heavy{"cxl-opt gain over cxl-unopt on read-heavy mixes", false, true, ""};
        read_heavy.detail = "reported only:";
        for (auto const &m : grid) {
            auto const *o = find_row(f.fig10, ApproachId::CxlOpt, a55, m);
            auto const *u = find_row(f.fig10, ApproachId::CxlUnopt, a55, m);
            double const gain = o->bw_eff / u->bw_eff - 1.0;
            auto const item = fmt::format(" {}={:.2f}%", m.label(), 100 * gain);
            if (m.read_share() <= 0.5) {
                band.detail += item;
                if (gain < 0.06 - 1e-12 || gain > 0.10 + 1e-12) band.pass = false;
                if (m.reads() == m.writes() && std::abs(gain - 1.0 / 15.0) > 1e-9) band.pass = false;
            } else {
                read_heavy.detail += item;
            }
        }
        band.detail = "gains:" + band.detail;
        v.push_back(band);
        v.push_back(read_heavy);
    }

    std::vector<ApproachId> const proposed{ApproachId::CxlUnopt, ApproachId::CxlOpt, ApproachId::ChiSym,
                                           ApproachId::Lpddr6Asym, ApproachId::HbmAsym};
    auto const &hbm4 = baseline_hbm4();
    {
        Verdict d{"UCIe-A 55um approaches exceed HBM4 linear and areal density where reads are at least half", true,
                  true, ""};
        for (auto a : proposed) {
            for (auto const &m : grid) {
                if (m.read_share() < 0.5) continue;
                auto const *r = find_row(f.fig10, a, a55, m);
                if (!(r && r->bw_linear > hbm4.shoreline_density && r->bw_areal > hbm4.areal_density)) {
                    d.pass = false;
                    d.detail += fmt::format(" {}@{}", to_string(a), m.label());
                }
            }
        }
        if (d.pass) d.detail = "all approaches and mixes";
        v.push_back(d);
    }
    {
        Verdict d{"chi-sym bw_eff below cxl-unopt on every mix", true, true, ""};
        for (auto const &m : grid) {
            auto const *c = find_row(f.fig10, ApproachId::ChiSym, a55, m);
            auto const *u = find_row(f.fig10, ApproachId::CxlUnopt, a55, m);
            if (!(c && u && c->bw_eff < u->bw_eff)) {
                d.pass = false;
                d.detail += " " + m.label();
            }
        }
        if (d.pass) d.detail = "all mixes";
        v.push_back(d);
    }
    {
        auto const link = preset_link("ucie-a-25");
        double best = 0;
        std::string at;
        for (auto const &m : grid) {
            auto const r = analytic_row(ApproachId::CxlOpt, link, m);
            if (r.bw_areal / hbm4.areal_density > best) {
                best = r.bw_areal / hbm4.areal_density;
                at = m.label();
            }
        }
        v.push_back({"UCIe-A 25um cxl-opt areal density at least 10x HBM4 at its best mix", true, best >= 10.0,
                     fmt::format("{:.2f}x at {}", best, at)});
    }
    {
        Verdict d{"UCIe-A CXL and asymmetric approaches beat HBM4 pJ/b on every mix", true, true, ""};
        Verdict chi{"chi-sym pJ/b against HBM4 on UCIe-A", false, true, "not better at:"};
        for (auto a : proposed) {
            for (auto const &m : grid) {
                auto const *r = find_row(f.fig12, a, a55, m);
                bool const better = r && r->power_eff < hbm4.power_eff - 1e-12;
                if (a == ApproachId::ChiSym) {
                    if (!better) chi.detail += fmt::format(" {}={:.3f}", m.label(), r ? r->power_eff : 0.0);
                } else if (!better) {
                    d.pass = false;
                    d.detail += fmt::format(" {}@{}", to_string(a), m.label());
                }
            }
        }
        if (d.pass) d.detail = "all mixes";
        v.push_back(d);
        v.push_back(chi);
    }
    {
        LatencyModel const lat;
        double const ucie = lat.fixed_roundtrip_ns(ApproachId::CxlOpt);
        double const lp = lat.fixed_roundtrip_ns(ApproachId::BaselineLpddr6);
        double const hb = lat.fixed_roundtrip_ns(ApproachId::BaselineHbm4);
        v.push_back({"UCIe round trip at least 2x below the LPDDR5 constant", true, lp / ucie >= 2.0,
                     fmt::format("{} ns vs {} ns", ucie, lp)});
        v.push_back({"UCIe round trip against the HBM constant", false, true,
                     fmt::format("{} ns vs {} ns ({:.2f}x before serialization)", ucie, hb, hb / ucie)});
    }
    return v;
}

} // namespace

FigureSet build_figures() {
    FigureSet f;
    f.fig10 = figure_rows({"ucie-a-55"});
    f.fig11 = figure_rows({"ucie-s-110"});
    f.fig12 = figure_rows({"ucie-a-55", "ucie-s-110"});
    f.verdicts = compute_verdicts(f);
    return f;
}

std::string verdicts_csv(std::vector<Verdict> const &verdicts) {
    std::string out = join(verdict_columns(), ',') + "\n";
    for (auto const &v : verdicts) {
        std::string detail = v.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        out += fmt::format("{},{},{},{}\n", v.claim, v.asserted, v.pass, detail);
    }
    return out;
}

void write_text(std::filesystem::path const &path, std::string const &text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    os << text;
    os.close();
    if (!os) throw IoError(fmt::format("failed writing {}", path.string()));
}

std::vector<std::filesystem::path> write_figures(std::filesystem::path const &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    auto const f = build_figures();
    std::vector<std::pair<std::string, std::string>> files{
        {"fig10.csv", to_csv(f.fig10)},
        {"fig11.csv", to_csv(f.fig11)},
        {"fig12.csv", to_csv(f.fig12)},
        {"verdicts.csv", verdicts_csv(f.verdicts)},
    };
    std::vector<std::filesystem::path> written;
    for (auto const &[name, text] : files) {
        validate_csv(text, name == "verdicts.csv" ? verdict_columns() : csv_columns());
        write_text(dir / name, text);
        written.push_back(dir / name);
    }
    return written;
}

std::filesystem::path resolve_out_dir(std::optional<std::string> const &flag, std::optional<std::string> const &config) {
    if (flag && !flag->empty()) return *flag;
    if (char const *env = std::getenv("UCIEMEM_OUT_DIR"); env && *env) return env;
    if (config && !config->empty()) return *config;
    return ".";
}

// ============================================================================
// Flit listings
// ============================================================================

namespace {

std::string hex_bytes(std::span<std::uint8_t const> bytes) {
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) s += fmt::format("{:02x}", b);
    return s;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
    int base = 10;
    if (v.starts_with("0x") || v.starts_with("0X")) {
        base = 16;
        v.remove_prefix(2);
    }
    std::string const text(v);
    char *end = nullptr;
    errno = 0;
    auto const n = std::strtoull(text.c_str(), &end, base);
    if (text.empty() || end != text.c_str() + text.size() || errno != 0) {
        throw Error(fmt::format("bad value '{}' for {}", v, key));
    }
    return n;
}

} // namespace

std::string format_message(Message const &m) {
    std::string out;
    if (m.is_request()) {
        auto const &h = std::get<RequestHeader>(m.header);
        out = fmt::format("REQ cmd={} meta={} tag={} addr=0x{:x} poison={}", h.cmd, h.meta, h.tag, h.address,
                          h.poison ? 1 : 0);
    } else {
        auto const &h = std::get<ResponseHeader>(m.header);
        out = fmt::format("RSP cmd={} meta={} devload={} tag={} poison={}", h.cmd, h.meta, h.devload, h.tag,
                          h.poison ? 1 : 0);
    }
    if (m.data) out += " data=" + hex_bytes(*m.data);
    return out;
}

Message parse_message(std::string_view line) {
    std::istringstream is{std::string(line)};
    std::string kind;
    is >> kind;
    if (kind != "REQ" && kind != "RSP") throw Error(fmt::format("expected REQ or RSP, got '{}'", kind));
    bool const req = kind == "REQ";
    RequestHeader rq;
    ResponseHeader rs;
    std::optional<CacheLine> data;
    for (std::string tok; is >> tok;) {
        auto const eq = tok.find('=');
        if (eq == std::string::npos) throw Error(fmt::format("expected key=value, got '{}'", tok));
        auto const key = std::string_view(tok).substr(0, eq);
        auto const val = std::string_view(tok).substr(eq + 1);
        if (key == "data") {
            if (val.size() != 128) throw Error("data must be 128 hex characters");
            CacheLine line{};
            for (std::size_t i = 0; i < 64; ++i) {
                line[i] = static_cast<std::uint8_t>(parse_uint("data", fmt::format("0x{}", val.substr(2 * i, 2))));
            }
            data = line;
            continue;
        }
        auto const n = parse_uint(key, val);
        auto narrow = [&](auto &field) {
            using T = std::remove_reference_t<decltype(field)>;
            if (n > std::numeric_limits<T>::max()) throw FieldOverflow(fmt::format("{}={} is too large", key, n));
            field = static_cast<T>(n);
        };
        if (key == "cmd") {
            req ? narrow(rq.cmd) : narrow(rs.cmd);
        } else if (key == "meta") {
            req ? narrow(rq.meta) : narrow(rs.meta);
        } else if (key == "tag") {
            req ? narrow(rq.tag) : narrow(rs.tag);
        } else if (key == "poison") {
            (req ? rq.poison : rs.poison) = n != 0;
        } else if (key == "addr" && req) {
            rq.address = n;
        } else if (key == "devload" && !req) {
            narrow(rs.devload);
        } else {
            throw Error(fmt::format("unknown field '{}' for {}", key, kind));
        }
    }
    if (req) {
        if (rq.carries_data() != data.has_value()) throw Error("MemWr needs data and MemRd takes none");
        return make_request(rq, data);
    }
    if (rs.carries_data() != data.has_value()) throw Error("MemData needs data and Cmp takes none");
    return make_response(rs, data);
}

} // namespace ucie_mem
