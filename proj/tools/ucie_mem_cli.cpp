// ucie-mem: analytic metrics, figure tables, link simulation and flit tooling.
//
// Exit codes: 0 ok, 1 I/O failure, 2 usage error, 3 bad flit data (CRC, hex, framing).

#include "ucie_mem/analytic.hpp"
#include "ucie_mem/core_model.hpp"
#include "ucie_mem/flit_codec.hpp"
#include "ucie_mem/link_sim.hpp"
#include "ucie_mem/report.hpp"

#include <CLI11.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace ucie_mem;

namespace {

constexpr int kIoFailure = 1;
constexpr int kUsage = 2;
constexpr int kBadData = 3;

struct ModelFlags {
    bool two_requests = false;
    int chi_header_granules = 0;
    double hbm_cmd_bits = kHbmCommandBitsPerOp;

    void add_to(CLI::App &sub) {
        sub.add_flag("--two-requests-per-gslot", two_requests, "cxl-opt: pack two requests into one G-slot");
        sub.add_option("--chi-header-granules", chi_header_granules,
                       "chi-sym: message capacity of the flit header region, in granules")
            ->check(CLI::NonNegativeNumber);
        sub.add_option("--hbm-cmd-bits", hbm_cmd_bits, "hbm-asym: command bits per read or write")
            ->check(CLI::PositiveNumber);
    }

    EvaluateOptions options() const {
        EvaluateOptions o;
        o.cxl_opt.two_requests_per_gslot = two_requests;
        o.chi.header_region_granules = chi_header_granules;
        o.hbm_command_bits_per_op = hbm_cmd_bits;
        return o;
    }
};

std::vector<LinkVariant> load_links(std::vector<std::string> const &names, std::string const &presets_file) {
    std::vector<LinkVariant> extra;
    if (!presets_file.empty()) {
        std::ifstream is(presets_file);
        if (!is) throw IoError(fmt::format("cannot read {}", presets_file));
        extra = read_presets(is);
    }
    std::vector<LinkVariant> out;
    for (auto const &n : names) {
        auto it = std::find_if(extra.begin(), extra.end(), [&](auto const &l) { return l.name == n; });
        out.push_back(it != extra.end() ? *it : preset_link(n));
    }
    return out;
}

std::vector<ApproachId> parse_approaches(std::vector<std::string> const &names) {
    if (names.empty()) return all_approaches();
    std::vector<ApproachId> out;
    for (auto const &n : names) out.push_back(parse_approach(n));
    return out;
}

std::vector<TrafficMix> parse_mixes(std::vector<std::string> const &labels) {
    if (labels.empty()) return nine_mix_grid();
    std::vector<TrafficMix> out;
    for (auto const &l : labels) out.push_back(TrafficMix::parse(l));
    return out;
}

/// Fills options not given on the command line from `[section] key = value`.
/// Returns the config's out-dir, which resolve_out_dir ranks below the environment.
std::optional<std::string> apply_config(CLI::App &sub, boost::property_tree::ptree const &cfg) {
    std::optional<std::string> out_dir;
    auto const section = cfg.get_child_optional(sub.get_name());
    if (!section) return out_dir;
    for (auto const &[key, node] : *section) {
        auto const value = node.get_value<std::string>();
        if (key == "out-dir") {
            out_dir = value;
            continue;
        }
        auto *opt = sub.get_option_no_throw("--" + key);
        if (!opt) throw CLI::ConfigError(fmt::format("[{}] has no option '{}'", sub.get_name(), key));
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
    return out_dir;
}

void emit(std::string const &text, std::string const &out, std::filesystem::path const &dir) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::filesystem::path p(out);
    if (p.is_relative()) p = dir / p;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_text(p, text);
}

std::string read_input(std::string const &path) {
    std::ostringstream ss;
    if (path.empty() || path == "-") {
        ss << std::cin.rdbuf();
    } else {
        std::ifstream is(path);
        if (!is) throw IoError(fmt::format("cannot read {}", path));
        ss << is.rdbuf();
    }
    return ss.str();
}

std::vector<std::string> content_lines(std::string const &text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto const first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        lines.push_back(line.substr(first));
    }
    return lines;
}

Direction parse_direction(std::string const &d) {
    if (d == "s2m") return Direction::S2M;
    if (d == "m2s") return Direction::M2S;
    throw Error(fmt::format("direction must be s2m or m2s, got '{}'", d));
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"UCIe on-package memory: analytic metrics, figure tables, link simulation, flit codec"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir_flag;
    app.add_option("--config", config_path, "INI file; each [subcommand] section mirrors that subcommand's flags");
    app.add_option("--out-dir", out_dir_flag, "output directory (else $UCIEMEM_OUT_DIR, config, then .)");

    // analyze -------------------------------------------------------------
    auto *analyze = app.add_subcommand("analyze", "closed-form metrics for approach x link x mix");
    std::vector<std::string> an_approaches, an_links{"ucie-a-55"}, an_mixes;
    std::string an_out, an_presets;
    ModelFlags an_model;
    analyze->add_option("--approach", an_approaches, "approach ids (default: all)")->delimiter(',');
    analyze->add_option("--link", an_links, "link presets")->delimiter(',');
    analyze->add_option("--mix", an_mixes, "xRyW mixes (default: nine-mix grid)")->delimiter(',');
    analyze->add_option("--presets", an_presets, "INI file with extra [link.<name>] presets");
    analyze->add_option("--out", an_out, "CSV path (default: stdout)");
    an_model.add_to(*analyze);

    // figures -------------------------------------------------------------
    auto *figures = app.add_subcommand("figures", "write fig10/fig11/fig12 tables and verdicts.csv");

    // simulate ------------------------------------------------------------
    auto *simulate = app.add_subcommand("simulate", "run the link simulator next to the analytic model");
    std::vector<std::string> sim_approaches{"cxl-opt"}, sim_links{"ucie-a-55"}, sim_mixes{"1R1W"};
    std::uint64_t duration = 1'000'000, seed = 1, transactions = 0;
    double error_rate = 0;
    bool no_gating = false;
    std::uint32_t gate_latency = 0;
    std::string sim_out, sim_trace, sim_presets;
    ModelFlags sim_model;
    simulate->add_option("--approach", sim_approaches, "approach ids")->delimiter(',');
    simulate->add_option("--link", sim_links, "link presets")->delimiter(',');
    simulate->add_option("--mix", sim_mixes, "xRyW mixes (whole counts)")->delimiter(',');
    simulate->add_option("--duration", duration, "measurement window in UI")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "traffic and error seed");
    simulate->add_option("--error-rate", error_rate, "per-flit corruption probability")->check(CLI::Range(0.0, 0.1));
    simulate->add_option("--transactions", transactions, "stop generating after N transactions (0: no limit)");
    simulate->add_flag("--no-gating", no_gating, "charge idle lanes at full power");
    simulate->add_option("--gate-latency", gate_latency, "UI of full power at the start of every idle run");
    simulate->add_option("--trace", sim_trace, "event trace file");
    simulate->add_option("--presets", sim_presets, "INI file with extra [link.<name>] presets");
    simulate->add_option("--out", sim_out, "CSV path (default: stdout)");
    sim_model.add_to(*simulate);

    // flit ----------------------------------------------------------------
    auto *flit = app.add_subcommand("flit", "pack a message listing into hex flits, or unpack hex flits");
    std::string flit_action, flit_layout = "cxl-opt", flit_dir = "s2m", flit_in, flit_out;
    bool flit_two = false;
    flit->add_option("action", flit_action, "pack or unpack")->required()->check(CLI::IsMember({"pack", "unpack"}));
    flit->add_option("--layout", flit_layout, "cxl-unopt, cxl-opt or chi");
    flit->add_option("--dir", flit_dir, "s2m (requests) or m2s (responses)");
    flit->add_option("--in", flit_in, "input file (default: stdin)");
    flit->add_option("--out", flit_out, "output file (default: stdout)");
    flit->add_flag("--two-requests-per-gslot", flit_two, "cxl-opt: two requests per G-slot");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const &e) {
        int const code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        std::optional<std::string> cfg_out_dir;
        if (!config_path.empty()) {
            boost::property_tree::ptree cfg;
            try {
                boost::property_tree::read_ini(config_path, cfg);
            } catch (boost::property_tree::ini_parser_error const &e) {
                throw CLI::ConfigError(e.what());
            }
            if (auto d = cfg.get_optional<std::string>("out-dir")) cfg_out_dir = *d;
            for (auto *sub : app.get_subcommands()) {
                if (auto d = apply_config(*sub, cfg)) cfg_out_dir = d;
            }
        }
        auto const out_dir = resolve_out_dir(out_dir_flag.empty() ? std::nullopt : std::optional(out_dir_flag),
                                             cfg_out_dir);

        if (*analyze) {
            auto const approaches = parse_approaches(an_approaches);
            auto const mixes = parse_mixes(an_mixes);
            SweepSpec spec;
            spec.approaches = approaches;
            spec.links = load_links(an_links, an_presets);
            spec.mixes = mixes;
            spec.model = an_model.options();
            auto const text = to_csv(sweep(spec));
            validate_csv(text, csv_columns());
            emit(text, an_out, out_dir);
        } else if (*figures) {
            for (auto const &p : write_figures(out_dir)) fmt::print("{}\n", p.string());
        } else if (*simulate) {
            auto const approaches = parse_approaches(sim_approaches);
            auto const mixes = parse_mixes(sim_mixes);
            auto const links = load_links(sim_links, sim_presets);
            std::ofstream trace;
            if (!sim_trace.empty()) {
                trace.open(sim_trace);
                if (!trace) throw IoError(fmt::format("cannot open trace file {}", sim_trace));
            }
            std::vector<CsvRow> rows;
            for (auto a : approaches) {
                for (auto const &link : links) {
                    for (auto const &mix : mixes) {
                        SimConfig cfg;
                        cfg.approach = a;
                        cfg.link = link;
                        cfg.mix = mix;
                        cfg.duration_ui = duration;
                        cfg.seed = seed;
                        cfg.error_rate = error_rate;
                        cfg.gating = !no_gating;
                        cfg.gate_latency_ui = gate_latency;
                        if (transactions > 0) cfg.transaction_limit = transactions;
                        cfg.model = sim_model.options();
                        if (trace.is_open()) cfg.trace = &trace;
                        for (auto &r : simulate_rows(cfg)) rows.push_back(std::move(r));
                    }
                }
            }
            auto const text = to_csv(rows, true);
            validate_csv(text, sim_csv_columns());
            emit(text, sim_out, out_dir);
        } else if (*flit) {
            auto const layout = parse_layout(flit_layout);
            auto const dir = parse_direction(flit_dir);
            EncoderOptions opts;
            opts.two_requests_per_gslot = flit_two;
            auto const lines = content_lines(read_input(flit_in));
            std::string text;
            if (flit_action == "pack") {
                std::vector<Message> msgs;
                for (auto const &l : lines) msgs.push_back(parse_message(l));
                for (auto const &f : pack_flits(msgs, layout, dir, opts)) text += to_hex(f) + "\n";
            } else {
                std::vector<Flit> flits;
                for (std::size_t i = 0; i < lines.size(); ++i) {
                    try {
                        flits.push_back(flit_from_hex(lines[i], layout));
                    } catch (HexParseError const &e) {
                        throw HexParseError(fmt::format("line {}: {}", i + 1, e.what()), e.offset);
                    }
                }
                for (auto const &m : unpack_flits(flits, layout, dir, opts)) text += format_message(m) + "\n";
            }
            emit(text, flit_out, out_dir);
        }
    } catch (CLI::ParseError const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kUsage;
    } catch (CorruptFlit const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kBadData;
    } catch (HexParseError const &e) {
        fmt::print(std::cerr, "error: {} (offset {})\n", e.what(), e.offset);
        return kBadData;
    } catch (FlitFormatError const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kBadData;
    } catch (IoError const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kIoFailure;
    } catch (std::filesystem::filesystem_error const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kIoFailure;
    } catch (Error const &e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kUsage;
    }
    return 0;
}
