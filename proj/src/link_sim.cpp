#include "ucie_mem/link_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace ucie_mem {

// ============================================================================
// Small pieces
// ============================================================================

void LatencyHistogram::add(double ns) {
    if (samples == 0) {
        min_ns = max_ns = ns;
    } else {
        min_ns = std::min(min_ns, ns);
        max_ns = std::max(max_ns, ns);
    }
    ++samples;
    mean_ns += (ns - mean_ns) / static_cast<double>(samples);
    auto const bin = static_cast<std::size_t>(std::max(0.0, ns) / bin_ns);
    if (bin >= counts.size()) counts.resize(bin + 1, 0);
    ++counts[bin];
    min_serialization_ns = min_ns - fixed_ns;
}

bool operator==(SimMetrics const &a, SimMetrics const &b) {
    auto same_groups = [&] {
        if (a.groups.size() != b.groups.size()) return false;
        for (std::size_t i = 0; i < a.groups.size(); ++i) {
            auto const &g = a.groups[i], &h = b.groups[i];
            if (g.name != h.name || g.lanes != h.lanes || g.active_lane_ui != h.active_lane_ui ||
                g.idle_lane_ui != h.idle_lane_ui)
                return false;
        }
        return true;
    };
    return a.elapsed_ui == b.elapsed_ui && a.drained_ui == b.drained_ui && a.generated_reads == b.generated_reads &&
           a.generated_writes == b.generated_writes && a.delivered_reads == b.delivered_reads &&
           a.delivered_writes == b.delivered_writes && a.window_data_bits == b.window_data_bits &&
           a.bw_eff == b.bw_eff && a.p_data == b.p_data && a.flits_sent[0] == b.flits_sent[0] &&
           a.flits_sent[1] == b.flits_sent[1] && a.retried_flits == b.retried_flits && a.naks == b.naks &&
           a.crc_errors == b.crc_errors && a.exactly_once == b.exactly_once && a.converged == b.converged &&
           a.latency.counts == b.latency.counts && a.latency.mean_ns == b.latency.mean_ns && same_groups();
}

bool supports_gating(ApproachId id) { return id == ApproachId::CxlOpt || is_asymmetric(id); }

double flit_serialization_ui(int lanes) { return 8.0 * static_cast<double>(kFlitBytes) / lanes; }

void SimConfig::validate() const {
    link.validate();
    if (duration_ui == 0) throw Error("simulation duration must be positive");
    if (!(error_rate >= 0.0 && error_rate < 0.1)) throw Error("error rate must be in [0, 0.1)");
    if (error_rate > 0.0 && !is_symmetric(approach)) {
        throw Error(fmt::format("error injection needs a flit-based approach, not {}", to_string(approach)));
    }
    auto const integral = [](double v) { return std::abs(v - std::round(v)) < 1e-9; };
    if (!integral(mix.reads()) || !integral(mix.writes())) {
        throw InvalidMix(fmt::format("simulated mix {} must use whole transaction counts", mix.label()));
    }
    if (mix.total() > outstanding_limit) throw Error("outstanding limit is smaller than one xRyW block");
    if (outstanding_limit == 0 || replay_window < 2 || ack_every == 0) throw Error("invalid retry parameters");
    if (approach == ApproachId::CxlOpt && outstanding_limit > 256) {
        throw Error("cxl-opt carries 8-bit tags; outstanding limit must be <= 256");
    }
}

// ============================================================================
// Replay buffer
// ============================================================================

void ReplayBuffer::push(std::uint64_t seq, Flit const &f) {
    if (full()) throw Error("replay buffer overflow");
    bool const was_idle = !replaying();
    entries_.push_back({seq, f});
    if (was_idle) cursor_ = entries_.size();
}

std::pair<std::uint64_t, Flit const *> ReplayBuffer::next_replay() {
    if (!replaying()) throw Error("replay buffer is not replaying");
    auto const &e = entries_[cursor_++];
    return {e.seq, &e.flit};
}

void ReplayBuffer::ack(std::uint64_t seq) {
    while (!entries_.empty() && entries_.front().seq <= seq) {
        entries_.pop_front();
        if (cursor_ > 0) --cursor_;
    }
}

void ReplayBuffer::nak(std::uint64_t seq) {
    if (seq > 0) ack(seq - 1);
    if (!entries_.empty() && entries_.front().seq == seq) cursor_ = 0;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic payload for transaction `id`.
CacheLine line_pattern(std::uint64_t id, std::uint64_t salt) {
    CacheLine line{};
    std::uint64_t s = splitmix64(id ^ salt);
    for (std::size_t i = 0; i < line.size(); i += 8) {
        s = splitmix64(s);
        for (std::size_t b = 0; b < 8; ++b) line[i + b] = static_cast<std::uint8_t>(s >> (8 * b));
    }
    return line;
}

std::uint64_t digest(Message const &m, FlitLayout layout) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix_byte = [&](std::uint8_t b) {
        h ^= b;
        h *= 0x100000001B3ULL;
    };
    auto const bits = m.is_request() ? encode_request(std::get<RequestHeader>(m.header), layout)
                                     : encode_response(std::get<ResponseHeader>(m.header), layout);
    for (auto b : bits.bytes()) mix_byte(b);
    if (m.data) {
        for (auto b : *m.data) mix_byte(b);
    }
    return h;
}

double uniform(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Releases xRyW blocks in shuffled order.
class BlockSource {
  public:
    BlockSource(TrafficMix const &mix, std::uint64_t seed)
        : reads_(static_cast<std::size_t>(std::llround(mix.reads()))),
          writes_(static_cast<std::size_t>(std::llround(mix.writes()))), rng_(seed) {}

    std::size_t block_size() const { return reads_ + writes_; }

    /// true = write
    std::vector<bool> next() {
        std::vector<bool> b(reads_, false);
        b.insert(b.end(), writes_, true);
        for (std::size_t i = b.size(); i > 1; --i) {
            auto const j = static_cast<std::size_t>(rng_() % i);
            bool const t = b[i - 1];
            b[i - 1] = b[j];
            b[j] = t;
        }
        return b;
    }

  private:
    std::size_t reads_, writes_;
    std::mt19937_64 rng_;
};

/// Lane-UI bookkeeping for one lane group, with optional wake-up cost after idle.
class PowerMeter {
  public:
    PowerMeter(std::string name, Direction dir, int lanes, std::uint32_t gate_latency_ui)
        : gate_latency_(gate_latency_ui) {
        g_.name = std::move(name);
        g_.direction = dir;
        g_.lanes = lanes;
    }

    void tick(double active_lanes, double dt) {
        if (active_lanes > 0) {
            g_.active_lane_ui += active_lanes * dt;
            g_.idle_lane_ui += (g_.lanes - active_lanes) * dt;
            idle_run_ = 0;
            return;
        }
        // Lanes coming out of an idle period pay the gate latency at full power.
        double const charged = std::min(dt, std::max(0.0, gate_latency_ - idle_run_));
        g_.active_lane_ui += g_.lanes * charged;
        g_.idle_lane_ui += g_.lanes * (dt - charged);
        idle_run_ += dt;
    }

    GroupActivity const &group() const { return g_; }

  private:
    GroupActivity g_;
    double gate_latency_;
    double idle_run_ = 0;
};

void finish_power(SimMetrics &m, std::vector<PowerMeter> const &meters, double p) {
    m.idle_fraction = p;
    double weighted = 0;
    for (auto const &pm : meters) {
        m.groups.push_back(pm.group());
        weighted += pm.group().weighted(p);
    }
    m.p_data = weighted > 0 ? m.window_data_bits / weighted : 0.0;
}


// ============================================================================
// Flit-based symmetric links
// ============================================================================

constexpr std::uint64_t kWriteSalt = 0x5752495445ULL;
constexpr std::uint64_t kReadSalt = 0x52454144ULL;

struct Feedback {
    std::uint64_t due;
    bool nak;
    std::uint64_t seq;
};

/// One direction: transmitter with replay, the wire, and the receiver.
struct Channel {
    Channel(FlitLayout layout, Direction d, EncoderOptions opts, SimConfig const &cfg, int lanes)
        : dir(d), enc(layout, d, opts), dec(layout, d, opts), replay(cfg.replay_window),
          meter(fmt::format("{} data", to_string(d)), d, lanes, cfg.gate_latency_ui) {}

    Direction dir;
    FlitEncoder enc;
    FlitDecoder dec;
    ReplayBuffer replay;
    PowerMeter meter;

    std::uint64_t expected = 0;     ///< receiver: next in-order sequence
    std::uint32_t since_ack = 0;
    bool nak_pending = false;
    std::uint64_t nak_step = 0;
    std::uint64_t last_activity = 0; ///< transmitter: last send or feedback
    std::optional<std::uint64_t> waiting_since;
    std::deque<Feedback> feedback;

    std::vector<std::uint64_t> sent, received;
};

class SymmetricSim {
  public:
    explicit SymmetricSim(SimConfig const &cfg)
        : cfg_(cfg), layout_(layout_for(cfg.approach)), lanes_(cfg.link.lanes_per_direction),
          flit_ui_(static_cast<std::uint64_t>(std::llround(flit_serialization_ui(lanes_)))),
          window_steps_(std::max<std::uint64_t>(1, cfg.duration_ui / flit_ui_)), source_(cfg.mix, cfg.seed),
          errors_(cfg.seed ^ 0xE1212E5ULL),
          s2m_(layout_, Direction::S2M, encoder_options(), cfg, lanes_),
          m2s_(layout_, Direction::M2S, encoder_options(), cfg, lanes_) {
        metrics_.latency.fixed_ns = cfg.latency.fixed_roundtrip_ns(cfg.approach);
        forced_.insert(forced_.end(), cfg.forced_error_sequences.begin(), cfg.forced_error_sequences.end());
        std::sort(forced_.begin(), forced_.end());
    }

    SimMetrics run() {
        if (layout_ == FlitLayout::CxlOpt) {
            // Training leaves both receivers parked at NOP; one announcement flit each.
            for (auto *ch : {&s2m_, &m2s_}) {
                ch->dec.accept(ch->enc.prime());
                ch->expected = 1;
                ch->enc.set_stream_open(true);
            }
        }

        std::uint64_t const step_cap = window_steps_ * 8 + 1'000'000;
        std::uint64_t step = 0;
        bool drained = false;
        for (;; ++step) {
            bool const in_window = step < window_steps_;
            if (!stopped_ && (!in_window || limit_reached())) stop();

            apply_feedback(s2m_, step);
            apply_feedback(m2s_, step);
            if (!stopped_) release(step);
            if (!stopped_ && limit_reached()) stop();

            // Responses produced by this step's S2M traffic leave on the next step.
            for (auto const &m : transmit(m2s_, step, in_window)) on_m2s(m, step, in_window);
            for (auto const &m : transmit(s2m_, step, in_window)) on_s2m(m, step, in_window);

            if (stopped_ && idle()) {
                drained = true;
                break;
            }
            if (step >= step_cap) break;
        }

        auto &m = metrics_;
        std::uint64_t const window = std::min(window_steps_, step + 1);
        m.elapsed_ui = window * flit_ui_;
        m.drained_ui = (step + 1) * flit_ui_;
        m.bw_eff = m.window_data_bits / (2.0 * lanes_ * static_cast<double>(m.elapsed_ui));
        double const p = (cfg_.gating && supports_gating(cfg_.approach)) ? cfg_.link.idle_fraction : 1.0;
        finish_power(m, {s2m_.meter, m2s_.meter}, p);
        m.exactly_once = drained && s2m_.sent == s2m_.received && m2s_.sent == m2s_.received &&
                         m.delivered_reads == m.generated_reads && m.delivered_writes == m.generated_writes;
        m.converged = drained && m.elapsed_ui >= 10'000;
        return m;
    }

  private:
    EncoderOptions encoder_options() const {
        EncoderOptions o;
        o.two_requests_per_gslot = cfg_.model.cxl_opt.two_requests_per_gslot;
        return o;
    }

    bool limit_reached() const {
        return cfg_.transaction_limit && next_id_ >= *cfg_.transaction_limit;
    }

    void stop() {
        stopped_ = true;
        s2m_.enc.set_stream_open(false);
        m2s_.enc.set_stream_open(false);
    }

    bool idle() const {
        for (auto const *ch : {&s2m_, &m2s_}) {
            if (ch->enc.has_content() || ch->replay.replaying()) return false;
        }
        return issue_steps_.empty();
    }

    void trace(std::uint64_t step, Direction d, std::string_view what) const {
        if (cfg_.trace) fmt::print(*cfg_.trace, "{} {} {} {}\n", step * flit_ui_, step, to_string(d), what);
    }

    void release(std::uint64_t step) {
        auto const block = source_.block_size();
        while (issue_steps_.size() + block <= cfg_.outstanding_limit && !limit_reached()) {
            for (bool write : source_.next()) {
                if (limit_reached()) break;
                std::uint64_t const id = next_id_++;
                RequestHeader h;
                h.cmd = write ? opcode::kMemWr : opcode::kMemRd;
                h.tag = static_cast<std::uint16_t>(id & ((1U << request_widths(layout_).tag) - 1));
                h.address = id & ((std::uint64_t{1} << 46) - 1);
                auto msg = make_request(h, write ? std::optional(line_pattern(id, kWriteSalt)) : std::nullopt);
                s2m_.sent.push_back(digest(msg, layout_));
                s2m_.enc.push(std::move(msg));
                issue_steps_.push_back(step);
                ++(write ? metrics_.generated_writes : metrics_.generated_reads);
            }
        }
    }

    bool ready_to_send(Channel &ch, std::uint64_t step) {
        if (!ch.enc.has_content()) {
            ch.waiting_since.reset();
            return false;
        }
        if (!ch.waiting_since) ch.waiting_since = step;
        return stopped_ || ch.enc.needs_announcement() || ch.enc.backlog_positions() >= ch.enc.positions_per_flit() ||
               step - *ch.waiting_since >= cfg_.flush_after_flits;
    }

    std::vector<Message> transmit(Channel &ch, std::uint64_t step, bool in_window) {
        std::uint64_t const timeout = 2 * cfg_.feedback_delay_flits + cfg_.ack_every + 4;
        if (!ch.replay.replaying() && ch.replay.size() > 0 && step - ch.last_activity > timeout) {
            ch.replay.rewind();
            trace(step, ch.dir, "replay-timeout");
        }

        Flit fresh;
        Flit const *flit = nullptr;
        std::uint64_t seq = 0;
        bool retry = false;
        if (ch.replay.replaying()) {
            std::tie(seq, flit) = ch.replay.next_replay();
            retry = true;
        } else if (!ch.replay.full() && ready_to_send(ch, step)) {
            seq = ch.enc.flits_emitted();
            fresh = ch.enc.emit();
            ch.replay.push(seq, fresh);
            flit = &fresh;
            ch.waiting_since.reset();
            if (ch.enc.has_content()) ch.waiting_since = step;
        }

        Channel &rx = ch; // receiver state of the same direction
        if (!flit) {
            // The receiver acks on any step where nothing new arrives.
            if (in_window) ch.meter.tick(0, static_cast<double>(flit_ui_));
            if (rx.since_ack > 0) schedule(rx, step, false, rx.expected - 1);
            return {};
        }
        if (in_window) ch.meter.tick(lanes_, static_cast<double>(flit_ui_));
        ch.last_activity = step;
        ++metrics_.flits_sent[static_cast<int>(ch.dir)];
        if (retry) ++metrics_.retried_flits;

        Flit wire = *flit;
        bool corrupt = false;
        if (cfg_.error_rate > 0 && uniform(errors_) < cfg_.error_rate) corrupt = true;
        if (!retry && ch.dir == Direction::S2M && std::binary_search(forced_.begin(), forced_.end(), seq)) corrupt = true;
        if (corrupt) {
            auto const bit = errors_() % (8 * kFlitBytes);
            wire.bytes[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
        }
        trace(step, ch.dir, fmt::format("{} seq={}{}", retry ? "retry" : "tx", seq, corrupt ? " corrupted" : ""));
        return receive(rx, wire, step);
    }

    void schedule(Channel &ch, std::uint64_t step, bool nak, std::uint64_t seq) {
        ch.feedback.push_back({step + cfg_.feedback_delay_flits, nak, seq});
        if (!nak) ch.since_ack = 0;
    }

    void request_replay(Channel &ch, std::uint64_t step) {
        std::uint64_t const retry_after = 2 * cfg_.feedback_delay_flits + 2;
        if (ch.nak_pending && step - ch.nak_step <= retry_after) return;
        ch.nak_pending = true;
        ch.nak_step = step;
        ++metrics_.naks;
        schedule(ch, step, true, ch.expected);
        trace(step, ch.dir, fmt::format("nak seq={}", ch.expected));
    }

    std::vector<Message> receive(Channel &ch, Flit const &f, std::uint64_t step) {
        if (!failed_regions(f).empty()) {
            ++metrics_.crc_errors;
            trace(step, ch.dir, "crc-fail");
            request_replay(ch, step);
            return {};
        }
        auto const hdr = read_flit_header(f);
        auto const ahead = static_cast<std::uint8_t>(hdr.sequence - static_cast<std::uint8_t>(ch.expected & 0xFF));
        if (ahead != 0) {
            // Ahead means an earlier flit was lost; behind is a duplicate from a replay.
            if (ahead < 128) request_replay(ch, step);
            trace(step, ch.dir, fmt::format("drop seq={}", hdr.sequence));
            return {};
        }
        auto msgs = ch.dec.accept(f);
        ++ch.expected;
        ch.nak_pending = false;
        if (++ch.since_ack >= cfg_.ack_every) schedule(ch, step, false, ch.expected - 1);
        return msgs;
    }

    void apply_feedback(Channel &ch, std::uint64_t step) {
        while (!ch.feedback.empty() && ch.feedback.front().due <= step) {
            auto const fb = ch.feedback.front();
            ch.feedback.pop_front();
            if (fb.nak) {
                ch.replay.nak(fb.seq);
            } else {
                ch.replay.ack(fb.seq);
            }
            ch.last_activity = step;
        }
    }

    void on_s2m(Message const &m, std::uint64_t step, bool in_window) {
        s2m_.received.push_back(digest(m, layout_));
        auto const &req = std::get<RequestHeader>(m.header);
        ResponseHeader rsp;
        rsp.tag = req.tag;
        std::optional<CacheLine> data;
        if (req.cmd == opcode::kMemWr) {
            ++metrics_.delivered_writes;
            if (in_window) metrics_.window_data_bits += 512;
            rsp.cmd = opcode::kCmp;
        } else {
            rsp.cmd = opcode::kMemData;
            data = line_pattern(req.address, kReadSalt);
        }
        auto msg = make_response(rsp, data);
        m2s_.sent.push_back(digest(msg, layout_));
        m2s_.enc.push(std::move(msg));
        trace(step, Direction::S2M, fmt::format("deliver tag={}", req.tag));
    }

    void on_m2s(Message const &m, std::uint64_t step, bool in_window) {
        m2s_.received.push_back(digest(m, layout_));
        auto const &rsp = std::get<ResponseHeader>(m.header);
        if (rsp.cmd == opcode::kMemData) {
            ++metrics_.delivered_reads;
            if (in_window) metrics_.window_data_bits += 512;
        }
        // Requests are answered in order, so completions match issue order.
        if (!issue_steps_.empty()) {
            auto const issued = issue_steps_.front();
            issue_steps_.pop_front();
            double const ser = static_cast<double>((step + 1 - issued) * flit_ui_) * cfg_.link.ui_ns();
            metrics_.latency.add(metrics_.latency.fixed_ns + ser);
        }
        trace(step, Direction::M2S, fmt::format("complete tag={}", rsp.tag));
    }

    SimConfig const &cfg_;
    FlitLayout layout_;
    int lanes_;
    std::uint64_t flit_ui_;
    std::uint64_t window_steps_;
    BlockSource source_;
    std::mt19937_64 errors_;
    Channel s2m_, m2s_;
    std::vector<std::uint64_t> forced_;
    std::deque<std::uint64_t> issue_steps_;
    std::uint64_t next_id_ = 0;
    bool stopped_ = false;
    SimMetrics metrics_;
};

// ============================================================================
// Asymmetric lane maps
// ============================================================================

/// Per-UI model of the asymmetric module: command bits and write data on the
/// S2M side, read data on the M2S side.
class AsymmetricSim {
  public:
    explicit AsymmetricSim(SimConfig const &cfg)
        : cfg_(cfg), spec_(make_approach(cfg.approach)), source_(cfg.mix, cfg.seed) {
        data_lanes_ = spec_.lanes(Direction::S2M, LaneRole::Data) + spec_.lanes(Direction::S2M, LaneRole::WriteMask);
        cmd_lanes_ = spec_.lanes(Direction::S2M, LaneRole::Command);
        m2s_lanes_ = spec_.lanes(Direction::M2S, LaneRole::Data) + spec_.lanes(Direction::M2S, LaneRole::Crc);
        // A line travels as 576 bits (data + ECC/metadata granules).
        write_ui_ = 576 / spec_.lanes(Direction::S2M, LaneRole::Data);
        read_ui_ = 576 / spec_.lanes(Direction::M2S, LaneRole::Data);
        cmd_bits_ = cfg.approach == ApproachId::HbmAsym ? cfg.model.hbm_command_bits_per_op : 96.0;
        metrics_.latency.fixed_ns = cfg.latency.fixed_roundtrip_ns(cfg.approach);
    }

    SimMetrics run() {
        std::vector<PowerMeter> meters{
            PowerMeter("S2M data+mask", Direction::S2M, data_lanes_, cfg_.gate_latency_ui),
            PowerMeter("S2M cmd", Direction::S2M, cmd_lanes_, cfg_.gate_latency_ui),
            PowerMeter("S2M crc", Direction::S2M, spec_.lanes(Direction::S2M, LaneRole::Crc), cfg_.gate_latency_ui),
            PowerMeter("M2S data+crc", Direction::M2S, m2s_lanes_, cfg_.gate_latency_ui),
        };
        std::uint64_t const cap = cfg_.duration_ui * 8 + 1'000'000;
        std::uint64_t u = 0;
        bool drained = false;
        for (;; ++u) {
            bool const in_window = u < cfg_.duration_ui;
            if (!stopped_ && (!in_window || limit_reached())) stopped_ = true;
            if (!stopped_) release(u);

            double cmd_sent = 0;
            while (cmd_sent < cmd_lanes_ - 1e-12 && !cmd_q_.empty()) {
                auto &op = cmd_q_.front();
                double const take = std::min(cmd_lanes_ - cmd_sent, op.bits_left);
                op.bits_left -= take;
                cmd_sent += take;
                if (op.bits_left > 1e-9) break;
                if (op.write) {
                    part_done(op.id, u);
                } else {
                    read_q_.push_back({op.id, read_ui_, u + 1});
                }
                trace(u, Direction::S2M, fmt::format("cmd id={}", op.id));
                cmd_q_.pop_front();
            }

            bool const data_active = !write_q_.empty();
            if (data_active && --write_q_.front().ui_left == 0) {
                auto const id = write_q_.front().id;
                write_q_.pop_front();
                ++metrics_.delivered_writes;
                delivered_s2m_.push_back(id);
                if (in_window) metrics_.window_data_bits += 512;
                trace(u, Direction::S2M, fmt::format("write id={}", id));
                part_done(id, u);
            }

            bool const read_active = !read_q_.empty() && read_q_.front().ready <= u;
            if (read_active && --read_q_.front().ui_left == 0) {
                auto const id = read_q_.front().id;
                read_q_.pop_front();
                ++metrics_.delivered_reads;
                delivered_m2s_.push_back(id);
                if (in_window) metrics_.window_data_bits += 512;
                trace(u, Direction::M2S, fmt::format("read id={}", id));
                part_done(id, u);
            }

            if (in_window) {
                meters[0].tick(data_active ? data_lanes_ : 0, 1);
                meters[1].tick(cmd_sent, 1);
                meters[2].tick((data_active || cmd_sent > 0) ? 1 : 0, 1);
                meters[3].tick(read_active ? m2s_lanes_ : 0, 1);
            }
            if (stopped_ && pending_.empty()) {
                drained = true;
                break;
            }
            if (u >= cap) break;
        }

        auto &m = metrics_;
        m.elapsed_ui = std::min<std::uint64_t>(cfg_.duration_ui, u + 1);
        m.drained_ui = u + 1;
        m.bw_eff = m.window_data_bits / (static_cast<double>(spec_.countable_lanes()) * m.elapsed_ui);
        finish_power(m, meters, cfg_.gating ? cfg_.link.idle_fraction : 1.0);
        m.exactly_once = drained && delivered_s2m_ == generated_s2m_ && delivered_m2s_ == generated_m2s_;
        m.converged = drained && m.elapsed_ui >= 10'000;
        return m;
    }

  private:
    struct CmdOp {
        std::uint64_t id;
        bool write;
        double bits_left;
    };
    struct Job {
        std::uint64_t id;
        int ui_left;
        std::uint64_t ready = 0;
    };
    struct Pending {
        std::uint64_t issued;
        int parts;
    };

    bool limit_reached() const { return cfg_.transaction_limit && next_id_ >= *cfg_.transaction_limit; }

    void trace(std::uint64_t u, Direction d, std::string_view what) const {
        if (cfg_.trace) fmt::print(*cfg_.trace, "{} {} {}\n", u, to_string(d), what);
    }

    void release(std::uint64_t u) {
        while (pending_.size() + source_.block_size() <= cfg_.outstanding_limit && !limit_reached()) {
            for (bool write : source_.next()) {
                if (limit_reached()) break;
                auto const id = next_id_++;
                cmd_q_.push_back({id, write, cmd_bits_});
                if (write) {
                    write_q_.push_back({id, write_ui_});
                    generated_s2m_.push_back(id);
                    ++metrics_.generated_writes;
                } else {
                    generated_m2s_.push_back(id);
                    ++metrics_.generated_reads;
                }
                pending_[id] = {u, write ? 2 : 1};
            }
        }
    }

    void part_done(std::uint64_t id, std::uint64_t u) {
        auto it = pending_.find(id);
        if (it == pending_.end() || --it->second.parts > 0) return;
        double const ser = static_cast<double>(u + 1 - it->second.issued) * cfg_.link.ui_ns();
        metrics_.latency.add(metrics_.latency.fixed_ns + ser);
        pending_.erase(it);
    }

    SimConfig const &cfg_;
    ApproachSpec spec_;
    BlockSource source_;
    int data_lanes_ = 0, cmd_lanes_ = 0, m2s_lanes_ = 0, write_ui_ = 0, read_ui_ = 0;
    double cmd_bits_ = 96;
    std::deque<CmdOp> cmd_q_;
    std::deque<Job> write_q_, read_q_;
    std::unordered_map<std::uint64_t, Pending> pending_;
    std::vector<std::uint64_t> generated_s2m_, generated_m2s_, delivered_s2m_, delivered_m2s_;
    std::uint64_t next_id_ = 0;
    bool stopped_ = false;
    SimMetrics metrics_;
};

// ============================================================================
// Native memory buses
// ============================================================================

/// The baselines are a bus that streams one line per 16 UI and never idles
/// under load; latency is the constant access time only.
SimMetrics run_baseline(SimConfig const &cfg) {
    constexpr int kBusLanes = 32;
    constexpr std::uint64_t kLineUi = 512 / kBusLanes;
    SimMetrics m;
    m.latency.fixed_ns = cfg.latency.fixed_roundtrip_ns(cfg.approach);
    BlockSource source(cfg.mix, cfg.seed);
    PowerMeter bus("bus", Direction::S2M, kBusLanes, cfg.gate_latency_ui);

    std::uint64_t issued = 0;
    std::uint64_t u = 0;
    while (u < cfg.duration_ui) {
        if (cfg.transaction_limit && issued >= *cfg.transaction_limit) break;
        for (bool write : source.next()) {
            if (u >= cfg.duration_ui || (cfg.transaction_limit && issued >= *cfg.transaction_limit)) break;
            ++issued;
            ++(write ? m.generated_writes : m.generated_reads);
            ++(write ? m.delivered_writes : m.delivered_reads);
            auto const dt = std::min(kLineUi, cfg.duration_ui - u);
            bus.tick(kBusLanes, static_cast<double>(dt));
            if (dt == kLineUi) m.window_data_bits += 512;
            m.latency.add(m.latency.fixed_ns);
            u += dt;
        }
    }
    if (u < cfg.duration_ui) bus.tick(0, static_cast<double>(cfg.duration_ui - u));
    m.elapsed_ui = cfg.duration_ui;
    m.drained_ui = std::max(u, cfg.duration_ui);
    m.bw_eff = m.window_data_bits / (static_cast<double>(kBusLanes) * m.elapsed_ui);
    finish_power(m, {bus}, 1.0);
    m.converged = m.elapsed_ui >= 10'000;
    return m;
}

} // namespace

SimMetrics run(SimConfig const &config) {
    config.validate();
    if (is_baseline(config.approach)) return run_baseline(config);
    if (is_asymmetric(config.approach)) return AsymmetricSim(config).run();
    return SymmetricSim(config).run();
}

SimMetrics inject_and_recover(SimConfig const &config) {
    if (!is_symmetric(config.approach)) {
        throw Error(fmt::format("{} has no flit retry path", to_string(config.approach)));
    }
    return run(config);
}

LatencyHistogram latency_report(SimConfig const &config) { return run(config).latency; }

} // namespace ucie_mem
