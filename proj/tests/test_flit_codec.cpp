#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ucie_mem/analytic.hpp"
#include "ucie_mem/flit_codec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace ucie_mem;

namespace {

// Bit-at-a-time CRC, no tables.
std::uint16_t ref_crc(std::span<std::uint8_t const> bytes) {
    std::uint16_t c = 0xFFFF;
    for (auto b : bytes) {
        for (int i = 7; i >= 0; --i) {
            bool const top = ((c >> 15) & 1U) != (((b >> i) & 1U) != 0);
            c = static_cast<std::uint16_t>(c << 1);
            if (top) c ^= 0x1021;
        }
    }
    return c;
}

constexpr std::array<FlitLayout, 3> kLayouts{FlitLayout::CxlUnopt, FlitLayout::CxlOpt, FlitLayout::Chi};

CacheLine random_line(std::mt19937_64 &rng) {
    CacheLine l;
    for (auto &b : l) b = static_cast<std::uint8_t>(rng());
    return l;
}

Message random_message(std::mt19937_64 &rng, FlitLayout layout, Direction dir) {
    if (dir == Direction::S2M) {
        auto w = request_widths(layout);
        RequestHeader h;
        h.cmd = rng() % 2 ? opcode::kMemWr : opcode::kMemRd;
        h.meta = static_cast<std::uint8_t>(rng() & ((1U << w.meta) - 1));
        h.tag = static_cast<std::uint16_t>(rng() & ((1U << w.tag) - 1));
        h.address = rng() & ((1ULL << w.address) - 1);
        h.poison = rng() % 7 == 0;
        return make_request(h, h.carries_data() ? std::optional(random_line(rng)) : std::nullopt);
    }
    auto w = response_widths(layout);
    ResponseHeader h;
    h.cmd = rng() % 2 ? opcode::kMemData : opcode::kCmp;
    h.meta = static_cast<std::uint8_t>(rng() & ((1U << w.meta) - 1));
    h.devload = w.devload ? static_cast<std::uint8_t>(rng() & ((1U << w.devload) - 1)) : 0;
    h.tag = static_cast<std::uint16_t>(rng() & ((1U << w.tag) - 1));
    h.poison = rng() % 7 == 0;
    return make_response(h, h.carries_data() ? std::optional(random_line(rng)) : std::nullopt);
}

Message write_req(std::uint16_t tag) {
    RequestHeader h{opcode::kMemWr, 0, tag, 0x1000u + tag, false};
    CacheLine l;
    l.fill(static_cast<std::uint8_t>(tag + 1));
    return make_request(h, l);
}

Message read_req(std::uint16_t tag) { return make_request(RequestHeader{opcode::kMemRd, 0, tag, 0x2000u + tag, false}); }

Message read_rsp(std::uint16_t tag) {
    CacheLine l;
    l.fill(static_cast<std::uint8_t>(tag ^ 0x5A));
    return make_response(ResponseHeader{opcode::kMemData, 0, 0, tag, false}, l);
}

Message write_cmp(std::uint16_t tag) { return make_response(ResponseHeader{opcode::kCmp, 0, 0, tag, false}); }

// Flits that carry messages; the optimized layout opens with an announcement-only flit.
std::size_t payload_flits(std::vector<Flit> const &flits) {
    return flits.size() - (flits.empty() || flits.front().layout != FlitLayout::CxlOpt ? 0 : 1);
}

} // namespace

TEST_CASE("crc16 against a bitwise reference") {
    std::array<std::uint8_t, 9> check{'1', '2', '3', '4', '5', '6', '7', '8', '9'};
    CHECK(crc16(check) == 0x29B1);
    CHECK(ref_crc(check) == 0x29B1);

    std::array<std::uint8_t, 128> zero{};
    CHECK(crc16(zero) == 0xF00A);

    std::mt19937_64 rng(3);
    for (int n = 0; n < 200; ++n) {
        std::vector<std::uint8_t> buf(1 + rng() % 300);
        for (auto &b : buf) b = static_cast<std::uint8_t>(rng());
        CHECK(crc16(buf) == ref_crc(buf));
    }
}

TEST_CASE("crc16 catches every single-bit flip of a 128B region") {
    std::mt19937_64 rng(5);
    std::array<std::uint8_t, 128> region;
    for (auto &b : region) b = static_cast<std::uint8_t>(rng());
    auto const clean = crc16(region);
    for (int bit = 0; bit < 1024; ++bit) {
        auto r = region;
        r[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
        CHECK(crc16(r) != clean);
    }
    // double flips, sampled
    for (int n = 0; n < 20000; ++n) {
        int a = int(rng() % 1024), b = int(rng() % 1024);
        if (a == b) continue;
        auto r = region;
        r[a / 8] ^= static_cast<std::uint8_t>(1U << (a % 8));
        r[b / 8] ^= static_cast<std::uint8_t>(1U << (b % 8));
        CHECK(crc16(r) != clean);
    }
}

TEST_CASE("header widths") {
    CHECK(request_widths(FlitLayout::CxlUnopt).total() == 74);
    CHECK(request_widths(FlitLayout::CxlOpt).total() == 62);
    CHECK(response_widths(FlitLayout::CxlUnopt).total() == 26);
    CHECK(response_widths(FlitLayout::CxlOpt).total() == 16);

    auto zero = encode_request(RequestHeader{}, FlitLayout::CxlUnopt);
    CHECK(zero.size() == 74);
    CHECK(zero.all_zero());

    RequestHeader h{opcode::kMemRd, 3, 0xFF, 0x123456789ULL, true};
    CHECK(decode_request(encode_request(h, FlitLayout::CxlOpt), FlitLayout::CxlOpt) == h);
}

TEST_CASE("fields are packed LSB first in row order") {
    RequestHeader h{0x5, 0x0, 0x1, 0x0, false};
    auto b = encode_request(h, FlitLayout::CxlUnopt);
    // cmd 4 bits, meta 7, then tag
    CHECK(b.bit(0));
    CHECK_FALSE(b.bit(1));
    CHECK(b.bit(2));
    CHECK(b.bit(11));
    CHECK(b.read(11, 16) == 1);
}

TEST_CASE("out-of-range fields") {
    RequestHeader h{opcode::kMemRd, 0, 0x100, 0, false};
    CHECK_THROWS_AS(encode_request(h, FlitLayout::CxlOpt), FieldOverflow);
    CHECK_NOTHROW(encode_request(h, FlitLayout::CxlUnopt));
    ResponseHeader r{opcode::kCmp, 0, 1, 0, false};
    CHECK_THROWS_AS(encode_response(r, FlitLayout::CxlOpt), FieldOverflow);
    h.address = 1ULL << 46;
    CHECK_THROWS_AS(encode_request(h, FlitLayout::CxlUnopt), FieldOverflow);
}

TEST_CASE("random header round trips") {
    std::mt19937_64 rng(17);
    for (int n = 0; n < 10000; ++n) {
        auto layout = kLayouts[n % 3];
        auto dir = n % 2 ? Direction::S2M : Direction::M2S;
        auto m = random_message(rng, layout, dir);
        if (m.is_request()) {
            auto const &h = std::get<RequestHeader>(m.header);
            REQUIRE(decode_request(encode_request(h, layout), layout) == h);
        } else {
            auto const &h = std::get<ResponseHeader>(m.header);
            REQUIRE(decode_response(encode_response(h, layout), layout) == h);
        }
    }
}

TEST_CASE("byte-role maps") {
    auto count = [](FlitLayout l) {
        std::map<ByteRole, int> n;
        for (auto r : byte_roles(l)) ++n[r];
        return n;
    };
    auto u = count(FlitLayout::CxlUnopt);
    CHECK(u[ByteRole::FlitHdr] == 2);
    CHECK(u[ByteRole::HeaderSlot] == 14);
    CHECK(u[ByteRole::GSlot] == 224);
    CHECK(u[ByteRole::Reserved] == 10);
    CHECK(u[ByteRole::Credit] == 2);
    CHECK(u[ByteRole::Crc0] == 2);
    CHECK(u[ByteRole::Crc1] == 2);

    auto o = count(FlitLayout::CxlOpt);
    CHECK(o[ByteRole::GSlot] == 240);
    CHECK(o[ByteRole::HeaderSlot] == 10);
    CHECK(o[ByteRole::FlitHdr] == 2);
    CHECK(o[ByteRole::Credit] == 2);
    CHECK(o[ByteRole::Crc] == 2);

    auto c = count(FlitLayout::Chi);
    CHECK(c[ByteRole::Granule] == 240);
    CHECK(c[ByteRole::LinkHdr] + c[ByteRole::ProtHdr] == 16);
    CHECK(c[ByteRole::LinkHdr] == 6);

    auto chi = byte_roles(FlitLayout::Chi);
    for (std::size_t at : {0, 1, 126, 127, 254, 255}) CHECK(chi[at] == ByteRole::LinkHdr);
    for (std::size_t at : {62, 63, 64, 65, 128, 129, 190, 191, 192, 193}) CHECK(chi[at] == ByteRole::ProtHdr);

    auto opt = byte_roles(FlitLayout::CxlOpt);
    CHECK(opt[239] == ByteRole::GSlot);
    CHECK(opt[240] == ByteRole::HeaderSlot);
    CHECK(opt[250] == ByteRole::FlitHdr);

    auto covered = [](FlitLayout l) {
        std::size_t n = 0;
        for (auto s : payload_slots(l)) n += s.size;
        return n;
    };
    CHECK(covered(FlitLayout::CxlUnopt) == 224);
    CHECK(covered(FlitLayout::CxlOpt) == 240);
    CHECK(covered(FlitLayout::Chi) == 240);
}

TEST_CASE("every single-bit flip is caught by the region covering it") {
    std::mt19937_64 rng(23);
    for (auto layout : kLayouts) {
        Flit f;
        f.layout = layout;
        for (auto &b : f.bytes) b = static_cast<std::uint8_t>(rng());
        seal(f);
        REQUIRE(failed_regions(f).empty());
        for (int bit = 0; bit < 2048; ++bit) {
            auto g = f;
            g.bytes[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
            auto failed = failed_regions(g);
            REQUIRE(failed.size() == 1);
            std::size_t const byte = bit / 8;
            if (layout == FlitLayout::CxlUnopt) {
                bool const first = byte < 128 || byte == 252 || byte == 253;
                CHECK(failed[0] == (first ? CrcRegion::Crc0 : CrcRegion::Crc1));
            } else {
                CHECK(failed[0] == CrcRegion::Whole);
            }
        }
    }
}

TEST_CASE("a flipped bit names its region on unpack") {
    std::vector<Message> q{write_req(1)};
    auto flits = pack_flits(q, FlitLayout::CxlUnopt, Direction::S2M);
    flits[0].bytes[100] ^= 0x08;
    try {
        unpack_flits(flits, FlitLayout::CxlUnopt, Direction::S2M);
        FAIL("expected CorruptFlit");
    } catch (CorruptFlit const &e) {
        CHECK(e.region == CrcRegion::Crc0);
        CHECK(std::string(e.what()).find("CRC0") != std::string::npos);
    }
}

TEST_CASE("three unoptimized writes fill one flit") {
    std::vector<Message> q{write_req(1), write_req(2), write_req(3)};
    auto flits = pack_flits(q, FlitLayout::CxlUnopt, Direction::S2M);
    REQUIRE(flits.size() == 1);
    CHECK(unpack_flits(flits, FlitLayout::CxlUnopt, Direction::S2M) == q);
    // 14 G-slots: 2 carry the overflow headers, 12 carry data
    int nonzero = 0;
    for (auto s : payload_slots(FlitLayout::CxlUnopt)) {
        nonzero += std::any_of(flits[0].bytes.begin() + s.offset, flits[0].bytes.begin() + s.offset + s.size,
                               [](auto b) { return b != 0; });
    }
    CHECK(nonzero == 14);
}

TEST_CASE("one optimized read rides in the HS-slot") {
    std::vector<Message> q{read_req(9)};
    auto flits = pack_flits(q, FlitLayout::CxlOpt, Direction::S2M);
    REQUIRE(payload_flits(flits) == 1);
    auto const &f = flits.back();
    auto hs = *header_slot(FlitLayout::CxlOpt);
    CHECK(std::any_of(f.bytes.begin() + hs.offset, f.bytes.begin() + hs.offset + hs.size, [](auto b) { return b; }));
    for (auto s : payload_slots(FlitLayout::CxlOpt)) {
        CHECK(std::all_of(f.bytes.begin() + s.offset, f.bytes.begin() + s.offset + s.size, [](auto b) { return !b; }));
    }
    CHECK(unpack_flits(flits, FlitLayout::CxlOpt, Direction::S2M) == q);
}

TEST_CASE("optimized layout announces the protocol one flit ahead") {
    std::vector<Message> q{read_req(1), read_req(2)};
    auto flits = pack_flits(q, FlitLayout::CxlOpt, Direction::S2M);
    REQUIRE(flits.size() >= 2);
    CHECK(read_flit_header(flits[0]).protocol == ProtocolId::CxlMem);
    CHECK(read_flit_header(flits.back()).protocol == ProtocolId::Nop);

    // A decoder that missed the announcement parks the payload flit as NOP.
    FlitDecoder dec(FlitLayout::CxlOpt, Direction::S2M);
    CHECK(dec.accept(flits[1]).empty());
    dec.retrain();
    CHECK(dec.accept(flits[0]).empty());
    CHECK(dec.accept(flits[1]).size() == 2);
}

TEST_CASE("all-NOP flits decode to nothing") {
    for (auto layout : kLayouts) {
        Flit f;
        f.layout = layout;
        seal(f);
        CHECK(unpack_flits(std::vector<Flit>{f}, layout, Direction::S2M).empty());
        CHECK(unpack_flits(std::vector<Flit>{f}, layout, Direction::M2S).empty());
    }
}

TEST_CASE("random stream round trips") {
    std::mt19937_64 rng(29);
    for (int n = 0; n < 10000; ++n) {
        auto layout = kLayouts[n % 3];
        auto dir = (n / 3) % 2 ? Direction::S2M : Direction::M2S;
        EncoderOptions opts;
        opts.two_requests_per_gslot = layout == FlitLayout::CxlOpt && n % 5 == 0;
        opts.credit_return = static_cast<std::uint16_t>(rng());
        std::vector<Message> q(rng() % 12);
        for (auto &m : q) m = random_message(rng, layout, dir);
        auto flits = pack_flits(q, layout, dir, opts);
        for (auto const &f : flits) REQUIRE(read_credit(f) == opts.credit_return);
        REQUIRE(unpack_flits(flits, layout, dir, opts) == q);
    }
}

TEST_CASE("flit count follows the analytic slot total") {
    std::vector<Message> s2m, m2s;
    for (std::uint16_t i = 0; i < 100; ++i) {
        auto rt = static_cast<std::uint16_t>(2 * i % 256), wt = static_cast<std::uint16_t>((2 * i + 1) % 256);
        s2m.push_back(read_req(rt));
        s2m.push_back(write_req(wt));
        m2s.push_back(read_rsp(rt));
        m2s.push_back(write_cmp(wt));
    }
    auto slots = cxl_opt_slots(TrafficMix(100, 100));
    auto up = pack_flits(s2m, FlitLayout::CxlOpt, Direction::S2M);
    auto down = pack_flits(m2s, FlitLayout::CxlOpt, Direction::M2S);
    double const expect = std::ceil(slots.max / 16);
    auto const busiest = double(std::max(payload_flits(up), payload_flits(down)));
    CHECK(std::abs(busiest - expect) <= 1);
    CHECK(std::abs(double(payload_flits(up)) - std::ceil(slots.s2m / 16)) <= 1);
    CHECK(std::abs(double(payload_flits(down)) - std::ceil(slots.m2s / 16)) <= 1);
}

TEST_CASE("payload fraction of long homogeneous streams") {
    struct Case {
        FlitLayout layout;
        double slots_per_write;
        double positions;
    };
    // writes only, request direction: 4 data slots + the header
    for (auto c : {Case{FlitLayout::CxlUnopt, cxl_unopt_slots(TrafficMix(0, 1)).s2m, 15},
                   Case{FlitLayout::CxlOpt, cxl_opt_slots(TrafficMix(0, 1)).s2m, 16},
                   Case{FlitLayout::Chi, chi_slots(TrafficMix(0, 1)).s2m, 12}}) {
        CAPTURE(to_string(c.layout));
        std::vector<Message> q;
        for (int i = 0; i < 2000; ++i) q.push_back(write_req(static_cast<std::uint16_t>(i % 256)));
        auto flits = pack_flits(q, c.layout, Direction::S2M);
        double const measured = 64.0 * double(q.size()) / (256.0 * double(payload_flits(flits)));
        double const analytic = 64.0 * c.positions / (256.0 * c.slots_per_write);
        CHECK(measured == doctest::Approx(analytic).epsilon(0.02));
    }
}

TEST_CASE("hex dump round trip and parse errors") {
    std::mt19937_64 rng(31);
    std::vector<Message> q;
    for (int i = 0; i < 20; ++i) q.push_back(random_message(rng, FlitLayout::CxlUnopt, Direction::M2S));
    for (auto const &f : pack_flits(q, FlitLayout::CxlUnopt, Direction::M2S)) {
        auto hex = to_hex(f);
        CHECK(hex.size() == 512);
        CHECK(flit_from_hex(hex, FlitLayout::CxlUnopt).bytes == f.bytes);
    }
    std::string bad(512, '0');
    bad[37] = 'g';
    try {
        flit_from_hex(bad, FlitLayout::CxlOpt);
        FAIL("expected HexParseError");
    } catch (HexParseError const &e) {
        CHECK(e.offset == 37);
    }
    CHECK_THROWS_AS(flit_from_hex(std::string(510, '0'), FlitLayout::CxlOpt), HexParseError);
}

TEST_CASE("truncated stream") {
    // CHI: 12 granules take two whole writes and the header plus one data granule of a third
    std::vector<Message> q{write_req(1), write_req(2), write_req(3)};
    auto flits = pack_flits(q, FlitLayout::Chi, Direction::S2M);
    REQUIRE(flits.size() == 2);
    flits.pop_back();
    CHECK_THROWS_AS(unpack_flits(flits, FlitLayout::Chi, Direction::S2M), FlitFormatError);
}

TEST_CASE("direction mismatch is rejected") {
    FlitEncoder enc(FlitLayout::CxlOpt, Direction::M2S);
    CHECK_THROWS_AS(enc.push(read_req(1)), Error);
}
