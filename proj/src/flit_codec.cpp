#include "ucie_mem/flit_codec.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace ucie_mem {

std::string_view to_string(FlitLayout l) {
    switch (l) {
    case FlitLayout::CxlUnopt: return "cxl-unopt";
    case FlitLayout::CxlOpt: return "cxl-opt";
    case FlitLayout::Chi: return "chi";
    }
    return "unknown";
}

FlitLayout parse_layout(std::string_view text) {
    for (auto l : {FlitLayout::CxlUnopt, FlitLayout::CxlOpt, FlitLayout::Chi}) {
        if (to_string(l) == text) return l;
    }
    if (text == "chi-sym") return FlitLayout::Chi;
    throw Error(fmt::format("unknown flit layout '{}' (expected cxl-unopt, cxl-opt or chi)", text));
}

FlitLayout layout_for(ApproachId id) {
    switch (id) {
    case ApproachId::CxlUnopt: return FlitLayout::CxlUnopt;
    case ApproachId::CxlOpt: return FlitLayout::CxlOpt;
    case ApproachId::ChiSym: return FlitLayout::Chi;
    default: break;
    }
    throw Error(fmt::format("{} does not use flits", to_string(id)));
}

// ============================================================================
// CRC-16
// ============================================================================

namespace {

using CrcTable = std::array<std::uint16_t, 256>;

CrcTable make_table(std::uint16_t poly) {
    CrcTable t{};
    for (unsigned i = 0; i < 256; ++i) {
        std::uint16_t c = static_cast<std::uint16_t>(i << 8);
        for (int b = 0; b < 8; ++b) c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ poly) : (c << 1);
        t[i] = c;
    }
    return t;
}

} // namespace

std::uint16_t crc16(std::span<std::uint8_t const> region, Crc16Params params) {
    static CrcTable const default_table = make_table(Crc16Params{}.poly);
    CrcTable custom;
    CrcTable const *table = &default_table;
    if (params.poly != Crc16Params{}.poly) {
        custom = make_table(params.poly);
        table = &custom;
    }
    std::uint16_t crc = params.init;
    for (auto byte : region) crc = static_cast<std::uint16_t>((crc << 8) ^ (*table)[((crc >> 8) ^ byte) & 0xFF]);
    return crc;
}

std::string_view to_string(CrcRegion r) {
    switch (r) {
    case CrcRegion::Crc0: return "CRC0";
    case CrcRegion::Crc1: return "CRC1";
    case CrcRegion::Whole: return "CRC";
    }
    return "?";
}

CorruptFlit::CorruptFlit(CrcRegion r, std::uint64_t index)
    : Error(fmt::format("{} mismatch in flit {}", to_string(r), index)), region(r) {}

HexParseError::HexParseError(std::string const &what, std::size_t off) : Error(what), offset(off) {}

// ============================================================================
// Header fields
// ============================================================================

HeaderWidths request_widths(FlitLayout layout) {
    if (layout == FlitLayout::CxlOpt) return {3, 4, 0, 8, 46, 1};
    return {4, 7, 0, 16, 46, 1};
}

HeaderWidths response_widths(FlitLayout layout) {
    if (layout == FlitLayout::CxlOpt) return {3, 4, 0, 8, 0, 1};
    return {3, 4, 2, 16, 0, 1};
}

void BitString::append(std::uint64_t value, int width) {
    for (int i = 0; i < width; ++i, ++bits_) {
        if (bits_ / 8 >= bytes_.size()) bytes_.push_back(0);
        if ((value >> i) & 1U) bytes_[bits_ / 8] |= static_cast<std::uint8_t>(1U << (bits_ % 8));
    }
}

std::uint64_t BitString::read(std::size_t offset, int width) const {
    if (offset + static_cast<std::size_t>(width) > bits_) throw Error("bit string read out of range");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bit(offset + i)) << i;
    return v;
}

bool BitString::all_zero() const {
    return std::all_of(bytes_.begin(), bytes_.end(), [](auto b) { return b == 0; });
}

namespace {

void check_width(std::uint64_t value, int width, char const *field) {
    if (width < 64 && (value >> width) != 0) {
        throw FieldOverflow(fmt::format("{} value {} does not fit in {} bits", field, value, width));
    }
}

} // namespace

BitString encode_request(RequestHeader const &h, FlitLayout layout) {
    auto const w = request_widths(layout);
    check_width(h.cmd, w.cmd, "cmd");
    check_width(h.meta, w.meta, "meta_data");
    check_width(h.tag, w.tag, "tag");
    check_width(h.address, w.address, "address");
    BitString b;
    b.append(h.cmd, w.cmd);
    b.append(h.meta, w.meta);
    b.append(h.tag, w.tag);
    b.append(h.address, w.address);
    b.append(h.poison ? 1 : 0, w.poison);
    return b;
}

RequestHeader decode_request(BitString const &bits, FlitLayout layout) {
    auto const w = request_widths(layout);
    if (bits.size() < static_cast<std::size_t>(w.total())) throw FlitFormatError("request bit string too short");
    std::size_t off = 0;
    auto take = [&](int width) {
        auto v = bits.read(off, width);
        off += width;
        return v;
    };
    RequestHeader h;
    h.cmd = static_cast<std::uint8_t>(take(w.cmd));
    h.meta = static_cast<std::uint8_t>(take(w.meta));
    h.tag = static_cast<std::uint16_t>(take(w.tag));
    h.address = take(w.address);
    h.poison = take(w.poison) != 0;
    return h;
}

BitString encode_response(ResponseHeader const &h, FlitLayout layout) {
    auto const w = response_widths(layout);
    check_width(h.cmd, w.cmd, "cmd");
    check_width(h.meta, w.meta, "meta_data");
    check_width(h.devload, w.devload, "devload");
    check_width(h.tag, w.tag, "tag");
    BitString b;
    b.append(h.cmd, w.cmd);
    b.append(h.meta, w.meta);
    b.append(h.devload, w.devload);
    b.append(h.tag, w.tag);
    b.append(h.poison ? 1 : 0, w.poison);
    return b;
}

ResponseHeader decode_response(BitString const &bits, FlitLayout layout) {
    auto const w = response_widths(layout);
    if (bits.size() < static_cast<std::size_t>(w.total())) throw FlitFormatError("response bit string too short");
    std::size_t off = 0;
    auto take = [&](int width) {
        auto v = bits.read(off, width);
        off += width;
        return v;
    };
    ResponseHeader h;
    h.cmd = static_cast<std::uint8_t>(take(w.cmd));
    h.meta = static_cast<std::uint8_t>(take(w.meta));
    h.devload = static_cast<std::uint8_t>(take(w.devload));
    h.tag = static_cast<std::uint16_t>(take(w.tag));
    h.poison = take(w.poison) != 0;
    return h;
}

bool Message::carries_data() const {
    return std::visit([](auto const &h) { return h.carries_data(); }, header);
}

Message make_request(RequestHeader h, std::optional<CacheLine> data) {
    if (h.carries_data() && !data) data = CacheLine{};
    if (!h.carries_data()) data.reset();
    return {h, data};
}

Message make_response(ResponseHeader h, std::optional<CacheLine> data) {
    if (h.carries_data() && !data) data = CacheLine{};
    if (!h.carries_data()) data.reset();
    return {h, data};
}

// ============================================================================
// Flit structure
// ============================================================================

std::uint16_t FlitHeader::encode() const {
    return static_cast<std::uint16_t>((static_cast<unsigned>(protocol) & 0x7U) | (unsigned{sequence} << 3) |
                                      ((static_cast<unsigned>(ack_nak) & 0x3U) << 11));
}

FlitHeader FlitHeader::decode(std::uint16_t raw) {
    FlitHeader h;
    h.protocol = static_cast<ProtocolId>(raw & 0x7U);
    h.sequence = static_cast<std::uint8_t>((raw >> 3) & 0xFFU);
    h.ack_nak = static_cast<AckNak>((raw >> 11) & 0x3U);
    return h;
}

std::string_view to_string(ByteRole r) {
    switch (r) {
    case ByteRole::FlitHdr: return "flit-hdr";
    case ByteRole::HeaderSlot: return "header-slot";
    case ByteRole::GSlot: return "g-slot";
    case ByteRole::Granule: return "granule";
    case ByteRole::LinkHdr: return "link-hdr";
    case ByteRole::ProtHdr: return "prot-hdr";
    case ByteRole::Reserved: return "reserved";
    case ByteRole::Credit: return "credit";
    case ByteRole::Crc0: return "crc0";
    case ByteRole::Crc1: return "crc1";
    case ByteRole::Crc: return "crc";
    }
    return "?";
}

namespace {

// Header byte pairs of the CHI Format-X container.
constexpr std::array<std::size_t, 3> kChiLinkHdr{0, 126, 254};
constexpr std::array<std::size_t, 5> kChiProtHdr{62, 64, 128, 190, 192};

struct Fields {
    std::size_t hdr;
    std::size_t credit;
};

Fields fields_of(FlitLayout layout) {
    switch (layout) {
    case FlitLayout::CxlUnopt: return {0, 250};
    case FlitLayout::CxlOpt: return {250, 252};
    case FlitLayout::Chi: return {0, 126};
    }
    return {0, 0};
}

std::uint16_t load16(Flit const &f, std::size_t at) {
    return static_cast<std::uint16_t>(f.bytes[at] | (f.bytes[at + 1] << 8));
}

void store16(Flit &f, std::size_t at, std::uint16_t v) {
    f.bytes[at] = static_cast<std::uint8_t>(v & 0xFF);
    f.bytes[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

} // namespace

std::array<ByteRole, kFlitBytes> byte_roles(FlitLayout layout) {
    std::array<ByteRole, kFlitBytes> roles{};
    auto fill = [&](std::size_t from, std::size_t n, ByteRole r) { std::fill_n(roles.begin() + from, n, r); };
    switch (layout) {
    case FlitLayout::CxlUnopt:
        fill(0, 2, ByteRole::FlitHdr);
        fill(2, 14, ByteRole::HeaderSlot);
        fill(16, 224, ByteRole::GSlot);
        fill(240, 10, ByteRole::Reserved);
        fill(250, 2, ByteRole::Credit);
        fill(252, 2, ByteRole::Crc0);
        fill(254, 2, ByteRole::Crc1);
        break;
    case FlitLayout::CxlOpt:
        fill(0, 240, ByteRole::GSlot);
        fill(240, 10, ByteRole::HeaderSlot);
        fill(250, 2, ByteRole::FlitHdr);
        fill(252, 2, ByteRole::Credit);
        fill(254, 2, ByteRole::Crc);
        break;
    case FlitLayout::Chi:
        fill(0, kFlitBytes, ByteRole::Granule);
        for (auto at : kChiLinkHdr) fill(at, 2, ByteRole::LinkHdr);
        for (auto at : kChiProtHdr) fill(at, 2, ByteRole::ProtHdr);
        break;
    }
    return roles;
}

std::optional<SlotExtent> header_slot(FlitLayout layout) {
    switch (layout) {
    case FlitLayout::CxlUnopt: return SlotExtent{2, 14};
    case FlitLayout::CxlOpt: return SlotExtent{240, 10};
    case FlitLayout::Chi: return std::nullopt;
    }
    return std::nullopt;
}

std::vector<SlotExtent> payload_slots(FlitLayout layout) {
    std::vector<SlotExtent> out;
    switch (layout) {
    case FlitLayout::CxlUnopt:
        for (std::size_t i = 1; i <= 14; ++i) out.push_back({16 * i, 16});
        break;
    case FlitLayout::CxlOpt:
        for (std::size_t i = 0; i < 15; ++i) out.push_back({16 * i, 16});
        break;
    case FlitLayout::Chi: {
        // Granules are contiguous 20B runs threaded between the header byte pairs.
        auto const roles = byte_roles(layout);
        std::size_t at = 0;
        while (out.size() < 12) {
            while (roles[at] != ByteRole::Granule) ++at;
            out.push_back({at, 20});
            std::size_t n = 0;
            while (n < 20) {
                if (roles[at] == ByteRole::Granule) ++n;
                ++at;
            }
        }
        break;
    }
    }
    return out;
}

namespace {

// Granule byte i of a CHI granule starting at `start`, skipping header pairs.
std::size_t granule_byte(std::size_t start, std::size_t i) {
    static auto const roles = byte_roles(FlitLayout::Chi);
    std::size_t at = start;
    for (;;) {
        if (roles[at] == ByteRole::Granule) {
            if (i == 0) return at;
            --i;
        }
        ++at;
    }
}

void write_slot_bytes(Flit &f, SlotExtent slot, std::size_t offset, std::span<std::uint8_t const> src, bool granule) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto const at = granule ? granule_byte(slot.offset, offset + i) : slot.offset + offset + i;
        f.bytes[at] = src[i];
    }
}

std::vector<std::uint8_t> read_slot_bytes(Flit const &f, SlotExtent slot, std::size_t offset, std::size_t n,
                                          bool granule) {
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f.bytes[granule ? granule_byte(slot.offset, offset + i) : slot.offset + offset + i];
    }
    return out;
}

enum GranuleType : std::uint8_t { kGranuleNop = 0, kGranuleRequest = 1, kGranuleResponse = 2, kGranuleData = 3 };

// CHI granules: byte 0 type, headers from byte 1, data payload at bytes 4-19.
constexpr std::size_t kGranuleHeaderOffset = 1;
constexpr std::size_t kGranuleDataOffset = 4;

} // namespace

FlitHeader read_flit_header(Flit const &f) { return FlitHeader::decode(load16(f, fields_of(f.layout).hdr)); }

std::uint16_t read_credit(Flit const &f) { return load16(f, fields_of(f.layout).credit); }

void seal(Flit &f, Crc16Params params) {
    std::span<std::uint8_t const> const all(f.bytes);
    if (f.layout == FlitLayout::CxlUnopt) {
        store16(f, 252, crc16(all.subspan(0, 128), params));
        store16(f, 254, crc16(all.subspan(128, 124), params));
    } else {
        store16(f, 254, crc16(all.subspan(0, 254), params));
    }
}

std::vector<CrcRegion> failed_regions(Flit const &f, Crc16Params params) {
    std::span<std::uint8_t const> const all(f.bytes);
    std::vector<CrcRegion> out;
    if (f.layout == FlitLayout::CxlUnopt) {
        if (crc16(all.subspan(0, 128), params) != load16(f, 252)) out.push_back(CrcRegion::Crc0);
        if (crc16(all.subspan(128, 124), params) != load16(f, 254)) out.push_back(CrcRegion::Crc1);
    } else if (crc16(all.subspan(0, 254), params) != load16(f, 254)) {
        out.push_back(CrcRegion::Whole);
    }
    return out;
}

std::string to_hex(Flit const &f) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(2 * kFlitBytes);
    for (auto b : f.bytes) {
        s.push_back(kDigits[b >> 4]);
        s.push_back(kDigits[b & 0xF]);
    }
    return s;
}

Flit flit_from_hex(std::string_view line, FlitLayout layout) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    auto nibble = [&](std::size_t i) -> std::uint8_t {
        char const c = line[i];
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
        throw HexParseError(fmt::format("invalid hex character '{}' at offset {}", c, i), i);
    };
    for (std::size_t i = 0; i < std::min(line.size(), 2 * kFlitBytes); ++i) nibble(i);
    if (line.size() != 2 * kFlitBytes) {
        auto const off = std::min(line.size(), 2 * kFlitBytes);
        throw HexParseError(fmt::format("flit line has {} hex chars, expected {}", line.size(), 2 * kFlitBytes), off);
    }
    Flit f;
    f.layout = layout;
    for (std::size_t i = 0; i < kFlitBytes; ++i) {
        f.bytes[i] = static_cast<std::uint8_t>((nibble(2 * i) << 4) | nibble(2 * i + 1));
    }
    return f;
}

// ============================================================================
// Encoder
// ============================================================================

FlitEncoder::FlitEncoder(FlitLayout layout, Direction dir, EncoderOptions opts)
    : layout_(layout), dir_(dir), opts_(opts) {}

void FlitEncoder::push(Message m) {
    if (m.is_request() != (dir_ == Direction::S2M)) {
        throw Error(fmt::format("{} carries {} only", to_string(dir_), dir_ == Direction::S2M ? "requests" : "responses"));
    }
    if (m.carries_data() != m.data.has_value()) throw Error("data presence does not match the opcode");
    queue_.push_back(std::move(m));
}

int FlitEncoder::header_capacity(bool is_header_slot) const {
    bool const requests = dir_ == Direction::S2M;
    switch (layout_) {
    case FlitLayout::CxlUnopt: return requests ? 1 : 2;
    case FlitLayout::CxlOpt:
        if (requests) return (!is_header_slot && opts_.two_requests_per_gslot) ? 2 : 1;
        return 4;
    case FlitLayout::Chi: return requests ? 1 : 2;
    }
    return 1;
}

int FlitEncoder::positions_per_flit() const {
    switch (layout_) {
    case FlitLayout::CxlUnopt: return 15;
    case FlitLayout::CxlOpt: return 16;
    case FlitLayout::Chi: return 12;
    }
    return 0;
}

double FlitEncoder::backlog_positions() const {
    double const per_header = 1.0 / header_capacity(false);
    double n = static_cast<double>(data_chunks_.size());
    for (auto const &m : queue_) n += per_header + (m.carries_data() ? 4.0 : 0.0);
    return n;
}

bool FlitEncoder::needs_announcement() const {
    return layout_ == FlitLayout::CxlOpt && announced_ == ProtocolId::Nop && has_content();
}

void FlitEncoder::fill_headers(Flit &f, SlotExtent slot, int capacity, bool granule) {
    bool const requests = dir_ == Direction::S2M;
    BitString bits;
    int n = 0;
    while (n < capacity && !queue_.empty()) {
        auto m = std::move(queue_.front());
        queue_.pop_front();
        auto const enc = requests ? encode_request(std::get<RequestHeader>(m.header), layout_)
                                  : encode_response(std::get<ResponseHeader>(m.header), layout_);
        for (std::size_t i = 0; i < enc.size(); ++i) bits.append(enc.bit(i), 1);
        if (m.data) {
            for (std::size_t c = 0; c < 4; ++c) {
                std::array<std::uint8_t, 16> chunk{};
                std::copy_n(m.data->begin() + 16 * c, 16, chunk.begin());
                data_chunks_.push_back(chunk);
            }
        }
        ++n;
    }
    if (n == 0) return;
    if (granule) {
        std::uint8_t const type = requests ? kGranuleRequest : kGranuleResponse;
        write_slot_bytes(f, slot, 0, std::span(&type, 1), true);
        write_slot_bytes(f, slot, kGranuleHeaderOffset, bits.bytes(), true);
    } else {
        write_slot_bytes(f, slot, 0, bits.bytes(), false);
    }
}

Flit FlitEncoder::emit() {
    Flit f;
    f.layout = layout_;
    FlitHeader hdr;
    hdr.sequence = static_cast<std::uint8_t>(sequence_ & 0xFF);

    if (needs_announcement()) {
        hdr.protocol = ProtocolId::CxlMem;
        announced_ = ProtocolId::CxlMem;
    } else {
        bool const carried = has_content();
        bool const granule = layout_ == FlitLayout::Chi;
        if (auto hs = header_slot(layout_)) fill_headers(f, *hs, header_capacity(true), false);
        for (auto slot : payload_slots(layout_)) {
            if (!data_chunks_.empty()) {
                auto const &chunk = data_chunks_.front();
                if (granule) {
                    std::uint8_t const type = kGranuleData;
                    write_slot_bytes(f, slot, 0, std::span(&type, 1), true);
                    write_slot_bytes(f, slot, kGranuleDataOffset, chunk, true);
                } else {
                    write_slot_bytes(f, slot, 0, chunk, false);
                }
                data_chunks_.pop_front();
            } else if (!queue_.empty()) {
                fill_headers(f, slot, header_capacity(false), granule);
            }
        }
        if (layout_ == FlitLayout::CxlOpt) {
            // The identifier describes the flit that follows this one.
            hdr.protocol = (has_content() || stream_open_) ? ProtocolId::CxlMem : ProtocolId::Nop;
            announced_ = hdr.protocol;
        } else {
            hdr.protocol = carried ? ProtocolId::CxlMem : ProtocolId::Nop;
        }
    }

    auto const fields = fields_of(layout_);
    store16(f, fields.hdr, hdr.encode());
    store16(f, fields.credit, opts_.credit_return);
    seal(f, opts_.crc);
    ++sequence_;
    return f;
}

Flit FlitEncoder::prime() {
    Flit f;
    f.layout = layout_;
    FlitHeader hdr;
    hdr.sequence = static_cast<std::uint8_t>(sequence_ & 0xFF);
    hdr.protocol = ProtocolId::CxlMem;
    auto const fields = fields_of(layout_);
    store16(f, fields.hdr, hdr.encode());
    store16(f, fields.credit, opts_.credit_return);
    seal(f, opts_.crc);
    announced_ = ProtocolId::CxlMem;
    ++sequence_;
    return f;
}

// ============================================================================
// Decoder
// ============================================================================

FlitDecoder::FlitDecoder(FlitLayout layout, Direction dir, EncoderOptions opts)
    : layout_(layout), dir_(dir), opts_(opts) {}

void FlitDecoder::retrain() {
    parked_ = ProtocolId::Nop;
    partial_.clear();
    pending_chunks_ = 0;
}

void FlitDecoder::decode_headers(Flit const &f, SlotExtent slot, bool is_header_slot) {
    bool const granule = layout_ == FlitLayout::Chi;
    bool const requests = dir_ == Direction::S2M;
    int const width = requests ? request_widths(layout_).total() : response_widths(layout_).total();
    int capacity = 1;
    if (layout_ == FlitLayout::CxlOpt) {
        capacity = requests ? ((!is_header_slot && opts_.two_requests_per_gslot) ? 2 : 1) : 4;
    } else {
        capacity = requests ? 1 : 2;
    }
    std::size_t const offset = granule ? kGranuleHeaderOffset : 0;
    std::size_t const nbytes = (static_cast<std::size_t>(capacity * width) + 7) / 8;
    auto const raw = read_slot_bytes(f, slot, offset, nbytes, granule);
    BitString bits;
    for (auto b : raw) bits.append(b, 8);
    for (int k = 0; k < capacity; ++k) {
        BitString one;
        for (int i = 0; i < width; ++i) one.append(bits.bit(static_cast<std::size_t>(k * width + i)), 1);
        Message m = requests ? Message{decode_request(one, layout_), std::nullopt}
                             : Message{decode_response(one, layout_), std::nullopt};
        bool const nop = std::visit([](auto const &h) { return h.cmd == opcode::kNop; }, m.header);
        if (nop) continue;
        if (m.carries_data()) {
            m.data = CacheLine{};
            pending_chunks_ += 4;
        }
        partial_.push_back({std::move(m), 0});
    }
}

void FlitDecoder::take_data(std::span<std::uint8_t const> chunk) {
    for (auto &p : partial_) {
        if (p.msg.data && p.chunks < 4) {
            std::copy(chunk.begin(), chunk.end(), p.msg.data->begin() + 16 * p.chunks);
            ++p.chunks;
            --pending_chunks_;
            return;
        }
    }
    throw FlitFormatError("data slot without a pending header");
}

void FlitDecoder::flush(std::vector<Message> &out) {
    while (!partial_.empty()) {
        auto &p = partial_.front();
        if (p.msg.data && p.chunks < 4) break;
        out.push_back(std::move(p.msg));
        partial_.pop_front();
    }
}

std::vector<Message> FlitDecoder::accept(Flit const &f) {
    if (f.layout != layout_) throw FlitFormatError("flit layout does not match the decoder");
    if (auto failed = failed_regions(f, opts_.crc); !failed.empty()) throw CorruptFlit(failed.front(), accepted_);
    ++accepted_;

    auto const hdr = read_flit_header(f);
    ProtocolId current = hdr.protocol;
    if (layout_ == FlitLayout::CxlOpt) {
        current = parked_;
        parked_ = hdr.protocol;
    }
    std::vector<Message> out;
    if (current != ProtocolId::CxlMem) return out;

    if (auto hs = header_slot(layout_)) decode_headers(f, *hs, true);
    for (auto slot : payload_slots(layout_)) {
        if (layout_ == FlitLayout::Chi) {
            auto const type = read_slot_bytes(f, slot, 0, 1, true)[0];
            switch (type) {
            case kGranuleNop: break;
            case kGranuleData: take_data(read_slot_bytes(f, slot, kGranuleDataOffset, 16, true)); break;
            case kGranuleRequest:
            case kGranuleResponse:
                if ((type == kGranuleRequest) != (dir_ == Direction::S2M)) {
                    throw FlitFormatError("granule message kind does not match the direction");
                }
                decode_headers(f, slot, false);
                break;
            default: throw FlitFormatError(fmt::format("unknown granule type {}", type));
            }
        } else if (pending_chunks_ > 0) {
            take_data(read_slot_bytes(f, slot, 0, 16, false));
        } else {
            decode_headers(f, slot, false);
        }
    }
    flush(out);
    return out;
}

std::vector<Flit> pack_flits(std::span<Message const> queue, FlitLayout layout, Direction dir, EncoderOptions opts) {
    FlitEncoder enc(layout, dir, opts);
    for (auto const &m : queue) enc.push(m);
    std::vector<Flit> out;
    while (enc.has_content()) out.push_back(enc.emit());
    return out;
}

std::vector<Message> unpack_flits(std::span<Flit const> flits, FlitLayout layout, Direction dir, EncoderOptions opts) {
    FlitDecoder dec(layout, dir, opts);
    std::vector<Message> out;
    for (auto const &f : flits) {
        auto msgs = dec.accept(f);
        std::move(msgs.begin(), msgs.end(), std::back_inserter(out));
    }
    if (dec.has_partial()) throw FlitFormatError("flit stream ends inside a message");
    return out;
}

} // namespace ucie_mem
