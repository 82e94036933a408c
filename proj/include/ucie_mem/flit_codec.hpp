#pragma once

#include "ucie_mem/core_model.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ucie_mem {

inline constexpr std::size_t kFlitBytes = 256;

enum class FlitLayout : std::uint8_t { CxlUnopt, CxlOpt, Chi };

std::string_view to_string(FlitLayout l);
FlitLayout parse_layout(std::string_view text);
/// Layout carried by a symmetric approach. Throws for non-flit approaches.
FlitLayout layout_for(ApproachId id);

// ============================================================================
// CRC-16
// ============================================================================

/// MSB-first CRC-16; defaults to the CCITT polynomial x^16 + x^12 + x^5 + 1.
struct Crc16Params {
    std::uint16_t poly = 0x1021;
    std::uint16_t init = 0xFFFF;
    friend bool operator==(Crc16Params const &, Crc16Params const &) = default;
};

std::uint16_t crc16(std::span<std::uint8_t const> region, Crc16Params params = {});

enum class CrcRegion : std::uint8_t { Crc0, Crc1, Whole };
std::string_view to_string(CrcRegion r);

struct FieldOverflow : Error {
    using Error::Error;
};

struct CorruptFlit : Error {
    CorruptFlit(CrcRegion region, std::uint64_t index);
    CrcRegion region;
};

struct FlitFormatError : Error {
    using Error::Error;
};

struct HexParseError : Error {
    HexParseError(std::string const &what, std::size_t offset);
    std::size_t offset;
};

// ============================================================================
// Header fields
// ============================================================================

/// Opcodes; zero is reserved for NOP in every header width.
namespace opcode {
inline constexpr std::uint8_t kNop = 0;
inline constexpr std::uint8_t kMemRd = 1;
inline constexpr std::uint8_t kMemWr = 2;
inline constexpr std::uint8_t kMemData = 1;
inline constexpr std::uint8_t kCmp = 2;
} // namespace opcode

struct RequestHeader {
    std::uint8_t cmd = 0;
    std::uint8_t meta = 0;
    std::uint16_t tag = 0;
    std::uint64_t address = 0; ///< 46-bit cache-line address
    bool poison = false;

    bool carries_data() const { return cmd == opcode::kMemWr; }
    friend bool operator==(RequestHeader const &, RequestHeader const &) = default;
};

struct ResponseHeader {
    std::uint8_t cmd = 0;
    std::uint8_t meta = 0;
    std::uint8_t devload = 0;
    std::uint16_t tag = 0;
    bool poison = false;

    bool carries_data() const { return cmd == opcode::kMemData; }
    friend bool operator==(ResponseHeader const &, ResponseHeader const &) = default;
};

/// Field widths in row order: cmd, meta, devload, tag, address, poison.
struct HeaderWidths {
    int cmd, meta, devload, tag, address, poison;
    int total() const { return cmd + meta + devload + tag + address + poison; }
};

/// CHI granules reuse the unoptimized widths.
HeaderWidths request_widths(FlitLayout layout);
HeaderWidths response_widths(FlitLayout layout);

/// Little-endian bit string; bit i lives in byte i/8 at position i%8.
class BitString {
  public:
    BitString() = default;
    explicit BitString(std::size_t bits) : bytes_((bits + 7) / 8), bits_(bits) {}

    std::size_t size() const { return bits_; }
    bool bit(std::size_t i) const { return (bytes_[i / 8] >> (i % 8)) & 1U; }
    std::span<std::uint8_t const> bytes() const { return bytes_; }

    /// Appends the low `width` bits of `value`, LSB first.
    void append(std::uint64_t value, int width);
    std::uint64_t read(std::size_t offset, int width) const;
    bool all_zero() const;

    friend bool operator==(BitString const &, BitString const &) = default;

  private:
    std::vector<std::uint8_t> bytes_;
    std::size_t bits_ = 0;
};

BitString encode_request(RequestHeader const &h, FlitLayout layout);
RequestHeader decode_request(BitString const &bits, FlitLayout layout);
BitString encode_response(ResponseHeader const &h, FlitLayout layout);
ResponseHeader decode_response(BitString const &bits, FlitLayout layout);

// ============================================================================
// Messages
// ============================================================================

using CacheLine = std::array<std::uint8_t, 64>;

struct Message {
    std::variant<RequestHeader, ResponseHeader> header;
    std::optional<CacheLine> data;

    bool is_request() const { return std::holds_alternative<RequestHeader>(header); }
    bool carries_data() const;
    friend bool operator==(Message const &, Message const &) = default;
};

Message make_request(RequestHeader h, std::optional<CacheLine> data = std::nullopt);
Message make_response(ResponseHeader h, std::optional<CacheLine> data = std::nullopt);

// ============================================================================
// Flits
// ============================================================================

enum class ProtocolId : std::uint8_t { Nop = 0, CxlMem = 1, Other = 2 };
enum class AckNak : std::uint8_t { None = 0, Ack = 1, Nak = 2 };

/// 2-byte flit header: bits 0-2 protocol id, 3-10 sequence, 11-12 ack/nak.
struct FlitHeader {
    ProtocolId protocol = ProtocolId::Nop;
    std::uint8_t sequence = 0;
    AckNak ack_nak = AckNak::None;

    std::uint16_t encode() const;
    static FlitHeader decode(std::uint16_t raw);
    friend bool operator==(FlitHeader const &, FlitHeader const &) = default;
};

struct Flit {
    FlitLayout layout = FlitLayout::CxlUnopt;
    std::array<std::uint8_t, kFlitBytes> bytes{};
};

enum class ByteRole : std::uint8_t {
    FlitHdr,
    HeaderSlot, ///< H-slot (unoptimized) or HS-slot (optimized)
    GSlot,
    Granule,
    LinkHdr,
    ProtHdr,
    Reserved,
    Credit,
    Crc0,
    Crc1,
    Crc,
};

std::string_view to_string(ByteRole r);
/// Role of every byte of the layout.
std::array<ByteRole, kFlitBytes> byte_roles(FlitLayout layout);

struct SlotExtent {
    std::size_t offset;
    std::size_t size;
};

/// Header-only slot of the layout, if any.
std::optional<SlotExtent> header_slot(FlitLayout layout);
/// G-slots (16B) or granules (20B) in logical order.
std::vector<SlotExtent> payload_slots(FlitLayout layout);

FlitHeader read_flit_header(Flit const &f);
std::uint16_t read_credit(Flit const &f);

/// Writes the CRC field(s) over the current contents.
void seal(Flit &f, Crc16Params params = {});
/// Regions whose stored CRC disagrees with the contents.
std::vector<CrcRegion> failed_regions(Flit const &f, Crc16Params params = {});

std::string to_hex(Flit const &f);
/// Parses one 512-hex-char line. Throws HexParseError with the character offset.
Flit flit_from_hex(std::string_view line, FlitLayout layout);

// ============================================================================
// Streams
// ============================================================================

struct EncoderOptions {
    bool two_requests_per_gslot = false;
    std::uint16_t credit_return = 0;
    Crc16Params crc{};
};

/// Greedy flit packer for one link direction. Headers go to the header slot
/// first; G-slots carry pending data before any further headers; whatever is
/// left is NOP (all-zero).
class FlitEncoder {
  public:
    FlitEncoder(FlitLayout layout, Direction dir, EncoderOptions opts = {});

    void push(Message m);
    bool has_content() const { return !queue_.empty() || !data_chunks_.empty(); }
    std::size_t queued_messages() const { return queue_.size(); }

    /// Estimated slot positions needed to drain the backlog.
    double backlog_positions() const;
    /// Slot positions carrying messages in one flit (header slot included).
    int positions_per_flit() const;

    /// While open, the last emitted flit keeps announcing CXL.Mem for the next flit.
    void set_stream_open(bool open) { stream_open_ = open; }
    /// Next flit is a NOP flit that only announces the protocol (optimized layout after training).
    bool needs_announcement() const;

    Flit emit();
    /// NOP flit sent right after (re)training that announces CXL.Mem for the next flit.
    Flit prime();
    std::uint64_t flits_emitted() const { return sequence_; }

    FlitLayout layout() const { return layout_; }
    Direction direction() const { return dir_; }

  private:
    int header_capacity(bool header_slot) const;
    void fill_headers(Flit &f, SlotExtent slot, int capacity, bool granule);

    FlitLayout layout_;
    Direction dir_;
    EncoderOptions opts_;
    std::deque<Message> queue_;
    std::deque<std::array<std::uint8_t, 16>> data_chunks_;
    std::uint64_t sequence_ = 0;
    ProtocolId announced_ = ProtocolId::Nop;
    bool stream_open_ = false;
};

/// Decoder for one link direction. Holds partially received messages and, for
/// the optimized layout, the protocol identifier announced by the previous flit.
class FlitDecoder {
  public:
    FlitDecoder(FlitLayout layout, Direction dir, EncoderOptions opts = {});

    /// Checks CRC (throws CorruptFlit) and returns the messages completed by this flit.
    std::vector<Message> accept(Flit const &f);
    /// Link (re)training: the announced identifier parks at NOP.
    void retrain();
    bool has_partial() const { return !partial_.empty(); }
    std::uint64_t flits_accepted() const { return accepted_; }

  private:
    void decode_headers(Flit const &f, SlotExtent slot, bool granule);
    void take_data(std::span<std::uint8_t const> chunk);
    void flush(std::vector<Message> &out);

    FlitLayout layout_;
    Direction dir_;
    EncoderOptions opts_;
    struct Partial {
        Message msg;
        int chunks = 0;
    };
    std::deque<Partial> partial_;
    int pending_chunks_ = 0;
    ProtocolId parked_ = ProtocolId::Nop;
    std::uint64_t accepted_ = 0;
};

std::vector<Flit> pack_flits(std::span<Message const> queue, FlitLayout layout, Direction dir,
                             EncoderOptions opts = {});
std::vector<Message> unpack_flits(std::span<Flit const> flits, FlitLayout layout, Direction dir,
                                  EncoderOptions opts = {});

} // namespace ucie_mem
