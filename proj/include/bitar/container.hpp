#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "bitar/bytes.hpp"
#include "bitar/correction.hpp"
#include "bitar/error.hpp"
#include "bitar/pyramid.hpp"

// Token-pyramid container, all integers little-endian:
//
//   offset  size  field
//        0     4  magic "BVP1"
//        4     2  format version (1)
//        6     1  quantizer kind (0 = LFQ, 1 = BSQ)
//        7     2  bits per cell d
//        9     2  schedule id (0xFFFF = custom)
//       11     2  scale count K
//       13     2  target height
//       15     2  target width
//       17     1  flags (bit 0: flip trace present)
//       18        custom schedules only: K x (u16 h, u16 w)
//                 payload: scale k = 1..K, cells row-major, ceil(d/8) bytes per
//                 cell, bit p at byte p/8, position p%8
//                 flip trace (flag bit 0): per scale f64 ratio, then a mask
//                 laid out like the payload
//      end-8     8  FNV-1a-64 of every preceding byte
//
// Version 1 also fixes the featurizer's lift seed (see featurizer.hpp).

namespace bitar {

inline constexpr char kContainerMagic[4] = {'B', 'V', 'P', '1'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderSize = 18;
inline constexpr std::size_t kChecksumSize = 8;
inline constexpr std::uint8_t kFlagFlipTrace = 0x01;

struct ContainerContents {
  TokenPyramid pyramid;
  std::optional<FlipTrace> trace;
};

inline std::size_t payload_size(const ScaleSchedule& s, int d) {
  return s.token_count() * static_cast<std::size_t>((d + 7) / 8);
}

inline std::size_t container_size(const ScaleSchedule& s, int d, bool with_trace) {
  std::size_t n = kContainerHeaderSize + payload_size(s, d) + kChecksumSize;
  if (s.id == kCustomScheduleId) n += 4 * static_cast<std::size_t>(s.size());
  if (with_trace) n += payload_size(s, d) + 8 * static_cast<std::size_t>(s.size());
  return n;
}

namespace detail {

inline void require_u16(long v, const char* what) {
  if (v < 0 || v > 0xFFFF) throw RangeError(std::string(what) + " does not fit in 16 bits");
}

inline BitResidual read_planes(ByteReader& in, Scale s, int d) {
  BitResidual r(s.h, s.w, d);
  const auto n = r.mutable_bytes().size();
  const auto* p = in.raw(n);
  std::copy(p, p + n, r.mutable_bytes().begin());
  if (d % 8 != 0) {
    const auto pad = static_cast<std::uint8_t>(0xFFu << (d % 8));
    const int bpc = r.bytes_per_cell();
    for (std::size_t c = 0; c < r.cells(); ++c)
      if (r.bytes()[c * static_cast<std::size_t>(bpc) + static_cast<std::size_t>(bpc - 1)] & pad)
        throw FormatError("nonzero padding bits in cell " + std::to_string(c));
  }
  return r;
}

}  // namespace detail

inline Bytes serialize(const TokenPyramid& p, const FlipTrace* trace = nullptr) {
  p.validate();
  const auto& s = p.schedule;
  const int d = p.quantizer.d;
  detail::require_u16(d, "d");
  detail::require_u16(s.size(), "scale count");
  detail::require_u16(p.target().h, "target height");
  detail::require_u16(p.target().w, "target width");
  if (trace) {
    if (trace->ratios.size() != p.residuals.size() || trace->masks.size() != p.residuals.size())
      throw ContractError("flip trace does not cover every scale");
    for (std::size_t k = 0; k < trace->masks.size(); ++k) {
      const auto& m = trace->masks[k];
      const auto& r = p.residuals[k];
      if (m.height() != r.height() || m.width() != r.width() || m.depth() != r.depth())
        throw ContractError("flip mask " + std::to_string(k + 1) + " shape differs from its residual");
    }
  }
  ByteWriter out;
  out.raw(kContainerMagic, 4);
  out.u16(kContainerVersion);
  out.u8(static_cast<std::uint8_t>(p.quantizer.kind));
  out.u16(static_cast<std::uint16_t>(d));
  out.u16(s.id);
  out.u16(static_cast<std::uint16_t>(s.size()));
  out.u16(static_cast<std::uint16_t>(p.target().h));
  out.u16(static_cast<std::uint16_t>(p.target().w));
  out.u8(trace ? kFlagFlipTrace : 0);
  if (s.id == kCustomScheduleId)
    for (const auto& sc : s.scales) {
      detail::require_u16(sc.h, "scale height");
      detail::require_u16(sc.w, "scale width");
      out.u16(static_cast<std::uint16_t>(sc.h));
      out.u16(static_cast<std::uint16_t>(sc.w));
    }
  for (const auto& r : p.residuals) out.raw(r.bytes().data(), r.bytes().size());
  if (trace)
    for (std::size_t k = 0; k < trace->masks.size(); ++k) {
      out.f64(trace->ratios[k]);
      out.raw(trace->masks[k].bytes().data(), trace->masks[k].bytes().size());
    }
  out.u64(fnv1a64(out.bytes().data(), out.size()));
  return out.take();
}

inline Bytes serialize(const TokenPyramid& p, const FlipTrace& trace) { return serialize(p, &trace); }

inline ContainerContents deserialize(const std::uint8_t* data, std::size_t n) {
  ByteReader in(data, n);
  const auto* magic = in.raw(4);
  if (!std::equal(magic, magic + 4, kContainerMagic))
    throw BadMagicError("not a pyramid container (bad magic)");
  const auto version = in.u16();
  if (version != kContainerVersion)
    throw VersionMismatchError("container version " + std::to_string(version) + ", expected " +
                               std::to_string(kContainerVersion));
  const auto kind = in.u8();
  const int d = in.u16();
  const auto id = in.u16();
  const int K = in.u16();
  const Scale target{in.u16(), in.u16()};
  const auto flags = in.u8();

  // Length and checksum before any semantic check: a damaged header must not
  // turn into a plausible pyramid.
  std::vector<Scale> custom;
  if (id == kCustomScheduleId)
    for (int k = 0; k < K; ++k) {
      const int h = in.u16();
      const int w = in.u16();
      custom.push_back({h, w});
    }
  if (n < kChecksumSize + in.position()) throw TruncatedError("container ends inside its header");
  const std::uint64_t stored = [&] {
    ByteReader tail(data + n - kChecksumSize, kChecksumSize);
    return tail.u64();
  }();

  if (flags & ~kFlagFlipTrace) {
    if (fnv1a64(data, n - kChecksumSize) != stored) throw ChecksumError("container checksum mismatch");
    throw FormatError("unknown container flags");
  }
  ScaleSchedule schedule;
  if (id == kCustomScheduleId) {
    for (const auto& c : custom)
      if (c.h < 1 || c.w < 1) {
        if (fnv1a64(data, n - kChecksumSize) != stored) throw ChecksumError("container checksum mismatch");
        throw FormatError("custom scale with a zero side");
      }
    if (custom.empty()) schedule.id = kCustomScheduleId;
    else schedule = custom_schedule(custom);
  } else {
    if (id >= builtin_schedules().size() || K < 1 || K > builtin_schedule(id).size()) {
      if (fnv1a64(data, n - kChecksumSize) != stored) throw ChecksumError("container checksum mismatch");
      throw FormatError("schedule id " + std::to_string(id) + " with " + std::to_string(K) +
                        " scales is not a builtin schedule prefix");
    }
    schedule = builtin_schedule(id).truncated(K);
  }
  const bool with_trace = flags & kFlagFlipTrace;
  const std::size_t expected = d >= 1 && K >= 1 ? container_size(schedule, d, with_trace) : 0;
  if (expected == 0 || n != expected) {
    if (n < expected) throw TruncatedError("container is " + std::to_string(n) + " bytes, header implies " +
                                           std::to_string(expected));
    if (fnv1a64(data, n - kChecksumSize) != stored) throw ChecksumError("container checksum mismatch");
    throw FormatError("container length " + std::to_string(n) + " does not match header (" +
                      std::to_string(expected) + ")");
  }
  if (fnv1a64(data, n - kChecksumSize) != stored) throw ChecksumError("container checksum mismatch");

  if (kind > 1) throw FormatError("unknown quantizer kind " + std::to_string(kind));
  if (schedule.final_scale().h != target.h || schedule.final_scale().w != target.w)
    throw FormatError("target " + format_scale(target) + " does not match the schedule's final scale " +
                      format_scale(schedule.final_scale()));
  ContainerContents out;
  out.pyramid.quantizer.kind = static_cast<QuantizerKind>(kind);
  out.pyramid.quantizer.d = d;
  out.pyramid.schedule = schedule;
  for (int k = 0; k < K; ++k) out.pyramid.residuals.push_back(detail::read_planes(in, schedule[k], d));
  if (with_trace) {
    FlipTrace t;
    for (int k = 0; k < K; ++k) {
      t.ratios.push_back(in.f64());
      t.masks.push_back(detail::read_planes(in, schedule[k], d));
    }
    out.trace = std::move(t);
  }
  return out;
}

inline ContainerContents deserialize(const Bytes& b) { return deserialize(b.data(), b.size()); }

}  // namespace bitar
