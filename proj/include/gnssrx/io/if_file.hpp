#pragma once

// Binary IF sample files.
//
// Header, 40 bytes, little-endian:
//   0  char[8]  "GNSSIF01"
//   8  u32      version (1)
//  12  f64      sample rate, Hz
//  20  u8       sample format: 0 int8, 1 int16, 2 float32
//  21  u8       layout: 0 interleaved I/Q
//  22  u8[10]   reserved, zero
//  32  f64      full scale: largest |component| at write time
// Payload: I0 Q0 I1 Q1 ... in the sample format. Integer formats store
// round(x / scale · qmax) with qmax = 127 or 32767.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/io/text.hpp"
#include "gnssrx/signal/synthesis.hpp"

namespace gnssrx::io {

enum class SampleFormat : std::uint8_t { Int8 = 0, Int16 = 1, Float32 = 2 };

inline constexpr std::string_view kIfMagic = "GNSSIF01";
inline constexpr std::uint32_t kIfVersion = 1;
inline constexpr std::size_t kIfHeaderSize = 40;

struct IfFileHeader {
  std::uint32_t version = kIfVersion;
  double sample_rate_hz = 0.0;
  SampleFormat format = SampleFormat::Float32;
  std::uint8_t layout = 0;
  double scale = 1.0;

  friend bool operator==(const IfFileHeader&, const IfFileHeader&) = default;
};

inline std::size_t sample_width(SampleFormat f) {
  switch (f) {
    case SampleFormat::Int8: return 1;
    case SampleFormat::Int16: return 2;
    case SampleFormat::Float32: return 4;
  }
  throw FormatError("unknown sample format");
}

inline std::string to_string(SampleFormat f) {
  switch (f) {
    case SampleFormat::Int8: return "int8";
    case SampleFormat::Int16: return "int16";
    case SampleFormat::Float32: return "float32";
  }
  return "unknown";
}

inline SampleFormat parse_sample_format(std::string_view s) {
  if (s == "int8") return SampleFormat::Int8;
  if (s == "int16") return SampleFormat::Int16;
  if (s == "float32") return SampleFormat::Float32;
  throw InvalidInput("unknown sample format '" + std::string(s) + "' (expected int8, int16 or float32)");
}

namespace detail {

template <class U>
void put_le(std::vector<std::byte>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(const std::byte* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<U>(p[i])) << (8 * i);
  return v;
}

inline double quantization_max(SampleFormat f) { return f == SampleFormat::Int8 ? 127.0 : 32767.0; }

}  // namespace detail

inline std::vector<std::byte> encode_header(const IfFileHeader& h) {
  std::vector<std::byte> out;
  out.reserve(kIfHeaderSize);
  for (char c : kIfMagic) out.push_back(static_cast<std::byte>(c));
  detail::put_le(out, h.version);
  detail::put_le(out, std::bit_cast<std::uint64_t>(h.sample_rate_hz));
  out.push_back(static_cast<std::byte>(h.format));
  out.push_back(static_cast<std::byte>(h.layout));
  out.insert(out.end(), 10, std::byte{0});
  detail::put_le(out, std::bit_cast<std::uint64_t>(h.scale));
  return out;
}

inline IfFileHeader decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kIfHeaderSize) throw FormatError("IF file: truncated header");
  if (std::memcmp(bytes.data(), kIfMagic.data(), kIfMagic.size()) != 0) throw FormatError("IF file: bad magic");
  IfFileHeader h;
  h.version = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (h.version != kIfVersion) throw FormatError("IF file: unsupported version " + std::to_string(h.version));
  h.sample_rate_hz = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + 12));
  const auto fmt = std::to_integer<std::uint8_t>(bytes[20]);
  if (fmt > 2) throw FormatError("IF file: unknown sample format " + std::to_string(fmt));
  h.format = static_cast<SampleFormat>(fmt);
  h.layout = std::to_integer<std::uint8_t>(bytes[21]);
  if (h.layout != 0) throw FormatError("IF file: unknown layout " + std::to_string(h.layout));
  for (std::size_t i = 22; i < 32; ++i)
    if (bytes[i] != std::byte{0}) throw FormatError("IF file: reserved bytes are not zero");
  h.scale = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + 32));
  if (!(h.sample_rate_hz > 0.0) || !std::isfinite(h.sample_rate_hz)) throw FormatError("IF file: bad sample rate");
  if (!(h.scale >= 0.0) || !std::isfinite(h.scale)) throw FormatError("IF file: bad scale");
  return h;
}

template <Real T>
std::vector<std::byte> encode_if(const IqBuffer<T>& buf, SampleFormat format) {
  IfFileHeader h;
  h.sample_rate_hz = buf.sample_rate_hz();
  h.format = format;
  double full_scale = 0.0;
  for (const auto& s : buf) full_scale = std::max({full_scale, std::abs(double(s.real())), std::abs(double(s.imag()))});
  h.scale = full_scale;
  auto out = encode_header(h);
  const std::size_t width = sample_width(format);
  out.reserve(kIfHeaderSize + 2 * width * buf.size());
  const double qmax = detail::quantization_max(format);
  auto quantize = [&](double x) { return full_scale > 0.0 ? std::lround(x / full_scale * qmax) : 0L; };
  for (const auto& s : buf) {
    for (double x : {double(s.real()), double(s.imag())}) {
      switch (format) {
        case SampleFormat::Int8: out.push_back(static_cast<std::byte>(static_cast<std::int8_t>(quantize(x)))); break;
        case SampleFormat::Int16:
          detail::put_le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(quantize(x))));
          break;
        case SampleFormat::Float32: detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x))); break;
      }
    }
  }
  return out;
}

template <Real T>
IqBuffer<T> decode_if(std::span<const std::byte> bytes, IfFileHeader* header_out = nullptr) {
  const IfFileHeader h = decode_header(bytes);
  const auto payload = bytes.subspan(kIfHeaderSize);
  const std::size_t width = sample_width(h.format);
  if (payload.empty()) throw FormatError("IF file: no samples");
  if (payload.size() % (2 * width) != 0) throw FormatError("IF file: truncated payload");
  const std::size_t n = payload.size() / (2 * width);
  const double qmax = detail::quantization_max(h.format);
  std::vector<std::complex<T>> samples(n);
  auto component = [&](std::size_t idx) -> double {
    const std::byte* p = payload.data() + idx * width;
    switch (h.format) {
      case SampleFormat::Int8: return static_cast<std::int8_t>(std::to_integer<std::uint8_t>(*p)) / qmax * h.scale;
      case SampleFormat::Int16:
        return static_cast<std::int16_t>(detail::get_le<std::uint16_t>(p)) / qmax * h.scale;
      case SampleFormat::Float32: return std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
    }
    return 0.0;
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double re = component(2 * k), im = component(2 * k + 1);
    if (!std::isfinite(re) || !std::isfinite(im)) throw FormatError("IF file: non-finite sample");
    samples[k] = {static_cast<T>(re), static_cast<T>(im)};
  }
  if (header_out) *header_out = h;
  return IqBuffer<T>(std::move(samples), h.sample_rate_hz);
}

inline std::vector<std::byte> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path + "'");
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

inline void write_file_bytes(const std::string& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write error on '" + path + "'");
}

template <Real T>
void write_if_file(const std::string& path, const IqBuffer<T>& buf, SampleFormat format) {
  write_file_bytes(path, encode_if(buf, format));
}

template <Real T>
IqBuffer<T> read_if_file(const std::string& path, IfFileHeader* header_out = nullptr) {
  const auto bytes = read_file_bytes(path);
  return decode_if<T>(bytes, header_out);
}

// Truth sidecar: the SignalSpec behind a synthesized file, one key=value per line.

inline std::string truth_path(const std::string& if_path) { return if_path + ".truth"; }

inline std::string format_truth(const SignalSpec& s, double cn0_dbhz = std::nan("")) {
  std::ostringstream out;
  out << "prn=" << s.prn << '\n'
      << "doppler_hz=" << format_number(s.doppler_hz) << '\n'
      << "code_phase_samples=" << format_number(s.code_phase_samples) << '\n'
      << "carrier_phase_cycles=" << format_number(s.carrier_phase_cycles) << '\n'
      << "sample_rate_hz=" << format_number(s.sample_rate_hz) << '\n'
      << "duration_s=" << format_number(s.duration_s) << '\n'
      << "noise_sigma=" << format_number(s.noise_sigma) << '\n'
      << "seed=" << s.seed << '\n'
      << "amplitude=" << format_number(s.amplitude) << '\n';
  if (!std::isnan(cn0_dbhz)) out << "cn0_dbhz=" << format_number(cn0_dbhz) << '\n';
  return out.str();
}

inline SignalSpec parse_truth(std::string_view text) {
  SignalSpec s;
  for (const auto& [key, value, line] : parse_key_values(text)) {
    if (key == "prn") s.prn = parse_integer<int>(value, key);
    else if (key == "doppler_hz") s.doppler_hz = parse_number(value, key);
    else if (key == "code_phase_samples") s.code_phase_samples = parse_number(value, key);
    else if (key == "carrier_phase_cycles") s.carrier_phase_cycles = parse_number(value, key);
    else if (key == "sample_rate_hz") s.sample_rate_hz = parse_number(value, key);
    else if (key == "duration_s") s.duration_s = parse_number(value, key);
    else if (key == "noise_sigma") s.noise_sigma = parse_number(value, key);
    else if (key == "seed") s.seed = parse_integer<std::uint64_t>(value, key);
    else if (key == "amplitude") s.amplitude = parse_number(value, key);
    else if (key != "cn0_dbhz") throw FormatError("truth file line " + std::to_string(line) + ": unknown key '" + key + "'");
  }
  return s;
}

}  // namespace gnssrx::io
