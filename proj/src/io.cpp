#include "mbssl/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mbssl/error.hpp"

namespace mbssl {

namespace {

constexpr std::string_view kFmxMagic = "FMX1";
constexpr std::size_t kFmxHeader = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_fmx(const Matrix& m) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) {
    throw Error(Errc::InvalidConfig, "matrix too large for FMX1");
  }
  std::vector<std::uint8_t> out(kFmxMagic.begin(), kFmxMagic.end());
  out.reserve(kFmxHeader + 4 * m.data().size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Matrix decode_fmx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFmxHeader ||
      std::memcmp(bytes.data(), kFmxMagic.data(), kFmxMagic.size()) != 0) {
    throw Error(Errc::MalformedFile, "missing FMX1 header");
  }
  const std::uint64_t rows = get_u32(bytes, 4);
  const std::uint64_t cols = get_u32(bytes, 8);
  const std::uint64_t expected = kFmxHeader + 4 * rows * cols;
  if (bytes.size() != expected) {
    throw Error(Errc::MalformedFile, "FMX1 payload is " + std::to_string(bytes.size()) +
                                         " bytes, header implies " + std::to_string(expected));
  }
  std::vector<double> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kFmxHeader + 4 * i));
  }
  return Matrix(rows, cols, std::move(values));
}

Matrix read_fmx_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return decode_fmx(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_fmx_file(const std::filesystem::path& path, const Matrix& m) {
  write_binary_file(path, encode_fmx(m));
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  char num[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::snprintf(num, sizeof num, c == 0 ? "%.9g" : ",%.9g", row[c]);
      out += num;
    }
    out += '\n';
  }
  return out;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_binary_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

std::string format_id_records(std::span<const IdRecord> records) {
  std::string out;
  for (const auto& rec : records) {
    out += rec.utt_id;
    out += '\t';
    for (std::size_t i = 0; i < rec.ids.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(rec.ids[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::pair<std::string_view, std::string_view> split_record(std::string_view line,
                                                           std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos || tab == 0) {
    throw Error(Errc::MalformedFile,
                "line " + std::to_string(line_no) + ": expected utt_id<TAB>payload");
  }
  return {line.substr(0, tab), line.substr(tab + 1)};
}

}  // namespace

std::vector<IdRecord> parse_id_records(std::string_view text) {
  std::vector<IdRecord> records;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto [utt, payload] = split_record(line, line_no);
    IdRecord rec{std::string(utt), {}};
    const char* p = payload.data();
    const char* end = payload.data() + payload.size();
    while (p < end) {
      if (*p == ' ') {
        ++p;
        continue;
      }
      std::uint32_t v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{} || (next < end && *next != ' ')) {
        throw Error(Errc::MalformedFile,
                    "line " + std::to_string(line_no) + ": invalid id in '" + std::string(line) + "'");
      }
      rec.ids.push_back(v);
      p = next;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string format_mask_records(std::span<const MaskRecord> records) {
  std::string out;
  for (const auto& rec : records) {
    out += rec.utt_id;
    out += '\t';
    for (bool m : rec.masked) out += m ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::vector<MaskRecord> parse_mask_records(std::string_view text) {
  std::vector<MaskRecord> records;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto [utt, bits] = split_record(line, line_no);
    MaskRecord rec{std::string(utt), {}};
    rec.masked.reserve(bits.size());
    for (char c : bits) {
      if (c != '0' && c != '1') {
        throw Error(Errc::MalformedFile, "line " + std::to_string(line_no) + ": mask must be 0/1");
      }
      rec.masked.push_back(c == '1');
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace mbssl
