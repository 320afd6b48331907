#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbssl/matrix.hpp"

namespace mbssl {

// FMX1 matrix files: "FMX1", u32 rows, u32 cols, rows*cols float32, all
// little-endian, row-major.
std::vector<std::uint8_t> encode_fmx(const Matrix& m);
Matrix decode_fmx(std::span<const std::uint8_t> bytes);

Matrix read_fmx_file(const std::filesystem::path& path);
void write_fmx_file(const std::filesystem::path& path, const Matrix& m);

/// One row per line, comma-separated, "%.9g".
std::string matrix_to_csv(const Matrix& m);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// `utt_id<TAB>id id id ...` records, used for frame labels and targets.
struct IdRecord {
  std::string utt_id;
  std::vector<std::uint32_t> ids;

  friend bool operator==(const IdRecord&, const IdRecord&) = default;
};

std::string format_id_records(std::span<const IdRecord> records);
std::vector<IdRecord> parse_id_records(std::string_view text);

/// `utt_id<TAB>0110...` records.
struct MaskRecord {
  std::string utt_id;
  std::vector<bool> masked;

  friend bool operator==(const MaskRecord&, const MaskRecord&) = default;
};

std::string format_mask_records(std::span<const MaskRecord> records);
std::vector<MaskRecord> parse_mask_records(std::string_view text);

/// Splits on '\n', dropping a trailing '\r' and the final empty line.
std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace mbssl
