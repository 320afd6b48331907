#include <algorithm>
#include <cmath>
#include <string>

#include "mbssl/error.hpp"
#include "mbssl/matrix.hpp"

namespace mbssl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::UnsupportedChannels: return "UnsupportedChannels";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::UnsupportedRatio: return "UnsupportedRatio";
    case Errc::InvalidFrequency: return "InvalidFrequency";
    case Errc::TooShort: return "TooShort";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::OffsetTooSmall: return "OffsetTooSmall";
    case Errc::AlreadyWrapped: return "AlreadyWrapped";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoMaskedFrames: return "NoMaskedFrames";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TargetTooLong: return "TargetTooLong";
    case Errc::InvalidTarget: return "InvalidTarget";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::IoError: return "IoError";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(Errc::DimensionMismatch,
                "matrix data has " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(rows_ * cols_));
  }
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(Errc::DimensionMismatch, "row of width " + std::to_string(values.size()) +
                                             " appended to matrix of width " +
                                             std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix log_softmax(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  if (scores.cols() == 0) return out;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto in = scores.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - peak);
    const double log_norm = peak + std::log(sum);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c] - log_norm;
  }
  return out;
}

}  // namespace mbssl
