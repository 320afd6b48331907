#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mbssl/clustering.hpp"

namespace mbssl {

/// Decoder target derived from frame labels.
struct TargetSequence {
  std::string utt_id;
  std::vector<ClusterId> tokens;
  bool has_boundaries = false;

  friend bool operator==(const TargetSequence&, const TargetSequence&) = default;
};

/// Cluster vocabulary followed by the decoder's special tokens.
struct Vocabulary {
  std::size_t base_size = 0;
  /// CTC blank index over the finetuning alphabet.
  ClusterId blank_id = 0;

  ClusterId pad_id() const noexcept { return static_cast<ClusterId>(base_size); }
  ClusterId sos_id() const noexcept { return static_cast<ClusterId>(base_size + 1); }
  ClusterId eos_id() const noexcept { return static_cast<ClusterId>(base_size + 2); }
  std::size_t size_with_specials() const noexcept { return base_size + 3; }
};

/// Replaces each run of equal consecutive IDs by one ID.
std::vector<ClusterId> collapse_repeats(std::span<const ClusterId> ids);
TargetSequence collapse_repeats(const FrameLabelSequence& labels);

/// [sos] + tokens + [eos]. Throws AlreadyWrapped on a wrapped target.
TargetSequence wrap_with_boundaries(const TargetSequence& target, const Vocabulary& vocab);

struct MaskPlan {
  std::string utt_id;
  std::vector<bool> masked;
  std::vector<std::size_t> span_starts;
  std::size_t span_length = 0;
  double start_prob = 0.0;
  std::uint64_t seed = 0;

  std::size_t masked_count() const noexcept;
  double masked_fraction() const noexcept;
};

inline constexpr std::size_t kDefaultSpanLength = 10;
inline constexpr double kDefaultStartProb = 0.065;

/// Each frame independently starts a span with probability `start_prob`;
/// spans of `span_length` frames may overlap and are cut at the end.
MaskPlan span_mask(std::size_t num_frames, std::size_t span_length, double start_prob,
                   std::uint64_t seed);

/// Mask built from explicit span starts (starts >= num_frames are ignored).
std::vector<bool> mask_from_starts(std::size_t num_frames, std::size_t span_length,
                                   std::span<const std::size_t> starts);

/// I(ID; channel) in bits from the empirical joint counts of all frames.
double channel_mutual_information(std::span<const FrameLabelSequence> labels);

/// H(channel) in bits over all frames.
double channel_entropy(std::span<const FrameLabelSequence> labels);

}  // namespace mbssl
