#include "mbssl/labeling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <map>
#include <string>

#include "mbssl/error.hpp"
#include "mbssl/random.hpp"

namespace mbssl {

std::vector<ClusterId> collapse_repeats(std::span<const ClusterId> ids) {
  std::vector<ClusterId> out;
  out.reserve(ids.size());
  std::unique_copy(ids.begin(), ids.end(), std::back_inserter(out));
  return out;
}

TargetSequence collapse_repeats(const FrameLabelSequence& labels) {
  return {labels.utt_id, collapse_repeats(labels.labels), false};
}

TargetSequence wrap_with_boundaries(const TargetSequence& target, const Vocabulary& vocab) {
  if (target.has_boundaries) {
    throw Error(Errc::AlreadyWrapped, "target '" + target.utt_id + "' already has sos/eos");
  }
  TargetSequence out{target.utt_id, {}, true};
  out.tokens.reserve(target.tokens.size() + 2);
  out.tokens.push_back(vocab.sos_id());
  out.tokens.insert(out.tokens.end(), target.tokens.begin(), target.tokens.end());
  out.tokens.push_back(vocab.eos_id());
  return out;
}

std::size_t MaskPlan::masked_count() const noexcept {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

double MaskPlan::masked_fraction() const noexcept {
  return masked.empty() ? 0.0
                        : static_cast<double>(masked_count()) / static_cast<double>(masked.size());
}

std::vector<bool> mask_from_starts(std::size_t num_frames, std::size_t span_length,
                                   std::span<const std::size_t> starts) {
  std::vector<bool> masked(num_frames, false);
  for (std::size_t start : starts) {
    if (start >= num_frames) continue;
    const std::size_t end = std::min(num_frames, start + span_length);
    std::fill(masked.begin() + static_cast<std::ptrdiff_t>(start),
              masked.begin() + static_cast<std::ptrdiff_t>(end), true);
  }
  return masked;
}

MaskPlan span_mask(std::size_t num_frames, std::size_t span_length, double start_prob,
                   std::uint64_t seed) {
  if (num_frames == 0) throw Error(Errc::InvalidConfig, "num_frames must be >= 1");
  if (span_length == 0) throw Error(Errc::InvalidConfig, "span_length must be >= 1");
  if (!(start_prob > 0.0 && start_prob < 1.0)) {
    throw Error(Errc::InvalidConfig, "start_prob must lie in (0, 1)");
  }
  MaskPlan plan;
  plan.span_length = span_length;
  plan.start_prob = start_prob;
  plan.seed = seed;
  Rng rng(seed);
  for (std::size_t t = 0; t < num_frames; ++t) {
    if (rng.uniform() < start_prob) plan.span_starts.push_back(t);
  }
  plan.masked = mask_from_starts(num_frames, span_length, plan.span_starts);
  return plan;
}

namespace {

struct ChannelCounts {
  std::map<ClusterId, std::array<std::size_t, 2>> joint;
  std::array<std::size_t, 2> per_channel{0, 0};
  std::size_t total = 0;
};

ChannelCounts count_frames(std::span<const FrameLabelSequence> labels) {
  ChannelCounts counts;
  for (const auto& seq : labels) {
    const auto c = static_cast<std::size_t>(seq.channel == Channel::narrow);
    for (ClusterId id : seq.labels) ++counts.joint[id][c];
    counts.per_channel[c] += seq.labels.size();
    counts.total += seq.labels.size();
  }
  if (counts.per_channel[0] == 0 || counts.per_channel[1] == 0) {
    throw Error(Errc::EmptyInput, "need at least one frame from each channel");
  }
  return counts;
}

}  // namespace

double channel_entropy(std::span<const FrameLabelSequence> labels) {
  const ChannelCounts counts = count_frames(labels);
  const auto n = static_cast<double>(counts.total);
  double h = 0.0;
  for (std::size_t c : counts.per_channel) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double channel_mutual_information(std::span<const FrameLabelSequence> labels) {
  const ChannelCounts counts = count_frames(labels);
  const auto n = static_cast<double>(counts.total);
  double mi = 0.0;
  for (const auto& [id, by_channel] : counts.joint) {
    const auto n_id = static_cast<double>(by_channel[0] + by_channel[1]);
    for (std::size_t c = 0; c < 2; ++c) {
      if (by_channel[c] == 0) continue;
      const auto n_ic = static_cast<double>(by_channel[c]);
      mi += n_ic / n * std::log2(n_ic * n / (n_id * static_cast<double>(counts.per_channel[c])));
    }
  }
  return mi;
}

}  // namespace mbssl
