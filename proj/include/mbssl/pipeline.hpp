#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbssl/audio.hpp"
#include "mbssl/clustering.hpp"
#include "mbssl/dsp.hpp"
#include "mbssl/labeling.hpp"
#include "mbssl/losses.hpp"

namespace mbssl {

enum class PipelineMode { pooled_baseline, channel_aware };

std::string_view to_string(PipelineMode mode) noexcept;

struct MaskConfig {
  std::size_t span_length = kDefaultSpanLength;
  double start_prob = kDefaultStartProb;
};

struct PipelineConfig {
  PipelineMode mode = PipelineMode::channel_aware;
  std::size_t k_wide = 500;
  std::size_t k_narrow = 500;
  std::size_t k_pooled = 1000;
  /// Empty means auto (offset = k_wide).
  std::optional<ClusterId> offset;
  MelFilterbankConfig features;
  MaskConfig mask;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  /// Per-dimension z-scoring with statistics of all training frames.
  bool standardize = false;
  /// Emit targets as [sos] + collapsed + [eos].
  bool wrap_targets = false;
  unsigned threads = 1;
};

void validate(const PipelineConfig& config);
std::string config_to_json(const PipelineConfig& config);
/// Fields present in `text` override those of `base`; unknown keys are errors.
PipelineConfig config_from_json(std::string_view text, PipelineConfig base = {});

struct UtteranceRecord {
  std::string utt_id;
  std::filesystem::path path;
  Channel channel = Channel::wide;
  std::optional<std::size_t> num_frames;
};

/// TSV with header `utt_id path channel num_frames`. Relative paths resolve
/// against `base_dir`. An empty, "-" or "0" num_frames cell means unknown.
std::vector<UtteranceRecord> parse_manifest(std::string_view text,
                                            const std::filesystem::path& base_dir = {});
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);
std::string format_manifest(std::span<const UtteranceRecord> records);

/// Features of one utterance. `.fmx` paths are loaded as precomputed feature
/// matrices; anything else is decoded as WAV, checked against the declared
/// channel's rate, brought to 16 kHz and passed through logmel.
FeatureMatrix load_utterance_features(const UtteranceRecord& record,
                                      const MelFilterbankConfig& cfg);
std::vector<FeatureMatrix> load_all_features(std::span<const UtteranceRecord> records,
                                             const MelFilterbankConfig& cfg, unsigned threads);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};
FeatureStats compute_feature_stats(std::span<const FeatureMatrix> features);
void standardize_in_place(std::span<FeatureMatrix> features, const FeatureStats& stats);
std::string feature_stats_to_json(const FeatureStats& stats);
FeatureStats feature_stats_from_json(std::string_view text);

struct LabelSummary {
  double mutual_information_bits = 0.0;
  double channel_entropy_bits = 0.0;
  std::size_t wide_ids = 0;
  std::size_t narrow_ids = 0;
  /// IDs emitted for both channels.
  std::size_t shared_ids = 0;
};
LabelSummary summarize_labels(std::span<const FrameLabelSequence> labels);

struct PipelineArtifacts {
  std::vector<UtteranceRecord> manifest;
  std::optional<Codebook> pooled_baseline;
  std::optional<PooledCodebook> channel_aware;
  std::size_t vocab_size = 0;
  std::optional<FeatureStats> stats;
  std::vector<FrameLabelSequence> labels;
  std::vector<TargetSequence> targets;
  std::vector<MaskPlan> masks;
  LabelSummary summary;
};

/// Features -> codebook(s) -> frame labels -> collapsed targets, span masks and
/// channel mutual information. Labels are assigned with the codebook exactly as
/// it is stored on disk.
PipelineArtifacts run_label_pipeline(const PipelineConfig& config,
                                     std::span<const UtteranceRecord> manifest);

/// Writes config.json, manifest.tsv, codebook JSON, labels.txt, targets.txt,
/// masks.txt and mi.json under `out_dir`. Returns the paths written, in order.
std::vector<std::filesystem::path> write_artifacts(const PipelineArtifacts& artifacts,
                                                   const PipelineConfig& config,
                                                   const std::filesystem::path& out_dir);

std::string summary_to_json(const LabelSummary& summary, PipelineMode mode,
                            std::size_t vocab_size);

/// Mask for utterance number `index` of a run seeded with `seed`.
MaskPlan utterance_mask(std::size_t index, std::size_t num_frames, const MaskConfig& cfg,
                        std::uint64_t seed);

struct CorpusSpec {
  std::size_t n_wide = 25;
  std::size_t n_narrow = 25;
  double utterance_s = 0.6;
  std::uint64_t seed = 0;
};

/// Writes a two-channel corpus of tone/silence utterances (wide at 16 kHz,
/// narrow at 8 kHz) plus manifest.tsv into `dir`. Both channels draw segments
/// from the same set of sub-3.4 kHz tones and silences.
std::vector<UtteranceRecord> write_synthetic_corpus(const std::filesystem::path& dir,
                                                    const CorpusSpec& spec);

}  // namespace mbssl
