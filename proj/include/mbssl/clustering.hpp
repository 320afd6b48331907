#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbssl/audio.hpp"
#include "mbssl/dsp.hpp"
#include "mbssl/matrix.hpp"

namespace mbssl {

using ClusterId = std::uint32_t;

/// k-means centroids. `channel` is empty for a codebook fitted on data pooled
/// across channels.
struct Codebook {
  Matrix centroids;
  std::optional<Channel> channel;
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;
  /// Number of times an empty cluster was re-seeded during the fit.
  std::size_t empty_cluster_reseeds = 0;

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t feature_dim() const noexcept { return centroids.cols(); }
};

/// Per-channel codebooks sharing one ID space. Wide IDs occupy [0, wide.k),
/// narrow IDs [offset, offset + narrow.k); IDs in between are reserved.
struct PooledCodebook {
  Codebook wide;
  Codebook narrow;
  ClusterId offset = 0;

  std::size_t vocab_size() const noexcept { return offset + narrow.k(); }
  std::size_t feature_dim() const noexcept { return wide.feature_dim(); }
};

struct FrameLabelSequence {
  std::string utt_id;
  std::vector<ClusterId> labels;
  Channel channel = Channel::wide;

  friend bool operator==(const FrameLabelSequence&, const FrameLabelSequence&) = default;
};

struct KMeansOptions {
  /// Stop once (previous - current) < tolerance * previous.
  double tolerance = 1e-7;
  /// Worker threads for the assignment/accumulation pass. Output bytes do not
  /// depend on this.
  unsigned threads = 1;
  std::optional<Channel> channel;
};

/// Points per accumulation chunk; partial sums are combined in chunk order.
inline constexpr std::size_t kAccumulationChunk = 4096;

/// Lloyd's algorithm with k-means++ seeding. inertia_history[0] is the inertia
/// of the seeded centroids; each later entry follows one centroid update.
Codebook kmeans_fit(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Row-stacks the frames of several utterances.
Matrix stack_rows(std::span<const FeatureMatrix> features);

/// Index of the nearest centroid for each row; ties go to the lowest index.
std::vector<ClusterId> nearest_centroids(const Matrix& centroids, const Matrix& points,
                                         unsigned threads = 1);

FrameLabelSequence assign(const Codebook& codebook, const FeatureMatrix& features,
                          Channel channel);

/// Sum over frames of the squared distance to the nearest centroid.
double inertia(const Codebook& codebook, const FeatureMatrix& features);
double inertia(const Codebook& codebook, const Matrix& points);

/// `offset` empty means "auto" (offset = wide.k).
PooledCodebook pool_codebooks(Codebook wide, Codebook narrow,
                              std::optional<ClusterId> offset = std::nullopt);

/// Labels against the codebook of `channel`; narrow IDs are shifted by the offset.
FrameLabelSequence assign_channel_aware(const PooledCodebook& pooled,
                                        const FeatureMatrix& features, Channel channel);

/// Channel owning an emitted ID. nullopt for reserved gap IDs and IDs past the
/// vocabulary.
std::optional<Channel> channel_of(const PooledCodebook& pooled, ClusterId id) noexcept;

// Structured-text codebook files. Centroids are written with 9 significant
// digits, so a reloaded codebook may differ from the fitted one in the last
// bits; pipelines label with the reloaded form.
std::string codebook_to_json(const Codebook& codebook);
Codebook codebook_from_json(std::string_view text);
std::string pooled_codebook_to_json(const PooledCodebook& pooled);
PooledCodebook pooled_codebook_from_json(std::string_view text);

/// True when the JSON text holds a PooledCodebook rather than a Codebook.
bool is_pooled_codebook_json(std::string_view text);

/// Rounds every centroid coordinate to the 9 significant digits kept on disk.
Codebook quantize_for_storage(Codebook codebook);

}  // namespace mbssl
