#include "mbssl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mbssl/error.hpp"
#include "mbssl/parallel.hpp"
#include "mbssl/random.hpp"

namespace mbssl {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

struct Nearest {
  ClusterId index = 0;
  double distance = 0.0;
};

Nearest nearest(const Matrix& centroids, std::span<const double> point) noexcept {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(point, centroids.row(c));
    if (d < best.distance) best = {static_cast<ClusterId>(c), d};
  }
  return best;
}

void require_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(Errc::DimensionMismatch, "feature dimension " + std::to_string(got) +
                                             " does not match codebook dimension " +
                                             std::to_string(expected));
  }
}

std::size_t chunk_count(std::size_t n) { return (n + kAccumulationChunk - 1) / kAccumulationChunk; }

// k-means++: first centre uniform, then proportional to squared distance from
// the nearest chosen centre.
Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);

  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double d : min_dist) total += d;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double running = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          running += min_dist[i];
          if (min_dist[i] > 0.0 && running > target) {
            pick = i;
            break;
          }
        }
        if (pick == n) {
          // Rounding left target at the very end of the cumulative sum.
          for (std::size_t i = n; i-- > 0;) {
            if (min_dist[i] > 0.0) {
              pick = i;
              break;
            }
          }
        }
      } else {
        // Every remaining point coincides with a centre already chosen.
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) -
                                        chosen.begin());
      }
    }
    chosen[pick] = true;
    const auto src = points.row(pick);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], squared_distance(points.row(i), centroids.row(c)));
    }
  }
  return centroids;
}

struct AssignmentPass {
  std::vector<ClusterId> labels;
  std::vector<double> distances;
  double inertia = 0.0;
};

AssignmentPass assign_all(const Matrix& centroids, const Matrix& points, unsigned threads) {
  const std::size_t n = points.rows();
  AssignmentPass pass;
  pass.labels.resize(n);
  pass.distances.resize(n);
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    const std::size_t begin = chunk * kAccumulationChunk;
    const std::size_t end = std::min(n, begin + kAccumulationChunk);
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const Nearest best = nearest(centroids, points.row(i));
      pass.labels[i] = best.index;
      pass.distances[i] = best.distance;
      sum += best.distance;
    }
    partial[chunk] = sum;
  });
  for (double s : partial) pass.inertia += s;
  return pass;
}

// New centroids as cluster means; partial sums per chunk are merged in chunk
// order so the result is independent of scheduling.
Matrix update_centroids(const Matrix& points, const AssignmentPass& pass, std::size_t k,
                        const Matrix& previous, unsigned threads, std::size_t& reseeds) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  const std::size_t chunks = chunk_count(n);
  std::vector<Matrix> sums(chunks);
  std::vector<std::vector<std::size_t>> counts(chunks);
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    Matrix s(k, dim);
    std::vector<std::size_t> cnt(k, 0);
    const std::size_t begin = chunk * kAccumulationChunk;
    const std::size_t end = std::min(n, begin + kAccumulationChunk);
    for (std::size_t i = begin; i < end; ++i) {
      auto dst = s.row(pass.labels[i]);
      const auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
      ++cnt[pass.labels[i]];
    }
    sums[chunk] = std::move(s);
    counts[chunk] = std::move(cnt);
  });

  Matrix total(k, dim);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    const auto src = sums[chunk].data();
    auto dst = total.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t c = 0; c < k; ++c) count[c] += counts[chunk][c];
  }

  Matrix next = previous;
  std::vector<double> distances = pass.distances;
  for (std::size_t c = 0; c < k; ++c) {
    auto dst = next.row(c);
    if (count[c] > 0) {
      const auto sum = total.row(c);
      for (std::size_t d = 0; d < dim; ++d) dst[d] = sum[d] / static_cast<double>(count[c]);
      continue;
    }
    // Empty cluster: move it onto the point farthest from its centroid.
    const auto far = static_cast<std::size_t>(
        std::max_element(distances.begin(), distances.end()) - distances.begin());
    const auto src = points.row(far);
    std::copy(src.begin(), src.end(), dst.begin());
    distances[far] = -1.0;
    ++reseeds;
  }
  return next;
}

}  // namespace

Codebook kmeans_fit(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0) throw Error(Errc::InvalidConfig, "k must be positive");
  if (points.rows() < k) {
    throw Error(Errc::InsufficientData, std::to_string(points.rows()) +
                                            " points cannot form " + std::to_string(k) +
                                            " clusters");
  }
  if (points.cols() == 0) throw Error(Errc::InvalidConfig, "points have zero dimensions");
  if (!points.all_finite()) throw Error(Errc::InvalidConfig, "points contain non-finite values");
  if (!(options.tolerance >= 0.0)) throw Error(Errc::InvalidConfig, "tolerance must be >= 0");

  Codebook book;
  book.seed = seed;
  book.channel = options.channel;
  Rng rng(seed);
  Matrix centroids = seed_plus_plus(points, k, rng);

  AssignmentPass pass = assign_all(centroids, points, options.threads);
  book.inertia_history.push_back(pass.inertia);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    Matrix next = update_centroids(points, pass, k, centroids, options.threads,
                                   book.empty_cluster_reseeds);
    AssignmentPass next_pass = assign_all(next, points, options.threads);
    const double previous = book.inertia_history.back();
    // Lloyd steps never increase the objective in exact arithmetic; a rise can
    // only be rounding, so keep the better centroids and stop.
    if (next_pass.inertia > previous) break;
    centroids = std::move(next);
    pass = std::move(next_pass);
    book.inertia_history.push_back(pass.inertia);
    if (previous - pass.inertia <= options.tolerance * previous) break;
  }
  book.centroids = std::move(centroids);
  return book;
}

Matrix stack_rows(std::span<const FeatureMatrix> features) {
  Matrix out;
  for (const auto& f : features) {
    for (std::size_t r = 0; r < f.values.rows(); ++r) out.append_row(f.values.row(r));
  }
  return out;
}

std::vector<ClusterId> nearest_centroids(const Matrix& centroids, const Matrix& points,
                                         unsigned threads) {
  if (centroids.rows() == 0) throw Error(Errc::InvalidConfig, "codebook has no centroids");
  if (points.rows() > 0) require_dim(centroids.cols(), points.cols());
  return assign_all(centroids, points, threads).labels;
}

FrameLabelSequence assign(const Codebook& codebook, const FeatureMatrix& features,
                          Channel channel) {
  return {features.source_utt_id, nearest_centroids(codebook.centroids, features.values), channel};
}

double inertia(const Codebook& codebook, const Matrix& points) {
  if (points.rows() == 0) return 0.0;
  require_dim(codebook.feature_dim(), points.cols());
  return assign_all(codebook.centroids, points, 1).inertia;
}

double inertia(const Codebook& codebook, const FeatureMatrix& features) {
  return inertia(codebook, features.values);
}

PooledCodebook pool_codebooks(Codebook wide, Codebook narrow, std::optional<ClusterId> offset) {
  require_dim(wide.feature_dim(), narrow.feature_dim());
  if (wide.k() == 0 || narrow.k() == 0) throw Error(Errc::InvalidConfig, "empty codebook");
  if (wide.channel == Channel::narrow || narrow.channel == Channel::wide) {
    throw Error(Errc::ChannelMismatch, "codebooks passed in the wrong channel slots");
  }
  const auto wide_k = static_cast<ClusterId>(wide.k());
  const ClusterId chosen = offset.value_or(wide_k);
  if (chosen < wide_k) {
    throw Error(Errc::OffsetTooSmall, "offset " + std::to_string(chosen) +
                                          " is below the wide codebook size " +
                                          std::to_string(wide_k));
  }
  if (static_cast<std::uint64_t>(chosen) + narrow.k() > UINT32_MAX) {
    throw Error(Errc::InvalidConfig, "offset + narrow.k overflows the ID space");
  }
  wide.channel = Channel::wide;
  narrow.channel = Channel::narrow;
  return {std::move(wide), std::move(narrow), chosen};
}

FrameLabelSequence assign_channel_aware(const PooledCodebook& pooled,
                                        const FeatureMatrix& features, Channel channel) {
  if (channel == Channel::wide) return assign(pooled.wide, features, channel);
  FrameLabelSequence seq = assign(pooled.narrow, features, channel);
  for (ClusterId& id : seq.labels) id += pooled.offset;
  return seq;
}

std::optional<Channel> channel_of(const PooledCodebook& pooled, ClusterId id) noexcept {
  if (id < pooled.wide.k()) return Channel::wide;
  if (id >= pooled.offset && id < pooled.vocab_size()) return Channel::narrow;
  return std::nullopt;
}

}  // namespace mbssl
