#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mbssl/clustering.hpp"
#include "mbssl/error.hpp"
#include "mbssl/random.hpp"

using namespace mbssl;

namespace {

Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(n, d);
  for (auto& v : m.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

Codebook book_of(Matrix centroids, std::optional<Channel> channel = std::nullopt) {
  Codebook b;
  b.centroids = std::move(centroids);
  b.channel = channel;
  return b;
}

FeatureMatrix features_of(Matrix m) {
  FeatureMatrix f;
  f.values = std::move(m);
  return f;
}

// Exhaustive scan, lowest index wins ties.
std::vector<ClusterId> brute_assign(const Matrix& c, const Matrix& x) {
  std::vector<ClusterId> out;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = INFINITY;
    ClusterId arg = 0;
    for (std::size_t k = 0; k < c.rows(); ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) d += (x(i, j) - c(k, j)) * (x(i, j) - c(k, j));
      if (d < best) {
        best = d;
        arg = ClusterId(k);
      }
    }
    out.push_back(arg);
  }
  return out;
}

double brute_inertia(const Matrix& c, const Matrix& x) {
  double total = 0.0;
  const auto ids = brute_assign(c, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) total += std::pow(x(i, j) - c(ids[i], j), 2);
  }
  return total;
}

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvariantViolation;
}

}  // namespace

TEST_CASE("two well separated pairs") {
  const Matrix x(4, 1, {0.0, 0.2, 10.0, 10.2});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Codebook b = kmeans_fit(x, 2, 50, seed);
    std::vector<double> c{b.centroids(0, 0), b.centroids(1, 0)};
    std::sort(c.begin(), c.end());
    CHECK(c[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(10.1).epsilon(1e-12));
    CHECK(b.inertia_history.back() == doctest::Approx(0.04).epsilon(1e-9));
    CHECK(b.seed == seed);
  }
}

TEST_CASE("k equal to the number of points gives zero inertia") {
  const Matrix x = random_points(12, 3, 1);
  const Codebook b = kmeans_fit(x, 12, 20, 3);
  CHECK(b.inertia_history.back() == 0.0);
  CHECK(inertia(b, x) == 0.0);
}

TEST_CASE("kmeans_fit errors") {
  const Matrix x = random_points(5, 2, 1);
  CHECK(error_of([&] { kmeans_fit(x, 6, 10, 0); }) == Errc::InsufficientData);
  CHECK(error_of([&] { kmeans_fit(x, 0, 10, 0); }) == Errc::InvalidConfig);
}

TEST_CASE("inertia history never increases") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix x = random_points(1000, 2, 100 + seed);
    const Codebook b = kmeans_fit(x, 8, 100, seed);
    REQUIRE(b.inertia_history.size() >= 2);
    for (std::size_t i = 1; i < b.inertia_history.size(); ++i) {
      CHECK(b.inertia_history[i] <= b.inertia_history[i - 1] + 1e-12);
    }
    CHECK(b.inertia_history.back() == doctest::Approx(brute_inertia(b.centroids, x)).epsilon(1e-9));
  }
}

TEST_CASE("duplicate points still converge") {
  Matrix x(40, 2, 1.0);
  for (std::size_t i = 0; i < 5; ++i) x(i, 0) = 3.0;
  const Codebook b = kmeans_fit(x, 4, 20, 7);
  CHECK(b.k() == 4);
  CHECK(b.centroids.all_finite());
  CHECK(b.inertia_history.back() == 0.0);
}

TEST_CASE("assign matches exhaustive scan") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t d = 1 + seed % 5;
    const Matrix c = random_points(16, d, seed);
    const Matrix x = random_points(100, d, seed + 50);
    const auto got = assign(book_of(c), features_of(x), Channel::wide);
    CHECK(got.labels == brute_assign(c, x));
    CHECK(nearest_centroids(c, x, 3) == brute_assign(c, x));
    CHECK(inertia(book_of(c), x) == doctest::Approx(brute_inertia(c, x)).epsilon(1e-12));
  }
}

TEST_CASE("assign examples") {
  const Matrix c(5, 1, {-5.0, 1.0, 7.0, 9.0, -1.0});
  const Codebook b = book_of(c);
  CHECK(assign(b, features_of(Matrix(1, 1, {9.0})), Channel::wide).labels == std::vector<ClusterId>{3});
  // 0 is distance 1 from both centroid 1 (+1) and centroid 4 (-1).
  CHECK(assign(b, features_of(Matrix(1, 1, {0.0})), Channel::wide).labels == std::vector<ClusterId>{1});
  CHECK(error_of([&] { assign(b, features_of(Matrix(1, 2)), Channel::wide); }) == Errc::DimensionMismatch);
  CHECK(inertia(b, features_of(c)) == 0.0);
  CHECK(inertia(b, Matrix(1, 1, {11.0})) == 4.0);
}

TEST_CASE("pool_codebooks examples") {
  const Codebook w500 = book_of(random_points(500, 4, 1), Channel::wide);
  const Codebook n500 = book_of(random_points(500, 4, 2), Channel::narrow);
  const PooledCodebook p = pool_codebooks(w500, n500);
  CHECK(p.offset == 500);
  CHECK(p.vocab_size() == 1000);
  CHECK(error_of([&] { pool_codebooks(w500, n500, 499); }) == Errc::OffsetTooSmall);
  CHECK(pool_codebooks(w500, n500, 500).vocab_size() == 1000);

  const Codebook w3 = book_of(Matrix(3, 1, {0.0, 1.0, 2.0}), Channel::wide);
  const Codebook n2 = book_of(Matrix(2, 1, {0.0, 5.0}), Channel::narrow);
  const PooledCodebook q = pool_codebooks(w3, n2, 10);
  CHECK(q.vocab_size() == 12);
  const auto ids = assign_channel_aware(q, features_of(Matrix(4, 1, {0.0, 5.0, 4.0, -3.0})), Channel::narrow);
  CHECK(ids.labels == std::vector<ClusterId>{10, 11, 11, 10});
  CHECK(channel_of(q, 2) == Channel::wide);
  CHECK(!channel_of(q, 3).has_value());
  CHECK(!channel_of(q, 9).has_value());
  CHECK(channel_of(q, 11) == Channel::narrow);
  CHECK(!channel_of(q, 12).has_value());

  CHECK(error_of([&] { pool_codebooks(w3, book_of(Matrix(2, 2), Channel::narrow)); }) ==
        Errc::DimensionMismatch);
  CHECK(error_of([&] { pool_codebooks(n2, w3); }) == Errc::ChannelMismatch);
}

TEST_CASE("assign_channel_aware adds the offset only for narrow") {
  Matrix wide_c = random_points(500, 3, 4);
  Matrix narrow_c = random_points(500, 3, 5);
  const PooledCodebook p = pool_codebooks(book_of(wide_c, Channel::wide), book_of(narrow_c, Channel::narrow));
  Matrix probe(1, 3);
  for (std::size_t j = 0; j < 3; ++j) probe(0, j) = narrow_c(7, j);
  CHECK(assign_channel_aware(p, features_of(probe), Channel::narrow).labels == std::vector<ClusterId>{507});
  for (std::size_t j = 0; j < 3; ++j) probe(0, j) = wide_c(7, j);
  CHECK(assign_channel_aware(p, features_of(probe), Channel::wide).labels == std::vector<ClusterId>{7});
}

TEST_CASE("channel-aware labels of the same frames are disjoint across channels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PooledCodebook p = pool_codebooks(book_of(random_points(8, 4, seed), Channel::wide),
                                            book_of(random_points(6, 4, seed + 9), Channel::narrow),
                                            ClusterId(8 + seed));
    const FeatureMatrix f = features_of(random_points(200, 4, seed + 99));
    const auto w = assign_channel_aware(p, f, Channel::wide);
    const auto n = assign_channel_aware(p, f, Channel::narrow);
    std::set<ClusterId> ws(w.labels.begin(), w.labels.end());
    for (ClusterId id : n.labels) {
      CHECK(ws.count(id) == 0);
      CHECK(channel_of(p, id) == Channel::narrow);
      CHECK(id < p.vocab_size());
    }
    for (ClusterId id : ws) CHECK(channel_of(p, id) == Channel::wide);
  }
}

TEST_CASE("kmeans output does not depend on thread count") {
  const Matrix x = random_points(3 * kAccumulationChunk + 123, 3, 77, 5.0);
  KMeansOptions one;
  KMeansOptions many;
  many.threads = 4;
  const Codebook a = kmeans_fit(x, 6, 30, 1, one);
  const Codebook b = kmeans_fit(x, 6, 30, 1, many);
  CHECK(codebook_to_json(a) == codebook_to_json(b));
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia_history == b.inertia_history);
}

TEST_CASE("codebook JSON round trip") {
  KMeansOptions opts;
  opts.channel = Channel::narrow;
  const Codebook b = kmeans_fit(random_points(300, 5, 8), 7, 30, 5, opts);
  const std::string text = codebook_to_json(b);
  CHECK(!is_pooled_codebook_json(text));
  const Codebook r = codebook_from_json(text);
  CHECK(r.centroids == quantize_for_storage(b).centroids);
  CHECK(r.channel == Channel::narrow);
  CHECK(r.seed == 5);
  CHECK(r.inertia_history == b.inertia_history);
  CHECK(codebook_to_json(r) == text);
  for (std::size_t i = 0; i < b.centroids.data().size(); ++i) {
    CHECK(std::abs(r.centroids.data()[i] - b.centroids.data()[i]) <=
          1e-8 * std::abs(b.centroids.data()[i]));
  }

  const PooledCodebook p = pool_codebooks(book_of(random_points(3, 5, 1), Channel::wide), r, 4);
  const std::string ptext = pooled_codebook_to_json(p);
  CHECK(is_pooled_codebook_json(ptext));
  const PooledCodebook q = pooled_codebook_from_json(ptext);
  CHECK(q.offset == 4);
  CHECK(q.vocab_size() == 11);
  CHECK(pooled_codebook_to_json(q) == ptext);
  CHECK_THROWS_AS(codebook_from_json("{\"k\": 2}"), Error);
  CHECK_THROWS_AS(codebook_from_json("not json"), Error);
}

TEST_CASE("identical inputs give identical codebook files") {
  const Matrix x = random_points(500, 4, 31);
  CHECK(codebook_to_json(kmeans_fit(x, 5, 40, 9)) == codebook_to_json(kmeans_fit(x, 5, 40, 9)));
}
