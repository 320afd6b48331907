#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mbssl/error.hpp"
#include "mbssl/losses.hpp"
#include "mbssl/random.hpp"
#include "oracles.hpp"

using namespace mbssl;

namespace {

using Ids = std::vector<ClusterId>;

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvariantViolation;
}

Matrix random_logits(std::size_t t, std::size_t v, Rng& rng, double scale = 3.0) {
  Matrix m(t, v);
  for (auto& x : m.data()) x = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

// exp of a row-normalized log-probability matrix, as nested vectors.
std::vector<std::vector<double>> probs_of(const Matrix& log_probs) {
  std::vector<std::vector<double>> p(log_probs.rows());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    for (double v : log_probs.row(t)) p[t].push_back(std::exp(v));
  }
  return p;
}

Matrix oracle_log_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t t = 0; t < z.rows(); ++t) {
    const double lse = oracle::log_sum_exp(z.row(t));
    for (std::size_t v = 0; v < z.cols(); ++v) out(t, v) = z(t, v) - lse;
  }
  return out;
}

// All label sequences over {1..V-1} of length up to max_len.
std::vector<Ids> all_targets(std::size_t vocab, std::size_t max_len) {
  std::vector<Ids> out{{}};
  std::vector<Ids> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Ids> next;
    for (const auto& t : frontier) {
      for (ClusterId v = 1; v < vocab; ++v) {
        auto u = t;
        u.push_back(v);
        next.push_back(u);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("masked prediction loss examples") {
  const Matrix uniform(6, 4, 0.3);
  const std::vector<bool> mask{true, false, true, true, false, false};
  CHECK(masked_prediction_loss(uniform, Ids{0, 1, 2, 3, 0, 1}, mask) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Matrix sharp(3, 5, 0.0);
  const Ids labels{4, 0, 2};
  for (std::size_t t = 0; t < 3; ++t) sharp(t, labels[t]) = 1e4;
  CHECK(masked_prediction_loss(sharp, labels, {true, true, true}) < 1e-4);

  Rng rng(1);
  const Matrix z = random_logits(8, 5, rng);
  const Ids y{0, 1, 2, 3, 4, 0, 1, 2};
  const std::vector<bool> m{false, true, false, false, true, false, true, false};
  const double expected = (oracle::nll(z.row(1), 1) + oracle::nll(z.row(4), 4) + oracle::nll(z.row(6), 1)) / 3.0;
  CHECK(std::abs(masked_prediction_loss(z, y, m) - expected) < 1e-10);

  FrameLabelSequence seq{"u", y, Channel::wide};
  MaskPlan plan;
  plan.masked = m;
  CHECK(masked_prediction_loss(z, seq, plan) == masked_prediction_loss(z, y, m));
}

TEST_CASE("masked prediction loss errors") {
  const Matrix z(3, 4, 0.0);
  CHECK(error_of([&] { masked_prediction_loss(z, Ids{0, 1, 2}, {false, false, false}); }) == Errc::NoMaskedFrames);
  CHECK(error_of([&] { masked_prediction_loss(z, Ids{0, 4, 2}, {true, true, true}); }) == Errc::LabelOutOfRange);
  CHECK(error_of([&] { masked_prediction_loss(z, Ids{0, 1}, {true, true}); }) == Errc::LengthMismatch);
  CHECK(error_of([&] { masked_prediction_loss(Matrix(3, 1), Ids{0, 0, 0}, {true, true, true}); }) ==
        Errc::InvalidConfig);
  Matrix bad(3, 4, 0.0);
  bad(1, 1) = NAN;
  CHECK(error_of([&] { masked_prediction_loss(bad, Ids{0, 1, 2}, {true, true, true}); }) == Errc::InvalidConfig);
}

TEST_CASE("masked prediction loss ignores unmasked logits") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix z = random_logits(10, 6, rng);
    Ids y(10);
    std::vector<bool> m(10);
    for (std::size_t t = 0; t < 10; ++t) {
      y[t] = ClusterId(rng.below(6));
      m[t] = rng.uniform() < 0.4;
    }
    m[trial % 10] = true;
    const double base = masked_prediction_loss(z, y, m);
    for (std::size_t t = 0; t < 10; ++t) {
      if (m[t]) continue;
      for (auto& v : z.row(t)) v = 100.0 * (rng.uniform() - 0.5);
    }
    CHECK(masked_prediction_loss(z, y, m) == base);
  }
}

TEST_CASE("sequence loss examples") {
  const Matrix uniform(5, 10, -2.0);
  CHECK(sequence_loss(uniform, Ids{1, 9, 3, 3, 0}) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Matrix sharp(2, 3, 0.0);
  sharp(0, 2) = 1e4;
  sharp(1, 0) = 1e4;
  CHECK(sequence_loss(sharp, Ids{2, 0}) < 1e-4);

  Rng rng(3);
  const Matrix z = random_logits(4, 7, rng);
  const Ids y{6, 0, 3, 3};
  double expected = 0.0;
  for (std::size_t t = 0; t < 4; ++t) expected += oracle::nll(z.row(t), y[t]) / 4.0;
  CHECK(std::abs(sequence_loss(z, y) - expected) < 1e-10);
  CHECK(sequence_loss(z, TargetSequence{"u", y, false}) == sequence_loss(z, y));

  double smoothed = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double mean_nll = 0.0;
    for (std::size_t v = 0; v < 7; ++v) mean_nll += oracle::nll(z.row(t), v) / 7.0;
    smoothed += (0.9 * oracle::nll(z.row(t), y[t]) + 0.1 * mean_nll) / 4.0;
  }
  CHECK(std::abs(sequence_loss(z, y, 0.1) - smoothed) < 1e-10);

  CHECK(error_of([&] { sequence_loss(z, Ids{1, 2, 3}); }) == Errc::LengthMismatch);
  CHECK(error_of([&] { sequence_loss(z, Ids{1, 2, 3, 7}); }) == Errc::LabelOutOfRange);
}

TEST_CASE("loss combiners") {
  CHECK(pretrain_loss(2.0, 4.0, 0.5) == 3.0);
  CHECK(pretrain_loss(2.0, 4.0) == 3.0);
  CHECK(finetune_loss(1.0, 2.0, 0.3) == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(std::abs(finetune_loss(1.0, 2.0) - 1.7) < 1e-12);
  CHECK(kDefaultAlpha == 0.5);
  CHECK(kDefaultBeta == 0.3);

  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = 10.0 * rng.uniform();
    const double b = 10.0 * rng.uniform();
    const double w = rng.uniform();
    CHECK(std::abs(pretrain_loss(a, b, w) - (w * a + (1.0 - w) * b)) < 1e-12);
    CHECK(std::abs(finetune_loss(a, b, w) - (w * a + (1.0 - w) * b)) < 1e-12);
    CHECK(pretrain_loss(a, b, 1.0) == a);
    CHECK(pretrain_loss(a, b, 0.0) == b);
    CHECK(finetune_loss(a, b, 1.0) == a);
    CHECK(finetune_loss(a, b, 0.0) == b);
  }
  CHECK(error_of([] { pretrain_loss(1, 1, 1.1); }) == Errc::InvalidConfig);
  CHECK(error_of([] { finetune_loss(1, 1, -0.1); }) == Errc::InvalidConfig);
  CHECK(error_of([] { pretrain_loss(1, 1, NAN); }) == Errc::InvalidConfig);
}

TEST_CASE("loss breakdown JSON") {
  LossBreakdown b;
  b.pretrain = make_pretrain_terms(2.0, 4.0, 0.5);
  const auto j = nlohmann::json::parse(to_json(b));
  CHECK(j["total_pretrain"].get<double>() == 3.0);
  CHECK(j["alpha"].get<double>() == 0.5);
  CHECK(j["total_finetune"].is_null());
  b.finetune = make_finetune_terms(1.0, 2.0, 0.3);
  const auto k = nlohmann::json::parse(to_json(b));
  CHECK(std::abs(k["total_finetune"].get<double>() - 1.7) < 1e-12);
  CHECK(k["ctc"].get<double>() == 1.0);
}

TEST_CASE("ctc examples") {
  const Matrix half(2, 2, std::log(0.5));
  const CtcResult r = ctc_loss(half, Ids{1});
  CHECK(r.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(std::abs(r.loss - 0.28768) < 1e-5);
  CHECK(std::abs(r.loss + std::log(oracle::ctc_brute_force_prob(probs_of(half), {1}, 0))) < 1e-12);

  Matrix forced(1, 2, -INFINITY);
  forced(0, 1) = 0.0;
  CHECK(ctc_loss(forced, Ids{1}).loss == 0.0);

  CHECK(error_of([&] { ctc_loss(half, Ids{1, 1}); }) == Errc::TargetTooLong);
  CHECK(ctc_min_frames(Ids{1, 1}) == 3);
  CHECK(ctc_min_frames(Ids{1, 2}) == 2);
  CHECK(error_of([&] { ctc_loss(half, Ids{0}); }) == Errc::InvalidTarget);
  CHECK(error_of([&] { ctc_loss(half, Ids{2}); }) == Errc::LabelOutOfRange);
  CHECK(error_of([&] { ctc_loss(Matrix(2, 2, 0.0), Ids{1}); }) == Errc::InvalidConfig);
  CHECK_NOTHROW(ctc_loss(Matrix(2, 2, 0.0), Ids{1}, 0, false));
}

TEST_CASE("ctc matches brute force enumeration") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + rng.below(5);
    const std::size_t V = 2 + rng.below(3);
    const ClusterId blank = ClusterId(rng.below(V));
    const Matrix lp = oracle_log_softmax(random_logits(T, V, rng));
    Ids target;
    const std::size_t len = rng.below(3);
    while (target.size() < len) {
      const ClusterId v = ClusterId(rng.below(V));
      if (v != blank) target.push_back(v);
    }
    const double p = oracle::ctc_brute_force_prob(probs_of(lp), target, blank);
    if (ctc_min_frames(target) > T) {
      CHECK(p == 0.0);
      CHECK(error_of([&] { ctc_loss(lp, target, blank); }) == Errc::TargetTooLong);
      continue;
    }
    CHECK(std::abs(ctc_loss(lp, target, blank).loss + std::log(p)) < 1e-9);
  }
}

TEST_CASE("ctc probabilities over all targets sum to one") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 1 + rng.below(4);
    const std::size_t V = 2 + rng.below(2);
    const Matrix lp = oracle_log_softmax(random_logits(T, V, rng));
    double total = 0.0;
    for (const auto& target : all_targets(V, T)) {
      if (ctc_min_frames(target) > T) continue;
      total += std::exp(-ctc_loss(lp, target).loss);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("ctc gradient against finite differences") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    CtcGradCase c{random_logits(4, 3, rng), {}, 0};
    c.target = {ClusterId(1 + rng.below(2)), ClusterId(1 + rng.below(2))};
    if (c.target[0] == c.target[1] && trial % 2) c.target[1] = 3 - c.target[1];
    CHECK(finite_diff_check(c, 1e-5) < 1e-4);
  }
  // Raw gradient w.r.t. log-probabilities, every entry independent.
  const Matrix lp = oracle_log_softmax(random_logits(3, 3, rng));
  const Ids target{1, 2};
  const CtcResult r = ctc_loss(lp, target, 0, false);
  for (std::size_t i = 0; i < lp.data().size(); ++i) {
    Matrix up = lp;
    Matrix dn = lp;
    up.data()[i] += 1e-6;
    dn.data()[i] -= 1e-6;
    const double fd = (ctc_loss(up, target, 0, false).loss - ctc_loss(dn, target, 0, false).loss) / 2e-6;
    CHECK(std::abs(fd - r.grad.data()[i]) < 1e-6);
  }
}

TEST_CASE("cross-entropy gradients against finite differences") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    MaskedPredictionGradCase m{random_logits(6, 4, rng), {}, {}};
    for (std::size_t t = 0; t < 6; ++t) {
      m.labels.push_back(ClusterId(rng.below(4)));
      m.masked.push_back(t == 0 || rng.uniform() < 0.5);
    }
    CHECK(finite_diff_check(m, 1e-5) < 1e-6);
    SequenceGradCase s{random_logits(5, 6, rng), {}, trial % 2 ? 0.1 : 0.0};
    for (std::size_t t = 0; t < 5; ++t) s.target.push_back(ClusterId(rng.below(6)));
    CHECK(finite_diff_check(s, 1e-5) < 1e-6);
  }
  CHECK(error_of([] { finite_diff_check(CtcGradCase{Matrix(2, 2), {1}, 0}, 0.0); }) == Errc::InvalidConfig);
}

TEST_CASE("losses are covariant under vocabulary permutation") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t V = 3 + rng.below(4);
    std::vector<ClusterId> perm(V);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = V - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    auto permute = [&](const Matrix& z) {
      Matrix out(z.rows(), z.cols());
      for (std::size_t t = 0; t < z.rows(); ++t) {
        for (std::size_t v = 0; v < V; ++v) out(t, perm[v]) = z(t, v);
      }
      return out;
    };
    auto relabel = [&](Ids y) {
      for (auto& v : y) v = perm[v];
      return y;
    };

    const Matrix z = random_logits(5, V, rng);
    Ids y(5);
    for (auto& v : y) v = ClusterId(rng.below(V));
    const std::vector<bool> m{true, false, true, true, false};
    CHECK(std::abs(masked_prediction_loss(z, y, m) - masked_prediction_loss(permute(z), relabel(y), m)) < 1e-12);
    CHECK(std::abs(sequence_loss(z, y) - sequence_loss(permute(z), relabel(y))) < 1e-12);

    const Matrix lp = oracle_log_softmax(z);
    Ids target;
    for (ClusterId v : {ClusterId(1), ClusterId(V - 1)}) target.push_back(v);
    const double a = ctc_loss(lp, target, 0).loss;
    const double b = ctc_loss(permute(lp), relabel(target), perm[0]).loss;
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("ctc greedy decoding") {
  auto from_argmax = [](const Ids& best, std::size_t V) {
    Matrix m(best.size(), V, std::log(0.1 / double(V - 1)));
    for (std::size_t t = 0; t < best.size(); ++t) m(t, best[t]) = std::log(0.9);
    return m;
  };
  CHECK(ctc_greedy_decode(from_argmax({1, 1, 0, 2, 2}, 3)) == Ids{1, 2});
  CHECK(ctc_greedy_decode(from_argmax({0, 0, 0}, 3)).empty());
  CHECK(ctc_greedy_decode(from_argmax({1, 0, 1}, 3)) == Ids{1, 1});
  CHECK(ctc_greedy_decode(from_argmax({2, 2, 1}, 3), 2) == Ids{1});
  CHECK(ctc_greedy_decode(Matrix(2, 3, 0.0)).empty());
}
