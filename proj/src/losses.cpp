#include "mbssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "json.hpp"

#include "mbssl/error.hpp"

namespace mbssl {

namespace {

void check_scores(const Matrix& m, const char* what) {
  if (m.cols() < 2) {
    throw Error(Errc::InvalidConfig, std::string(what) + " need at least 2 classes");
  }
  if (!m.all_finite()) throw Error(Errc::InvalidConfig, std::string(what) + " must be finite");
}

void check_label(ClusterId label, std::size_t vocab, std::size_t position) {
  if (label >= vocab) {
    throw Error(Errc::LabelOutOfRange, "label " + std::to_string(label) + " at position " +
                                           std::to_string(position) + " >= vocabulary size " +
                                           std::to_string(vocab));
  }
}

double log_sum_exp(std::span<const double> row) {
  const double peak = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

double log_add(double a, double b) noexcept {
  if (a <= kLogZero) return b;
  if (b <= kLogZero) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_unit_interval(double w, const char* name) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw Error(Errc::InvalidConfig, std::string(name) + " must lie in [0, 1]");
  }
}

// Cross-entropy rows against a (possibly smoothed) one-hot target; the mean is
// over the selected rows. Shared by the masked-prediction and sequence losses.
LossWithGrad cross_entropy_rows(const Matrix& logits, std::span<const ClusterId> labels,
                                const std::vector<bool>* selected, double smoothing,
                                bool want_grad) {
  const std::size_t vocab = logits.cols();
  std::size_t used = 0;
  for (std::size_t t = 0; t < logits.rows(); ++t) used += (!selected || (*selected)[t]);

  LossWithGrad out;
  if (want_grad) out.grad = Matrix(logits.rows(), vocab);
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    if (selected && !(*selected)[t]) continue;
    const auto row = logits.row(t);
    const double norm = log_sum_exp(row);
    double term = norm - row[labels[t]];
    if (smoothing > 0.0) {
      double mean_nll = 0.0;
      for (double v : row) mean_nll += norm - v;
      term = (1.0 - smoothing) * term + smoothing * mean_nll / static_cast<double>(vocab);
    }
    total += term;
    if (want_grad) {
      auto g = out.grad.row(t);
      for (std::size_t v = 0; v < vocab; ++v) {
        const double target =
            (v == labels[t] ? 1.0 - smoothing : 0.0) + smoothing / static_cast<double>(vocab);
        g[v] = (std::exp(row[v] - norm) - target) / static_cast<double>(used);
      }
    }
  }
  out.loss = total / static_cast<double>(used);
  return out;
}

LossWithGrad masked_impl(const LogitMatrix& logits, std::span<const ClusterId> labels,
                         const std::vector<bool>& masked, bool want_grad) {
  check_scores(logits, "logits");
  if (labels.size() != logits.rows() || masked.size() != logits.rows()) {
    throw Error(Errc::LengthMismatch, "logits have " + std::to_string(logits.rows()) +
                                          " frames, labels " + std::to_string(labels.size()) +
                                          ", mask " + std::to_string(masked.size()));
  }
  for (std::size_t t = 0; t < labels.size(); ++t) check_label(labels[t], logits.cols(), t);
  if (std::find(masked.begin(), masked.end(), true) == masked.end()) {
    throw Error(Errc::NoMaskedFrames, "mask selects no frames");
  }
  return cross_entropy_rows(logits, labels, &masked, 0.0, want_grad);
}

LossWithGrad sequence_impl(const LogitMatrix& logits, std::span<const ClusterId> target,
                           double smoothing, bool want_grad) {
  check_scores(logits, "decoder logits");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw Error(Errc::InvalidConfig, "label smoothing must lie in [0, 1)");
  }
  if (target.size() != logits.rows()) {
    throw Error(Errc::LengthMismatch, "decoder logits have " + std::to_string(logits.rows()) +
                                          " positions, target has " +
                                          std::to_string(target.size()));
  }
  if (target.empty()) throw Error(Errc::EmptyInput, "empty target sequence");
  for (std::size_t t = 0; t < target.size(); ++t) check_label(target[t], logits.cols(), t);
  return cross_entropy_rows(logits, target, nullptr, smoothing, want_grad);
}

}  // namespace

double masked_prediction_loss(const LogitMatrix& logits, std::span<const ClusterId> labels,
                              const std::vector<bool>& masked) {
  return masked_impl(logits, labels, masked, false).loss;
}

double masked_prediction_loss(const LogitMatrix& logits, const FrameLabelSequence& labels,
                              const MaskPlan& mask) {
  return masked_prediction_loss(logits, labels.labels, mask.masked);
}

LossWithGrad masked_prediction_loss_with_grad(const LogitMatrix& logits,
                                              std::span<const ClusterId> labels,
                                              const std::vector<bool>& masked) {
  return masked_impl(logits, labels, masked, true);
}

double sequence_loss(const LogitMatrix& decoder_logits, std::span<const ClusterId> target,
                     double label_smoothing) {
  return sequence_impl(decoder_logits, target, label_smoothing, false).loss;
}

double sequence_loss(const LogitMatrix& decoder_logits, const TargetSequence& target,
                     double label_smoothing) {
  return sequence_loss(decoder_logits, target.tokens, label_smoothing);
}

LossWithGrad sequence_loss_with_grad(const LogitMatrix& decoder_logits,
                                     std::span<const ClusterId> target, double label_smoothing) {
  return sequence_impl(decoder_logits, target, label_smoothing, true);
}

double pretrain_loss(double l_m, double l_s, double alpha) {
  check_unit_interval(alpha, "alpha");
  return alpha * l_m + (1.0 - alpha) * l_s;
}

double finetune_loss(double ctc, double attention, double beta) {
  check_unit_interval(beta, "beta");
  return beta * ctc + (1.0 - beta) * attention;
}

// --- CTC ----------------------------------------------------------------------

std::size_t ctc_min_frames(std::span<const ClusterId> target) noexcept {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) n += (target[i] == target[i - 1]);
  return n;
}

CtcResult ctc_loss(const Matrix& log_probs, std::span<const ClusterId> target, ClusterId blank_id,
                   bool check_rows) {
  const std::size_t frames = log_probs.rows();
  const std::size_t vocab = log_probs.cols();
  if (vocab < 2) throw Error(Errc::InvalidConfig, "CTC needs a blank plus at least one label");
  if (frames == 0) throw Error(Errc::InvalidConfig, "CTC needs at least one frame");
  if (blank_id >= vocab) throw Error(Errc::InvalidConfig, "blank id outside the vocabulary");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == blank_id) {
      throw Error(Errc::InvalidTarget, "blank at target position " + std::to_string(i));
    }
    check_label(target[i], vocab, i);
  }
  if (frames < ctc_min_frames(target)) {
    throw Error(Errc::TargetTooLong, "target needs " + std::to_string(ctc_min_frames(target)) +
                                         " frames, have " + std::to_string(frames));
  }
  for (std::size_t t = 0; t < frames; ++t) {
    double sum = 0.0;
    for (double v : log_probs.row(t)) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw Error(Errc::InvalidConfig, "log-probabilities must be finite or -inf");
      }
      sum += std::exp(v);
    }
    if (check_rows && !(std::abs(sum - 1.0) <= 1e-6)) {
      throw Error(Errc::InvalidConfig, "row " + std::to_string(t) + " of exp(log_probs) sums to " +
                                           std::to_string(sum));
    }
  }

  // Blank-interleaved target: blank, l1, blank, l2, ..., blank.
  const std::size_t states = 2 * target.size() + 1;
  std::vector<ClusterId> ext(states, blank_id);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto lp = [&](std::size_t t, std::size_t s) {
    return std::max(log_probs(t, ext[s]), kLogZero);
  };
  // A skip from s-2 to s is allowed onto a label that differs from the previous label.
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank_id && ext[s] != ext[s - 2]; };

  Matrix alpha(frames, states, kLogZero);
  alpha(0, 0) = lp(0, 0);
  if (states > 1) alpha(0, 1) = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc <= kLogZero ? kLogZero : acc + lp(t, s);
    }
  }

  Matrix beta(frames, states, kLogZero);
  beta(frames - 1, states - 1) = lp(frames - 1, states - 1);
  if (states > 1) beta(frames - 1, states - 2) = lp(frames - 1, states - 2);
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = beta(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) acc = log_add(acc, beta(t + 1, s + 2));
      beta(t, s) = acc <= kLogZero ? kLogZero : acc + lp(t, s);
    }
  }

  double log_total = alpha(frames - 1, states - 1);
  if (states > 1) log_total = log_add(log_total, alpha(frames - 1, states - 2));

  CtcResult result;
  result.loss = -log_total;
  result.grad = Matrix(frames, vocab);
  if (log_total <= kLogZero) return result;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      if (alpha(t, s) <= kLogZero || beta(t, s) <= kLogZero) continue;
      // alpha and beta both include frame t's emission, so divide it out once.
      const double occupancy = std::exp(alpha(t, s) + beta(t, s) - lp(t, s) - log_total);
      result.grad(t, ext[s]) -= occupancy;
    }
  }
  return result;
}

std::vector<ClusterId> ctc_greedy_decode(const Matrix& log_probs, ClusterId blank_id) {
  std::vector<ClusterId> best(log_probs.rows());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    const auto row = log_probs.row(t);
    best[t] = static_cast<ClusterId>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  std::vector<ClusterId> out = collapse_repeats(best);
  std::erase(out, blank_id);
  return out;
}

// --- gradient check -------------------------------------------------------------

namespace {

struct Evaluated {
  double loss;
  Matrix grad;  // with respect to the case's logits
};

Evaluated evaluate(const CtcGradCase& c, const Matrix& logits) {
  const Matrix log_probs = log_softmax(logits);
  CtcResult r = ctc_loss(log_probs, c.target, c.blank_id);
  // Chain rule through log_softmax: dL/dz_j = g_j - p_j * sum_k g_k.
  Matrix grad(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    double row_sum = 0.0;
    for (double g : r.grad.row(t)) row_sum += g;
    for (std::size_t v = 0; v < logits.cols(); ++v) {
      grad(t, v) = r.grad(t, v) - std::exp(log_probs(t, v)) * row_sum;
    }
  }
  return {r.loss, std::move(grad)};
}

Evaluated evaluate(const MaskedPredictionGradCase& c, const Matrix& logits) {
  auto r = masked_prediction_loss_with_grad(logits, c.labels, c.masked);
  return {r.loss, std::move(r.grad)};
}

Evaluated evaluate(const SequenceGradCase& c, const Matrix& logits) {
  auto r = sequence_loss_with_grad(logits, c.target, c.label_smoothing);
  return {r.loss, std::move(r.grad)};
}

}  // namespace

double finite_diff_check(const GradCheckCase& input, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(Errc::InvalidConfig, "finite-difference step must be positive");
  }
  return std::visit(
      [epsilon](const auto& c) {
        const Evaluated analytic = evaluate(c, c.logits);
        Matrix probe = c.logits;
        double worst = 0.0;
        for (std::size_t i = 0; i < probe.data().size(); ++i) {
          const double saved = probe.data()[i];
          probe.data()[i] = saved + epsilon;
          const double up = evaluate(c, probe).loss;
          probe.data()[i] = saved - epsilon;
          const double down = evaluate(c, probe).loss;
          probe.data()[i] = saved;
          const double numeric = (up - down) / (2.0 * epsilon);
          const double a = analytic.grad.data()[i];
          const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
          worst = std::max(worst, std::abs(a - numeric) / scale);
        }
        return worst;
      },
      input);
}

// --- reporting --------------------------------------------------------------------

PretrainTerms make_pretrain_terms(double l_m, double l_s, double alpha) {
  return {l_m, l_s, alpha, pretrain_loss(l_m, l_s, alpha)};
}

FinetuneTerms make_finetune_terms(double ctc, double attention, double beta) {
  return {ctc, attention, beta, finetune_loss(ctc, attention, beta)};
}

std::string to_json(const LossBreakdown& breakdown) {
  nlohmann::ordered_json j;
  const auto& p = breakdown.pretrain;
  const auto& f = breakdown.finetune;
  auto field = [&j](const char* key, bool present, double value) {
    j[key] = present ? nlohmann::ordered_json(value) : nlohmann::ordered_json(nullptr);
  };
  field("l_m", p.has_value(), p ? p->l_m : 0.0);
  field("l_s", p.has_value(), p ? p->l_s : 0.0);
  field("alpha", p.has_value(), p ? p->alpha : 0.0);
  field("total_pretrain", p.has_value(), p ? p->total : 0.0);
  field("ctc", f.has_value(), f ? f->ctc : 0.0);
  field("attention", f.has_value(), f ? f->attention : 0.0);
  field("beta", f.has_value(), f ? f->beta : 0.0);
  field("total_finetune", f.has_value(), f ? f->total : 0.0);
  return j.dump();
}

}  // namespace mbssl
