#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mbssl/clustering.hpp"
#include "mbssl/labeling.hpp"
#include "mbssl/matrix.hpp"

namespace mbssl {

/// Unnormalized T x V scores.
using LogitMatrix = Matrix;

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultBeta = 0.3;
/// log(0) stand-in for the CTC recursions.
inline constexpr double kLogZero = -1e30;

/// Mean over masked frames of -ln softmax(logits)[t, label[t]].
double masked_prediction_loss(const LogitMatrix& logits, std::span<const ClusterId> labels,
                              const std::vector<bool>& masked);
double masked_prediction_loss(const LogitMatrix& logits, const FrameLabelSequence& labels,
                              const MaskPlan& mask);

/// Same loss plus d loss / d logits.
struct LossWithGrad {
  double loss = 0.0;
  Matrix grad;
};
LossWithGrad masked_prediction_loss_with_grad(const LogitMatrix& logits,
                                              std::span<const ClusterId> labels,
                                              const std::vector<bool>& masked);

/// Teacher-forced cross-entropy, mean over target positions. With
/// label_smoothing = e the per-position term is
/// (1 - e) * -ln p(token) + e * mean_v -ln p(v).
double sequence_loss(const LogitMatrix& decoder_logits, std::span<const ClusterId> target,
                     double label_smoothing = 0.0);
double sequence_loss(const LogitMatrix& decoder_logits, const TargetSequence& target,
                     double label_smoothing = 0.0);
LossWithGrad sequence_loss_with_grad(const LogitMatrix& decoder_logits,
                                     std::span<const ClusterId> target,
                                     double label_smoothing = 0.0);

/// alpha * l_m + (1 - alpha) * l_s.
double pretrain_loss(double l_m, double l_s, double alpha = kDefaultAlpha);
/// beta * ctc + (1 - beta) * attention.
double finetune_loss(double ctc, double attention, double beta = kDefaultBeta);

struct CtcResult {
  double loss = 0.0;
  /// d loss / d log_probs, treating every entry as an independent variable.
  Matrix grad;
};

/// Minimum frame count able to emit `target` (repeats need a blank between).
std::size_t ctc_min_frames(std::span<const ClusterId> target) noexcept;

/// -ln of the total probability of all alignments of `target`, by log-domain
/// forward-backward over the blank-interleaved target. When `check_rows` is
/// set, every row of exp(log_probs) must sum to 1 within 1e-6.
CtcResult ctc_loss(const Matrix& log_probs, std::span<const ClusterId> target,
                   ClusterId blank_id = 0, bool check_rows = true);

/// Per-frame argmax (lowest index on ties), collapse repeats, drop blanks.
std::vector<ClusterId> ctc_greedy_decode(const Matrix& log_probs, ClusterId blank_id = 0);

/// Inputs for finite_diff_check. Each case holds unnormalized logits; the CTC
/// case feeds log_softmax(logits) to ctc_loss and maps the gradient back
/// through the softmax.
struct CtcGradCase {
  Matrix logits;
  std::vector<ClusterId> target;
  ClusterId blank_id = 0;
};
struct MaskedPredictionGradCase {
  Matrix logits;
  std::vector<ClusterId> labels;
  std::vector<bool> masked;
};
struct SequenceGradCase {
  Matrix logits;
  std::vector<ClusterId> target;
  double label_smoothing = 0.0;
};
using GradCheckCase = std::variant<CtcGradCase, MaskedPredictionGradCase, SequenceGradCase>;

/// max over coordinates of |a - f| / max(|a|, |f|, 1e-8) between the analytic
/// gradient a and central differences f with step `epsilon`.
double finite_diff_check(const GradCheckCase& input, double epsilon);

struct PretrainTerms {
  double l_m = 0.0;
  double l_s = 0.0;
  double alpha = kDefaultAlpha;
  double total = 0.0;
};
struct FinetuneTerms {
  double ctc = 0.0;
  double attention = 0.0;
  double beta = kDefaultBeta;
  double total = 0.0;
};

/// Either half may be absent when only one objective was evaluated.
struct LossBreakdown {
  std::optional<PretrainTerms> pretrain;
  std::optional<FinetuneTerms> finetune;
};

PretrainTerms make_pretrain_terms(double l_m, double l_s, double alpha = kDefaultAlpha);
FinetuneTerms make_finetune_terms(double ctc, double attention, double beta = kDefaultBeta);

/// Flat JSON object: l_m, l_s, alpha, total_pretrain, ctc, attention, beta,
/// total_finetune (null for an absent half).
std::string to_json(const LossBreakdown& breakdown);

}  // namespace mbssl
