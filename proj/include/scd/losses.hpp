#pragma once

#include <torch/torch.h>

namespace scd {

// Shapes used throughout:
//   y1, y2   [B, K, H, W] class probabilities (simplex over dim 1)
//   l1, l2   [B, H, W] int64 labels in {0..K}, 0 = no-change
//   changed  [B, H, W] bool change mask (Omega_c = true, Omega_u = false)
//   yc       [B, H, W] change probability
// Every reduction is a mean, so magnitudes do not depend on resolution or batch size.

inline constexpr double kLogEps = 1e-7;   // probability floor inside logarithms
inline constexpr double kDiceEps = 1e-6;  // Dice denominator smoothing

struct LossWeights {
  double alpha = 1.0;    // changed-region semantic terms
  double beta = 1.0;     // pseudo-label term
  double gamma = 1.0;    // bi-temporal consistency term
  double lambda1 = 1.0;  // Dice inside the alpha bracket; 0 disables Dice entirely
  double change = 1.0;   // change-map BCE
  double tau = 0.8;      // pseudo-label confidence threshold
};

void validate(const LossWeights& weights);

// Mean over changed pixels and both dates of -log y_i[l_i - 1]. Zero when no pixel changed.
torch::Tensor semantic_ce(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1,
                          const torch::Tensor& l2, const torch::Tensor& changed);

// Soft Dice over changed pixels, macro-averaged over the classes present in each date's ground
// truth, then averaged over the two dates. Zero when no pixel changed.
torch::Tensor semantic_dice(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1,
                            const torch::Tensor& l2, const torch::Tensor& changed);

// Per-date term of semantic_dice: mean over present classes of 1 - 2 sum(y_k [l=k]) / (sum y_k + sum [l=k] + eps).
torch::Tensor dice_term(const torch::Tensor& y, const torch::Tensor& l, const torch::Tensor& changed);

struct PseudoLabels {
  torch::Tensor lt;  // [B, H, W] int64; class 1..K where confident, 0 = excluded
  double tau = 0.8;
};

// On unchanged pixels, v = (y1 + y2) / 2; label argmax(v) + 1 where max(v) >= tau. No gradient.
PseudoLabels make_pseudo_labels(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed,
                                double tau);

// Mean over included pixels and both dates of -log y_i[lt - 1]. Zero when nothing qualifies.
torch::Tensor pseudo_label_loss(const torch::Tensor& y1, const torch::Tensor& y2, const PseudoLabels& pseudo);

// Mean over all pixels of 1 - cos(y1, y2) on unchanged pixels and cos(y1, y2) on changed pixels.
torch::Tensor consistency_loss(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed);

// Mean binary cross-entropy between yc (clamped to [eps, 1 - eps]) and the change mask.
torch::Tensor change_loss(const torch::Tensor& yc, const torch::Tensor& changed);

struct LossTerms {
  torch::Tensor ce;
  torch::Tensor dice;  // undefined when lambda1 == 0
  torch::Tensor psd;
  torch::Tensor sc;
  torch::Tensor chg;
};

// alpha (ce + lambda1 dice) + beta psd + gamma sc + change chg. Throws NonFinite.
torch::Tensor total_loss(const LossTerms& terms, const LossWeights& weights);

// Computes every term from network outputs and ground truth.
LossTerms compute_loss_terms(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& yc,
                             const torch::Tensor& l1, const torch::Tensor& l2, const torch::Tensor& changed,
                             const LossWeights& weights);

}  // namespace scd
