#include "scd/losses.hpp"

#include <cmath>

#include "scd/errors.hpp"

namespace scd {
namespace {

void check_pair(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& mask) {
  require(y1.dim() == 4 && y1.sizes() == y2.sizes(), ErrorKind::ShapeMismatch, "y1/y2 must both be [B,K,H,W]");
  require(mask.dim() == 3 && mask.size(0) == y1.size(0) && mask.size(1) == y1.size(2) && mask.size(2) == y1.size(3),
          ErrorKind::ShapeMismatch, "mask must be [B,H,W] matching the probability maps");
}

// Probability assigned to label l (1..K) at every pixel: [B, H, W]. Label 0 reads class 0 and must be masked out.
torch::Tensor prob_of_label(const torch::Tensor& y, const torch::Tensor& l) {
  return y.gather(1, (l - 1).clamp_min(0).unsqueeze(1)).squeeze(1);
}

torch::Tensor neg_log(const torch::Tensor& p) { return -torch::log(p.clamp_min(kLogEps)); }

}  // namespace

void validate(const LossWeights& w) {
  for (double v : {w.alpha, w.beta, w.gamma, w.lambda1, w.change}) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidConfig, "loss weights must be finite and nonnegative");
  }
  require(w.tau > 0.0 && w.tau < 1.0, ErrorKind::InvalidConfig, "losses.tau must lie in (0,1)");
}

torch::Tensor semantic_ce(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1,
                          const torch::Tensor& l2, const torch::Tensor& changed) {
  check_pair(y1, y2, changed);
  // Changed pixels whose label is 0 at a date (malformed annotation) are skipped for that date.
  const auto valid1 = changed.logical_and(l1.gt(0));
  const auto valid2 = changed.logical_and(l2.gt(0));
  const auto n = valid1.sum() + valid2.sum();
  if (n.item<int64_t>() == 0) return torch::zeros({}, y1.options());
  const auto s1 = neg_log(prob_of_label(y1, l1).masked_select(valid1)).sum();
  const auto s2 = neg_log(prob_of_label(y2, l2).masked_select(valid2)).sum();
  return (s1 + s2) / n.to(y1.scalar_type());
}

torch::Tensor dice_term(const torch::Tensor& y, const torch::Tensor& l, const torch::Tensor& changed) {
  const int64_t k = y.size(1);
  const auto valid = changed.logical_and(l.gt(0));
  const auto probs = y.permute({0, 2, 3, 1}).masked_select(valid.unsqueeze(-1)).view({-1, k});
  if (probs.size(0) == 0) return torch::zeros({}, y.options());
  const auto target = torch::one_hot(l.masked_select(valid) - 1, k).to(y.scalar_type());
  const auto inter = (probs * target).sum(0);
  const auto pred_sum = probs.sum(0);
  const auto gt_sum = target.sum(0);
  const auto present = gt_sum.gt(0);
  const auto per_class = 1.0 - 2.0 * inter / (pred_sum + gt_sum + kDiceEps);
  return per_class.masked_select(present).mean();
}

torch::Tensor semantic_dice(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1,
                            const torch::Tensor& l2, const torch::Tensor& changed) {
  check_pair(y1, y2, changed);
  std::vector<torch::Tensor> terms;
  if (changed.logical_and(l1.gt(0)).any().item<bool>()) terms.push_back(dice_term(y1, l1, changed));
  if (changed.logical_and(l2.gt(0)).any().item<bool>()) terms.push_back(dice_term(y2, l2, changed));
  if (terms.empty()) return torch::zeros({}, y1.options());
  return torch::stack(terms).mean();
}

PseudoLabels make_pseudo_labels(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed,
                                double tau) {
  check_pair(y1, y2, changed);
  torch::NoGradGuard no_grad;
  const auto v = (y1.detach() + y2.detach()) / 2.0;
  const auto [max_v, arg] = v.max(1);
  const auto keep = changed.logical_not().logical_and(max_v.ge(tau));
  return {torch::where(keep, arg + 1, torch::zeros_like(arg)), tau};
}

torch::Tensor pseudo_label_loss(const torch::Tensor& y1, const torch::Tensor& y2, const PseudoLabels& pseudo) {
  check_pair(y1, y2, pseudo.lt);
  const auto included = pseudo.lt.gt(0);
  const auto n = included.sum().item<int64_t>();
  if (n == 0) return torch::zeros({}, y1.options());
  const auto s1 = neg_log(prob_of_label(y1, pseudo.lt).masked_select(included)).sum();
  const auto s2 = neg_log(prob_of_label(y2, pseudo.lt).masked_select(included)).sum();
  return (s1 + s2) / static_cast<double>(2 * n);
}

torch::Tensor consistency_loss(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed) {
  check_pair(y1, y2, changed);
  const auto n1 = y1.norm(2, 1);
  const auto n2 = y2.norm(2, 1);
  require(n1.min().item<double>() > 0.0 && n2.min().item<double>() > 0.0, ErrorKind::NonFinite,
          "ZeroVector: cosine similarity of a zero probability vector");
  const auto cos = (y1 * y2).sum(1) / (n1 * n2);
  return torch::where(changed, cos, 1.0 - cos).mean();
}

torch::Tensor change_loss(const torch::Tensor& yc, const torch::Tensor& changed) {
  require(yc.sizes() == changed.sizes(), ErrorKind::ShapeMismatch, "yc and change mask differ in shape");
  const auto p = yc.clamp(kLogEps, 1.0 - kLogEps);
  const auto m = changed.to(yc.scalar_type());
  return -(m * torch::log(p) + (1.0 - m) * torch::log(1.0 - p)).mean();
}

torch::Tensor total_loss(const LossTerms& t, const LossWeights& w) {
  auto semantic = t.ce;
  if (w.lambda1 != 0.0) {
    require(t.dice.defined(), ErrorKind::InvalidConfig, "Dice term missing while lambda1 != 0");
    semantic = semantic + w.lambda1 * t.dice;
  }
  auto total = w.alpha * semantic + w.beta * t.psd + w.gamma * t.sc + w.change * t.chg;
  require(std::isfinite(total.item<double>()), ErrorKind::NonFinite, "total loss is not finite");
  return total;
}

LossTerms compute_loss_terms(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& yc,
                             const torch::Tensor& l1, const torch::Tensor& l2, const torch::Tensor& changed,
                             const LossWeights& w) {
  LossTerms t;
  t.ce = semantic_ce(y1, y2, l1, l2, changed);
  if (w.lambda1 != 0.0) t.dice = semantic_dice(y1, y2, l1, l2, changed);
  t.psd = pseudo_label_loss(y1, y2, make_pseudo_labels(y1, y2, changed, w.tau));
  t.sc = consistency_loss(y1, y2, changed);
  t.chg = change_loss(yc, changed);
  return t;
}

}  // namespace scd
