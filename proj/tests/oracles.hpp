#pragma once

// Independent reference implementations used as test oracles: plain loops in double precision,
// written against raw tensors and weight arrays rather than the library's own code paths.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "scd/cbam.hpp"

namespace scd::oracle {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Reference CBAM fusion written against raw weight arrays, one sample, all loops in double.
struct RefCbam {
  torch::Tensor w1, b1, w2, b2;  // fc1 [h,C], fc2 [C,h]
  torch::Tensor k, kb;           // conv [1,2,7,7], bias [1]

  explicit RefCbam(Cbam& m)
      : w1(m->channel->fc1->weight.detach().to(torch::kFloat64)),
        b1(m->channel->fc1->bias.detach().to(torch::kFloat64)),
        w2(m->channel->fc2->weight.detach().to(torch::kFloat64)),
        b2(m->channel->fc2->bias.detach().to(torch::kFloat64)),
        k(m->spatial->conv->weight.detach().to(torch::kFloat64)),
        kb(m->spatial->conv->bias.detach().to(torch::kFloat64)) {}

  std::vector<double> mlp(const std::vector<double>& v) const {
    const int64_t h = w1.size(0), c = w1.size(1);
    std::vector<double> hidden(h), out(c);
    for (int64_t j = 0; j < h; ++j) {
      double s = b1[j].item<double>();
      for (int64_t i = 0; i < c; ++i) s += w1[j][i].item<double>() * v[i];
      hidden[j] = std::max(0.0, s);
    }
    for (int64_t i = 0; i < c; ++i) {
      double s = b2[i].item<double>();
      for (int64_t j = 0; j < h; ++j) s += w2[i][j].item<double>() * hidden[j];
      out[i] = s;
    }
    return out;
  }

  // x: [C,H,W] accessor-friendly double tensor. Returns channel gate, spatial gate, gated map.
  void gates(const torch::Tensor& x, std::vector<double>& mc, std::vector<double>& ms) const {
    const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
    auto a = x.accessor<double, 3>();
    std::vector<double> avg(c, 0.0), mx(c, -1e300);
    for (int64_t i = 0; i < c; ++i)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t z = 0; z < w; ++z) {
          avg[i] += a[i][y][z] / static_cast<double>(h * w);
          mx[i] = std::max(mx[i], a[i][y][z]);
        }
    const auto ma = mlp(avg), mm = mlp(mx);
    mc.assign(c, 0.0);
    for (int64_t i = 0; i < c; ++i) mc[i] = sigmoid(ma[i] + mm[i]);

    std::vector<double> mean_map(h * w, 0.0), max_map(h * w, -1e300);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t z = 0; z < w; ++z)
        for (int64_t i = 0; i < c; ++i) {
          const double v = a[i][y][z] * mc[i];
          mean_map[y * w + z] += v / static_cast<double>(c);
          max_map[y * w + z] = std::max(max_map[y * w + z], v);
        }
    auto ka = k.accessor<double, 4>();
    ms.assign(h * w, 0.0);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t z = 0; z < w; ++z) {
        double s = kb[0].item<double>();
        for (int64_t dy = -3; dy <= 3; ++dy)
          for (int64_t dz = -3; dz <= 3; ++dz) {
            const int64_t yy = y + dy, zz = z + dz;
            if (yy < 0 || yy >= h || zz < 0 || zz >= w) continue;
            s += ka[0][0][dy + 3][dz + 3] * mean_map[yy * w + zz] + ka[0][1][dy + 3][dz + 3] * max_map[yy * w + zz];
          }
        ms[y * w + z] = sigmoid(s);
      }
  }
};

// Bilinear resampling with half-pixel centres, edge clamped.
inline torch::Tensor ref_resize(const torch::Tensor& x, int64_t oh, int64_t ow) {
  const int64_t c = x.size(0), ih = x.size(1), iw = x.size(2);
  auto out = torch::zeros({c, oh, ow}, torch::kFloat64);
  auto a = x.accessor<double, 3>();
  auto o = out.accessor<double, 3>();
  auto coord = [](int64_t dst, int64_t in, int64_t outn, int64_t& i0, int64_t& i1, double& f) {
    const double src = std::max(0.0, (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / outn - 0.5);
    i0 = std::min<int64_t>(static_cast<int64_t>(std::floor(src)), in - 1);
    i1 = std::min<int64_t>(i0 + 1, in - 1);
    f = src - static_cast<double>(i0);
  };
  for (int64_t y = 0; y < oh; ++y) {
    int64_t y0, y1;
    double fy;
    coord(y, ih, oh, y0, y1, fy);
    for (int64_t z = 0; z < ow; ++z) {
      int64_t z0, z1;
      double fz;
      coord(z, iw, ow, z0, z1, fz);
      for (int64_t i = 0; i < c; ++i) {
        o[i][y][z] = (1 - fy) * ((1 - fz) * a[i][y0][z0] + fz * a[i][y0][z1]) +
                     fy * ((1 - fz) * a[i][y1][z0] + fz * a[i][y1][z1]);
      }
    }
  }
  return out;
}

inline torch::Tensor ref_fuse(const RefCbam& ref, const torch::Tensor& x_low, const torch::Tensor& x_high) {
  const int64_t c = x_low.size(0), h = x_low.size(1), w = x_low.size(2);
  std::vector<double> mc, ms;
  ref.gates(x_low, mc, ms);
  auto att = torch::zeros({c, h, w}, torch::kFloat64);
  auto a = x_low.accessor<double, 3>();
  auto o = att.accessor<double, 3>();
  for (int64_t i = 0; i < c; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t z = 0; z < w; ++z) o[i][y][z] = a[i][y][z] * mc[i] * ms[y * w + z];
  return torch::cat({ref_resize(x_high, h, w), att}, 0);
}

// Central differences of f with respect to every element of t (in place perturbation).
inline torch::Tensor numeric_grad(const std::function<double()>& f, torch::Tensor t, double eps = 1e-6) {
  torch::NoGradGuard no_grad;
  auto g = torch::zeros_like(t);
  auto flat = t.view({-1});
  auto gf = g.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + eps;
    const double up = f();
    flat[i] = orig - eps;
    const double down = f();
    flat[i] = orig;
    gf[i] = (up - down) / (2 * eps);
  }
  return g;
}

inline double grad_rel_err(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  return ((analytic - numeric).norm() / (numeric.norm() + 1e-12)).item<double>();
}


// ---------------------------------------------------------------------------
// Losses. y: [B,K,H,W], l: [B,H,W] int64, changed: [B,H,W] bool, all read element by element.

inline double neg_log(double p) { return -std::log(std::max(p, 1e-7)); }

inline double ce(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1, const torch::Tensor& l2,
                 const torch::Tensor& changed) {
  const auto a1 = y1.to(torch::kFloat64).contiguous(), a2 = y2.to(torch::kFloat64).contiguous();
  auto p1 = a1.accessor<double, 4>(), p2 = a2.accessor<double, 4>();
  auto g1 = l1.accessor<int64_t, 3>(), g2 = l2.accessor<int64_t, 3>();
  auto m = changed.accessor<bool, 3>();
  double sum = 0;
  int64_t n = 0;
  for (int64_t b = 0; b < l1.size(0); ++b)
    for (int64_t y = 0; y < l1.size(1); ++y)
      for (int64_t x = 0; x < l1.size(2); ++x) {
        if (!m[b][y][x]) continue;
        if (g1[b][y][x] > 0) sum += neg_log(p1[b][g1[b][y][x] - 1][y][x]), ++n;
        if (g2[b][y][x] > 0) sum += neg_log(p2[b][g2[b][y][x] - 1][y][x]), ++n;
      }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Per-date Dice term; returns false in `has` when the date has no labelled changed pixel.
inline double dice_date(const torch::Tensor& yt, const torch::Tensor& l, const torch::Tensor& changed, bool& has) {
  const auto a = yt.to(torch::kFloat64).contiguous();
  auto p = a.accessor<double, 4>();
  auto g = l.accessor<int64_t, 3>();
  auto m = changed.accessor<bool, 3>();
  const int64_t k = yt.size(1);
  std::vector<double> inter(k, 0), ps(k, 0), gs(k, 0);
  has = false;
  for (int64_t b = 0; b < l.size(0); ++b)
    for (int64_t y = 0; y < l.size(1); ++y)
      for (int64_t x = 0; x < l.size(2); ++x) {
        if (!m[b][y][x] || g[b][y][x] == 0) continue;
        has = true;
        for (int64_t c = 0; c < k; ++c) {
          const double t = g[b][y][x] == c + 1 ? 1.0 : 0.0;
          inter[c] += p[b][c][y][x] * t;
          ps[c] += p[b][c][y][x];
          gs[c] += t;
        }
      }
  double sum = 0;
  int64_t present = 0;
  for (int64_t c = 0; c < k; ++c) {
    if (gs[c] == 0) continue;
    sum += 1.0 - 2.0 * inter[c] / (ps[c] + gs[c] + 1e-6);
    ++present;
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

inline double dice(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& l1, const torch::Tensor& l2,
                   const torch::Tensor& changed) {
  bool h1, h2;
  const double d1 = dice_date(y1, l1, changed, h1), d2 = dice_date(y2, l2, changed, h2);
  const int n = (h1 ? 1 : 0) + (h2 ? 1 : 0);
  return n == 0 ? 0.0 : ((h1 ? d1 : 0.0) + (h2 ? d2 : 0.0)) / n;
}

// Pseudo labels by loop: 1 + argmax of the mean distribution where unchanged and max >= tau, else 0.
inline torch::Tensor pseudo_labels(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed,
                                   double tau) {
  const auto a1 = y1.to(torch::kFloat64).contiguous(), a2 = y2.to(torch::kFloat64).contiguous();
  auto p1 = a1.accessor<double, 4>(), p2 = a2.accessor<double, 4>();
  auto m = changed.accessor<bool, 3>();
  auto out = torch::zeros({y1.size(0), y1.size(2), y1.size(3)}, torch::kInt64);
  auto o = out.accessor<int64_t, 3>();
  for (int64_t b = 0; b < out.size(0); ++b)
    for (int64_t y = 0; y < out.size(1); ++y)
      for (int64_t x = 0; x < out.size(2); ++x) {
        if (m[b][y][x]) continue;
        double best = -1;
        int64_t arg = 0;
        for (int64_t c = 0; c < y1.size(1); ++c) {
          const double v = (p1[b][c][y][x] + p2[b][c][y][x]) / 2.0;
          if (v > best) best = v, arg = c;
        }
        if (best >= tau) o[b][y][x] = arg + 1;
      }
  return out;
}

inline double pseudo_loss(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& lt) {
  const auto a1 = y1.to(torch::kFloat64).contiguous(), a2 = y2.to(torch::kFloat64).contiguous();
  auto p1 = a1.accessor<double, 4>(), p2 = a2.accessor<double, 4>();
  auto g = lt.accessor<int64_t, 3>();
  double sum = 0;
  int64_t n = 0;
  for (int64_t b = 0; b < lt.size(0); ++b)
    for (int64_t y = 0; y < lt.size(1); ++y)
      for (int64_t x = 0; x < lt.size(2); ++x) {
        if (g[b][y][x] == 0) continue;
        sum += neg_log(p1[b][g[b][y][x] - 1][y][x]) + neg_log(p2[b][g[b][y][x] - 1][y][x]);
        n += 2;
      }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double consistency(const torch::Tensor& y1, const torch::Tensor& y2, const torch::Tensor& changed) {
  const auto a1 = y1.to(torch::kFloat64).contiguous(), a2 = y2.to(torch::kFloat64).contiguous();
  auto p1 = a1.accessor<double, 4>(), p2 = a2.accessor<double, 4>();
  auto m = changed.accessor<bool, 3>();
  double sum = 0;
  int64_t n = 0;
  for (int64_t b = 0; b < changed.size(0); ++b)
    for (int64_t y = 0; y < changed.size(1); ++y)
      for (int64_t x = 0; x < changed.size(2); ++x) {
        double dot = 0, n1 = 0, n2 = 0;
        for (int64_t c = 0; c < y1.size(1); ++c) {
          dot += p1[b][c][y][x] * p2[b][c][y][x];
          n1 += p1[b][c][y][x] * p1[b][c][y][x];
          n2 += p2[b][c][y][x] * p2[b][c][y][x];
        }
        const double cos = dot / (std::sqrt(n1) * std::sqrt(n2));
        sum += m[b][y][x] ? cos : 1.0 - cos;
        ++n;
      }
  return sum / static_cast<double>(n);
}

inline double change_bce(const torch::Tensor& yc, const torch::Tensor& changed) {
  const auto a = yc.to(torch::kFloat64).contiguous();
  auto p = a.accessor<double, 3>();
  auto m = changed.accessor<bool, 3>();
  double sum = 0;
  int64_t n = 0;
  for (int64_t b = 0; b < yc.size(0); ++b)
    for (int64_t y = 0; y < yc.size(1); ++y)
      for (int64_t x = 0; x < yc.size(2); ++x) {
        const double q = std::clamp(p[b][y][x], 1e-7, 1.0 - 1e-7);
        sum += m[b][y][x] ? -std::log(q) : -std::log(1.0 - q);
        ++n;
      }
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Metrics: brute-force counting and straight-line formulas.

struct Counts {
  std::vector<std::vector<int64_t>> q;
  int64_t tp = 0, pred_changed = 0, gt_changed = 0;
};

inline void count_date(const torch::Tensor& pred, const torch::Tensor& gt, Counts& c) {
  const auto p = pred.contiguous().view({-1}), g = gt.contiguous().view({-1});
  const auto* pp = p.data_ptr<int64_t>();
  const auto* gp = g.data_ptr<int64_t>();
  for (int64_t i = 0; i < p.numel(); ++i) {
    c.q[gp[i]][pp[i]] += 1;
    if (pp[i] != 0) ++c.pred_changed;
    if (gp[i] != 0) ++c.gt_changed;
    if (pp[i] != 0 && gp[i] != 0 && pp[i] == gp[i]) ++c.tp;
  }
}

inline Counts count(const torch::Tensor& p1, const torch::Tensor& p2, const torch::Tensor& g1, const torch::Tensor& g2,
                    int64_t k) {
  Counts c;
  c.q.assign(k + 1, std::vector<int64_t>(k + 1, 0));
  count_date(p1, g1, c);
  count_date(p2, g2, c);
  return c;
}

struct Scores {
  double oa, iou_nc, iou_ch, miou, sek, fscd;
};

inline Scores scores(const Counts& c) {
  const size_t n = c.q.size();
  double total = 0, diag = 0, row0 = 0, col0 = 0, diag_ch = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      const double v = static_cast<double>(c.q[i][j]);
      total += v;
      if (i == j) diag += v;
      if (i == j && i > 0) diag_ch += v;
      if (i == 0) row0 += v;
      if (j == 0) col0 += v;
    }
  const double q00 = static_cast<double>(c.q[0][0]);
  Scores s{};
  s.oa = diag / total;
  s.iou_nc = (row0 + col0 - q00) == 0 ? 0.0 : q00 / (row0 + col0 - q00);
  s.iou_ch = (total - q00) == 0 ? 0.0 : diag_ch / (total - q00);
  s.miou = (s.iou_nc + s.iou_ch) / 2;

  const double hat_total = total - q00;
  double rho_num = diag - q00, eta_num = 0;
  for (size_t j = 0; j < n; ++j) {
    double r = 0, col = 0;
    for (size_t i = 0; i < n; ++i) {
      r += (j == 0 && i == 0) ? 0.0 : static_cast<double>(c.q[j][i]);
      col += (j == 0 && i == 0) ? 0.0 : static_cast<double>(c.q[i][j]);
    }
    eta_num += r * col;
  }
  if (hat_total == 0) {
    s.sek = 0;
  } else {
    const double rho = rho_num / hat_total, eta = eta_num / (hat_total * hat_total);
    s.sek = eta == 1.0 ? 0.0 : std::exp(s.iou_ch - 1.0) * (rho - eta) / (1.0 - eta);
  }
  const double p = c.pred_changed == 0 ? 0.0 : static_cast<double>(c.tp) / c.pred_changed;
  const double r = c.gt_changed == 0 ? 0.0 : static_cast<double>(c.tp) / c.gt_changed;
  s.fscd = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
  return s;
}

}  // namespace scd::oracle
