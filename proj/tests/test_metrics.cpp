#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_torch.hpp"

#include "scd/errors.hpp"
#include "scd/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace scd;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int64_t>(rows.size()) - 1);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows.size(); ++j) cm.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) = rows[i][j];
  return cm;
}

// Prediction derived from gt with a given fraction of pixels relabelled at random.
torch::Tensor perturb(std::mt19937_64& rng, const torch::Tensor& gt, int64_t k, double rate) {
  auto out = gt.clone();
  auto* p = out.data_ptr<int64_t>();
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int64_t> cls(0, k);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (u(rng) < rate) p[i] = cls(rng);
  return out;
}

}  // namespace

TEST_CASE("accumulate: perfect prediction and single pixel") {
  std::mt19937_64 rng(1);
  auto [g1, g2] = test::random_label_pair(rng, 1, 8, 8, 6, 0.4);
  ConfusionMatrix cm(6);
  ScdCounts sc;
  accumulate(g1, g2, g1, g2, cm, sc);
  for (int64_t i = 0; i < 7; ++i)
    for (int64_t j = 0; j < 7; ++j)
      if (i != j) CHECK(cm.at(i, j) == 0);
  CHECK(sc.tp == sc.pred_changed);
  CHECK(sc.tp == sc.gt_changed);
  CHECK(cm.total() == 2 * 64);

  ConfusionMatrix one(6);
  ScdCounts s1;
  accumulate_date(torch::full({1, 1}, 5, torch::kInt64), torch::full({1, 1}, 3, torch::kInt64), one, s1);
  CHECK(one.at(3, 5) == 1);
  CHECK(one.total() == 1);
  CHECK(s1.tp == 0);

  CHECK_THROWS_AS(accumulate_date(torch::full({1, 1}, 7, torch::kInt64), torch::zeros({1, 1}, torch::kInt64), one, s1),
                  Error);
  CHECK_THROWS_AS(accumulate_date(torch::zeros({2, 1}, torch::kInt64), torch::zeros({1, 2}, torch::kInt64), one, s1),
                  Error);
}

TEST_CASE("hand-computed formulas") {
  CHECK(oa(from_rows({{3, 1}, {1, 3}})) == doctest::Approx(0.75));
  const auto q = from_rows({{2, 1, 0}, {0, 1, 0}, {1, 0, 1}});
  CHECK(iou_nochange(q) == doctest::Approx(0.5));
  CHECK(iou_changed(q) == doctest::Approx(0.5));
  CHECK(miou(q) == doctest::Approx(0.5));
  CHECK(fscd(ScdCounts{6, 10, 12}) == doctest::Approx(2 * 0.6 * 0.5 / 1.1).epsilon(1e-12));
  CHECK(fscd(ScdCounts{5, 5, 5}) == 1.0);
  CHECK(fscd(ScdCounts{0, 5, 5}) == 0.0);
  CHECK_THROWS_AS(oa(ConfusionMatrix(3)), Error);
}

TEST_CASE("SeK signs and degenerate cases") {
  const auto perfect = from_rows({{5, 0, 0}, {0, 3, 0}, {0, 0, 2}});
  CHECK(sek(perfect) == doctest::Approx(1.0));
  const auto all_wrong = from_rows({{5, 0, 0}, {0, 0, 3}, {0, 2, 0}});
  CHECK(iou_changed(all_wrong) == 0.0);
  CHECK(sek(all_wrong) <= 0.0);
  const auto no_change = from_rows({{9, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  CHECK(sek(no_change) == 0.0);
  CHECK(iou_changed(no_change) == 0.0);
}

TEST_CASE("1000 random 16x16 instances against brute-force counting") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto [g1, g2] = test::random_label_pair(rng, 1, 16, 16, 6, 0.35);
    const auto p1 = perturb(rng, g1, 6, 0.3), p2 = perturb(rng, g2, 6, 0.3);
    ConfusionMatrix cm(6);
    ScdCounts sc;
    accumulate(p1, p2, g1, g2, cm, sc);
    const auto want = oracle::count(p1, p2, g1, g2, 6);
    for (int64_t i = 0; i < 7; ++i)
      for (int64_t j = 0; j < 7; ++j) REQUIRE(cm.at(i, j) == want.q[i][j]);
    REQUIRE(sc.tp == want.tp);
    REQUIRE(sc.pred_changed == want.pred_changed);
    REQUIRE(sc.gt_changed == want.gt_changed);

    const auto s = oracle::scores(want);
    REQUIRE(std::abs(oa(cm) - s.oa) < 1e-9);
    REQUIRE(std::abs(miou(cm) - s.miou) < 1e-9);
    REQUIRE(std::abs(sek(cm) - s.sek) < 1e-9);
    REQUIRE(std::abs(fscd(sc) - s.fscd) < 1e-9);
  }
}

TEST_CASE("perfect prediction scores 1 everywhere") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto [g1, g2] = test::random_label_pair(rng, 2, 16, 16, 6, 0.3);
    MetricAccumulator acc(6);
    acc.add(g1, g2, g1, g2);
    const auto r = acc.report();
    CHECK(r.oa == 1.0);
    CHECK(r.miou == 1.0);
    CHECK(r.sek == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.fscd == 1.0);
    CHECK(r.n_scenes == 2);
    CHECK(r.n_pixels == 2 * 256);
  }
}

TEST_CASE("sharded accumulation then merge equals a single pass") {
  std::mt19937_64 rng(4);
  MetricAccumulator single(6), a(6), b(6), c(6);
  for (int i = 0; i < 9; ++i) {
    auto [g1, g2] = test::random_label_pair(rng, 1, 16, 16, 6, 0.3);
    const auto p1 = perturb(rng, g1, 6, 0.4), p2 = perturb(rng, g2, 6, 0.4);
    single.add(p1, p2, g1, g2);
    (i % 3 == 0 ? a : i % 3 == 1 ? b : c).add(p1, p2, g1, g2);
  }
  MetricAccumulator ab = a;
  ab.merge(b);
  ab.merge(c);
  MetricAccumulator cb = c;
  cb.merge(b);
  cb.merge(a);
  CHECK(ab.cm == single.cm);
  CHECK(ab.sc == single.sc);
  CHECK(cb.cm == single.cm);
  CHECK(ab.n_scenes == single.n_scenes);
  CHECK(ConfusionMatrix::from_json(single.cm.to_json()) == single.cm);
}

TEST_CASE("metrics are invariant under a relabelling of classes 1..K") {
  std::mt19937_64 rng(5);
  std::vector<int64_t> perm{0, 1, 2, 3, 4, 5, 6};
  for (int trial = 0; trial < 50; ++trial) {
    auto [g1, g2] = test::random_label_pair(rng, 1, 16, 16, 6, 0.4);
    const auto p1 = perturb(rng, g1, 6, 0.3), p2 = perturb(rng, g2, 6, 0.3);
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    const auto map = torch::tensor(perm, torch::kInt64);
    auto relabel = [&](const torch::Tensor& t) { return map.index({t}); };

    MetricAccumulator x(6), y(6);
    x.add(p1, p2, g1, g2);
    y.add(relabel(p1), relabel(p2), relabel(g1), relabel(g2));
    const auto rx = x.report(), ry = y.report();
    CHECK(rx.oa == doctest::Approx(ry.oa).epsilon(1e-12));
    CHECK(rx.miou == doctest::Approx(ry.miou).epsilon(1e-12));
    CHECK(rx.sek == doctest::Approx(ry.sek).epsilon(1e-12));
    CHECK(rx.fscd == doctest::Approx(ry.fscd).epsilon(1e-12));
  }
}

TEST_CASE("correcting a wrong changed pixel never lowers OA, IoU_ch or F_scd") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto [g1, g2] = test::random_label_pair(rng, 1, 8, 8, 4, 0.5);
    auto p1 = perturb(rng, g1, 4, 0.5);
    const auto p2 = g2.clone();
    const auto wrong = (p1 != g1).logical_and(g1 != 0).nonzero();
    if (wrong.size(0) == 0) continue;
    MetricAccumulator before(4), after(4);
    before.add(p1, p2, g1, g2);
    const auto idx = wrong[static_cast<int64_t>(rng() % static_cast<uint64_t>(wrong.size(0)))];
    p1.index_put_({idx[0], idx[1], idx[2]}, g1.index({idx[0], idx[1], idx[2]}));
    after.add(p1, p2, g1, g2);
    const auto rb = before.report(), ra = after.report();
    CHECK(ra.oa >= rb.oa);
    CHECK(ra.iou_changed >= rb.iou_changed);
    CHECK(ra.fscd >= rb.fscd);
  }
}

TEST_CASE("report json and metric lookup") {
  MetricReport r;
  r.fscd = 0.25;
  CHECK(r.get("fscd") == 0.25);
  CHECK_THROWS_AS(r.get("kappa"), Error);
  const auto j = r.to_json();
  for (const char* key : {"oa", "fscd", "miou", "iou_nochange", "iou_changed", "sek", "per_class_iou", "n_pixels",
                          "n_scenes"})
    CHECK(j.contains(key));
}
