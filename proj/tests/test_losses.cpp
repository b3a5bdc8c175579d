#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_torch.hpp"

#include "scd/errors.hpp"
#include "scd/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace scd;

namespace {

struct Instance {
  torch::Tensor y1, y2, yc, l1, l2, changed;
};

Instance random_instance(std::mt19937_64& rng, int64_t b, int64_t k, int64_t h, int64_t w,
                         torch::ScalarType dtype = torch::kFloat64) {
  Instance in;
  std::tie(in.l1, in.l2) = test::random_label_pair(rng, b, h, w, k, 0.4);
  in.changed = in.l1.ne(0);
  torch::manual_seed(rng());
  const auto opts = torch::TensorOptions().dtype(dtype);
  in.y1 = torch::softmax(2.0 * torch::randn({b, k, h, w}, opts), 1);
  in.y2 = torch::softmax(2.0 * torch::randn({b, k, h, w}, opts), 1);
  in.yc = torch::rand({b, h, w}, opts) * 0.98 + 0.01;
  return in;
}

torch::Tensor one_hot_probs(const torch::Tensor& labels, int64_t k) {
  // labels 1..K -> one-hot over K; label 0 gets class 0.
  return torch::one_hot((labels - 1).clamp_min(0), k).permute({0, 3, 1, 2}).to(torch::kFloat64);
}

}  // namespace

TEST_CASE("every term matches its loop oracle on 100 random instances") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t k = 2 + trial % 5;
    const auto in = random_instance(rng, 1 + trial % 2, k, 5 + trial % 4, 6);
    const double tau = 0.3 + 0.1 * (trial % 5);

    REQUIRE(test::rel_err(semantic_ce(in.y1, in.y2, in.l1, in.l2, in.changed).item<double>(),
                          oracle::ce(in.y1, in.y2, in.l1, in.l2, in.changed)) < 1e-6);
    REQUIRE(test::rel_err(semantic_dice(in.y1, in.y2, in.l1, in.l2, in.changed).item<double>(),
                          oracle::dice(in.y1, in.y2, in.l1, in.l2, in.changed)) < 1e-6);
    const auto pseudo = make_pseudo_labels(in.y1, in.y2, in.changed, tau);
    REQUIRE(torch::equal(pseudo.lt, oracle::pseudo_labels(in.y1, in.y2, in.changed, tau)));
    REQUIRE(test::rel_err(pseudo_label_loss(in.y1, in.y2, pseudo).item<double>(),
                          oracle::pseudo_loss(in.y1, in.y2, pseudo.lt)) < 1e-6);
    REQUIRE(test::rel_err(consistency_loss(in.y1, in.y2, in.changed).item<double>(),
                          oracle::consistency(in.y1, in.y2, in.changed)) < 1e-6);
    REQUIRE(test::rel_err(change_loss(in.yc, in.changed).item<double>(), oracle::change_bce(in.yc, in.changed)) <
            1e-6);
  }
}

TEST_CASE("float32 terms agree with the double oracle") {
  std::mt19937_64 rng(2);
  const auto in = random_instance(rng, 2, 4, 16, 16, torch::kFloat32);
  CHECK(test::rel_err(semantic_ce(in.y1, in.y2, in.l1, in.l2, in.changed).item<double>(),
                      oracle::ce(in.y1, in.y2, in.l1, in.l2, in.changed)) < 1e-6);
  CHECK(test::rel_err(semantic_dice(in.y1, in.y2, in.l1, in.l2, in.changed).item<double>(),
                      oracle::dice(in.y1, in.y2, in.l1, in.l2, in.changed)) < 1e-6);
}

TEST_CASE("cross-entropy closed forms") {
  std::mt19937_64 rng(3);
  auto in = random_instance(rng, 1, 4, 6, 6);
  const auto perfect1 = one_hot_probs(in.l1, 4), perfect2 = one_hot_probs(in.l2, 4);
  CHECK(semantic_ce(perfect1, perfect2, in.l1, in.l2, in.changed).item<double>() == doctest::Approx(0.0));

  const auto uniform = torch::full({1, 4, 6, 6}, 0.25, torch::kFloat64);
  CHECK(semantic_ce(uniform, uniform, in.l1, in.l2, in.changed).item<double>() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));

  const auto none = torch::zeros({1, 6, 6}, torch::kBool);
  CHECK(semantic_ce(in.y1, in.y2, in.l1, in.l2, none).item<double>() == 0.0);
}

TEST_CASE("Dice closed forms") {
  std::mt19937_64 rng(4);
  auto in = random_instance(rng, 1, 3, 6, 6);
  const auto p1 = one_hot_probs(in.l1, 3), p2 = one_hot_probs(in.l2, 3);
  CHECK(semantic_dice(p1, p2, in.l1, in.l2, in.changed).item<double>() == doctest::Approx(0.0).epsilon(1e-6));

  // One-hot on the wrong class everywhere: overlap zero.
  const auto wrong1 = one_hot_probs(in.l1 % 3 + 1, 3), wrong2 = one_hot_probs(in.l2 % 3 + 1, 3);
  CHECK(semantic_dice(wrong1, wrong2, in.l1, in.l2, in.changed).item<double>() == doctest::Approx(1.0).epsilon(1e-6));

  // Binary case: 4 changed pixels, two per class, y = 0.5 everywhere -> 1 - 2(0.5*2)/(0.5*4 + 2) = 0.5 per class.
  const auto l = torch::tensor({1, 1, 2, 2}, torch::kInt64).view({1, 2, 2});
  const auto y = torch::full({1, 2, 2, 2}, 0.5, torch::kFloat64);
  const auto all = torch::ones({1, 2, 2}, torch::kBool);
  CHECK(dice_term(y, l, all).item<double>() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("pseudo labels: threshold cases and 1000-pixel oracle") {
  auto y = torch::tensor({0.9, 0.1}, torch::kFloat64).view({1, 2, 1, 1});
  const auto unchanged = torch::zeros({1, 1, 1}, torch::kBool);
  CHECK(make_pseudo_labels(y, y, unchanged, 0.8).lt.item<int64_t>() == 1);
  y = torch::tensor({0.6, 0.4}, torch::kFloat64).view({1, 2, 1, 1});
  CHECK(make_pseudo_labels(y, y, unchanged, 0.8).lt.item<int64_t>() == 0);
  CHECK(pseudo_label_loss(y, y, make_pseudo_labels(y, y, unchanged, 0.8)).item<double>() == 0.0);

  std::mt19937_64 rng(5);
  const auto in = random_instance(rng, 1, 3, 25, 40);  // 1000 pixels
  const auto got = make_pseudo_labels(in.y1, in.y2, in.changed, 0.5);
  CHECK(torch::equal(got.lt, oracle::pseudo_labels(in.y1, in.y2, in.changed, 0.5)));
  CHECK(got.lt.masked_select(in.changed).eq(0).all().item<bool>());

  // Predictions equal to their own one-hot pseudo labels cost nothing.
  const auto hot = one_hot_probs(torch::randint(1, 4, {1, 5, 5}, torch::kInt64), 3);
  const auto p = make_pseudo_labels(hot, hot, torch::zeros({1, 5, 5}, torch::kBool), 0.8);
  CHECK(p.lt.gt(0).all().item<bool>());
  CHECK(pseudo_label_loss(hot, hot, p).item<double>() == doctest::Approx(0.0));
}

TEST_CASE("consistency closed forms") {
  const auto a = torch::tensor({0.2, 0.3, 0.5}, torch::kFloat64).view({1, 3, 1, 1});
  const auto e0 = torch::tensor({1.0, 0.0, 0.0}, torch::kFloat64).view({1, 3, 1, 1});
  const auto e1 = torch::tensor({0.0, 1.0, 0.0}, torch::kFloat64).view({1, 3, 1, 1});
  const auto yes = torch::ones({1, 1, 1}, torch::kBool), no = torch::zeros({1, 1, 1}, torch::kBool);
  CHECK(consistency_loss(a, a, no).item<double>() == doctest::Approx(0.0));
  CHECK(consistency_loss(a, a, yes).item<double>() == doctest::Approx(1.0));
  CHECK(consistency_loss(e0, e1, yes).item<double>() == 0.0);
  CHECK_THROWS_AS(consistency_loss(torch::zeros_like(a), a, yes), Error);
}

TEST_CASE("change BCE closed forms") {
  const auto m = torch::tensor({true, false, true, false}).view({1, 2, 2});
  CHECK(change_loss(m.to(torch::kFloat64), m).item<double>() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(change_loss(torch::full({1, 2, 2}, 0.5, torch::kFloat64), m).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("term gradients match central differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto in = random_instance(rng, 1, 3, 4, 5);
    const auto pseudo = make_pseudo_labels(in.y1, in.y2, in.changed, 0.5);
    auto y1 = in.y1.clone().requires_grad_(true), y2 = in.y2.clone().requires_grad_(true);
    auto yc = in.yc.clone().requires_grad_(true);

    const std::vector<std::function<torch::Tensor()>> terms{
        [&] { return semantic_ce(y1, y2, in.l1, in.l2, in.changed); },
        [&] { return semantic_dice(y1, y2, in.l1, in.l2, in.changed); },
        [&] { return pseudo_label_loss(y1, y2, pseudo); },
        [&] { return consistency_loss(y1, y2, in.changed); },
        [&] { return change_loss(yc, in.changed); },
    };
    for (size_t t = 0; t < terms.size(); ++t) {
      for (auto* v : {&y1, &y2, &yc})
        if (v->grad().defined()) v->grad().zero_();
      terms[t]().backward();
      auto value = [&] { return terms[t]().item<double>(); };
      for (auto* v : {&y1, &y2, &yc}) {
        if (!v->grad().defined()) continue;
        const auto numeric = oracle::numeric_grad(value, v->detach());
        INFO("term " << t);
        REQUIRE(oracle::grad_rel_err(v->grad(), numeric) < 1e-4);
      }
    }
  }
}

TEST_CASE("total: recombination, zero weights, lambda1 = 0") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_instance(rng, 1, 4, 8, 8);
    LossWeights w;
    std::uniform_real_distribution<double> u(0.0, 2.0);
    w.alpha = u(rng), w.beta = u(rng), w.gamma = u(rng), w.lambda1 = u(rng), w.change = u(rng);
    const auto terms = compute_loss_terms(in.y1, in.y2, in.yc, in.l1, in.l2, in.changed, w);
    const long double want =
        static_cast<long double>(w.alpha) *
            (static_cast<long double>(oracle::ce(in.y1, in.y2, in.l1, in.l2, in.changed)) +
             static_cast<long double>(w.lambda1) * oracle::dice(in.y1, in.y2, in.l1, in.l2, in.changed)) +
        static_cast<long double>(w.beta) *
            oracle::pseudo_loss(in.y1, in.y2, oracle::pseudo_labels(in.y1, in.y2, in.changed, w.tau)) +
        static_cast<long double>(w.gamma) * oracle::consistency(in.y1, in.y2, in.changed) +
        static_cast<long double>(w.change) * oracle::change_bce(in.yc, in.changed);
    REQUIRE(test::rel_err(total_loss(terms, w).item<double>(), static_cast<double>(want)) < 1e-9);

    // Recombination of the returned terms by hand.
    const double by_hand = w.alpha * (terms.ce.item<double>() + w.lambda1 * terms.dice.item<double>()) +
                           w.beta * terms.psd.item<double>() + w.gamma * terms.sc.item<double>() +
                           w.change * terms.chg.item<double>();
    REQUIRE(test::rel_err(total_loss(terms, w).item<double>(), by_hand) < 1e-12);
  }

  std::mt19937_64 rng2(8);
  auto in = random_instance(rng2, 1, 3, 8, 8);
  LossWeights zero{0, 0, 0, 0, 1.0, 0.8};
  auto terms = compute_loss_terms(in.y1, in.y2, in.yc, in.l1, in.l2, in.changed, zero);
  CHECK(total_loss(terms, zero).item<double>() == terms.chg.item<double>());

  LossWeights no_dice;
  no_dice.lambda1 = 0.0;
  terms = compute_loss_terms(in.y1, in.y2, in.yc, in.l1, in.l2, in.changed, no_dice);
  CHECK_FALSE(terms.dice.defined());
  const auto base = total_loss(terms, no_dice);
  const auto manual = no_dice.alpha * terms.ce + no_dice.beta * terms.psd + no_dice.gamma * terms.sc +
                      no_dice.change * terms.chg;
  CHECK(torch::equal(base, manual));
  terms.dice = torch::full({}, 123.0, torch::kFloat64);
  CHECK(torch::equal(total_loss(terms, no_dice), base));

  terms.sc = torch::full({}, std::nan(""), torch::kFloat64);
  CHECK_THROWS_AS(total_loss(terms, no_dice), Error);
}

TEST_CASE("weights validation") {
  LossWeights w;
  w.beta = -1;
  CHECK_THROWS_AS(validate(w), Error);
  w.beta = 1;
  w.tau = 1.0;
  CHECK_THROWS_AS(validate(w), Error);
}
