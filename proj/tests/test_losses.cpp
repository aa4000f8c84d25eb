#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "ucast/losses.hpp"

using namespace ucast;

namespace {

double bce_ref(const torch::Tensor& p, const torch::Tensor& y, double eps) {
  auto pf = p.to(torch::kDouble).flatten().contiguous();
  auto yf = y.to(torch::kDouble).flatten().contiguous();
  auto pa = pf.accessor<double, 1>();
  auto ya = yf.accessor<double, 1>();
  double sum = 0;
  for (long i = 0; i < pf.size(0); ++i) {
    double pc = std::min(std::max(pa[i], eps), 1.0 - eps);
    sum += -(ya[i] * std::log(pc) + (1.0 - ya[i]) * std::log(1.0 - pc));
  }
  return sum / static_cast<double>(pf.size(0));
}

double time_ref(const torch::Tensor& p_e, const torch::Tensor& y_e, const torch::Tensor& y_c,
                double eps) {
  auto pf = p_e.to(torch::kDouble).flatten().contiguous();
  auto ef = y_e.to(torch::kDouble).flatten().contiguous();
  auto cf = y_c.to(torch::kDouble).flatten().contiguous();
  auto pa = pf.accessor<double, 1>();
  auto ea = ef.accessor<double, 1>();
  auto ca = cf.accessor<double, 1>();
  double sum = 0;
  long n = 0;
  for (long i = 0; i < pf.size(0); ++i) {
    if (ca[i] != 1.0) continue;
    double pc = std::min(std::max(pa[i], eps), 1.0 - eps);
    sum += -(ea[i] * std::log(pc) + (1.0 - ea[i]) * std::log(1.0 - pc));
    n += 1;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double forecast_ref(const torch::Tensor& z, const torch::Tensor& y) {
  auto zf = z.to(torch::kDouble).flatten().contiguous();
  auto yf = y.to(torch::kDouble).flatten().contiguous();
  auto za = zf.accessor<double, 1>();
  auto ya = yf.accessor<double, 1>();
  double sum = 0;
  for (long i = 0; i < zf.size(0); ++i) {
    sum += std::max(za[i], 0.0) - za[i] * ya[i] + std::log1p(std::exp(-std::abs(za[i])));
  }
  return sum / static_cast<double>(zf.size(0));
}

const std::vector<std::vector<int64_t>> kShapes = {
    {7}, {3, 5}, {2, 3, 4}, {1, 8, 8}, {4, 8, 8}, {2, 1, 6, 6}, {5, 5}, {16}};

}  // namespace

TEST_CASE("bce at p=0.5 is log 2") {
  auto p = torch::full({4, 4}, 0.5);
  auto y = torch::zeros({4, 4}, torch::kUInt8);
  y[0][0] = 1;
  CHECK(bce(p, y).item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("bce matches the elementwise definition") {
  Rng rng(1);
  for (const auto& shape : kShapes) {
    auto p = testutil::random_unit(rng, shape).to(torch::kDouble);
    auto y = testutil::random_mask(rng, shape);
    CHECK(bce(p, y).item<double>() ==
          doctest::Approx(bce_ref(p, y, 1e-7)).epsilon(1e-9));
  }
}

TEST_CASE("bce validates probabilities and labels") {
  CHECK_THROWS_AS(bce(torch::full({2}, 1.5), torch::zeros({2})), std::invalid_argument);
  CHECK_THROWS_AS(bce(torch::full({2}, -0.1), torch::zeros({2})), std::invalid_argument);
  CHECK_THROWS_AS(bce(torch::full({2}, 0.5), torch::full({2}, 0.3)), std::invalid_argument);
  CHECK_THROWS_AS(bce(torch::full({2}, 0.5), torch::zeros({3})), std::invalid_argument);
  CHECK_THROWS_AS(bce(torch::full({2}, 0.5), torch::zeros({2}), 0.0), std::invalid_argument);
}

TEST_CASE("time loss averages change pixels only") {
  auto p = torch::full({3, 3}, 0.5);
  auto y_e = torch::zeros({3, 3}, torch::kUInt8);
  auto y_c = torch::zeros({3, 3}, torch::kUInt8);

  // No change pixels: exactly zero, not NaN.
  CHECK(time_loss(p, y_e, y_c).item<double>() == 0.0);

  y_c[1][1] = 1;
  CHECK(time_loss(p, y_e, y_c).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("time loss ignores predictions outside the change set") {
  Rng rng(2);
  auto y_c = testutil::random_mask(rng, {6, 6});
  auto y_e = testutil::random_mask(rng, {6, 6});
  auto p1 = testutil::random_unit(rng, {6, 6});
  auto p2 = p1.clone();
  // Rewrite p2 wherever y_c = 0; the loss must not move.
  p2.masked_fill_(y_c.logical_not(), 0.987f);
  CHECK(time_loss(p1, y_e, y_c).item<double>() ==
        doctest::Approx(time_loss(p2, y_e, y_c).item<double>()).epsilon(1e-12));
}

TEST_CASE("time loss matches the masked elementwise definition") {
  Rng rng(3);
  for (const auto& shape : kShapes) {
    auto p = testutil::random_unit(rng, shape).to(torch::kDouble);
    auto y_e = testutil::random_mask(rng, shape);
    auto y_c = testutil::random_mask(rng, shape, 0.3);
    CHECK(time_loss(p, y_e, y_c).item<double>() ==
          doctest::Approx(time_ref(p, y_e, y_c, 1e-7)).epsilon(1e-9));
  }
}

TEST_CASE("forecast loss reproduces the stable logit form") {
  auto y0 = torch::zeros({1});
  auto y1 = torch::ones({1});
  CHECK(forecast_loss(torch::zeros({1}), y0).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  // Extreme logits on the correct side cost ~nothing and never overflow.
  CHECK(forecast_loss(torch::full({1}, -100.0), y0).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(forecast_loss(torch::full({1}, 100.0), y1).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(forecast_loss(torch::full({1}, 100.0), y0).item<double>() ==
        doctest::Approx(100.0).epsilon(1e-9));
  CHECK(std::isfinite(forecast_loss(torch::full({1}, 1e4), y0).item<double>()));
}

TEST_CASE("forecast loss equals bce of the sigmoid") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto z = (testutil::random_unit(rng, {4, 6, 6}).to(torch::kDouble) * 40.0) - 20.0;
    auto y = testutil::random_mask(rng, {4, 6, 6});
    double via_probs = bce(torch::sigmoid(z), y, 1e-15).item<double>();
    CHECK(forecast_loss(z, y).item<double>() == doctest::Approx(via_probs).epsilon(1e-6));
  }
}

TEST_CASE("forecast loss squeezes a singleton channel axis") {
  Rng rng(5);
  auto z = testutil::random_unit(rng, {2, 1, 4, 4}).to(torch::kDouble);
  auto y = testutil::random_mask(rng, {2, 4, 4});
  CHECK(forecast_loss(z, y).item<double>() ==
        doctest::Approx(forecast_ref(z, y)).epsilon(1e-9));
  CHECK(forecast_loss(z.squeeze(1), y).item<double>() ==
        doctest::Approx(forecast_ref(z, y)).epsilon(1e-9));
}

TEST_CASE("forecast loss matches the elementwise definition") {
  Rng rng(6);
  for (const auto& shape : kShapes) {
    auto z = (testutil::random_unit(rng, shape).to(torch::kDouble) * 12.0) - 6.0;
    auto y = testutil::random_mask(rng, shape);
    CHECK(forecast_loss(z, y).item<double>() ==
          doctest::Approx(forecast_ref(z, y)).epsilon(1e-9));
  }
}

TEST_CASE("three-logit probabilities hit the reference points") {
  auto at = [](double qe, double ql, double q0) {
    return timerange_probs(torch::full({1}, qe, torch::kDouble),
                           torch::full({1}, ql, torch::kDouble),
                           torch::full({1}, q0, torch::kDouble));
  };

  auto p = at(0, 0, 0);
  CHECK(p.p_e.item<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.p_c.item<double>() == doctest::Approx(0.5).epsilon(1e-12));

  p = at(1, 0, 0);
  CHECK(p.p_e.item<double>() == doctest::Approx(0.7310586).epsilon(1e-5));
  CHECK(p.p_c.item<double>() == doctest::Approx(0.7310586).epsilon(1e-5));

  p = at(-2, -2, 5);
  CHECK(p.p_e.item<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.p_c.item<double>() == doctest::Approx(1.2339e-4).epsilon(1e-3));
}

TEST_CASE("change probability exponentiates the logit sum") {
  // q_e = q_l = 1: exp(2)/(exp(2)+1), NOT (e+e)/(e+e+1).
  auto p = timerange_probs(torch::full({1}, 1.0, torch::kDouble),
                           torch::full({1}, 1.0, torch::kDouble),
                           torch::zeros({1}, torch::kDouble));
  const double right = std::exp(2.0) / (std::exp(2.0) + 1.0);          // 0.8808
  const double wrong = (2.0 * std::exp(1.0)) / (2.0 * std::exp(1.0) + 1.0);  // 0.8447
  CHECK(p.p_c.item<double>() == doctest::Approx(right).epsilon(1e-6));
  CHECK(std::abs(p.p_c.item<double>() - wrong) > 0.03);
}

TEST_CASE("three-logit probabilities stay finite at extreme logits") {
  auto at = [](double qe, double ql, double q0) {
    return timerange_probs(torch::full({1}, qe), torch::full({1}, ql), torch::full({1}, q0));
  };
  auto hi = at(1e4, 1e4, 0);
  CHECK(hi.p_c.item<double>() == 1.0);
  CHECK(std::isfinite(hi.p_e.item<double>()));
  auto lo = at(-1e4, -1e4, 0);
  CHECK(lo.p_c.item<double>() == 0.0);
  CHECK(lo.p_e.item<double>() == doctest::Approx(0.5).epsilon(1e-12));
  auto split = at(1e4, -1e4, 0);
  CHECK(split.p_e.item<double>() == 1.0);
}

TEST_CASE("combined loss on zero logits and empty change is lambda log 2") {
  auto q = torch::zeros({2, 4, 4});
  auto y = torch::zeros({2, 4, 4}, torch::kUInt8);
  auto out = combined_loss(q, q, q, y, y);
  CHECK(out.time.item<double>() == 0.0);
  CHECK(out.binary.item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(out.total.item<double>() == doctest::Approx(1000.0 * std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("combined loss is affine in the mixing weight") {
  Rng rng(7);
  auto q_e = (testutil::random_unit(rng, {2, 5, 5}) * 4.0f) - 2.0f;
  auto q_l = (testutil::random_unit(rng, {2, 5, 5}) * 4.0f) - 2.0f;
  auto q_0 = (testutil::random_unit(rng, {2, 5, 5}) * 4.0f) - 2.0f;
  auto y_e = testutil::random_mask(rng, {2, 5, 5});
  auto y_c = testutil::random_mask(rng, {2, 5, 5});

  double time = -1, binary = -1;
  for (double lambda : {1.0, 10.0, 1000.0}) {
    LossConfig cfg;
    cfg.lambda_mix = lambda;
    auto out = combined_loss(q_e, q_l, q_0, y_e, y_c, cfg);
    if (time < 0) {
      time = out.time.item<double>();
      binary = out.binary.item<double>();
    } else {
      CHECK(out.time.item<double>() == doctest::Approx(time).epsilon(1e-9));
      CHECK(out.binary.item<double>() == doctest::Approx(binary).epsilon(1e-9));
    }
    CHECK(out.total.item<double>() ==
          doctest::Approx(time + lambda * binary).epsilon(1e-6));
  }
}

TEST_CASE("combined loss matches its two-term definition elementwise") {
  Rng rng(8);
  for (const auto& shape : kShapes) {
    auto q_e = ((testutil::random_unit(rng, shape) * 6.0f) - 3.0f).to(torch::kDouble);
    auto q_l = ((testutil::random_unit(rng, shape) * 6.0f) - 3.0f).to(torch::kDouble);
    auto q_0 = ((testutil::random_unit(rng, shape) * 6.0f) - 3.0f).to(torch::kDouble);
    auto y_e = testutil::random_mask(rng, shape);
    auto y_c = testutil::random_mask(rng, shape, 0.4);

    auto probs = timerange_probs(q_e, q_l, q_0);
    double want_time = time_ref(probs.p_e, y_e, y_c, 1e-7);
    double want_binary = bce_ref(probs.p_c, y_c, 1e-7);

    auto out = combined_loss(q_e, q_l, q_0, y_e, y_c);
    CHECK(out.time.item<double>() == doctest::Approx(want_time).epsilon(1e-9));
    CHECK(out.binary.item<double>() == doctest::Approx(want_binary).epsilon(1e-9));
    CHECK(out.total.item<double>() ==
          doctest::Approx(want_time + 1000.0 * want_binary).epsilon(1e-9));
  }
}

TEST_CASE("near-perfect predictions drive the combined loss to ~0") {
  auto y_c = torch::zeros({4, 4}, torch::kUInt8);
  auto y_e = torch::zeros({4, 4}, torch::kUInt8);
  y_c[0][0] = 1;
  y_e[0][0] = 1;
  y_c[1][1] = 1;  // late change

  auto q_e = torch::full({4, 4}, -30.0);
  auto q_l = torch::full({4, 4}, -30.0);
  auto q_0 = torch::full({4, 4}, 30.0);
  q_e[0][0] = 30.0;
  q_l[0][0] = -30.0;
  q_0[0][0] = -30.0;
  q_e[1][1] = -30.0;
  q_l[1][1] = 30.0;
  q_0[1][1] = -30.0;

  auto out = combined_loss(q_e, q_l, q_0, y_e, y_c);
  CHECK(out.total.item<double>() <= 1e-3);
}

TEST_CASE("combined loss gradients match central differences") {
  Rng rng(9);
  const std::vector<int64_t> shape = {2, 4, 4};
  auto base_e = ((testutil::random_unit(rng, shape) * 4.0f) - 2.0f).to(torch::kDouble);
  auto base_l = ((testutil::random_unit(rng, shape) * 4.0f) - 2.0f).to(torch::kDouble);
  auto base_0 = ((testutil::random_unit(rng, shape) * 4.0f) - 2.0f).to(torch::kDouble);
  auto y_e = testutil::random_mask(rng, shape);
  auto y_c = testutil::random_mask(rng, shape, 0.4);

  auto q_e = base_e.clone().set_requires_grad(true);
  auto q_l = base_l.clone().set_requires_grad(true);
  auto q_0 = base_0.clone().set_requires_grad(true);
  combined_loss(q_e, q_l, q_0, y_e, y_c).total.backward();

  auto eval_at = [&](const torch::Tensor& e, const torch::Tensor& l, const torch::Tensor& z) {
    torch::NoGradGuard ng;
    return combined_loss(e, l, z, y_e, y_c).total.item<double>();
  };

  const double step = 1e-3;
  torch::Tensor bases[3] = {base_e, base_l, base_0};
  torch::Tensor grads[3] = {q_e.grad(), q_l.grad(), q_0.grad()};
  for (int which = 0; which < 3; ++which) {
    auto flat_grad = grads[which].flatten();
    for (long i = 0; i < flat_grad.size(0); ++i) {
      torch::Tensor plus[3] = {base_e.clone(), base_l.clone(), base_0.clone()};
      torch::Tensor minus[3] = {base_e.clone(), base_l.clone(), base_0.clone()};
      plus[which].flatten()[i] += step;
      minus[which].flatten()[i] -= step;
      double numeric =
          (eval_at(plus[0], plus[1], plus[2]) - eval_at(minus[0], minus[1], minus[2])) /
          (2 * step);
      double analytic = flat_grad[i].item<double>();
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      REQUIRE(std::abs(analytic - numeric) / denom < 1e-4);
    }
  }
}
