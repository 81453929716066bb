#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crpl/graph.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace crpl;

TEST_CASE("conv2d hand values") {
  Tensor<float> x = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  Tensor<float> w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  Tensor<float> y = conv2d(x, w, nullptr, 1, 0, 1);
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 1, 1});
  CHECK(y[0] == doctest::Approx(9.0f));

  // 1x1 identity kernel passes the input through untouched
  RngStream rng{42};
  Tensor<float> img = oracle::random_tensor<float>({2, 3, 5, 4}, rng);
  Tensor<float> id = Tensor<float>({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) id.at4(c, c, 0, 0) = 1.0f;
  CHECK(bitwise_equal(conv2d(img, id, nullptr, 1, 0, 1), img));
}

TEST_CASE("conv2d output geometry and errors") {
  RngStream rng{7};
  Tensor<float> x = oracle::random_tensor<float>({1, 2, 7, 9}, rng);
  Tensor<float> w = oracle::random_tensor<float>({4, 2, 3, 3}, rng);
  Tensor<float> y = conv2d(x, w, nullptr, 2, 1, 1);
  CHECK(y.dim(2) == (7 + 2 - 3) / 2 + 1);
  CHECK(y.dim(3) == (9 + 2 - 3) / 2 + 1);

  Tensor<float> bad_w = oracle::random_tensor<float>({4, 3, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, bad_w, nullptr, 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, w, nullptr, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, w, nullptr, 1, -1, 1), std::invalid_argument);
  Tensor<float> huge_k = oracle::random_tensor<float>({1, 2, 9, 9}, rng);
  CHECK_THROWS_AS(conv2d(x, huge_k, nullptr, 1, 0, 1), std::invalid_argument);
}

TEST_CASE("conv2d matches the naive 7-loop reference") {
  struct Case {
    std::int64_t n, c, h, w, cout, k;
    int stride, pad, groups;
  };
  const Case cases[] = {
      {1, 1, 5, 5, 1, 3, 1, 0, 1},  {2, 4, 8, 8, 8, 3, 2, 1, 1},  {1, 3, 7, 9, 5, 5, 1, 2, 1},
      {2, 8, 16, 16, 8, 3, 2, 1, 1}, {2, 6, 10, 10, 4, 3, 1, 1, 2}, {1, 8, 9, 9, 16, 5, 3, 2, 4},
      {2, 8, 16, 16, 8, 1, 1, 0, 1}, {1, 4, 6, 6, 12, 3, 1, 1, 4},
  };
  std::uint64_t seed = 100;
  for (const Case& cs : cases) {
    RngStream rng{seed++};
    Tensor<float> x = oracle::random_tensor<float>({cs.n, cs.c, cs.h, cs.w}, rng);
    Tensor<float> w =
        oracle::random_tensor<float>({cs.cout, cs.c / cs.groups, cs.k, cs.k}, rng);
    Tensor<float> b = oracle::random_tensor<float>({cs.cout}, rng);
    const Tensor<float> got = conv2d(x, w, &b, cs.stride, cs.pad, cs.groups);
    const Tensor<float> ref = oracle::naive_conv2d(x, w, &b, cs.stride, cs.pad, cs.groups);
    CHECK(max_abs_diff(got, ref) < 1e-6);
    // bit-identical on a second run
    CHECK(bitwise_equal(got, conv2d(x, w, &b, cs.stride, cs.pad, cs.groups)));
  }
}

TEST_CASE("depthwise_conv2d") {
  RngStream rng{5};
  Tensor<float> x = oracle::random_tensor<float>({2, 6, 9, 9}, rng);
  Tensor<float> w = oracle::random_tensor<float>({6, 1, 3, 3}, rng);

  // definitional equivalence with grouped conv2d, bit for bit
  CHECK(bitwise_equal(depthwise_conv2d(x, w, 1, 1), conv2d(x, w, nullptr, 1, 1, 6)));

  // one channel: equals a plain convolution
  Tensor<float> x1 = oracle::random_tensor<float>({1, 1, 8, 8}, rng);
  Tensor<float> w1 = oracle::random_tensor<float>({1, 1, 3, 3}, rng);
  CHECK(bitwise_equal(depthwise_conv2d(x1, w1, 2, 1), conv2d(x1, w1, nullptr, 2, 1, 1)));

  // against the naive oracle
  const Tensor<float> ref = oracle::naive_conv2d(x, w, nullptr, 2, 1, 6);
  CHECK(max_abs_diff(depthwise_conv2d(x, w, 2, 1), ref) < 1e-6);

  Tensor<float> wrong = oracle::random_tensor<float>({5, 1, 3, 3}, rng);
  CHECK_THROWS_AS(depthwise_conv2d(x, wrong, 1, 1), std::invalid_argument);
}

TEST_CASE("batch_norm forward semantics") {
  // constant-per-channel input, training mode: output is beta (variance 0
  // guarded by eps)
  Tensor<float> x({2, 3, 2, 2});
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < 4; ++i) x.at4(n, c, i / 2, i % 2) = 2.5f * (c + 1);
  Tensor<float> gamma = Tensor<float>::full({3}, 1.0f);
  Tensor<float> beta({3});
  beta[0] = -1.0f;
  beta[1] = 0.5f;
  beta[2] = 2.0f;
  Tensor<float> rm({3});
  Tensor<float> rv = Tensor<float>::full({3}, 1.0f);
  Tensor<float> y = batch_norm(x, gamma, beta, &rm, &rv, true, 0.1, 1e-5);
  for (std::int64_t c = 0; c < 3; ++c)
    CHECK(y.at4(0, c, 0, 0) == doctest::Approx(beta[c]).epsilon(1e-5));
  // running mean moved toward the batch mean
  CHECK(rm[1] == doctest::Approx(0.1 * 5.0).epsilon(1e-6));

  // eval mode with gamma=1, beta=0 and running stats (0,1) is the identity up
  // to eps
  RngStream rng{11};
  Tensor<float> z = oracle::random_tensor<float>({2, 3, 4, 4}, rng);
  Tensor<float> beta0({3});
  Tensor<float> rm0({3});
  Tensor<float> rv0 = Tensor<float>::full({3}, 1.0f);
  Tensor<float> out = batch_norm(z, gamma, beta0, &rm0, &rv0, false, 0.1, 1e-12);
  CHECK(max_abs_diff(out, z) < 1e-6);

  Tensor<float> bad_gamma({2});
  CHECK_THROWS_AS(batch_norm(z, bad_gamma, beta0, &rm0, &rv0, true, 0.1, 1e-5),
                  std::invalid_argument);
}

TEST_CASE("activation and pooling hand values") {
  Tensor<float> z({3});
  z[0] = 0.0f;
  z[1] = 40.0f;
  z[2] = -40.0f;
  Tensor<float> s = sigmoid(z);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(1.0));   // bounded, no overflow
  CHECK(s[2] == doctest::Approx(0.0));
  CHECK(silu(z)[0] == 0.0f);

  Tensor<float> p({1, 1, 2, 2});
  p[0] = 1;
  p[1] = 2;
  p[2] = 3;
  p[3] = 4;
  CHECK(global_avg_pool(p)[0] == doctest::Approx(2.5));

  // sigmoid is monotone on a coarse grid
  for (int i = -50; i < 50; ++i)
    CHECK(sigmoid_stable(i * 0.5) < sigmoid_stable((i + 1) * 0.5));
}

TEST_CASE("bce loss values and oracle") {
  Tensor<double> z({1}), y({1});
  z[0] = 0.0;
  y[0] = 1.0;
  CHECK(bce_with_logits(z, y)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  z[0] = 40.0;
  CHECK(bce_with_logits(z, y)[0] == doctest::Approx(0.0).epsilon(1e-12));
  z[0] = -40.0;
  y[0] = 0.0;
  CHECK(bce_with_logits(z, y)[0] == doctest::Approx(0.0).epsilon(1e-12));

  // matches the naive -[y ln p + (1-y) ln(1-p)] form for moderate logits
  RngStream rng{13};
  Tensor<double> zz({64}), yy({64});
  double naive = 0.0;
  for (int i = 0; i < 64; ++i) {
    zz[i] = rng.uniform(-10.0, 10.0);
    yy[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const double p = 1.0 / (1.0 + std::exp(-zz[i]));
    naive += -(yy[i] * std::log(p) + (1.0 - yy[i]) * std::log(1.0 - p));
  }
  naive /= 64.0;
  CHECK(bce_with_logits(zz, yy)[0] == doctest::Approx(naive).epsilon(1e-6));

  Tensor<double> bad({1});
  bad[0] = 0.5;
  CHECK_THROWS_AS(bce_with_logits(z, bad), std::invalid_argument);
}

TEST_CASE("graph backward basics") {
  RngStream rng{17};
  Tensor<double> xv = oracle::random_tensor<double>({4, 3}, rng);
  Tensor<double> wv = oracle::random_tensor<double>({4, 3}, rng);

  // loss = sum(w * x) with x fixed -> grad(w) = x
  Graph<double> g;
  auto x = g.leaf(xv, false);
  auto w = g.leaf(wv, true, "w");
  auto unused = g.leaf(Tensor<double>::full({2}, 3.0), true, "unused");
  auto loss = g.sum_all(g.mul(w, x));
  g.backward(loss);
  CHECK(max_abs_diff(g.grad(w), xv) == 0.0);
  // gradient of a parameter the loss never touches is zero
  CHECK(g.grad(unused)[0] == 0.0);
  CHECK(g.grad(unused)[1] == 0.0);
  auto grads = g.gradients();
  CHECK(grads.count("w") == 1);
  CHECK(grads.count("unused") == 1);

  // repeated backward without zeroing accumulates into leaves
  g.backward(loss);
  Tensor<double> twice = xv;
  for (std::int64_t i = 0; i < twice.numel(); ++i) twice[i] *= 2.0;
  CHECK(max_abs_diff(g.grad(w), twice) < 1e-15);

  g.zero_grad();
  g.backward(loss);
  CHECK(max_abs_diff(g.grad(w), xv) == 0.0);

  // non-scalar loss is rejected
  Graph<double> g2;
  auto a = g2.leaf(xv, true);
  CHECK_THROWS_AS(g2.backward(a), std::invalid_argument);
}

TEST_CASE("non-finite values are surfaced, not propagated") {
  Tensor<float> x = Tensor<float>::full({1, 1, 2, 2}, 1e30f);
  Tensor<float> w = Tensor<float>::full({1, 1, 2, 2}, 1e30f);
  CHECK_THROWS_AS(conv2d(x, w, nullptr, 1, 0, 1), std::runtime_error);

  Graph<float> g;
  Tensor<float> nanv({1});
  nanv[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(g.leaf(nanv, false), std::runtime_error);
}

// ---------------------------------------------------------------------------
// finite-difference checks, one op at a time, >= 5 random instances each

namespace {

using Ids = std::vector<Graph<double>::ValueId>;

// weighted sum against fixed coefficients turns any output into a scalar loss
Graph<double>::ValueId weighted(Graph<double>& g, Graph<double>::ValueId out,
                                std::uint64_t seed) {
  RngStream rng{seed};
  return g.sum_all(g.mul(out, g.leaf(oracle::random_tensor<double>(g.value(out).shape(), rng),
                                     false)));
}

}  // namespace

TEST_CASE("gradcheck: conv2d (input, weight, bias)") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    RngStream rng{200 + inst};
    const int groups = inst % 2 == 0 ? 1 : 2;
    auto x = oracle::random_tensor<double>({2, 4, 5, 5}, rng);
    auto w = oracle::random_tensor<double>({4, 4 / groups, 3, 3}, rng);
    auto b = oracle::random_tensor<double>({4}, rng);
    const double err = gradcheck::check(
        {x, w, b}, {true, true, true},
        [&](Graph<double>& g, const Ids& ids) {
          return weighted(g, g.conv2d(ids[0], ids[1], ids[2], 2, 1, groups), 300 + inst);
        });
    CHECK(err < gradcheck::kTol);
  }
}

TEST_CASE("gradcheck: depthwise conv") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    RngStream rng{210 + inst};
    auto x = oracle::random_tensor<double>({2, 3, 6, 6}, rng);
    auto w = oracle::random_tensor<double>({3, 1, 3, 3}, rng);
    const double err = gradcheck::check(
        {x, w}, {true, true},
        [&](Graph<double>& g, const Ids& ids) {
          return weighted(g, g.depthwise_conv2d(ids[0], ids[1], 1, 1), 310 + inst);
        });
    CHECK(err < gradcheck::kTol);
  }
}

TEST_CASE("gradcheck: batch_norm training and eval") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    RngStream rng{220 + inst};
    auto x = oracle::random_tensor<double>({3, 4, 3, 3}, rng);
    auto gamma = oracle::random_tensor<double>({4}, rng, 0.5, 1.5);
    auto beta = oracle::random_tensor<double>({4}, rng);
    for (bool training : {true, false}) {
      Tensor<double> rm = oracle::random_tensor<double>({4}, rng, -0.2, 0.2);
      Tensor<double> rv = oracle::random_tensor<double>({4}, rng, 0.5, 1.5);
      const double err = gradcheck::check(
          {x, gamma, beta}, {true, true, true},
          [&, training](Graph<double>& g, const Ids& ids) {
            Tensor<double> m = rm, v = rv;  // fresh stats per eval
            return weighted(
                g, g.batch_norm(ids[0], ids[1], ids[2], &m, &v, training, 0.1, 1e-5), 320 + inst);
          });
      CHECK(err < gradcheck::kTol);
    }
  }
}

TEST_CASE("gradcheck: elementwise, pooling, linear, gating") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    RngStream rng{230 + inst};
    auto x4 = oracle::random_tensor<double>({2, 3, 4, 4}, rng);
    auto y4 = oracle::random_tensor<double>({2, 3, 4, 4}, rng);
    auto gate = oracle::random_tensor<double>({2, 3, 1, 1}, rng);
    auto xm = oracle::random_tensor<double>({3, 5}, rng);
    auto wm = oracle::random_tensor<double>({2, 5}, rng);
    auto bm = oracle::random_tensor<double>({2}, rng);

    CHECK(gradcheck::check({x4}, {true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.silu(ids[0]), 330 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4}, {true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.sigmoid(ids[0]), 331 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4}, {true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.global_avg_pool(ids[0]), 332 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4}, {true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.flatten2(ids[0]), 333 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4, y4}, {true, true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.add(ids[0], ids[1]), 334 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4, y4}, {true, true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.mul(ids[0], ids[1]), 335 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({x4, gate}, {true, true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.scale_channels(ids[0], ids[1]), 336 + inst);
                           }) < gradcheck::kTol);
    CHECK(gradcheck::check({xm, wm, bm}, {true, true, true},
                           [&](Graph<double>& g, const Ids& ids) {
                             return weighted(g, g.linear(ids[0], ids[1], ids[2]), 337 + inst);
                           }) < gradcheck::kTol);
  }
}

TEST_CASE("gradcheck: linear -> sigmoid -> bce chain") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    RngStream rng{240 + inst};
    auto x = oracle::random_tensor<double>({6, 4}, rng);
    auto w = oracle::random_tensor<double>({1, 4}, rng);
    auto b = oracle::random_tensor<double>({1}, rng);
    Tensor<double> labels({6, 1});
    for (int i = 0; i < 6; ++i) labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const double err = gradcheck::check(
        {x, w, b}, {true, true, true},
        [&](Graph<double>& g, const Ids& ids) {
          return g.bce_with_logits(g.linear(ids[0], ids[1], ids[2]), labels);
        });
    CHECK(err < gradcheck::kTol);
  }
}
