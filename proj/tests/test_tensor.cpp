#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "absa/rng.hpp"
#include "absa/tensor.hpp"
#include "oracles.hpp"

using absa::Activation;
using absa::PoolMode;
using absa::RngStream;
using absa::Tensor;

namespace {

Tensor<double> from_rows(const oracle::Mat& rows) {
  Tensor<double> t({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())});
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) t.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) = rows[i][j];
  return t;
}

Tensor<double> random_tensor(std::vector<int64_t> shape, RngStream& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform_open(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv_window matches the reference inner product") {
  oracle::Mat w = {{1, 2}, {3, 4}};
  oracle::Mat f = {{1, 0}, {0, 1}};
  const double expected = oracle::conv(w, f, 0.0);
  CHECK(expected == doctest::Approx(5.0));
  CHECK(absa::conv_window(from_rows(w), from_rows(f), 0.0) == doctest::Approx(expected));

  oracle::Mat ones = {{1, 1}};
  CHECK(oracle::conv(ones, ones, 0.0) == doctest::Approx(2.0));
  CHECK(absa::conv_window(from_rows(ones), from_rows(ones), 0.0) == doctest::Approx(2.0));
}

TEST_CASE("conv_window with a zero filter returns the bias") {
  RngStream rng(7, "t");
  auto window = random_tensor({3, 5}, rng);
  auto filter = Tensor<double>::zeros({3, 5});
  CHECK(absa::conv_window(window, filter, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("conv_window rejects mismatched shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  CHECK_THROWS_AS(absa::conv_window(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("feature_map length is n-h+1 and values match the reference") {
  RngStream rng(11, "t");
  for (int n = 4; n <= 40; ++n) {
    for (int h = 1; h <= 4; ++h) {
      const int k = 3;
      oracle::Mat sent(n, std::vector<double>(k));
      oracle::Mat filt(h, std::vector<double>(k));
      for (auto& row : sent)
        for (auto& v : row) v = rng.uniform_open(-1, 1);
      for (auto& row : filt)
        for (auto& v : row) v = rng.uniform_open(-1, 1);
      auto got = absa::feature_map(from_rows(sent), from_rows(filt), 0.25, Activation::relu);
      auto want = oracle::feature_map(sent, filt, 0.25, true);
      REQUIRE(got.numel() == n - h + 1);
      REQUIRE(want.size() == static_cast<size_t>(n - h + 1));
      for (int64_t i = 0; i < got.numel(); ++i)
        CHECK(got.at(i) == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("feature_map edge cases") {
  RngStream rng(3, "t");
  auto sent = random_tensor({5, 4}, rng);
  auto filt = random_tensor({5, 4}, rng);
  CHECK(absa::feature_map(sent, filt, 0.0, Activation::none).numel() == 1);  // n == h

  auto zero_filt = Tensor<double>::zeros({2, 4});
  auto map = absa::feature_map(sent, zero_filt, 0.0, Activation::relu);
  for (auto v : map.data) CHECK(v == 0.0);

  auto long_filt = Tensor<double>::zeros({6, 4});
  CHECK_THROWS_AS(absa::feature_map(sent, long_filt, 0.0, Activation::relu), std::invalid_argument);
}

TEST_CASE("pool") {
  Tensor<double> v({3}, {1, 3, 2});
  CHECK(absa::pool(v, PoolMode::max) == doctest::Approx(3.0));
  Tensor<double> w({3}, {1, 2, 3});
  CHECK(absa::pool(w, PoolMode::avg) == doctest::Approx(2.0));
  auto c = Tensor<double>::full({4}, 0.7);
  CHECK(absa::pool(c, PoolMode::max) == doctest::Approx(0.7));
  CHECK(absa::pool(c, PoolMode::avg) == doctest::Approx(0.7));
  Tensor<double> empty;
  CHECK_THROWS_AS(absa::pool(empty, PoolMode::max), std::invalid_argument);
}

TEST_CASE("activate") {
  Tensor<double> x({3}, {-1.0, 0.0, 2.0});
  auto r = absa::activate(x, Activation::relu);
  CHECK(r.at(0) == 0.0);
  CHECK(r.at(1) == 0.0);
  CHECK(r.at(2) == 2.0);

  auto s = absa::activate(Tensor<double>::zeros({1}), Activation::sigmoid);
  CHECK(s.at(0) == doctest::Approx(0.5));

  RngStream rng(5, "t");
  for (int i = 0; i < 100; ++i) {
    double v = rng.uniform_open(-30, 30);
    double a = absa::sigmoid_scalar(v), b = absa::sigmoid_scalar(-v);
    CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }
}

TEST_CASE("softmax uniform, shift invariance, and reference values") {
  auto u = absa::softmax(Tensor<double>::full({3}, 1.7));
  for (auto v : u.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor<double> x({2}, {0.3, -1.2});
  Tensor<double> xs({2}, {10.3, 8.8});
  auto a = absa::softmax(x);
  auto b = absa::softmax(xs);
  for (int64_t i = 0; i < 2; ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-12));

  Tensor<double> logs({3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
  auto got = absa::softmax(logs);
  auto want = oracle::softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
  for (int64_t i = 0; i < 3; ++i) CHECK(got.at(i) == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
  CHECK(got.at(0) == doctest::Approx(1.0 / 6.0));
  CHECK(got.at(1) == doctest::Approx(2.0 / 6.0));
  CHECK(got.at(2) == doctest::Approx(3.0 / 6.0));
}

TEST_CASE("softmax properties on random logits") {
  RngStream rng(13, "t");
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.below(6));
    Tensor<double> x({n});
    for (auto& v : x.data) v = rng.uniform_open(-50, 50);
    auto p = absa::softmax(x);
    double sum = 0;
    int64_t argmax_x = 0, argmax_p = 0;
    for (int64_t i = 0; i < n; ++i) {
      CHECK(p.at(i) > 0.0);
      sum += p.at(i);
      if (x.at(i) > x.at(argmax_x)) argmax_x = i;
      if (p.at(i) > p.at(argmax_p)) argmax_p = i;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(argmax_x == argmax_p);
    CHECK(p.all_finite());
  }
}

TEST_CASE("cross-entropy loss with L2 penalty") {
  using absa::cross_entropy_l2_loss;

  // perfect predictions: only the penalty remains
  std::vector<Tensor<double>> perfect = {Tensor<double>({3}, {1, 0, 0}),
                                         Tensor<double>({3}, {0, 0, 1})};
  std::vector<int> labels = {0, 2};
  Tensor<double> p1({2}, {0.5, -0.5});
  std::vector<const Tensor<double>*> reg = {&p1};
  double l = cross_entropy_l2_loss<double>(perfect, labels, reg, 0.01);
  CHECK(l == doctest::Approx(0.01 * 0.5).epsilon(1e-12));

  // uniform 3-class, single instance, lambda 0: ln 3
  std::vector<Tensor<double>> uni = {Tensor<double>::full({3}, 1.0 / 3.0)};
  std::vector<int> one = {1};
  double l2 = cross_entropy_l2_loss<double>(uni, one, reg, 0.0);
  CHECK(l2 == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // zero params, lambda 0: pure cross-entropy
  Tensor<double> zero = Tensor<double>::zeros({4});
  std::vector<const Tensor<double>*> zreg = {&zero};
  std::vector<Tensor<double>> probs = {Tensor<double>({2}, {0.25, 0.75})};
  std::vector<int> y = {1};
  CHECK(cross_entropy_l2_loss<double>(probs, y, zreg, 0.0) ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-12));

  // zero probability at the true class is clamped, not -inf
  std::vector<Tensor<double>> hard = {Tensor<double>({2}, {1.0, 0.0})};
  std::vector<int> yy = {1};
  double clamped = cross_entropy_l2_loss<double>(hard, yy, zreg, 0.0);
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("dropout identity cases and rate validation") {
  RngStream rng(17, "t");
  auto x = random_tensor({50}, rng);

  auto same = absa::dropout(x, 0.0, rng, true);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(same.at(i) == x.at(i));

  auto eval = absa::dropout(x, 0.9, rng, false);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(eval.at(i) == x.at(i));

  CHECK_THROWS_AS(absa::dropout(x, 1.0, rng, true), std::invalid_argument);
  CHECK_THROWS_AS(absa::dropout(x, 1.5, rng, true), std::invalid_argument);
}

TEST_CASE("dropout keeps the expectation of the input") {
  const int n = 100000;
  const double rate = 0.3;
  RngStream rng(2024, "t");
  auto ones = Tensor<double>::full({n}, 1.0);
  auto dropped = absa::dropout(ones, rate, rng, true);
  double mean = 0;
  for (auto v : dropped.data) mean += v;
  mean /= n;
  CHECK(std::abs(mean - 1.0) < 0.02);
  // tighter 3-sigma band for the inverted-dropout estimator
  double sigma = std::sqrt(rate / (1.0 - rate) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * sigma);
}

TEST_CASE("RngStream determinism and open-interval draws") {
  RngStream a(42, "x"), b(42, "x");
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(42, "x");
  RngStream s1 = c.substream("init"), s2 = c.substream("shuffle");
  CHECK(s1.seed() != s2.seed());
  RngStream s1b = c.substream("init");
  CHECK(s1.seed() == s1b.seed());

  RngStream d(9, "t");
  for (int i = 0; i < 10000; ++i) {
    double v = d.uniform_open(-0.01, 0.01);
    CHECK(v > -0.01);
    CHECK(v < 0.01);
  }

  // restore() resumes the exact sequence
  RngStream e(77, "t");
  for (int i = 0; i < 123; ++i) e.next_u64();
  RngStream r = RngStream::restore(77, "t", e.draw_count());
  for (int i = 0; i < 50; ++i) CHECK(e.next_u64() == r.next_u64());
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<double>({2, 3}, {1, 2, 3}), std::invalid_argument);
  Tensor<double> t({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK(t.at(1, 0) == 3);
  auto r = t.reshaped({4});
  CHECK(r.at(2) == 3);
  CHECK_THROWS_AS(t.reshaped({3}), std::invalid_argument);
}
