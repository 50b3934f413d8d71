// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "davam/gradcheck.hpp"
#include "davam/quantizer.hpp"

#include <cmath>

using namespace davam;
using T = Tensor<double>;

namespace {

MatD random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  MatD m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Brute-force nearest neighbor with smallest-index tie-break.
int brute_nearest(const MatD& codes, const MatD& row) {
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (int k = 0; k < codes.rows(); ++k) {
    double d = (row - codes.row(k)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("quantize: exact code match, K=1, brute-force oracle") {
  Rng rng(1);
  auto book = make_codebook<double>(5, 3, rng, 1.0);
  MatD h(1, 3);
  h = book.codes.row(3);
  auto res = quantize(T::from(h), book);
  CHECK(res.z == LatentSequence{3});

  auto one = make_codebook<double>(1, 3, rng, 1.0);
  auto res1 = quantize(T::from(random_mat(rng, 4, 3)), one);
  CHECK(res1.z == LatentSequence{0, 0, 0, 0});

  for (int trial = 0; trial < 50; ++trial) {
    Rng r = rng.fork(static_cast<std::uint64_t>(trial));
    auto b = make_codebook<double>(8, 4, r, 1.0);
    MatD rows = random_mat(r, 5, 4);
    auto res2 = quantize(T::from(rows), b);
    for (int t = 0; t < 5; ++t)
      CHECK(res2.z[static_cast<std::size_t>(t)] == brute_nearest(b.codes, rows.row(t)));
    // Forward equals the assigned codes.
    for (int t = 0; t < 5; ++t)
      CHECK(res2.quantized.value().row(t) ==
            b.codes.row(res2.z[static_cast<std::size_t>(t)]));
  }

  CodeBook<double> empty;
  CHECK_THROWS_AS(quantize(T::from(h), empty), ContractError);
}

TEST_CASE("quantize: tie-break picks the smallest index") {
  CodeBook<double> book;
  book.codes = MatD::Zero(3, 2);
  book.codes << 1, 0, -1, 0, 1, 0;  // codes 0 and 2 identical
  book.ema_counts = MatD::Ones(3, 1);
  book.ema_sums = book.codes;
  MatD h(2, 2);
  h << 0, 0,  // equidistant from codes 0, 1, 2
      1, 0;   // exact tie between code 0 and code 2
  auto res = quantize(T::from(h), book);
  CHECK(res.z == LatentSequence{0, 0});
}

TEST_CASE("quantize: idempotent and distance-minimizing") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Rng r = rng.fork(static_cast<std::uint64_t>(trial));
    auto book = make_codebook<double>(6, 3, r, 1.0);
    MatD rows = random_mat(r, 4, 3);
    auto res = quantize(T::from(rows), book);
    auto again = quantize(T::from(res.quantized.value()), book);
    CHECK(res.z == again.z);
    for (int t = 0; t < 4; ++t) {
      int zt = res.z[static_cast<std::size_t>(t)];
      double chosen = (rows.row(t) - book.codes.row(zt)).squaredNorm();
      for (int k = 0; k < book.size(); ++k)
        CHECK(chosen <= (rows.row(t) - book.codes.row(k)).squaredNorm() + 1e-18);
    }
  }
}

TEST_CASE("quantize: straight-through gradient flows to h only") {
  Rng rng(3);
  auto book = make_codebook<double>(4, 3, rng, 1.0);
  T h = T::from(random_mat(rng, 5, 3), true);
  MatD c = random_mat(rng, 5, 3);
  auto res = quantize(h, book);
  sum_all(mul(res.quantized, T::from(c))).backward();
  CHECK(h.grad() == c);
}

TEST_CASE("kmeans_init: N=K with zero iterations returns the samples") {
  Rng rng(5);
  MatD samples = random_mat(rng, 4, 2);
  auto book = kmeans_init(samples, 4, 0, 9);
  // Same rows up to order.
  for (int i = 0; i < 4; ++i) {
    bool found = false;
    for (int k = 0; k < 4; ++k)
      if (samples.row(i) == book.codes.row(k)) found = true;
    CHECK(found);
  }
  CHECK_THROWS_AS(kmeans_init(samples, 5, 0, 9), DataError);
}

TEST_CASE("kmeans_init: two separated clouds converge to the cloud means") {
  Rng rng(11);
  const int n = 60;
  MatD samples(2 * n, 2);
  MatD mean_a(1, 2), mean_b(1, 2);
  mean_a << 10, 10;
  mean_b << -10, -10;
  for (int i = 0; i < n; ++i) {
    samples.row(i) = mean_a + 0.01 * random_mat(rng, 1, 2);
    samples.row(n + i) = mean_b + 0.01 * random_mat(rng, 1, 2);
  }
  auto book = kmeans_init(samples, 2, 25, 3);
  MatD cloud_a = samples.topRows(n).colwise().mean();
  MatD cloud_b = samples.bottomRows(n).colwise().mean();
  // Each cloud mean is matched by exactly one code.
  double d0a = (book.codes.row(0) - cloud_a).norm();
  double d0b = (book.codes.row(0) - cloud_b).norm();
  int a_code = d0a < d0b ? 0 : 1;
  CHECK((book.codes.row(a_code) - cloud_a).norm() < 1e-6);
  CHECK((book.codes.row(1 - a_code) - cloud_b).norm() < 1e-6);
  // EMA stats seeded with the final assignment counts.
  CHECK(book.ema_counts.sum() == doctest::Approx(2.0 * n));
}

TEST_CASE("kmeans_init: one iteration matches a hand-stepped Lloyd oracle") {
  // Six points on a line; initial codes are the sampled rows, one iteration
  // reassigns and averages. The oracle replays the same draw sequence.
  MatD samples(6, 1);
  samples << 0, 1, 2, 10, 11, 12;
  const std::uint64_t seed = 42;
  auto book = kmeans_init(samples, 2, 1, seed);

  Rng rng(seed);
  std::vector<int> picks = rng.distinct(6, 2);
  MatD init(2, 1);
  init << samples(picks[0], 0), samples(picks[1], 0);
  MatD sums = MatD::Zero(2, 1);
  MatD counts = MatD::Zero(2, 1);
  for (int i = 0; i < 6; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::max();
    for (int k = 0; k < 2; ++k) {
      double d = std::abs(samples(i, 0) - init(k, 0));
      if (d * d < bd) {
        bd = d * d;
        best = k;
      }
    }
    sums(best, 0) += samples(i, 0);
    counts(best, 0) += 1;
  }
  for (int k = 0; k < 2; ++k)
    if (counts(k, 0) > 0) init(k, 0) = sums(k, 0) / counts(k, 0);
  CHECK(book.codes == init);
}

TEST_CASE("kmeans objective is non-increasing across Lloyd iterations") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Rng r = rng.fork(static_cast<std::uint64_t>(trial));
    MatD samples = random_mat(r, 40, 3);
    double prev = std::numeric_limits<double>::max();
    for (int iters = 0; iters <= 6; ++iters) {
      auto book = kmeans_init(samples, 5, iters, 77);
      double obj = kmeans_objective(samples, book);
      CHECK(obj <= prev + 1e-9);
      prev = obj;
    }
  }
}

TEST_CASE("ema_update: decay 0 gives batch means; unassigned codes keep their value") {
  Rng rng(17);
  auto book = make_codebook<double>(3, 2, rng, 1.0, 0.0);
  MatD h = random_mat(rng, 6, 2);
  auto z = assign_codes(h, book);
  MatD before = book.codes;
  ema_update(book, h, z);
  for (int k = 0; k < 3; ++k) {
    MatD sum = MatD::Zero(1, 2);
    int n = 0;
    for (int t = 0; t < 6; ++t)
      if (z[static_cast<std::size_t>(t)] == k) {
        sum += h.row(t);
        ++n;
      }
    if (n > 0) {
      CHECK((book.codes.row(k) - sum / n).cwiseAbs().maxCoeff() < 1e-12);
    } else {
      // Counts shrank to zero; the floored ratio keeps the code from moving
      // to garbage but the exact value is sums/epsilon = 0 here.
      CHECK(book.ema_counts(k, 0) == 0.0);
    }
  }
  (void)before;
}

TEST_CASE("ema_update: two sequential updates match an unrolled recurrence") {
  Rng rng(19);
  const double decay = 0.99, eps = 1e-5;
  auto book = make_codebook<double>(4, 3, rng, 1.0, decay, eps);
  MatD c0 = book.ema_counts, s0 = book.ema_sums;

  MatD h1 = random_mat(rng, 5, 3);
  auto z1 = assign_codes(h1, book);
  ema_update(book, h1, z1);
  MatD h2 = random_mat(rng, 7, 3);
  auto z2 = assign_codes(h2, book);
  ema_update(book, h2, z2);

  // Unrolled two-step oracle.
  auto batch_stats = [&](const MatD& h, const LatentSequence& z, MatD& sums, MatD& counts) {
    sums = MatD::Zero(4, 3);
    counts = MatD::Zero(4, 1);
    for (int t = 0; t < h.rows(); ++t) {
      sums.row(z[static_cast<std::size_t>(t)]) += h.row(t);
      counts(z[static_cast<std::size_t>(t)], 0) += 1;
    }
  };
  MatD s1, n1, s2, n2;
  batch_stats(h1, z1, s1, n1);
  batch_stats(h2, z2, s2, n2);
  MatD counts = decay * (decay * c0 + (1 - decay) * n1) + (1 - decay) * n2;
  MatD sums = decay * (decay * s0 + (1 - decay) * s1) + (1 - decay) * s2;
  CHECK((book.ema_counts - counts).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((book.ema_sums - sums).cwiseAbs().maxCoeff() < 1e-12);
  for (int k = 0; k < 4; ++k) {
    MatD expect = sums.row(k) / std::max(counts(k, 0), eps);
    CHECK((book.codes.row(k) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("commitment_loss: zero at codes, hand-derived gradient, beta check") {
  Rng rng(23);
  auto book = make_codebook<double>(4, 2, rng, 1.0);
  // h exactly at its codes -> zero loss.
  MatD at_codes(2, 2);
  at_codes << book.codes.row(1), book.codes.row(3);
  auto z = assign_codes(at_codes, book);
  T h0 = T::from(at_codes, true);
  CHECK(commitment_loss(h0, book, z, 2.0).item() == 0.0);

  // Single row h=[1,0], e=[0,0], beta=2: loss 2, grad(h) = [4, 0].
  CodeBook<double> b1;
  b1.codes = MatD::Zero(1, 2);
  b1.ema_counts = MatD::Ones(1, 1);
  b1.ema_sums = b1.codes;
  MatD hv(1, 2);
  hv << 1, 0;
  T h = T::from(hv, true);
  LatentSequence z1 = {0};
  T loss = commitment_loss(h, b1, z1, 2.0);
  CHECK(loss.item() == doctest::Approx(2.0));
  loss.backward();
  CHECK(h.grad()(0, 0) == doctest::Approx(4.0));
  CHECK(h.grad()(0, 1) == doctest::Approx(0.0));

  auto fn = [&]() { return commitment_loss(h, b1, z1, 2.0); };
  auto rep = grad_check<double>(fn, {{"h", h}}, 1e-5);
  CHECK(rep.max_rel_error < 1e-8);

  CHECK_THROWS_AS(commitment_loss(h, b1, z1, -1.0), ConfigError);
}

TEST_CASE("one-hot posterior entropy is zero by construction") {
  // The posterior over codes puts mass 1 on the argmin index; its entropy
  // -1 log 1 is exactly zero under the index representation.
  Rng rng(29);
  auto book = make_codebook<double>(6, 3, rng, 1.0);
  MatD h = random_mat(rng, 4, 3);
  auto z = assign_codes(h, book);
  for (int idx : z) {
    double p = 1.0;  // q(z = idx) = 1, all other entries 0
    CHECK(-p * std::log(p) == 0.0);
    CHECK(idx >= 0);
    CHECK(idx < book.size());
  }
}

TEST_CASE("dead_code_restart: threshold oracle on a skewed stream") {
  Rng rng(31);
  auto book = make_codebook<double>(8, 2, rng, 1.0);
  // Simulate a skewed assignment history directly in the EMA counters.
  book.ema_counts.setZero();
  book.ema_counts(0, 0) = 100;
  book.ema_counts(1, 0) = 50;
  book.ema_counts(2, 0) = 0.001;  // below 1e-3 of uniform share (150/8 * 1e-3)
  book.ema_counts(3, 0) = 1;
  // codes 4..7 at exactly zero
  MatD recent = random_mat(rng, 10, 2);

  double total = book.ema_counts.sum();
  double threshold = 1e-3 * total / 8;
  int expect = 0;
  for (int k = 0; k < 8; ++k)
    if (book.ema_counts(k, 0) < threshold) ++expect;

  Rng restart_rng(5);
  int restarts = dead_code_restart(book, recent, restart_rng);
  CHECK(restarts == expect);
  CHECK(restarts == 5);  // code 2 plus the four never-assigned codes
  CHECK(book.ema_counts(0, 0) == 100);
  CHECK(book.ema_counts(1, 0) == 50);

  // Uniform usage: nothing restarts.
  auto uniform_book = make_codebook<double>(4, 2, rng, 1.0);
  uniform_book.ema_counts.setConstant(10.0);
  Rng r2(6);
  CHECK(dead_code_restart(uniform_book, recent, r2) == 0);

  // Exactly one unused code restarts exactly once.
  auto one_dead = make_codebook<double>(4, 2, rng, 1.0);
  one_dead.ema_counts.setConstant(10.0);
  one_dead.ema_counts(2, 0) = 0.0;
  Rng r3(7);
  CHECK(dead_code_restart(one_dead, recent, r3) == 1);
}
