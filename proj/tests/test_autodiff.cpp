#include <doctest.h>

#include <cmath>
#include <functional>

#include "floqfno/autodiff.hpp"
#include "floqfno/fno.hpp"
#include "floqfno/optimizer.hpp"
#include "support/oracles.hpp"

using namespace floqfno;

namespace {

Tensor random_tensor(std::vector<long> shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

/// Finite-difference check of d(loss)/d(param) for a scalar-valued graph
/// builder that reads `param` as a leaf.
void fd_check(Tensor& param, const std::function<double()>& eval,
              const Tensor& analytic, double tol = 1e-5) {
  const auto res = oracles::check_gradient(param, analytic, eval);
  CHECK(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("fft roundtrip is the identity") {
  RngStream rng(1);
  Tensor x = random_tensor({3, 200}, rng);
  Tape tape;
  const Var v = tape.constant(x);
  const Var back = tape.irfft(tape.rfft(v), 200);
  const Tensor& y = tape.value(back);
  double max_err = 0.0;
  for (long i = 0; i < x.size(); ++i)
    max_err = std::max(max_err, std::abs(x[i] - y[i]));
  CHECK(max_err < 1e-12);
}

TEST_CASE("rfft matches the naive DFT with 1/N scaling") {
  RngStream rng(2);
  const long n = 16;
  Tensor x = random_tensor({1, n}, rng);
  Eigen::VectorXd xe(n);
  for (long i = 0; i < n; ++i) xe(i) = x[i];
  const Eigen::VectorXcd ref = oracles::naive_dft(xe) / static_cast<double>(n);
  Tape tape;
  const Tensor& s = tape.value(tape.rfft(tape.constant(x)));
  for (long k = 0; k <= n / 2; ++k) {
    CHECK(s[k] == doctest::Approx(ref(k).real()).epsilon(1e-12));
    CHECK(s[n / 2 + 1 + k] == doctest::Approx(ref(k).imag()).epsilon(1e-12));
  }
}

TEST_CASE("tanh gradient at zero is one") {
  Tensor x({1}, {0.0});
  Tape tape;
  const Var leaf = tape.leaf(x);
  tape.backward(tape.tanh(leaf));
  CHECK(tape.gradient(leaf)[0] == doctest::Approx(1.0));
}

TEST_CASE("backward on a sum gives ones; unreachable leaves read zero") {
  RngStream rng(3);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor unused = random_tensor({2, 2}, rng);
  Tensor col_ones({3, 1});
  col_ones.fill(1.0);
  Tensor row_ones({4, 1});
  row_ones.fill(1.0);

  Tape tape;
  const Var leaf = tape.leaf(x);
  const Var orphan = tape.leaf(unused);
  const Var rows = tape.matmul(leaf, tape.constant(col_ones));   // (4,1)
  const Var total = tape.matmul(tape.reshape(rows, {1, 4}),
                                tape.constant(row_ones));        // scalar sum
  tape.backward(total);
  const Tensor g = tape.gradient(leaf);
  for (long i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(1.0));
  const Tensor go = tape.gradient(orphan);
  for (long i = 0; i < go.size(); ++i) CHECK(go[i] == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x({2, 2});
  Tape tape;
  const Var leaf = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(leaf), InvalidArgument);
}

TEST_CASE("mse of a linear map matches the closed form") {
  RngStream rng(4);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor y = random_tensor({3, 5}, rng);
  Tape tape;
  const Var wl = tape.leaf(w);
  const Var loss = tape.scale(
      tape.sse(tape.matmul(wl, tape.constant(x)), tape.constant(y)), 1.0 / 5);
  tape.backward(loss);
  const Tensor g = tape.gradient(wl);

  // Closed form: (2/n) (Wx - y) x^T.
  Eigen::MatrixXd we(3, 4), xe(4, 5), ye(3, 5);
  for (long r = 0; r < 3; ++r)
    for (long c = 0; c < 4; ++c) we(r, c) = w.at(r, c);
  for (long r = 0; r < 4; ++r)
    for (long c = 0; c < 5; ++c) xe(r, c) = x.at(r, c);
  for (long r = 0; r < 3; ++r)
    for (long c = 0; c < 5; ++c) ye(r, c) = y.at(r, c);
  const Eigen::MatrixXd ge = 2.0 / 5 * (we * xe - ye) * xe.transpose();
  for (long r = 0; r < 3; ++r)
    for (long c = 0; c < 4; ++c)
      CHECK(g.at(r, c) == doctest::Approx(ge(r, c)).epsilon(1e-12));
}

TEST_CASE("finite-difference checks per primitive") {
  RngStream rng(5);

  SUBCASE("matmul, both operands") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor target = random_tensor({3, 5}, rng);
    auto eval = [&]() {
      Tape t;
      return t.value(t.sse(t.matmul(t.leaf(a), t.leaf(b)), t.leaf(target)))[0];
    };
    Tape t;
    const Var va = t.leaf(a), vb = t.leaf(b);
    t.backward(t.sse(t.matmul(va, vb), t.leaf(target)));
    fd_check(a, eval, t.gradient(va));
    fd_check(b, eval, t.gradient(vb));
  }

  SUBCASE("add, add_bias, multiply, scale, tanh") {
    Tensor a = random_tensor({3, 6}, rng);
    Tensor b = random_tensor({3, 6}, rng);
    Tensor bias = random_tensor({3}, rng);
    Tensor target = random_tensor({3, 6}, rng);
    auto eval = [&]() {
      Tape t;
      const Var expr = t.tanh(t.scale(
          t.multiply(t.add_bias(t.add(t.leaf(a), t.leaf(b)), t.leaf(bias)),
                     t.leaf(b)),
          0.7));
      return t.value(t.sse(expr, t.leaf(target)))[0];
    };
    Tape t;
    const Var va = t.leaf(a), vb = t.leaf(b), vbias = t.leaf(bias);
    const Var expr = t.tanh(t.scale(
        t.multiply(t.add_bias(t.add(va, vb), vbias), vb), 0.7));
    t.backward(t.sse(expr, t.leaf(target)));
    fd_check(a, eval, t.gradient(va));
    fd_check(b, eval, t.gradient(vb));
    fd_check(bias, eval, t.gradient(vbias));
  }

  SUBCASE("slice, reshape, concat") {
    Tensor a = random_tensor({3, 8}, rng);
    Tensor target = random_tensor({3, 10}, rng);
    auto build = [&](Tape& t, Var va) {
      const Var left = t.slice_cols(va, 0, 4);
      const Var right = t.slice_cols(va, 2, 8);
      const Var both = t.concat_cols({left, right});
      return t.sse(t.reshape(both, {3, 10}), t.leaf(target));
    };
    auto eval = [&]() {
      Tape t;
      return t.value(build(t, t.leaf(a)))[0];
    };
    Tape t;
    const Var va = t.leaf(a);
    t.backward(build(t, va));
    fd_check(a, eval, t.gradient(va));
  }

  SUBCASE("padding modes") {
    for (const PadMode mode : {PadMode::Zero, PadMode::Reflect, PadMode::Circular}) {
      CAPTURE(to_string(mode));
      Tensor a = random_tensor({2, 6}, rng);
      const PaddingPolicy policy{mode, 4};
      Tensor target = random_tensor({2, 10}, rng);
      auto eval = [&]() {
        Tape t;
        return t.value(t.sse(t.pad_time(t.leaf(a), policy), t.leaf(target)))[0];
      };
      Tape t;
      const Var va = t.leaf(a);
      t.backward(t.sse(t.pad_time(va, policy), t.leaf(target)));
      fd_check(a, eval, t.gradient(va));
    }
  }

  SUBCASE("rfft / irfft") {
    Tensor a = random_tensor({2, 12}, rng);
    Tensor target = random_tensor({2, 14}, rng);  // spectrum (2,2,7) flattened
    auto eval = [&]() {
      Tape t;
      return t.value(t.sse(t.reshape(t.rfft(t.leaf(a)), {2, 14}),
                           t.leaf(target)))[0];
    };
    Tape t;
    const Var va = t.leaf(a);
    t.backward(t.sse(t.reshape(t.rfft(va), {2, 14}), t.leaf(target)));
    fd_check(a, eval, t.gradient(va));

    Tensor spec = random_tensor({2, 7, 2}, rng);
    Tensor target2 = random_tensor({2, 12}, rng);
    auto eval2 = [&]() {
      Tape t;
      return t.value(t.sse(t.irfft(t.leaf(spec), 12), t.leaf(target2)))[0];
    };
    Tape t2;
    const Var vs = t2.leaf(spec);
    t2.backward(t2.sse(t2.irfft(vs, 12), t2.leaf(target2)));
    fd_check(spec, eval2, t2.gradient(vs));
  }

  SUBCASE("mode_multiply: spectrum and both weight tensors") {
    Tensor spec = random_tensor({2, 7, 3}, rng);
    Tensor wre = random_tensor({4, 2, 3}, rng);  // k_max=4, Cout=2, Cin=3
    Tensor wim = random_tensor({4, 2, 3}, rng);
    Tensor target = random_tensor({4, 7}, rng);
    auto build = [&](Tape& t, Var s, Var re, Var im) {
      return t.sse(t.reshape(t.mode_multiply(s, re, im), {4, 7}),
                   t.leaf(target));
    };
    auto eval = [&]() {
      Tape t;
      return t.value(build(t, t.leaf(spec), t.leaf(wre), t.leaf(wim)))[0];
    };
    Tape t;
    const Var vs = t.leaf(spec), vre = t.leaf(wre), vim = t.leaf(wim);
    t.backward(build(t, vs, vre, vim));
    fd_check(spec, eval, t.gradient(vs));
    fd_check(wre, eval, t.gradient(vre));
    fd_check(wim, eval, t.gradient(vim));
  }
}

TEST_CASE("shape mismatches raise invalid-argument with both shapes") {
  Tape tape;
  Tensor a({2, 3}), b({4, 5});
  const Var va = tape.constant(a), vb = tape.constant(b);
  CHECK_THROWS_WITH_AS(tape.matmul(va, vb), doctest::Contains("(2,3)"),
                       InvalidArgument);
  CHECK_THROWS_AS(tape.add(va, vb), InvalidArgument);
  CHECK_THROWS_AS(tape.rfft(tape.constant(Tensor({2, 7}))), InvalidArgument);
}

TEST_CASE("three-layer toy network gradient vs finite differences") {
  RngStream rng(6);
  Tensor w1 = random_tensor({5, 3}, rng), w2 = random_tensor({4, 5}, rng),
         w3 = random_tensor({2, 4}, rng);
  Tensor x = random_tensor({3, 7}, rng);
  Tensor y = random_tensor({2, 7}, rng);
  auto build = [&](Tape& t, Var v1, Var v2, Var v3) {
    const Var h1 = t.tanh(t.matmul(v1, t.leaf(x)));
    const Var h2 = t.tanh(t.matmul(v2, h1));
    return t.scale(t.sse(t.matmul(v3, h2), t.leaf(y)), 1.0 / 7);
  };
  auto eval = [&]() {
    Tape t;
    return t.value(build(t, t.leaf(w1), t.leaf(w2), t.leaf(w3)))[0];
  };
  Tape t;
  const Var v1 = t.leaf(w1), v2 = t.leaf(w2), v3 = t.leaf(w3);
  t.backward(build(t, v1, v2, v3));
  fd_check(w1, eval, t.gradient(v1));
  fd_check(w2, eval, t.gradient(v2));
  fd_check(w3, eval, t.gradient(v3));
}

TEST_CASE("backward is linear in the loss") {
  RngStream rng(7);
  Tensor w = random_tensor({3, 3}, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor y1 = random_tensor({3, 4}, rng), y2 = random_tensor({3, 4}, rng);
  const double a = 0.37, b = -1.21;

  auto grad_of = [&](double ca, double cb) {
    Tape t;
    const Var vw = t.leaf(w);
    const Var pred = t.matmul(vw, t.leaf(x));
    const Var loss = t.add(t.scale(t.sse(pred, t.leaf(y1)), ca),
                           t.scale(t.sse(pred, t.leaf(y2)), cb));
    t.backward(loss);
    return t.gradient(vw);
  };
  const Tensor g1 = grad_of(1.0, 0.0);
  const Tensor g2 = grad_of(0.0, 1.0);
  const Tensor gc = grad_of(a, b);
  for (long i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-12));
}

TEST_CASE("adamw: zero gradient and zero weight decay leave parameters unchanged") {
  Tensor p({3}, {1.0, -2.0, 0.5});
  const Tensor before = p;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, {&p});
  opt.step({&p}, {Tensor({3})});
  for (long i = 0; i < 3; ++i) CHECK(p[i] == before[i]);
}

TEST_CASE("adamw: single scalar step matches the hand-evaluated recurrence") {
  Tensor p({1}, {1.0});
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, {&p});
  Tensor g({1}, {1.0});
  opt.step({&p}, {g});
  // m_hat = 1, v_hat = 1 after bias correction at t = 1.
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adamw: decoupled weight decay contributes -lr*wd*p") {
  Tensor p({1}, {2.0});
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg, {&p});
  opt.step({&p}, {Tensor({1})});  // zero gradient isolates the decay term
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-14));
}

TEST_CASE("adamw: learning rate decays by exactly gamma when crossing n_decay") {
  Tensor p({1}, {1.0});
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  cfg.gamma = 0.8;
  cfg.n_decay = 5;
  AdamW opt(cfg, {&p});
  Tensor g({1}, {0.1});
  for (int s = 0; s < 4; ++s) opt.step({&p}, {g});
  CHECK(opt.current_lr() == 1e-3);
  opt.step({&p}, {g});  // step 5 crosses the interval
  CHECK(opt.current_lr() == doctest::Approx(0.8e-3).epsilon(1e-15));
  for (int s = 0; s < 5; ++s) opt.step({&p}, {g});
  CHECK(opt.current_lr() == doctest::Approx(0.64e-3).epsilon(1e-15));
}

TEST_CASE("deterministic replay: identical runs produce identical gradients") {
  auto run = [&]() {
    RngStream rng(8);
    Tensor w = random_tensor({6, 6}, rng);
    Tensor x = random_tensor({6, 10}, rng);
    Tensor y = random_tensor({6, 10}, rng);
    Tape t;
    const Var vw = t.leaf(w);
    t.backward(t.sse(t.tanh(t.matmul(vw, t.leaf(x))), t.leaf(y)));
    return t.gradient(vw);
  };
  const Tensor g1 = run();
  const Tensor g2 = run();
  for (long i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("finite-difference checks on end-to-end FNO graphs") {
  RngStream rng(9);

  auto check_model = [&](FnoConfig cfg, long n_time, std::uint64_t seed) {
    RngStream init(seed);
    FnoModel model(cfg, init);
    Tensor input = random_tensor({cfg.d_in, n_time}, rng);
    Tensor target = random_tensor({cfg.d_out, n_time}, rng, 0.5);
    auto eval = [&]() {
      Tape t;
      const auto binding = model.bind(t);
      return t.value(t.scale(
          t.sse(model.forward(t, binding, t.leaf(input)), t.leaf(target)),
          1.0 / n_time))[0];
    };
    Tape t;
    const auto binding = model.bind(t);
    t.backward(t.scale(
        t.sse(model.forward(t, binding, t.leaf(input)), t.leaf(target)),
        1.0 / n_time));
    auto params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      CAPTURE(p);
      const auto res = oracles::check_gradient(
          *params[p], t.gradient(binding.params[p]), eval, 1e-5, 24);
      CHECK(res.max_rel_err < 1e-5);
    }
  };

  SUBCASE("no padding (heff-like)") {
    check_model({4, 6, 8, 2, 5, {PadMode::None, 0}}, 16, 11);
  }
  SUBCASE("zero padding (obs-like)") {
    check_model({3, 5, 8, 3, 5, {PadMode::Zero, 4}}, 12, 12);
  }
  SUBCASE("reflect padding, wide") {
    check_model({2, 4, 6, 2, 4, {PadMode::Reflect, 6}}, 10, 13);
  }
}
