#include <doctest.h>

#include <cstdio>

#include "floqfno/fno.hpp"
#include "support/oracles.hpp"

using namespace floqfno;

namespace {

Tensor random_tensor(std::vector<long> shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void set_identity(Tensor& t) {
  REQUIRE(t.rank() == 2);
  REQUIRE(t.dim(0) == t.dim(1));
  t.fill(0.0);
  for (long i = 0; i < t.dim(0); ++i) t.at(i, i) = 1.0;
}

/// Band-limited real signal: modes strictly below k_cut, identical Fourier
/// coefficients at any resolution.
Tensor band_limited(long channels, long n, long k_cut, RngStream& rng) {
  Tensor t({channels, n});
  for (long c = 0; c < channels; ++c) {
    for (long k = 0; k < k_cut; ++k) {
      const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      for (long j = 0; j < n; ++j) {
        const double phase = 2.0 * M_PI * k * j / static_cast<double>(n);
        t.at(c, j) += a * std::cos(phase) + b * std::sin(phase);
      }
    }
  }
  return t;
}

}  // namespace

TEST_CASE("all-zero parameters give identically zero output") {
  FnoModel model = FnoModel::zeros({3, 5, 8, 2, 4, {PadMode::Zero, 4}});
  RngStream rng(1);
  const Tensor out = model.predict(random_tensor({3, 12}, rng));
  CHECK(out.dim(0) == 5);
  CHECK(out.dim(1) == 12);
  for (long i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("spectral identity construction reproduces the input") {
  // One layer, identity lifting/projection, zero bypass, R = identity on
  // every retained mode, full mode retention: the layer is an FFT roundtrip.
  const long w = 3, n = 16;
  FnoConfig cfg{w, w, w, 1, n / 2 + 1, {PadMode::None, 0}};
  FnoModel model = FnoModel::zeros(cfg);
  set_identity(model.lift_w);
  set_identity(model.proj_w);
  for (long k = 0; k < cfg.k_max; ++k)
    for (long i = 0; i < w; ++i)
      model.layers[0].r_re[k * w * w + i * w + i] = 1.0;

  RngStream rng(2);
  const Tensor x = random_tensor({w, n}, rng);
  const Tensor y = model.predict(x);
  for (long i = 0; i < x.size(); ++i)
    CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("paper-scale architecture: output shape and parameter count formula") {
  FnoConfig cfg{96, 384, 256, 3, 32, {PadMode::None, 0}};
  RngStream init(3);
  FnoModel model(cfg, init);
  long actual = 0;
  for (const Tensor* p : model.parameters()) actual += p->size();
  CHECK(actual == cfg.parameter_count());
  CHECK(cfg.parameter_count() ==
        (96 + 1) * 256 + 3 * (2 * 256 * 256 * 32 + 256 * 256 + 256) +
            (256 + 1) * 384);

  RngStream rng(4);
  const Tensor out = model.predict(random_tensor({96, 200}, rng));
  CHECK(out.dim(0) == 384);
  CHECK(out.dim(1) == 200);
  CHECK(out.all_finite());
}

TEST_CASE("padding examples from the three modes") {
  Tensor u({1, 3}, {1.0, 2.0, 3.0});
  const Tensor z = pad(u, {PadMode::Zero, 2});
  const Tensor r = pad(u, {PadMode::Reflect, 2});
  const Tensor c = pad(u, {PadMode::Circular, 2});
  const std::vector<double> ze{1, 2, 3, 0, 0}, re{1, 2, 3, 2, 1}, ce{1, 2, 3, 1, 2};
  for (long i = 0; i < 5; ++i) {
    CHECK(z[i] == ze[static_cast<std::size_t>(i)]);
    CHECK(r[i] == re[static_cast<std::size_t>(i)]);
    CHECK(c[i] == ce[static_cast<std::size_t>(i)]);
  }
  const Tensor back = unpad(z, {PadMode::Zero, 2});
  CHECK(back.dim(1) == 3);
  for (long i = 0; i < 3; ++i) CHECK(back[i] == u[i]);
  CHECK_THROWS_AS(pad(u, {PadMode::Zero, 3}), InvalidArgument);
}

TEST_CASE("k_max exceeding the padded mode count is rejected") {
  FnoConfig cfg{2, 2, 4, 1, 32, {PadMode::None, 0}};
  FnoModel model = FnoModel::zeros(cfg);
  CHECK_THROWS_AS(model.predict(Tensor({2, 16})), InvalidArgument);
  CHECK_THROWS_AS(model.check_resolution(15), InvalidArgument);  // odd length
  model.check_resolution(62);  // 32 modes available
}

TEST_CASE("mode truncation is idempotent") {
  RngStream rng(5);
  Tensor spec = random_tensor({2, 9, 3}, rng);
  Tensor eye({4, 3, 3});
  for (long k = 0; k < 4; ++k)
    for (long i = 0; i < 3; ++i) eye[k * 9 + i * 3 + i] = 1.0;
  const Tensor zero_im({4, 3, 3});
  Tape tape;
  const Var vs = tape.constant(spec);
  const Var re = tape.constant(eye), im = tape.constant(zero_im);
  const Var once = tape.mode_multiply(vs, re, im);
  const Var twice = tape.mode_multiply(once, re, im);
  const Tensor& a = tape.value(once);
  const Tensor& b = tape.value(twice);
  for (long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("band-limited linear model transfers exactly across resolutions") {
  const long k_cut = 7;
  FnoConfig cfg{2, 3, 4, 1, 10, {PadMode::None, 0}};
  RngStream init(6);
  FnoModel model(cfg, init);
  for (auto& layer : model.layers) {
    layer.byp_w.fill(0.0);
    layer.byp_b.fill(0.0);
  }

  RngStream rng(7);
  const Tensor coarse_in = band_limited(2, 50, k_cut, rng);
  // Same continuous signal sampled at 4x the rate.
  Tensor fine_in({2, 200});
  {
    RngStream rng2(7);
    const Tensor check = band_limited(2, 200, k_cut, rng2);
    fine_in = check;
  }
  const Tensor coarse_out = model.predict(coarse_in);
  const Tensor fine_out = model.predict(fine_in);
  double max_err = 0.0;
  for (long c = 0; c < 3; ++c)
    for (long j = 0; j < 50; ++j)
      max_err = std::max(max_err,
                         std::abs(coarse_out.at(c, j) - fine_out.at(c, 4 * j)));
  CHECK(max_err < 1e-10);
}

TEST_CASE("evaluating at the training resolution is plain forward") {
  FnoConfig cfg{2, 2, 4, 2, 5, {PadMode::Zero, 4}};
  RngStream init(8);
  FnoModel model(cfg, init);
  RngStream rng(9);
  const Tensor x = random_tensor({2, 12}, rng);
  const Tensor y1 = model.predict(x);
  const Tensor y2 = model.predict(x);
  for (long i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("spectral_leakage: constant signals") {
  Eigen::VectorXd u = Eigen::VectorXd::Constant(200, 0.8);
  const Eigen::VectorXd circ = spectral_leakage(u, {PadMode::Circular, 40});
  CHECK(circ(0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(circ.tail(circ.size() - 1).maxCoeff() < 1e-12);

  const Eigen::VectorXd zero = spectral_leakage(u, {PadMode::Zero, 40});
  // Rectangle spectrum: energy spread across many modes (sinc envelope).
  int nonzero_high = 0;
  for (long k = 1; k < zero.size(); ++k)
    if (zero(k) > 1e-6) ++nonzero_high;
  CHECK(nonzero_high > 50);
}

TEST_CASE("spectral_leakage: periodic input under circular padding rescales modes") {
  // 5 cycles over N=200; circular padding by 40 keeps it exactly periodic on
  // 240 samples at mode 6.
  Eigen::VectorXd u(200);
  for (int j = 0; j < 200; ++j) u(j) = std::cos(2.0 * M_PI * 5.0 * j / 200.0);
  const Eigen::VectorXd padded = spectral_leakage(u, {PadMode::Circular, 40});
  const Eigen::VectorXd plain = spectral_leakage(u, {PadMode::None, 0});
  CHECK(padded(6) == doctest::Approx(plain(5)).epsilon(1e-12));
  for (long k = 0; k < padded.size(); ++k)
    if (k != 6) CHECK(padded(k) < 1e-12);

  // Direct DFT oracle on the padded sequence.
  Eigen::VectorXd ext(240);
  ext.head(200) = u;
  ext.tail(40) = u.head(40);
  const Eigen::VectorXcd ref = oracles::naive_dft(ext) / 240.0;
  for (long k = 0; k < padded.size(); ++k)
    CHECK(padded(k) == doctest::Approx(std::abs(ref(k))).epsilon(1e-9));
}

TEST_CASE("checkpoint save/load roundtrip is bitwise") {
  FnoConfig cfg{3, 4, 6, 2, 4, {PadMode::Reflect, 2}};
  RngStream init(10);
  FnoModel model(cfg, init);
  model.input_mean = Eigen::Vector3d(0.1, -0.2, 0.3);
  model.input_std = Eigen::Vector3d(1.0, 2.0, 0.5);

  const std::string path = "/tmp/floqfno_test_ckpt.fno";
  model.save(path, {{"note", "roundtrip"}});
  const FnoModel back = FnoModel::load(path);
  CHECK(back.config().d_in == 3);
  CHECK(back.config().padding.mode == PadMode::Reflect);
  const auto pa = model.parameters();
  const auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->size() == pb[i]->size());
    for (long j = 0; j < pa[i]->size(); ++j)
      CHECK((*pa[i])[j] == (*pb[i])[j]);
  }
  CHECK(back.input_mean == model.input_mean);
  CHECK(back.input_std == model.input_std);
  CHECK(FnoModel::read_checkpoint_header(path)["meta"]["note"] == "roundtrip");
  std::remove(path.c_str());
}

TEST_CASE("segmented forward equals stacked per-sample forwards") {
  FnoConfig cfg{3, 4, 6, 2, 5, {PadMode::Zero, 4}};
  RngStream init(11);
  FnoModel model(cfg, init);
  RngStream rng(12);
  const long n = 12, batch = 3;
  std::vector<Tensor> singles;
  for (long b = 0; b < batch; ++b) singles.push_back(random_tensor({3, n}, rng));

  Tensor packed({3, batch * n});
  for (long b = 0; b < batch; ++b)
    for (long r = 0; r < 3; ++r)
      for (long j = 0; j < n; ++j)
        packed.at(r, b * n + j) = singles[static_cast<std::size_t>(b)].at(r, j);

  Tape tape;
  const auto binding = model.bind(tape);
  const Tensor& batched =
      tape.value(model.forward(tape, binding, tape.constant(packed), batch));
  for (long b = 0; b < batch; ++b) {
    const Tensor one = model.predict(singles[static_cast<std::size_t>(b)]);
    for (long r = 0; r < 4; ++r)
      for (long j = 0; j < n; ++j)
        CHECK(batched.at(r, b * n + j) ==
              doctest::Approx(one.at(r, j)).epsilon(1e-13));
  }
}
