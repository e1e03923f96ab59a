#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "floqfno/datagen.hpp"
#include "support/oracles.hpp"

using namespace floqfno;

namespace {

SamplingConfig tiny_cfg(int L, int N, int n_samples, std::uint64_t seed) {
  SamplingConfig cfg;
  cfg.L = L;
  cfg.N = N;
  cfg.n_samples = n_samples;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/floqfno_test_") + name;
}

void corrupt_byte(const std::string& path, long offset_from_end, char delta) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const long size = static_cast<long>(f.tellg());
  f.seekg(size - offset_from_end);
  char b;
  f.read(&b, 1);
  f.seekp(size - offset_from_end);
  b = static_cast<char>(b + delta);
  f.write(&b, 1);
}

}  // namespace

TEST_CASE("sample_spec: eta = 0 removes the parallel field") {
  SamplingConfig cfg = tiny_cfg(4, 16, 1, 3);
  cfg.eta = 0.0;
  const HamiltonianSpec spec = sample_spec(cfg, 0, 16);
  CHECK(spec.h_x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_spec: deterministic and independent of draw order") {
  const SamplingConfig cfg = tiny_cfg(4, 16, 10, 42);
  const HamiltonianSpec a = sample_spec(cfg, 3, 16);
  const HamiltonianSpec b = sample_spec(cfg, 3, 16);
  CHECK(a.J == b.J);
  CHECK(a.A == b.A);
  CHECK(a.h_x == b.h_x);
  // A different sample index gives different draws.
  const HamiltonianSpec c = sample_spec(cfg, 4, 16);
  CHECK(a.J != c.J);
}

TEST_CASE("sample_spec: empirical means follow the uniform laws") {
  const SamplingConfig cfg = tiny_cfg(4, 4, 10000, 7);
  double mean_j = 0.0, mean_h = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    const HamiltonianSpec spec = sample_spec(cfg, static_cast<std::uint64_t>(s), 4);
    mean_j += spec.J.mean() / n;
    mean_h += spec.h_x.mean() / n;
  }
  // sigma(U[0,1])/sqrt(4n) three-sigma band.
  CHECK(std::abs(mean_j - 0.5) < 3.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(4.0 * n));
  CHECK(std::abs(mean_h) < 3.0 * (0.2 / std::sqrt(12.0)) / std::sqrt(16.0 * n));
}

TEST_CASE("sample_product_state: Haar statistics") {
  RngStream stream(11);
  const int n = 10000;
  Eigen::Vector3d bloch_mean = Eigen::Vector3d::Zero();
  std::vector<double> z_values;
  z_values.reserve(n);
  for (int s = 0; s < n; ++s) {
    const ProductState state = sample_product_state(1, stream);
    const Eigen::Vector2cd q = state.qubits[0];
    CHECK(std::abs(q.norm() - 1.0) < 1e-12);
    const double x = 2.0 * (std::conj(q(0)) * q(1)).real();
    const double y = 2.0 * (std::conj(q(0)) * q(1)).imag();
    const double z = std::norm(q(0)) - std::norm(q(1));
    bloch_mean += Eigen::Vector3d(x, y, z) / n;
    z_values.push_back(z);
  }
  for (int i = 0; i < 3; ++i) CHECK(std::abs(bloch_mean(i)) < 4.0 / std::sqrt(n));

  // Kolmogorov-Smirnov: <Z> is uniform on [-1, 1] under the Haar measure.
  std::sort(z_values.begin(), z_values.end());
  double d_stat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = (z_values[static_cast<std::size_t>(i)] + 1.0) / 2.0;
    d_stat = std::max(d_stat, std::abs(cdf - (i + 1.0) / n));
    d_stat = std::max(d_stat, std::abs(cdf - static_cast<double>(i) / n));
  }
  CHECK(d_stat * std::sqrt(static_cast<double>(n)) < 1.36);  // alpha = 0.05
}

TEST_CASE("analytic input coefficients equal dense projection") {
  const SamplingConfig cfg = tiny_cfg(3, 12, 1, 13);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 1);
  REQUIRE(ds.size() == 1);
  const auto& rec = ds.records[0];
  HamiltonianSpec spec;
  spec.L = cfg.L;
  spec.J = rec.J;
  spec.A = rec.A;
  spec.h_x = rec.h_x;
  spec.omega = cfg.omega;
  spec.N = cfg.N;
  for (int n = 0; n < cfg.N; n += 5) {
    const auto proj =
        project(hamiltonian_at(spec, ds.input_grid.time_at(n, spec.period())),
                ds.in_basis);
    CHECK((proj.coeffs - rec.h_coeffs.col(n)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("heff dataset channel counts at L=8") {
  SamplingConfig cfg = tiny_cfg(8, 20, 2, 17);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 2);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records[0].h_coeffs.rows() == 96);    // 12 L
  CHECK(ds.records[0].hf_coeffs.rows() == 384);  // 48 L
  CHECK(ds.records[0].h_coeffs.cols() == 20);
  CHECK(ds.max_p3_residual < 0.15);
  // Table III full-scale configurations validate (not generated here).
  SamplingConfig full = tiny_cfg(8, 200, 1000, 0);
  CHECK_NOTHROW(full.validate());
  SamplingConfig growth = tiny_cfg(4, 200, 40000, 0);
  growth.n_states = 20;
  growth.n_max = 2;
  growth.n_periods = 3;
  CHECK_NOTHROW(growth.validate());
}

TEST_CASE("op_growth dataset layout and validation") {
  SamplingConfig cfg = tiny_cfg(2, 8, 2, 19);
  cfg.n_states = 2;
  cfg.n_max = 1;
  cfg.n_periods = 2;
  const Dataset ds = generate_dataset(cfg, Paradigm::OpGrowth, 1);
  REQUIRE(ds.size() == 2);
  CHECK(ds.input_grid.offset_one);
  CHECK(ds.data_grid.n_periods == 2);
  CHECK(ds.records[0].partial_traces.size() == 2);
  CHECK(ds.records[0].state_observables[0].rows() == 15);
  CHECK(ds.records[0].state_observables[0].cols() == 16);

  SamplingConfig bad = cfg;
  bad.n_states = 1;
  CHECK_THROWS_AS(generate_dataset(bad, Paradigm::OpGrowth, 1), InvalidArgument);
  bad = cfg;
  bad.n_periods = 3;
  CHECK_THROWS_AS(generate_dataset(bad, Paradigm::OpGrowth, 1), InvalidArgument);
}

TEST_CASE("generation is identical across worker counts") {
  SamplingConfig cfg = tiny_cfg(3, 10, 6, 23);
  cfg.n_periods = 2;
  const Dataset a = generate_dataset(cfg, Paradigm::HToObs, 1);
  const Dataset b = generate_dataset(cfg, Paradigm::HToObs, 2);
  REQUIRE(a.size() == b.size());
  for (int r = 0; r < a.size(); ++r) {
    CHECK(a.records[r].h_coeffs == b.records[r].h_coeffs);
    CHECK(a.records[r].observables == b.records[r].observables);
  }
}

TEST_CASE("dataset file roundtrip is bitwise") {
  SamplingConfig cfg = tiny_cfg(2, 16, 8, 29);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 2);
  const std::string path = temp_path("roundtrip.ds");
  write_dataset(ds, path);
  const Dataset back = load_dataset(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.paradigm == ds.paradigm);
  CHECK(back.config.seed == cfg.seed);
  CHECK(back.input_grid.N == 16);
  for (int r = 0; r < ds.size(); ++r) {
    CHECK(back.records[r].h_coeffs == ds.records[r].h_coeffs);
    CHECK(back.records[r].hf_coeffs == ds.records[r].hf_coeffs);
    CHECK(back.records[r].J == ds.records[r].J);
    CHECK(back.records[r].h_x == ds.records[r].h_x);
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset file error taxonomy") {
  SamplingConfig cfg = tiny_cfg(2, 8, 2, 31);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 1);
  const std::string path = temp_path("errors.ds");

  SUBCASE("truncated payload") {
    write_dataset(ds, path);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    const long size = static_cast<long>(in.tellg());
    in.close();
    std::string data(static_cast<std::size_t>(size - 16), '\0');
    std::ifstream full(path, std::ios::binary);
    full.read(data.data(), size - 16);
    full.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), size - 16);
    out.close();
    try {
      load_dataset(path);
      FAIL("expected truncation error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::Truncated);
    }
  }

  SUBCASE("checksum failure") {
    write_dataset(ds, path);
    corrupt_byte(path, 9, 1);  // inside the payload
    try {
      load_dataset(path);
      FAIL("expected checksum error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::Checksum);
    }
  }

  SUBCASE("version mismatch") {
    write_dataset(ds, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(7);
    f.write("9", 1);  // container version byte
    f.close();
    try {
      load_dataset(path);
      FAIL("expected version error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::Version);
    }
  }

  SUBCASE("alien file") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "definitely not a container";
    out.close();
    try {
      load_dataset(path);
      FAIL("expected format error");
    } catch (const IoError& e) {
      const bool reasonable =
          e.kind == IoError::Kind::Format || e.kind == IoError::Kind::Truncated;
      CHECK(reasonable);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("header-only file with zero records") {
  SamplingConfig cfg = tiny_cfg(2, 8, 0, 37);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 1);
  const std::string path = temp_path("empty.ds");
  write_dataset(ds, path);
  const Dataset back = load_dataset(path);
  CHECK(back.size() == 0);
  CHECK(back.dropped_records == 0);
  std::remove(path.c_str());
}

TEST_CASE("train/test split is disjoint by record index") {
  SamplingConfig cfg = tiny_cfg(2, 8, 20, 41);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 2);
  CHECK(ds.train_count(0.1) == 18);
  CHECK(ds.train_count(0.0) == 20);
}

TEST_CASE("lazy reader yields records identical to the full load") {
  SamplingConfig cfg = tiny_cfg(2, 8, 3, 43);
  cfg.n_periods = 2;
  const Dataset ds = generate_dataset(cfg, Paradigm::ObsToObs, 1);
  const std::string path = temp_path("lazy.ds");
  write_dataset(ds, path);
  DatasetReader reader(path);
  CHECK(reader.record_count() == 3);
  const DatasetRecord rec = reader.read_record(2);
  CHECK(rec.observables == ds.records[2].observables);
  CHECK_THROWS_AS(reader.read_record(3), InvalidArgument);
  std::remove(path.c_str());
}

TEST_CASE("subsample_time produces the coarse view of the same functions") {
  SamplingConfig cfg = tiny_cfg(2, 16, 2, 47);
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 1);
  const Dataset coarse = subsample_time(ds, 4);
  CHECK(coarse.input_grid.N == 4);
  for (int c = 0; c < 4; ++c) {
    CHECK(coarse.records[0].h_coeffs.col(c) == ds.records[0].h_coeffs.col(4 * c));
    CHECK(coarse.records[0].hf_coeffs.col(c) == ds.records[0].hf_coeffs.col(4 * c));
  }
  CHECK_THROWS_AS(subsample_time(ds, 3), InvalidArgument);
}
