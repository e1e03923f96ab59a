#include "floqfno/datagen.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "floqfno/version.hpp"

namespace floqfno {

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "heff") return Paradigm::Heff;
  if (s == "h_to_obs") return Paradigm::HToObs;
  if (s == "obs_to_obs") return Paradigm::ObsToObs;
  if (s == "op_growth") return Paradigm::OpGrowth;
  throw InvalidArgument("unknown paradigm '" + s + "'");
}

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::Heff: return "heff";
    case Paradigm::HToObs: return "h_to_obs";
    case Paradigm::ObsToObs: return "obs_to_obs";
    case Paradigm::OpGrowth: return "op_growth";
  }
  return "heff";
}

void SamplingConfig::validate() const {
  if (L < 2 || L > 10) throw InvalidArgument("config.L must be in [2, 10]");
  if (J_max < 0) throw InvalidArgument("config.J_max must be >= 0");
  if (A_max < 0) throw InvalidArgument("config.A_max must be >= 0");
  if (eta < 0) throw InvalidArgument("config.eta must be >= 0");
  if (!(omega > 0)) throw InvalidArgument("config.omega must be > 0");
  if (N < 2) throw InvalidArgument("config.N must be >= 2");
  if (n_periods < 1) throw InvalidArgument("config.n_periods must be >= 1");
  if (n_samples < 0) throw InvalidArgument("config.n_samples must be >= 0");
  if (n_states < 1) throw InvalidArgument("config.n_states must be >= 1");
  if (n_max < 0) throw InvalidArgument("config.n_max must be >= 0");
}

int field_cells(const SamplingConfig& cfg, Paradigm p) {
  return (p == Paradigm::Heff || p == Paradigm::OpGrowth)
             ? cfg.N
             : cfg.N * cfg.n_periods;
}

HamiltonianSpec sample_spec(const SamplingConfig& cfg,
                            std::uint64_t sample_index, int n_field_cells) {
  cfg.validate();
  HamiltonianSpec spec;
  spec.L = cfg.L;
  spec.omega = cfg.omega;
  spec.N = cfg.N;
  spec.J.resize(cfg.L);
  spec.A.resize(cfg.L);
  spec.h_x.resize(cfg.L, n_field_cells);

  RngStream js(cfg.seed, sample_index, static_cast<std::uint64_t>(RngPurpose::Couplings));
  RngStream as(cfg.seed, sample_index, static_cast<std::uint64_t>(RngPurpose::DriveAmplitudes));
  RngStream hs(cfg.seed, sample_index, static_cast<std::uint64_t>(RngPurpose::ParallelField));
  for (int i = 0; i < cfg.L; ++i) spec.J(i) = js.uniform(0.0, cfg.J_max);
  for (int i = 0; i < cfg.L; ++i) spec.A(i) = as.uniform(0.0, cfg.A_max);
  for (int i = 0; i < cfg.L; ++i)
    for (int n = 0; n < n_field_cells; ++n)
      spec.h_x(i, n) = cfg.eta == 0.0 ? 0.0 : hs.uniform(-cfg.eta, cfg.eta);
  return spec;
}

ProductState sample_product_state(int L, RngStream& stream) {
  ProductState state;
  state.qubits.reserve(L);
  for (int i = 0; i < L; ++i) {
    Eigen::Vector2cd q;
    q(0) = {stream.normal(), stream.normal()};
    q(1) = {stream.normal(), stream.normal()};
    q /= q.norm();
    state.qubits.push_back(q);
  }
  return state;
}

namespace {

/// vec H(t_n) in the observable basis, assembled from the known expansion
/// (identical to projecting the dense matrix, which a test asserts).
Eigen::MatrixXd analytic_h_coeffs(const HamiltonianSpec& spec,
                                  const LocalBasis& basis,
                                  const TimeGrid& grid) {
  const int L = spec.L;
  const double dt = spec.dt();
  const int n_cells = static_cast<int>(spec.h_x.cols());

  std::vector<int> x_channel(L), z_channel(L), bond_channel(L);
  for (int i = 0; i < L; ++i) {
    x_channel[i] = basis.index_of(PauliString(L, {{i, Axis::X}}));
    z_channel[i] = basis.index_of(PauliString(L, {{i, Axis::Z}}));
    const int j = (i + 1) % L;
    std::vector<std::pair<int, Axis>> sites{{std::min(i, j), Axis::X},
                                            {std::max(i, j), Axis::X}};
    bond_channel[i] = basis.index_of(PauliString(L, std::move(sites)));
  }

  Eigen::MatrixXd coeffs =
      Eigen::MatrixXd::Zero(basis.size(), grid.total_points());
  for (int n = 0; n < grid.total_points(); ++n) {
    const double t = grid.time_at(n, spec.period());
    const int cell = static_cast<int>(std::floor(t / dt + 1e-12)) % n_cells;
    const double drive = std::cos(spec.omega * t);
    for (int i = 0; i < L; ++i) {
      coeffs(bond_channel[i], n) += spec.J(i);
      coeffs(z_channel[i], n) += spec.A(i) * drive;
      coeffs(x_channel[i], n) += spec.h_x(i, cell);
    }
  }
  return coeffs;
}

struct RecordResult {
  std::optional<DatasetRecord> record;  // empty when dropped
  double p3_residual = 0.0;
};

RecordResult generate_record(const SamplingConfig& cfg, Paradigm paradigm,
                             const Dataset& ds, std::uint64_t index) {
  const HamiltonianSpec spec =
      sample_spec(cfg, index, field_cells(cfg, paradigm));
  DatasetRecord rec;
  rec.sample_index = index;
  rec.J = spec.J;
  rec.A = spec.A;
  rec.h_x = spec.h_x;
  rec.h_coeffs = analytic_h_coeffs(spec, *ds.in_basis, ds.input_grid);

  switch (paradigm) {
    case Paradigm::Heff: {
      const auto hf = floquet_trajectory(spec, ds.input_grid);
      const double dim_norm = std::pow(2.0, spec.L);
      rec.hf_coeffs.resize(ds.out_basis->size(), ds.input_grid.total_points());
      for (int n = 0; n < ds.input_grid.total_points(); ++n) {
        if (hf[n].branch_warning) return {};  // dropped
        const auto c = project(hf[n].matrix, ds.out_basis);
        rec.hf_coeffs.col(n) = c.coeffs;
        // Orthogonal projection: residual^2 = |H|_F^2 - 2^L |c|^2.
        const double total = hf[n].matrix.squaredNorm();
        const double in_span = dim_norm * c.coeffs.squaredNorm();
        const double residual =
            total > 0 ? std::sqrt(std::max(0.0, total - in_span) / total) : 0.0;
        rec.p3_residual = std::max(rec.p3_residual, residual);
      }
      break;
    }
    case Paradigm::HToObs:
    case Paradigm::ObsToObs: {
      rec.observables =
          evolve_observables(spec, ds.shared_state, ds.data_grid, ds.in_basis)
              .values;
      break;
    }
    case Paradigm::OpGrowth: {
      RngStream state_stream(cfg.seed, index,
                             static_cast<std::uint64_t>(RngPurpose::ProductState));
      for (int s = 0; s < cfg.n_states; ++s) {
        const ProductState rho = sample_product_state(cfg.L, state_stream);
        const Eigen::VectorXcd psi = rho.full_state();
        Eigen::VectorXd traces(ds.in_basis->size());
        for (int j = 0; j < ds.in_basis->size(); ++j)
          traces(j) = ds.in_basis->elements[j].expectation(psi).real();
        rec.partial_traces.push_back(std::move(traces));
        rec.state_observables.push_back(
            evolve_observables(spec, rho, ds.data_grid, ds.in_basis).values);
      }
      break;
    }
  }
  const double residual = rec.p3_residual;
  return {std::move(rec), residual};
}

}  // namespace

int Dataset::train_count(double test_fraction) const {
  const int n_test = static_cast<int>(std::floor(size() * test_fraction));
  return size() - n_test;
}

Dataset generate_dataset(const SamplingConfig& cfg, Paradigm paradigm,
                         int threads) {
  cfg.validate();
  if (paradigm == Paradigm::OpGrowth) {
    if (cfg.n_states < 2)
      throw InvalidArgument("op_growth requires n_states >= 2");
    if (cfg.n_periods != cfg.n_max + 1)
      throw InvalidArgument("op_growth requires n_periods == n_max + 1");
  }

  Dataset ds;
  ds.paradigm = paradigm;
  ds.config = cfg;
  ds.in_basis = make_observable_basis(cfg.L);
  switch (paradigm) {
    case Paradigm::Heff:
      // k = 3 except at L = 2, where the traceless 2-qubit basis is already
      // complete.
      ds.out_basis = make_k_local_basis(cfg.L, std::min(3, cfg.L));
      ds.input_grid = {cfg.N, 1, false};
      ds.data_grid = ds.input_grid;
      break;
    case Paradigm::HToObs:
    case Paradigm::ObsToObs:
      ds.out_basis = ds.in_basis;
      ds.input_grid = {cfg.N, cfg.n_periods, false};
      ds.data_grid = ds.input_grid;
      break;
    case Paradigm::OpGrowth:
      ds.out_basis = ds.in_basis;
      ds.input_grid = {cfg.N, 1, true};
      ds.data_grid = {cfg.N, cfg.n_periods, true};
      break;
  }
  if (paradigm == Paradigm::HToObs || paradigm == Paradigm::ObsToObs) {
    RngStream shared(cfg.seed, 0,
                     static_cast<std::uint64_t>(RngPurpose::SharedState));
    ds.shared_state = sample_product_state(cfg.L, shared);
  }

  std::vector<RecordResult> results(static_cast<std::size_t>(cfg.n_samples));
  const int n_workers = std::max(
      1, std::min(threads, static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < cfg.n_samples; i = next.fetch_add(1))
      results[static_cast<std::size_t>(i)] =
          generate_record(cfg, paradigm, ds, static_cast<std::uint64_t>(i));
  };
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& r : results) {
    if (!r.record.has_value()) {
      ++ds.dropped_records;
      continue;
    }
    ds.max_p3_residual = std::max(ds.max_p3_residual, r.p3_residual);
    ds.records.push_back(std::move(*r.record));
  }
  return ds;
}

namespace {

std::string record_prefix(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%06d/", i);
  return buf;
}

nlohmann::json config_json(const SamplingConfig& c) {
  return {{"L", c.L},           {"J_max", c.J_max},
          {"A_max", c.A_max},   {"eta", c.eta},
          {"omega", c.omega},   {"N", c.N},
          {"n_periods", c.n_periods}, {"n_samples", c.n_samples},
          {"n_states", c.n_states},   {"n_max", c.n_max},
          {"seed", c.seed}};
}

SamplingConfig config_from_json(const nlohmann::json& j) {
  SamplingConfig c;
  c.L = j.at("L").get<int>();
  c.J_max = j.at("J_max").get<double>();
  c.A_max = j.at("A_max").get<double>();
  c.eta = j.at("eta").get<double>();
  c.omega = j.at("omega").get<double>();
  c.N = j.at("N").get<int>();
  c.n_periods = j.at("n_periods").get<int>();
  c.n_samples = j.at("n_samples").get<int>();
  c.n_states = j.at("n_states").get<int>();
  c.n_max = j.at("n_max").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json grid_json(const TimeGrid& g) {
  return {{"N", g.N}, {"n_periods", g.n_periods}, {"offset_one", g.offset_one}};
}

TimeGrid grid_from_json(const nlohmann::json& j) {
  return {j.at("N").get<int>(), j.at("n_periods").get<int>(),
          j.at("offset_one").get<bool>()};
}

void add_matrix(ContainerWriter& w, const std::string& name,
                const Eigen::MatrixXd& m) {
  // Stored row-major (rows = channels, cols = time).
  Tensor t({m.rows(), m.cols()});
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  w.add_tensor(name, t);
}

Eigen::MatrixXd read_matrix(const ContainerReader& reader,
                            const std::string& name) {
  const Tensor t = reader.read_tensor(name);
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (long r = 0; r < t.dim(0); ++r)
    for (long c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
  return m;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json header;
  header["kind"] = "dataset";
  header["format_version"] = kDatasetFormatVersion;
  header["code_version"] = kCodeHash;
  header["paradigm"] = to_string(ds.paradigm);
  header["config"] = config_json(ds.config);
  header["input_grid"] = grid_json(ds.input_grid);
  header["data_grid"] = grid_json(ds.data_grid);
  header["in_basis"] = nlohmann::json::parse(ds.in_basis->manifest_json());
  header["out_basis"] = nlohmann::json::parse(ds.out_basis->manifest_json());
  header["out_basis_k"] = ds.out_basis->k;
  header["n_records"] = ds.size();
  header["dropped_records"] = ds.dropped_records;
  header["max_p3_residual"] = ds.max_p3_residual;
  header["default_test_fraction"] = 0.1;

  ContainerWriter writer(path, header);
  if (ds.paradigm == Paradigm::HToObs || ds.paradigm == Paradigm::ObsToObs) {
    Tensor state({ds.config.L, 4});
    for (int i = 0; i < ds.config.L; ++i) {
      state.at(i, 0) = ds.shared_state.qubits[i](0).real();
      state.at(i, 1) = ds.shared_state.qubits[i](0).imag();
      state.at(i, 2) = ds.shared_state.qubits[i](1).real();
      state.at(i, 3) = ds.shared_state.qubits[i](1).imag();
    }
    writer.add_tensor("shared_state", state);
  }
  for (int i = 0; i < ds.size(); ++i) {
    const DatasetRecord& r = ds.records[static_cast<std::size_t>(i)];
    const std::string p = record_prefix(i);
    Tensor idx({1}, {static_cast<double>(r.sample_index)});
    writer.add_tensor(p + "index", idx);
    writer.add_tensor(p + "J", {r.J.size()}, r.J.data());
    writer.add_tensor(p + "A", {r.A.size()}, r.A.data());
    add_matrix(writer, p + "hx", r.h_x);
    add_matrix(writer, p + "h", r.h_coeffs);
    if (r.hf_coeffs.size() > 0) add_matrix(writer, p + "hf", r.hf_coeffs);
    if (r.observables.size() > 0) add_matrix(writer, p + "obs", r.observables);
    for (std::size_t s = 0; s < r.partial_traces.size(); ++s) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "s%03zu", s);
      writer.add_tensor(p + "rho_b_" + suffix,
                        {r.partial_traces[s].size()},
                        r.partial_traces[s].data());
      add_matrix(writer, p + "obs_" + suffix, r.state_observables[s]);
    }
    Tensor res({1}, {r.p3_residual});
    writer.add_tensor(p + "p3_residual", res);
  }
  writer.close();
}

DatasetReader::DatasetReader(const std::string& path)
    : reader_(ContainerReader::open(path)) {
  const auto& header = reader_.header();
  if (header.value("kind", "") != "dataset")
    throw IoError(IoError::Kind::Format, path + ": not a dataset file");
  if (header.value("format_version", -1) != kDatasetFormatVersion)
    throw IoError(IoError::Kind::Version,
                  path + ": unsupported dataset format version " +
                      std::to_string(header.value("format_version", -1)));
  paradigm_ = paradigm_from_string(header.at("paradigm").get<std::string>());
  n_records_ = header.at("n_records").get<int>();
}

Dataset DatasetReader::metadata() const {
  const auto& header = reader_.header();
  Dataset ds;
  ds.paradigm = paradigm_;
  ds.config = config_from_json(header.at("config"));
  ds.input_grid = grid_from_json(header.at("input_grid"));
  ds.data_grid = grid_from_json(header.at("data_grid"));
  ds.in_basis = make_observable_basis(ds.config.L);
  ds.out_basis = paradigm_ == Paradigm::Heff
                     ? make_k_local_basis(ds.config.L, header.value("out_basis_k", 3))
                     : ds.in_basis;
  ds.dropped_records = header.at("dropped_records").get<int>();
  ds.max_p3_residual = header.at("max_p3_residual").get<double>();
  if (reader_.has_tensor("shared_state")) {
    const Tensor state = reader_.read_tensor("shared_state");
    ds.shared_state.qubits.resize(static_cast<std::size_t>(ds.config.L));
    for (int i = 0; i < ds.config.L; ++i)
      ds.shared_state.qubits[static_cast<std::size_t>(i)] = Eigen::Vector2cd(
          std::complex<double>(state.at(i, 0), state.at(i, 1)),
          std::complex<double>(state.at(i, 2), state.at(i, 3)));
  }
  return ds;
}

DatasetRecord DatasetReader::read_record(int i) const {
  if (i < 0 || i >= n_records_)
    throw InvalidArgument("DatasetReader: record index out of range");
  const std::string p = record_prefix(i);
  DatasetRecord r;
  r.sample_index =
      static_cast<std::uint64_t>(reader_.read_tensor(p + "index")[0]);
  {
    const Tensor j = reader_.read_tensor(p + "J");
    const Tensor a = reader_.read_tensor(p + "A");
    r.J = Eigen::Map<const Eigen::VectorXd>(j.data(), j.size());
    r.A = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
  }
  r.h_x = read_matrix(reader_, p + "hx");
  r.h_coeffs = read_matrix(reader_, p + "h");
  if (reader_.has_tensor(p + "hf")) r.hf_coeffs = read_matrix(reader_, p + "hf");
  if (reader_.has_tensor(p + "obs"))
    r.observables = read_matrix(reader_, p + "obs");
  for (int s = 0;; ++s) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "s%03d", s);
    if (!reader_.has_tensor(p + "rho_b_" + suffix)) break;
    const Tensor traces = reader_.read_tensor(p + "rho_b_" + suffix);
    r.partial_traces.emplace_back(
        Eigen::Map<const Eigen::VectorXd>(traces.data(), traces.size()));
    r.state_observables.push_back(read_matrix(reader_, p + "obs_" + suffix));
  }
  r.p3_residual = reader_.read_tensor(p + "p3_residual")[0];
  return r;
}

Dataset load_dataset(const std::string& path) {
  DatasetReader reader(path);
  Dataset ds = reader.metadata();
  ds.records.reserve(static_cast<std::size_t>(reader.record_count()));
  for (int i = 0; i < reader.record_count(); ++i)
    ds.records.push_back(reader.read_record(i));
  return ds;
}

namespace {

Eigen::MatrixXd every_nth_col(const Eigen::MatrixXd& m, int factor) {
  Eigen::MatrixXd out(m.rows(), m.cols() / factor);
  for (long c = 0; c < out.cols(); ++c) out.col(c) = m.col(c * factor);
  return out;
}

}  // namespace

Dataset subsample_time(const Dataset& ds, int factor) {
  if (factor < 1 || ds.input_grid.N % factor != 0)
    throw InvalidArgument("subsample_time: factor must divide N");
  if (ds.paradigm == Paradigm::OpGrowth)
    throw InvalidArgument("subsample_time: not defined for op_growth data");
  Dataset out = ds;
  out.input_grid.N /= factor;
  out.data_grid.N /= factor;
  for (auto& rec : out.records) {
    rec.h_coeffs = every_nth_col(rec.h_coeffs, factor);
    if (rec.hf_coeffs.size() > 0)
      rec.hf_coeffs = every_nth_col(rec.hf_coeffs, factor);
    if (rec.observables.size() > 0)
      rec.observables = every_nth_col(rec.observables, factor);
  }
  return out;
}

}  // namespace floqfno
