// Command-line front end: data generation, training, evaluation, the
// learnability sweep, the exact-vs-FNO benchmark, and figure-data export.
//
// Exit codes: 0 ok, 2 invalid config (field-level message on stderr),
// 3 I/O failure, 4 version/manifest mismatch, 5 missing checkpoint.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "floqfno/datagen.hpp"
#include "floqfno/evaluation.hpp"
#include "floqfno/io.hpp"
#include "floqfno/training.hpp"
#include "floqfno/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace floqfno;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitVersion = 4;
constexpr int kExitMissingCheckpoint = 5;

struct CliError {
  int code;
  std::string message;
};

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw CliError{kExitConfig,
                     "config: unknown field '" + section + "." + key + "'"};
  }
}

template <typename T>
T field(const json& obj, const std::string& section, const char* key,
        T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw CliError{kExitConfig, "config: field '" + section + "." + key +
                                    "' has the wrong type"};
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{kExitIo, "cannot open config file " + path};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CliError{kExitConfig, std::string("config: parse error: ") + e.what()};
  }
}

SamplingConfig parse_task(const json& root) {
  const json task = root.value("task", json::object());
  check_keys(task, "task",
             {"paradigm", "L", "J_max", "A_max", "eta", "omega", "N",
              "n_periods", "n_samples", "n_states", "n_max", "seed"});
  SamplingConfig cfg;
  cfg.L = field(task, "task", "L", 4);
  cfg.J_max = field(task, "task", "J_max", 1.0);
  cfg.A_max = field(task, "task", "A_max", 0.5);
  cfg.eta = field(task, "task", "eta", 0.1);
  cfg.omega = field(task, "task", "omega", 20.0);
  cfg.N = field(task, "task", "N", 200);
  cfg.n_periods = field(task, "task", "n_periods", 1);
  cfg.n_samples = field(task, "task", "n_samples", 0);
  cfg.n_states = field(task, "task", "n_states", 1);
  cfg.n_max = field(task, "task", "n_max", 0);
  cfg.seed = field(task, "task", "seed", std::uint64_t{0});
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw CliError{kExitConfig, std::string("config: task: ") + e.what()};
  }
  return cfg;
}

Paradigm parse_paradigm(const json& root, const std::string& override_flag) {
  std::string name = override_flag;
  if (name.empty())
    name = root.value("task", json::object()).value("paradigm", "heff");
  try {
    return paradigm_from_string(name);
  } catch (const InvalidArgument& e) {
    throw CliError{kExitConfig, std::string("config: ") + e.what()};
  }
}

TrainingConfig parse_training(const json& root, Paradigm paradigm,
                              const SamplingConfig& task) {
  const json model = root.value("model", json::object());
  check_keys(model, "model", {"width", "layers", "k_max", "padding", "n_padding"});
  const json tr = root.value("train", json::object());
  check_keys(tr, "train",
             {"batch", "epochs", "lr", "weight_decay", "gamma", "n_decay",
              "k_inputs", "seed", "threads", "normalize", "eval_every",
              "test_fraction"});
  TrainingConfig cfg;
  cfg.paradigm = paradigm;
  cfg.width = field(model, "model", "width", 128L);
  cfg.layers = field(model, "model", "layers", 3L);
  cfg.k_max = field(model, "model", "k_max", 32L);
  try {
    cfg.padding.mode =
        pad_mode_from_string(field<std::string>(model, "model", "padding", "none"));
  } catch (const InvalidArgument& e) {
    throw CliError{kExitConfig, std::string("config: model.padding: ") + e.what()};
  }
  cfg.padding.n = field(model, "model", "n_padding", 0L);
  cfg.batch = field(tr, "train", "batch", 32L);
  cfg.epochs = field(tr, "train", "epochs", 100L);
  cfg.lr = field(tr, "train", "lr", 1e-3);
  cfg.weight_decay = field(tr, "train", "weight_decay", 1e-6);
  cfg.gamma = field(tr, "train", "gamma", 0.8);
  cfg.n_decay = field(tr, "train", "n_decay", 500L);
  cfg.k_inputs = field(tr, "train", "k_inputs", 0);
  cfg.seed = field(tr, "train", "seed", std::uint64_t{13});
  cfg.threads = field(tr, "train", "threads", 0);
  cfg.normalize = field(tr, "train", "normalize", true);
  cfg.eval_every = field(tr, "train", "eval_every", 10L);
  cfg.test_fraction = field(tr, "train", "test_fraction", 0.1);
  cfg.n_max = task.n_max;
  if (cfg.threads <= 0)
    cfg.threads = static_cast<int>(std::thread::hardware_concurrency());
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw CliError{kExitConfig, std::string("config: train: ") + e.what()};
  }
  return cfg;
}

json dump_config(const SamplingConfig& t, Paradigm p, const TrainingConfig& c) {
  return json{
      {"task",
       {{"paradigm", to_string(p)},
        {"L", t.L},
        {"J_max", t.J_max},
        {"A_max", t.A_max},
        {"eta", t.eta},
        {"omega", t.omega},
        {"N", t.N},
        {"n_periods", t.n_periods},
        {"n_samples", t.n_samples},
        {"n_states", t.n_states},
        {"n_max", t.n_max},
        {"seed", t.seed}}},
      {"model",
       {{"width", c.width},
        {"layers", c.layers},
        {"k_max", c.k_max},
        {"padding", to_string(c.padding.mode)},
        {"n_padding", c.padding.n}}},
      {"train",
       {{"batch", c.batch},
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"weight_decay", c.weight_decay},
        {"gamma", c.gamma},
        {"n_decay", c.n_decay},
        {"k_inputs", c.k_inputs},
        {"seed", c.seed},
        {"threads", c.threads},
        {"normalize", c.normalize},
        {"eval_every", c.eval_every},
        {"test_fraction", c.test_fraction}}}};
}

std::string resolve_out(const std::string& out) {
  if (out.find('/') == std::string::npos) {
    if (const char* dir = std::getenv("FLOQFNO_OUT_DIR")) {
      fs::create_directories(dir);
      return std::string(dir) + "/" + out;
    }
  }
  return out;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct ManifestScope {
  json manifest;
  std::string path;

  ManifestScope(const std::string& subcommand, const std::string& out_path,
                json config) {
    manifest["subcommand"] = subcommand;
    manifest["config"] = std::move(config);
    manifest["outputs"] = json::array({out_path});
    manifest["inputs"] = json::array();
    manifest["started_at"] = timestamp();
    manifest["code_version"] = kCodeHash;
    manifest["tool_version"] = kVersion;
    path = out_path + ".manifest.json";
  }
  void input(const std::string& p) { manifest["inputs"].push_back(p); }
  void finish() {
    manifest["finished_at"] = timestamp();
    write_file_atomic(path, manifest.dump(2) + "\n");
  }
};

FnoModel load_model_or_die(const std::string& path) {
  if (!fs::exists(path))
    throw CliError{kExitMissingCheckpoint, "checkpoint not found: " + path};
  try {
    return FnoModel::load(path);
  } catch (const IoError& e) {
    throw CliError{e.kind == IoError::Kind::Version ? kExitVersion : kExitIo,
                   e.what()};
  }
}

Dataset load_dataset_or_die(const std::string& path) {
  if (!fs::exists(path)) throw CliError{kExitIo, "dataset not found: " + path};
  try {
    return load_dataset(path);
  } catch (const IoError& e) {
    throw CliError{e.kind == IoError::Kind::Version ? kExitVersion : kExitIo,
                   e.what()};
  }
}

void write_text_or_die(const std::string& path, const std::string& body) {
  try {
    write_file_atomic(path, body);
  } catch (const IoError& e) {
    throw CliError{kExitIo, e.what()};
  }
}

json series(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd series_from(const json& arr) {
  Eigen::VectorXd v(static_cast<long>(arr.size()));
  for (long i = 0; i < v.size(); ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

Tensor matrix_tensor(const Eigen::MatrixXd& m) {
  Tensor t({m.rows(), m.cols()});
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const std::string& config_path, const std::string& paradigm_flag,
                 const std::string& out_flag, int threads, bool print_config) {
  const json root = load_config(config_path);
  const SamplingConfig cfg = parse_task(root);
  const Paradigm paradigm = parse_paradigm(root, paradigm_flag);
  if (print_config) {
    std::cout << dump_config(cfg, paradigm, parse_training(root, paradigm, cfg))
                     .dump(2)
              << std::endl;
    return 0;
  }
  const std::string out = resolve_out(out_flag);
  ManifestScope manifest("gen-data", out, dump_config(cfg, paradigm,
                                                      parse_training(root, paradigm, cfg)));
  manifest.input(config_path);

  Dataset ds;
  try {
    ds = generate_dataset(cfg, paradigm, threads);
  } catch (const InvalidArgument& e) {
    throw CliError{kExitConfig, std::string("config: ") + e.what()};
  }
  try {
    write_dataset(ds, out);
  } catch (const IoError& e) {
    throw CliError{kExitIo, e.what()};
  }
  manifest.finish();

  json summary = {{"records", ds.size()},
                  {"dropped_records", ds.dropped_records},
                  {"max_p3_residual", ds.max_p3_residual},
                  {"paradigm", to_string(ds.paradigm)},
                  {"path", out}};
  std::cout << summary.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_flag, const std::string& log_path,
              bool print_config) {
  const json root = load_config(config_path);
  const SamplingConfig task = parse_task(root);
  const Paradigm paradigm = parse_paradigm(root, "");
  TrainingConfig cfg = parse_training(root, paradigm, task);
  if (print_config) {
    std::cout << dump_config(task, paradigm, cfg).dump(2) << std::endl;
    return 0;
  }
  const Dataset ds = load_dataset_or_die(data_path);
  if (ds.paradigm != paradigm)
    throw CliError{kExitConfig, "config paradigm " + to_string(paradigm) +
                                    " does not match dataset paradigm " +
                                    to_string(ds.paradigm)};
  const std::string out = resolve_out(out_flag);
  ManifestScope manifest("train", out, dump_config(task, paradigm, cfg));
  manifest.input(data_path);

  TrainResult result = train(cfg, ds, log_path);
  json meta = {{"paradigm", to_string(paradigm)},
               {"best_epoch", result.best_epoch},
               {"best_test_loss", result.best_test_loss},
               {"dataset", data_path},
               {"L", ds.config.L},
               {"grid_N", ds.input_grid.N},
               {"grid_periods", ds.input_grid.n_periods},
               {"n_max", cfg.n_max},
               {"train_config", dump_config(task, paradigm, cfg)["train"]}};
  if (result.partition) {
    meta["partition_in"] = result.partition->in_indices;
    meta["partition_out"] = result.partition->out_indices;
  }
  try {
    result.model.save(out, meta);
  } catch (const IoError& e) {
    throw CliError{kExitIo, e.what()};
  }
  manifest.finish();

  json summary = {{"best_epoch", result.best_epoch},
                  {"best_test_loss", result.best_test_loss},
                  {"final_train_loss", result.log.back().train_loss},
                  {"epochs", cfg.epochs},
                  {"path", out}};
  std::cout << summary.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// eval

void require_matching_channels(const FnoModel& model, long d_in,
                               const std::string& model_path,
                               const std::string& data_desc) {
  if (model.config().d_in != d_in) {
    std::cerr << "model manifest: "
              << FnoModel::read_checkpoint_header(model_path).dump(2) << "\n"
              << "data manifest: " << data_desc << "\n";
    throw CliError{kExitVersion,
                   "model d_in=" + std::to_string(model.config().d_in) +
                       " does not match dataset channel count " +
                       std::to_string(d_in)};
  }
}

int cmd_eval(const std::string& model_path, const std::string& coarse_path,
             const std::string& data_path, const std::string& report_path,
             const std::string& config_path, int trotter_n, int mag_periods) {
  const FnoModel model = load_model_or_die(model_path);
  const Dataset ds = load_dataset_or_die(data_path);
  const json header = FnoModel::read_checkpoint_header(model_path);
  const std::string paradigm_name =
      header.value("meta", json::object()).value("paradigm", "heff");
  const Paradigm paradigm = paradigm_from_string(paradigm_name);

  json report;
  report["model"] = model_path;
  report["dataset"] = data_path;
  report["paradigm"] = paradigm_name;
  report["code_version"] = kCodeHash;
  report["metric_note"] =
      "relative errors are time-averaged relative L2/Frobenius errors";

  const std::string out = resolve_out(report_path);
  ManifestScope manifest("eval", out, json{{"model", model_path}});
  manifest.input(model_path);
  manifest.input(data_path);

  switch (paradigm) {
    case Paradigm::Heff: {
      require_matching_channels(model, ds.in_basis->size(), model_path,
                                "heff dataset d_in=" +
                                    std::to_string(ds.in_basis->size()));
      const int n_train = ds.train_count();
      if (n_train >= ds.size())
        throw CliError{kExitConfig, "dataset has no test split"};
      report["mean_rel_frobenius_error"] = heff_test_error(model, ds);

      // Per-time error curves on the first held-out record (figure 2a).
      const auto& rec = ds.records[static_cast<std::size_t>(n_train)];
      const Tensor pred = model.predict(matrix_tensor(rec.h_coeffs));
      Eigen::MatrixXd pred_m(pred.dim(0), pred.dim(1));
      for (long r = 0; r < pred.dim(0); ++r)
        for (long c = 0; c < pred.dim(1); ++c) pred_m(r, c) = pred.at(r, c);
      report["fig2a"] = {{"t_index", json::array()},
                         {"fno", series(rel_frobenius_error(
                                    pred_m, rec.hf_coeffs, ds.out_basis))}};
      for (long t = 0; t < rec.hf_coeffs.cols(); ++t)
        report["fig2a"]["t_index"].push_back(t);

      if (!coarse_path.empty()) {
        const FnoModel coarse = load_model_or_die(coarse_path);
        const Tensor cpred = coarse.predict(matrix_tensor(rec.h_coeffs));
        Eigen::MatrixXd cpred_m(cpred.dim(0), cpred.dim(1));
        for (long r = 0; r < cpred.dim(0); ++r)
          for (long c = 0; c < cpred.dim(1); ++c) cpred_m(r, c) = cpred.at(r, c);
        report["fig2a"]["fno_coarse"] =
            series(rel_frobenius_error(cpred_m, rec.hf_coeffs, ds.out_basis));
        report["mean_rel_frobenius_error_coarse"] = heff_test_error(coarse, ds);
      }

      HamiltonianSpec spec;
      spec.L = ds.config.L;
      spec.J = rec.J;
      spec.A = rec.A;
      spec.h_x = rec.h_x;
      spec.omega = ds.config.omega;
      spec.N = ds.config.N;
      if (trotter_n > 0) {
        json trot = json::array();
        const BasisPtr p3 = ds.out_basis;
        for (long t = 0; t < rec.hf_coeffs.cols(); ++t) {
          const double t0 = ds.input_grid.time_at(static_cast<int>(t), spec.period());
          const Eigen::MatrixXcd hf_c = coarse_floquet(spec, trotter_n, t0);
          HermitianCoefficients exact{p3, rec.hf_coeffs.col(t)};
          const Eigen::MatrixXcd hf_e = reconstruct(exact);
          trot.push_back((hf_c - hf_e).norm() / hf_e.norm());
        }
        report["fig2a"]["trotter_coarse"] = trot;
        report["fig2a"]["trotter_n"] = trotter_n;
      }

      if (mag_periods > 0) {
        const Eigen::MatrixXcd hf_exact =
            reconstruct({ds.out_basis, rec.hf_coeffs.col(0)});
        const Eigen::MatrixXcd hf_fno = reconstruct({ds.out_basis, pred_m.col(0)});
        const Eigen::MatrixXcd hf_magnus = magnus(spec, 1);
        const ProductState up = ProductState::all_up(ds.config.L);
        const double T = spec.period();
        report["fig2b"] = {
            {"exact", series(stroboscopic_magnetization(hf_exact, up, T, mag_periods))},
            {"fno", series(stroboscopic_magnetization(hf_fno, up, T, mag_periods))},
            {"magnus", series(stroboscopic_magnetization(hf_magnus, up, T, mag_periods))}};
        if (!coarse_path.empty()) {
          const FnoModel coarse = load_model_or_die(coarse_path);
          const Tensor cpred = coarse.predict(matrix_tensor(rec.h_coeffs));
          Eigen::VectorXd col0(cpred.dim(0));
          for (long r = 0; r < cpred.dim(0); ++r) col0(r) = cpred.at(r, 0);
          const Eigen::MatrixXcd hf_c50 = reconstruct({ds.out_basis, col0});
          report["fig2b"]["fno_coarse"] =
              series(stroboscopic_magnetization(hf_c50, up, T, mag_periods));
        }
      }

      if (!config_path.empty()) {
        const json root = load_config(config_path);
        const json ev = root.value("eval", json::object());
        check_keys(ev, "eval",
                   {"omega_primes", "n_periods", "n_eval_periods",
                    "n_unseen_states", "sample_index"});
        const auto omegas = field(ev, "eval", "omega_primes", std::vector<double>{});
        const int n_periods = field(ev, "eval", "n_periods", 200);
        if (!omegas.empty()) {
          json fig3 = json::array();
          for (double op : omegas) {
            const auto ft = frequency_transfer(
                model, ds.config, op, n_periods,
                static_cast<std::uint64_t>(ds.config.n_samples) + 101);
            fig3.push_back({{"omega_prime", op},
                            {"low_frequency_flag", ft.low_frequency_flag},
                            {"mean_abs_deviation", ft.mean_abs_deviation},
                            {"hf_rel_error_t0", ft.hf_rel_error_t0},
                            {"magnetization_exact", series(ft.magnetization_exact)},
                            {"magnetization_fno", series(ft.magnetization_fno)}});
          }
          report["fig3"] = fig3;
        }
      }
      break;
    }
    case Paradigm::HToObs:
    case Paradigm::ObsToObs: {
      const int n_train = ds.train_count();
      if (n_train >= ds.size())
        throw CliError{kExitConfig, "dataset has no test split"};
      Partition partition;
      if (paradigm == Paradigm::ObsToObs) {
        const json meta = header.value("meta", json::object());
        if (!meta.contains("partition_in"))
          throw CliError{kExitVersion,
                         "obs_to_obs checkpoint lacks a partition"};
        partition.in_indices = meta.at("partition_in").get<std::vector<int>>();
        partition.out_indices = meta.at("partition_out").get<std::vector<int>>();
        require_matching_channels(model, static_cast<long>(partition.in_indices.size()),
                                  model_path,
                                  "obs_to_obs partition k=" +
                                      std::to_string(partition.in_indices.size()));
        report["relative_test_error"] =
            relative_test_error(model, ds, partition);
      } else {
        require_matching_channels(model, ds.in_basis->size(), model_path,
                                  "observable dataset m=" +
                                      std::to_string(ds.in_basis->size()));
      }
      Eigen::VectorXd rmse_acc;
      int count = 0;
      for (int r = n_train; r < ds.size(); ++r) {
        const auto& rec = ds.records[static_cast<std::size_t>(r)];
        Eigen::MatrixXd in, truth;
        if (paradigm == Paradigm::HToObs) {
          in = rec.h_coeffs;
          truth = rec.observables;
        } else {
          in.resize(static_cast<long>(partition.in_indices.size()),
                    rec.observables.cols());
          truth.resize(static_cast<long>(partition.out_indices.size()),
                       rec.observables.cols());
          for (std::size_t i = 0; i < partition.in_indices.size(); ++i)
            in.row(static_cast<long>(i)) = rec.observables.row(partition.in_indices[i]);
          for (std::size_t i = 0; i < partition.out_indices.size(); ++i)
            truth.row(static_cast<long>(i)) =
                rec.observables.row(partition.out_indices[i]);
        }
        const Tensor pred = model.predict(matrix_tensor(in));
        Eigen::MatrixXd pred_m(pred.dim(0), pred.dim(1));
        for (long rr = 0; rr < pred.dim(0); ++rr)
          for (long cc = 0; cc < pred.dim(1); ++cc) pred_m(rr, cc) = pred.at(rr, cc);
        const Eigen::VectorXd rmse = rmse_over_observables(pred_m, truth);
        if (count == 0)
          rmse_acc = rmse;
        else
          rmse_acc += rmse;
        ++count;
      }
      rmse_acc /= std::max(1, count);
      report["rmse_per_time"] = series(rmse_acc);
      report["rmse_time_avg"] = rmse_acc.mean();
      break;
    }
    case Paradigm::OpGrowth: {
      require_matching_channels(model, ds.in_basis->size(), model_path,
                                "op_growth dataset m=" +
                                    std::to_string(ds.in_basis->size()));
      int n_eval_periods = ds.config.n_max + 2;
      int n_unseen_states = 4;
      if (!config_path.empty()) {
        const json ev = load_config(config_path).value("eval", json::object());
        n_eval_periods = field(ev, "eval", "n_eval_periods", n_eval_periods);
        n_unseen_states = field(ev, "eval", "n_unseen_states", n_unseen_states);
      }
      const auto rep = opgrowth_eval(
          model, ds.config,
          static_cast<std::uint64_t>(ds.config.n_samples) + 211, n_eval_periods,
          n_unseen_states);
      report["obs_rmse_time_avg"] = rep.obs_rmse_time_avg;
      report["rmse_per_time"] = series(rep.rmse_per_time);
      report["autocorr_index"] = rep.autocorr_index;
      report["fig5b"] = {{"t", series(rep.autocorr_times)},
                         {"exact", series(rep.autocorr_exact)},
                         {"fno", series(rep.autocorr_pred)}};
      report["fig5c"] = {{"one_local", series(rep.col_err_one_local)},
                         {"two_local", series(rep.col_err_two_local)}};
      report["n_eval_periods"] = n_eval_periods;
      report["n_unseen_states"] = n_unseen_states;
      break;
    }
  }

  write_text_or_die(out, report.dump(2) + "\n");
  manifest.finish();
  std::cout << json{{"report", out}}.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-learnability

int cmd_sweep(const std::string& config_path, const std::string& data_path,
              const std::string& out_flag, const std::string& log_dir) {
  const json root = load_config(config_path);
  const SamplingConfig task = parse_task(root);
  TrainingConfig cfg =
      parse_training(root, Paradigm::ObsToObs, task);
  cfg.paradigm = Paradigm::ObsToObs;
  if (cfg.k_inputs == 0) cfg.k_inputs = 1;  // per-k override below
  const json sw = root.value("sweep", json::object());
  check_keys(sw, "sweep", {"ks", "repeats"});
  const auto ks = field(sw, "sweep", "ks", std::vector<int>{3, 7});
  const int repeats = field(sw, "sweep", "repeats", 8);

  const Dataset ds = load_dataset_or_die(data_path);
  if (ds.paradigm != Paradigm::ObsToObs)
    throw CliError{kExitConfig, "sweep requires an obs_to_obs dataset"};
  if (!log_dir.empty()) fs::create_directories(log_dir);

  const std::string out = resolve_out(out_flag);
  ManifestScope manifest("sweep-learnability", out,
                         dump_config(task, Paradigm::ObsToObs, cfg));
  manifest.input(data_path);

  const auto points = learnability_sweep(cfg, ds, ks, repeats, log_dir);
  json result = json::array();
  for (const auto& p : points) {
    json errors = json::array();
    for (double e : p.errors) errors.push_back(e);
    result.push_back({{"k", p.k}, {"mean_error", p.mean_error}, {"errors", errors}});
  }
  json report = {{"sweep", result},
                 {"repeats", repeats},
                 {"L", ds.config.L},
                 {"code_version", kCodeHash}};
  write_text_or_die(out, report.dump(2) + "\n");
  manifest.finish();
  std::cout << json{{"report", out}}.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark

int cmd_benchmark(const std::string& models_dir, const std::string& config_path,
                  const std::string& out_flag, int repeats) {
  const json root =
      config_path.empty() ? json::object() : load_config(config_path);
  SamplingConfig base = parse_task(root);
  const json bench = root.value("benchmark", json::object());
  check_keys(bench, "benchmark", {"repeats"});
  if (repeats <= 0) repeats = field(bench, "benchmark", "repeats", 100);

  std::vector<BenchmarkRow> rows;
  const std::vector<std::pair<std::string, Paradigm>> tasks = {
      {"heff", Paradigm::Heff},
      {"h_to_obs", Paradigm::HToObs},
      {"obs_to_obs", Paradigm::ObsToObs},
      {"op_growth", Paradigm::OpGrowth}};
  for (const auto& [name, paradigm] : tasks) {
    for (int L : {4, 8}) {
      const std::string path =
          models_dir + "/" + name + "_L" + std::to_string(L) + ".fno";
      if (!fs::exists(path)) {
        std::cerr << "note: skipping " << name << " L=" << L
                  << " (no checkpoint at " << path << ")\n";
        continue;
      }
      const FnoModel model = load_model_or_die(path);
      SamplingConfig cfg = base;
      cfg.L = L;
      const json meta =
          FnoModel::read_checkpoint_header(path).value("meta", json::object());
      cfg.N = meta.value("grid_N", cfg.N);
      cfg.n_periods = meta.value("grid_periods", 1);
      cfg.n_max = meta.value("n_max", 0);
      if (paradigm == Paradigm::OpGrowth) {
        cfg.n_periods = cfg.n_max + 1;
        cfg.n_states = 2;
      }
      rows.push_back(benchmark_task(paradigm, model, cfg, repeats));
    }
  }

  const std::string out = resolve_out(out_flag);
  ManifestScope manifest("benchmark", out, json{{"models_dir", models_dir}});
  write_text_or_die(out, benchmark_csv(rows));
  manifest.finish();
  std::cout << benchmark_csv(rows);
  return 0;
}

// ---------------------------------------------------------------------------
// export-plot

int cmd_export_plot(const std::string& report_path, const std::string& data_path,
                    const std::string& figure, const std::string& out_flag) {
  const std::string out = resolve_out(out_flag);
  std::ostringstream csv;

  if (figure == "7") {
    // Padding study straight from a dataset trajectory.
    if (data_path.empty())
      throw CliError{kExitConfig, "--figure 7 requires --data"};
    const Dataset ds = load_dataset_or_die(data_path);
    if (ds.records.empty() || ds.records[0].observables.size() == 0)
      throw CliError{kExitConfig, "--figure 7 requires an observable dataset"};
    const int channel =
        ds.in_basis->index_of(PauliString(ds.config.L, {{2 % ds.config.L, Axis::Z}}));
    const Eigen::VectorXd traj = ds.records[0].observables.row(channel);
    csv << "mode,policy,magnitude\n";
    for (const PadMode mode :
         {PadMode::Zero, PadMode::Reflect, PadMode::Circular}) {
      const Eigen::VectorXd mags = spectral_leakage(traj, {mode, 40});
      for (long k = 0; k < mags.size(); ++k)
        csv << k << ',' << to_string(mode) << ',' << mags(k) << '\n';
    }
    write_text_or_die(out, csv.str());
    std::cout << json{{"csv", out}}.dump() << std::endl;
    return 0;
  }

  if (report_path.empty())
    throw CliError{kExitConfig, "--figure " + figure + " requires --report"};
  std::ifstream in(report_path);
  if (!in) throw CliError{kExitIo, "cannot open report " + report_path};
  json report;
  try {
    report = json::parse(in);
  } catch (const json::exception& e) {
    throw CliError{kExitIo, std::string("report parse error: ") + e.what()};
  }

  auto need = [&](const char* key) -> const json& {
    if (!report.contains(key))
      throw CliError{kExitConfig, "report lacks '" + std::string(key) +
                                      "' (wrong eval type for figure " +
                                      figure + ")"};
    return report.at(key);
  };

  if (figure == "2a") {
    const json& fig = need("fig2a");
    csv << "t_index,method,rel_frobenius_error\n";
    auto emit = [&](const char* method, const json& arr) {
      for (std::size_t i = 0; i < arr.size(); ++i)
        csv << i << ',' << method << ',' << arr[i].get<double>() << '\n';
    };
    emit("fno", fig.at("fno"));
    if (fig.contains("fno_coarse")) emit("fno_coarse", fig.at("fno_coarse"));
    if (fig.contains("trotter_coarse")) emit("trotter_coarse", fig.at("trotter_coarse"));
  } else if (figure == "2b" || figure == "2c") {
    const json& fig = need("fig2b");
    csv << "n_period,method,magnetization\n";
    for (const auto& [method, arr] : fig.items())
      for (std::size_t i = 0; i < arr.size(); ++i)
        csv << i << ',' << method << ',' << arr[i].get<double>() << '\n';
  } else if (figure == "3") {
    const json& fig = need("fig3");
    csv << "omega_prime,n_period,method,magnetization\n";
    for (const auto& entry : fig) {
      const double op = entry.at("omega_prime").get<double>();
      const json& me = entry.at("magnetization_exact");
      const json& mf = entry.at("magnetization_fno");
      for (std::size_t i = 0; i < me.size(); ++i) {
        csv << op << ',' << i << ",exact," << me[i].get<double>() << '\n';
        csv << op << ',' << i << ",fno," << mf[i].get<double>() << '\n';
      }
    }
  } else if (figure == "4") {
    const json& sweep = need("sweep");
    csv << "k,repeat,final_rel_test_error\n";
    for (const auto& point : sweep) {
      const json& errors = point.at("errors");
      for (std::size_t r = 0; r < errors.size(); ++r)
        csv << point.at("k").get<int>() << ',' << r << ','
            << errors[r].get<double>() << '\n';
    }
  } else if (figure == "5a") {
    const json& rmse = need("rmse_per_time");
    csv << "t_index,rmse\n";
    for (std::size_t i = 0; i < rmse.size(); ++i)
      csv << i << ',' << rmse[i].get<double>() << '\n';
  } else if (figure == "5b") {
    const json& fig = need("fig5b");
    csv << "t,exact,fno\n";
    const Eigen::VectorXd t = series_from(fig.at("t"));
    const Eigen::VectorXd ex = series_from(fig.at("exact"));
    const Eigen::VectorXd fn = series_from(fig.at("fno"));
    for (long i = 0; i < t.size(); ++i)
      csv << t(i) << ',' << ex(i) << ',' << fn(i) << '\n';
  } else if (figure == "5c") {
    const json& fig = need("fig5c");
    csv << "t_index,group,column_error\n";
    const json& one = fig.at("one_local");
    const json& two = fig.at("two_local");
    for (std::size_t i = 0; i < one.size(); ++i)
      csv << i << ",one_local," << one[i].get<double>() << '\n';
    for (std::size_t i = 0; i < two.size(); ++i)
      csv << i << ",two_local," << two[i].get<double>() << '\n';
  } else {
    throw CliError{kExitConfig, "unknown figure key '" + figure + "'"};
  }

  write_text_or_die(out, csv.str());
  std::cout << json{{"csv", out}}.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floquet spin-chain dynamics data + Fourier neural operator surrogates"};
  app.require_subcommand(1);

  std::string config_path, paradigm_flag, out_path, data_path, log_path;
  std::string model_path, coarse_path, report_path, models_dir, log_dir, figure;
  int threads = 0, repeats = 0, trotter_n = 0, mag_periods = 0;
  bool print_config = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a training dataset");
  gen->add_option("--config", config_path, "JSON config file")->required();
  gen->add_option("--paradigm", paradigm_flag,
                  "heff | h_to_obs | obs_to_obs | op_growth");
  gen->add_option("--out", out_path, "Output dataset path")->required();
  gen->add_option("--threads", threads, "Worker cap (0 = hardware)");
  gen->add_flag("--print-config", print_config, "Dump resolved config and exit");

  auto* tr = app.add_subcommand("train", "Train an FNO on a dataset");
  tr->add_option("--config", config_path, "JSON config file")->required();
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--out", out_path, "Checkpoint output path")->required();
  tr->add_option("--log", log_path, "JSON-lines training log");
  tr->add_flag("--print-config", print_config, "Dump resolved config and exit");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
  ev->add_option("--model", model_path, "Checkpoint")->required();
  ev->add_option("--model-coarse", coarse_path, "Coarse-grid-trained checkpoint");
  ev->add_option("--data", data_path, "Dataset file")->required();
  ev->add_option("--report", report_path, "Report JSON output")->required();
  ev->add_option("--config", config_path, "Config with [eval] section");
  ev->add_option("--trotter-n", trotter_n, "Add a coarse-Trotter baseline curve");
  ev->add_option("--magnetization-periods", mag_periods,
                 "Add stroboscopic magnetization curves");

  auto* sw = app.add_subcommand("sweep-learnability",
                                "Relative test error vs input-observable count");
  sw->add_option("--config", config_path, "JSON config file")->required();
  sw->add_option("--data", data_path, "obs_to_obs dataset")->required();
  sw->add_option("--out", out_path, "Sweep report JSON")->required();
  sw->add_option("--log-dir", log_dir, "Directory for per-run training logs");

  auto* be = app.add_subcommand("benchmark", "Exact-vs-FNO timing table");
  be->add_option("--models-dir", models_dir, "Directory of <task>_L<L>.fno")
      ->required();
  be->add_option("--config", config_path, "JSON config file");
  be->add_option("--out", out_path, "CSV output")->required();
  be->add_option("--repeats", repeats, "Timing repetitions (default 100)");

  auto* ex = app.add_subcommand("export-plot", "Figure-keyed tidy CSV export");
  ex->add_option("--report", report_path, "Eval/sweep report JSON");
  ex->add_option("--data", data_path, "Dataset (figure 7 only)");
  ex->add_option("--figure", figure, "2a|2b|2c|3|4|5a|5b|5c|7")->required();
  ex->add_option("--out", out_path, "CSV output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(config_path, paradigm_flag, out_path, threads,
                          print_config);
    if (tr->parsed())
      return cmd_train(config_path, data_path, out_path, log_path, print_config);
    if (ev->parsed())
      return cmd_eval(model_path, coarse_path, data_path, report_path,
                      config_path, trotter_n, mag_periods);
    if (sw->parsed()) return cmd_sweep(config_path, data_path, out_path, log_dir);
    if (be->parsed())
      return cmd_benchmark(models_dir, config_path, out_path, repeats);
    if (ex->parsed())
      return cmd_export_plot(report_path, data_path, figure, out_path);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << std::endl;
    return e.code;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.kind == IoError::Kind::Version ? kExitVersion : kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
