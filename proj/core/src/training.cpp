#include "floqfno/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace floqfno {

void Partition::validate(int m) const {
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (int i : in_indices) {
    if (i < 0 || i >= m || seen[static_cast<std::size_t>(i)])
      throw InvalidArgument("partition: bad or duplicate input index");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  for (int i : out_indices) {
    if (i < 0 || i >= m || seen[static_cast<std::size_t>(i)])
      throw InvalidArgument("partition: indices overlap or out of range");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  if (in_indices.empty() || out_indices.empty())
    throw InvalidArgument("partition: both sides must be non-empty");
}

Partition sample_partition(int m, int k, RngStream& stream) {
  if (k < 1 || k >= m)
    throw InvalidArgument("sample_partition: require 1 <= k < m");
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(stream.below(static_cast<std::uint64_t>(m - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Partition p;
  p.in_indices.assign(idx.begin(), idx.begin() + k);
  p.out_indices.assign(idx.begin() + k, idx.end());
  std::sort(p.in_indices.begin(), p.in_indices.end());
  std::sort(p.out_indices.begin(), p.out_indices.end());
  return p;
}

Partition one_local_partition(const LocalBasis& basis) {
  Partition p;
  for (int j = 0; j < basis.size(); ++j)
    (basis[j].weight() == 1 ? p.in_indices : p.out_indices).push_back(j);
  return p;
}

void TrainingConfig::validate() const {
  if (batch < 1) throw InvalidArgument("training.batch must be >= 1");
  if (epochs < 1) throw InvalidArgument("training.epochs must be >= 1");
  if (!(lr > 0)) throw InvalidArgument("training.lr must be > 0");
  if (weight_decay < 0) throw InvalidArgument("training.weight_decay must be >= 0");
  if (!(gamma > 0) || gamma > 1) throw InvalidArgument("training.gamma must be in (0, 1]");
  if (n_decay < 1) throw InvalidArgument("training.n_decay must be >= 1");
  if (width < 1 || layers < 1 || k_max < 1)
    throw InvalidArgument("training: architecture fields must be positive");
  if (eval_every < 1) throw InvalidArgument("training.eval_every must be >= 1");
  if (!(test_fraction >= 0) || test_fraction >= 1)
    throw InvalidArgument("training.test_fraction must be in [0, 1)");
  if (paradigm == Paradigm::ObsToObs && k_inputs < 1)
    throw InvalidArgument("training.k_inputs required for obs_to_obs");
}

Var trajectory_mse(Tape& tape, Var pred, Var truth) {
  const long n_time = tape.value(pred).dim(1);
  return tape.scale(tape.sse(pred, truth), 1.0 / static_cast<double>(n_time));
}

OpGrowthSample make_op_growth_sample(const DatasetRecord& rec, int n_max,
                                     long m, long n_time) {
  OpGrowthSample s;
  s.m = m;
  s.n_time = n_time;
  s.n_max = n_max;
  const long n_states = static_cast<long>(rec.partial_traces.size());
  for (const auto& traces : rec.partial_traces) {
    Tensor t({m, 1});
    for (long j = 0; j < m; ++j) t[j] = traces(j);
    s.rho_b.push_back(std::move(t));
  }
  const long k_cols = (n_max + 1) * n_states;
  for (long t = 0; t < n_time; ++t) {
    Tensor target({m, k_cols});
    for (int n = 0; n <= n_max; ++n)
      for (long st = 0; st < n_states; ++st)
        for (long i = 0; i < m; ++i)
          target.at(i, n * n_states + st) =
              rec.state_observables[static_cast<std::size_t>(st)](i, n * n_time + t);
    s.targets_per_t.push_back(std::move(target));
  }
  return s;
}

Var op_growth_loss(Tape& tape, Var pred_c, const OpGrowthSample& sample) {
  const long m = sample.m;
  const long n_time = sample.n_time;
  const Tensor& tp = tape.value(pred_c);
  if (tp.rank() != 2 || tp.dim(0) != m * m || tp.dim(1) != n_time)
    throw InvalidArgument("op_growth_loss: prediction shape " + tp.shape_str() +
                          " inconsistent with m=" + std::to_string(m) +
                          ", N=" + std::to_string(n_time));

  std::vector<Var> frames;
  frames.reserve(static_cast<std::size_t>(n_time));
  for (long t = 0; t < n_time; ++t)
    frames.push_back(
        tape.reshape(tape.slice_cols(pred_c, t, t + 1), {m, m}));
  const Var c_period = frames.back();  // offset grid: last frame is t = T

  // Columns of V: c(T)^n rho_b_s, n outer, s inner; powers built once.
  std::vector<Var> columns;
  Var power{};
  for (int n = 0; n <= sample.n_max; ++n) {
    for (const Tensor& rho : sample.rho_b) {
      const Var rho_var = tape.leaf(rho);
      columns.push_back(n == 0 ? rho_var : tape.matmul(power, rho_var));
    }
    if (n < sample.n_max)
      power = n == 0 ? c_period : tape.matmul(c_period, power);
  }
  const Var v = tape.concat_cols(columns);

  Var total{};
  for (long t = 0; t < n_time; ++t) {
    const Var err = tape.sse(tape.matmul(frames[static_cast<std::size_t>(t)], v),
                             tape.leaf(sample.targets_per_t[static_cast<std::size_t>(t)]));
    total = t == 0 ? err : tape.add(total, err);
  }
  const double norm = 1.0 / (std::max(1, sample.n_max) * static_cast<double>(n_time));
  return tape.scale(total, norm);
}

namespace {

struct PreparedSample {
  Tensor input;   // (d_in, N) normalized
  Tensor target;  // trajectory paradigms
  OpGrowthSample op_growth;
};

struct Problem {
  long d_in = 0, d_out = 0;
  std::vector<PreparedSample> samples;
  Eigen::VectorXd mean, std_dev;
};

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<long>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<long>(r)) = m.row(rows[r]);
  return out;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({m.rows(), m.cols()});
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Problem prepare(const TrainingConfig& cfg, const Dataset& ds,
                const Partition* partition) {
  Problem prob;
  const long m = ds.in_basis->size();
  const long n_in = ds.input_grid.total_points();

  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    switch (cfg.paradigm) {
      case Paradigm::Heff:
      case Paradigm::HToObs:
      case Paradigm::OpGrowth:
        inputs.push_back(rec.h_coeffs);
        break;
      case Paradigm::ObsToObs:
        inputs.push_back(select_rows(rec.observables, partition->in_indices));
        break;
    }
  }
  prob.d_in = inputs.front().rows();

  // Per-channel normalization statistics from the train split only.
  const int n_train = ds.train_count(cfg.test_fraction);
  prob.mean = Eigen::VectorXd::Zero(prob.d_in);
  prob.std_dev = Eigen::VectorXd::Ones(prob.d_in);
  if (cfg.normalize) {
    double count = 0;
    for (int r = 0; r < n_train; ++r) {
      prob.mean += inputs[static_cast<std::size_t>(r)].rowwise().sum();
      count += static_cast<double>(inputs[static_cast<std::size_t>(r)].cols());
    }
    prob.mean /= std::max(1.0, count);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(prob.d_in);
    for (int r = 0; r < n_train; ++r)
      var += (inputs[static_cast<std::size_t>(r)].colwise() - prob.mean)
                 .array()
                 .square()
                 .matrix()
                 .rowwise()
                 .sum();
    var /= std::max(1.0, count);
    prob.std_dev = var.array().sqrt().max(1e-8).matrix();
  }

  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    PreparedSample ps;
    Eigen::MatrixXd norm =
        (inputs[r].colwise() - prob.mean).array().colwise() /
        prob.std_dev.array();
    ps.input = to_tensor(norm);
    switch (cfg.paradigm) {
      case Paradigm::Heff:
        ps.target = to_tensor(rec.hf_coeffs);
        break;
      case Paradigm::HToObs:
        ps.target = to_tensor(rec.observables);
        break;
      case Paradigm::ObsToObs:
        ps.target = to_tensor(select_rows(rec.observables, partition->out_indices));
        break;
      case Paradigm::OpGrowth:
        ps.op_growth = make_op_growth_sample(rec, cfg.n_max, m, n_in);
        break;
    }
    prob.d_out = cfg.paradigm == Paradigm::OpGrowth ? m * m : ps.target.dim(0);
    prob.samples.push_back(std::move(ps));
  }
  return prob;
}

double sample_loss(const FnoModel& model, const TrainingConfig& cfg,
                   const PreparedSample& ps,
                   std::vector<Tensor>* grad_accum) {
  Tape tape;
  const FnoModel::TapeBinding binding = model.bind(tape);
  const Var pred = model.forward(tape, binding, tape.leaf(ps.input));
  Var loss{};
  if (cfg.paradigm == Paradigm::OpGrowth)
    loss = op_growth_loss(tape, pred, ps.op_growth);
  else
    loss = trajectory_mse(tape, pred, tape.leaf(ps.target));
  const double value = tape.value(loss)[0];
  if (grad_accum) {
    tape.backward(loss);
    for (std::size_t p = 0; p < binding.params.size(); ++p)
      tape.accumulate_gradient(binding.params[p], (*grad_accum)[p]);
  }
  return value;
}

/// Sum of per-sample trajectory losses over a contiguous index chunk,
/// evaluated as one segmented (batched) graph.
double chunk_loss(const FnoModel& model, const std::vector<PreparedSample>& samples,
                  const int* idx, long count, std::vector<Tensor>* grad_accum) {
  const long d_in = samples[static_cast<std::size_t>(idx[0])].input.dim(0);
  const long d_out = samples[static_cast<std::size_t>(idx[0])].target.dim(0);
  const long n = samples[static_cast<std::size_t>(idx[0])].input.dim(1);
  Tensor input({d_in, count * n});
  Tensor target({d_out, count * n});
  for (long b = 0; b < count; ++b) {
    const PreparedSample& ps = samples[static_cast<std::size_t>(idx[b])];
    for (long r = 0; r < d_in; ++r)
      std::copy(ps.input.data() + r * n, ps.input.data() + (r + 1) * n,
                input.data() + r * (count * n) + b * n);
    for (long r = 0; r < d_out; ++r)
      std::copy(ps.target.data() + r * n, ps.target.data() + (r + 1) * n,
                target.data() + r * (count * n) + b * n);
  }
  Tape tape;
  const FnoModel::TapeBinding binding = model.bind(tape);
  const Var pred = model.forward(tape, binding, tape.constant(std::move(input)),
                                 count);
  // Sum over the chunk of the per-sample time-averaged MSE.
  const Var loss = tape.scale(tape.sse(pred, tape.constant(std::move(target))),
                              1.0 / static_cast<double>(n));
  const double value = tape.value(loss)[0];
  if (grad_accum) {
    tape.backward(loss);
    for (std::size_t p = 0; p < binding.params.size(); ++p)
      tape.accumulate_gradient(binding.params[p], (*grad_accum)[p]);
  }
  return value;
}

/// Contiguous-chunk batch processing across workers with a fixed reduction
/// order: results are identical for a given (seed, threads).
double process_batch(const FnoModel& model, const TrainingConfig& cfg,
                     const std::vector<PreparedSample>& samples,
                     const std::vector<int>& batch_indices, int threads,
                     std::vector<Tensor>& grads) {
  const long batch_n = static_cast<long>(batch_indices.size());
  const int n_workers =
      std::max(1, std::min<int>(threads, static_cast<int>(batch_n)));
  std::vector<std::vector<Tensor>> worker_grads(
      static_cast<std::size_t>(n_workers));
  std::vector<double> worker_loss(static_cast<std::size_t>(n_workers), 0.0);
  for (auto& wg : worker_grads) {
    wg.reserve(grads.size());
    for (const Tensor& g : grads) wg.emplace_back(g.shape());
  }

  auto work = [&](int w) {
    const long lo = w * batch_n / n_workers;
    const long hi = (w + 1) * batch_n / n_workers;
    if (lo >= hi) return;
    auto& wg = worker_grads[static_cast<std::size_t>(w)];
    if (cfg.paradigm == Paradigm::OpGrowth) {
      for (long i = lo; i < hi; ++i)
        worker_loss[static_cast<std::size_t>(w)] += sample_loss(
            model, cfg,
            samples[static_cast<std::size_t>(batch_indices[static_cast<std::size_t>(i)])],
            &wg);
    } else {
      worker_loss[static_cast<std::size_t>(w)] =
          chunk_loss(model, samples, batch_indices.data() + lo, hi - lo, &wg);
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  const double inv_batch = 1.0 / static_cast<double>(batch_n);
  double loss = 0.0;
  for (int w = 0; w < n_workers; ++w) {
    loss += worker_loss[static_cast<std::size_t>(w)];
    for (std::size_t p = 0; p < grads.size(); ++p) {
      const Tensor& wg = worker_grads[static_cast<std::size_t>(w)][p];
      Eigen::Map<Eigen::VectorXd>(grads[p].data(), grads[p].size()) +=
          inv_batch *
          Eigen::Map<const Eigen::VectorXd>(wg.data(), wg.size());
    }
  }
  return loss * inv_batch;
}

double evaluate_split(const FnoModel& model, const TrainingConfig& cfg,
                      const std::vector<PreparedSample>& samples, int first,
                      int last, int threads) {
  if (first >= last) return std::numeric_limits<double>::quiet_NaN();
  const int n_workers = std::max(1, std::min(threads, last - first));
  std::vector<double> worker_loss(static_cast<std::size_t>(n_workers), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(last - first));
  for (int i = first; i < last; ++i) idx[static_cast<std::size_t>(i - first)] = i;
  auto work = [&](int w) {
    const long n = static_cast<long>(idx.size());
    const long lo = w * n / n_workers;
    const long hi = (w + 1) * n / n_workers;
    if (lo >= hi) return;
    if (cfg.paradigm == Paradigm::OpGrowth) {
      for (long i = lo; i < hi; ++i)
        worker_loss[static_cast<std::size_t>(w)] += sample_loss(
            model, cfg, samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])],
            nullptr);
    } else {
      worker_loss[static_cast<std::size_t>(w)] =
          chunk_loss(model, samples, idx.data() + lo, hi - lo, nullptr);
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  double loss = 0.0;
  for (double l : worker_loss) loss += l;
  return loss / static_cast<double>(last - first);
}

}  // namespace

TrainResult train(const TrainingConfig& cfg, const Dataset& ds,
                  const std::string& log_path,
                  const Partition* fixed_partition) {
  cfg.validate();
#if defined(__GLIBC__)
  // Keep multi-MB tape tensors on the heap free lists between batches
  // instead of cycling them through mmap/munmap.
  static const bool malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)malloc_tuned;
#endif
  if (cfg.paradigm != ds.paradigm)
    throw InvalidArgument("train: dataset paradigm " + to_string(ds.paradigm) +
                          " does not match config " + to_string(cfg.paradigm));
  if (ds.size() < 2) throw InvalidArgument("train: need at least 2 records");

  std::optional<Partition> partition;
  if (cfg.paradigm == Paradigm::ObsToObs) {
    if (fixed_partition) {
      partition = *fixed_partition;
    } else {
      RngStream stream(cfg.seed, 0, static_cast<std::uint64_t>(RngPurpose::Partition));
      partition = sample_partition(ds.in_basis->size(), cfg.k_inputs, stream);
    }
    partition->validate(ds.in_basis->size());
  }

  const Problem prob = prepare(cfg, ds, partition ? &*partition : nullptr);
  const int n_train = ds.train_count(cfg.test_fraction);
  const int n_total = ds.size();
  const long batch =
      n_total < 128 ? static_cast<long>(n_train) : std::min<long>(cfg.batch, n_train);
  const long steps_per_epoch = (n_train + batch - 1) / batch;

  FnoConfig arch;
  arch.d_in = prob.d_in;
  arch.d_out = prob.d_out;
  arch.width = cfg.width;
  arch.layers = cfg.layers;
  arch.k_max = cfg.k_max;
  arch.padding = cfg.padding;
  RngStream init(cfg.seed, 0, static_cast<std::uint64_t>(RngPurpose::WeightInit));
  FnoModel model(arch, init);
  model.check_resolution(ds.input_grid.total_points());
  model.input_mean = prob.mean;
  model.input_std = prob.std_dev;

  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  opt_cfg.gamma = cfg.gamma;
  opt_cfg.n_decay = cfg.n_decay * steps_per_epoch;
  auto params = model.parameters();
  AdamW optimizer(opt_cfg, params);

  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::app);
    if (!log_file) throw IoError(IoError::Kind::Open, "cannot open " + log_path);
  }

  TrainResult result{FnoModel::zeros(arch), {}, 0.0, 0, partition};
  std::vector<Tensor> best_params;
  double best_test = std::numeric_limits<double>::infinity();
  long best_epoch = 0;

  std::vector<int> order(static_cast<std::size_t>(n_train));
  for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<Tensor> grads;
  for (const Tensor* p : params) grads.emplace_back(p->shape());

  const auto t_start = std::chrono::steady_clock::now();
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RngStream shuffle(cfg.seed, static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(RngPurpose::Batching));
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double epoch_loss = 0.0;
    long n_batches = 0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      const long lo = b * batch;
      const long hi = std::min<long>(lo + batch, n_train);
      if (lo >= hi) break;
      const std::vector<int> batch_indices(order.begin() + lo, order.begin() + hi);
      for (Tensor& g : grads) g.fill(0.0);
      epoch_loss += process_batch(model, cfg, prob.samples, batch_indices,
                                  cfg.threads, grads);
      optimizer.step(params, grads);
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(std::max<long>(1, n_batches));
    if (!std::isfinite(epoch_loss))
      throw TrainingDiverged("training loss became non-finite at epoch " +
                             std::to_string(epoch));

    double test_loss = std::numeric_limits<double>::quiet_NaN();
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      test_loss =
          evaluate_split(model, cfg, prob.samples, n_train, n_total, cfg.threads);
      if (std::isnan(test_loss)) test_loss = epoch_loss;  // no test split
      if (test_loss < best_test) {
        best_test = test_loss;
        best_epoch = epoch;
        best_params.clear();
        for (const Tensor* p : params) best_params.push_back(*p);
      }
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    result.log.push_back({epoch, epoch_loss, test_loss, optimizer.current_lr(),
                          seconds});
    if (log_file) {
      nlohmann::json line = {{"epoch", epoch},
                             {"train_loss", epoch_loss},
                             {"lr", optimizer.current_lr()},
                             {"seconds", seconds}};
      if (!std::isnan(test_loss)) line["test_loss"] = test_loss;
      log_file << line.dump() << '\n';
      log_file.flush();
    }
  }

  // Restore the best-test parameters.
  auto out_params = model.parameters();
  for (std::size_t p = 0; p < out_params.size(); ++p)
    *out_params[p] = best_params[p];
  result.model = std::move(model);
  result.best_test_loss = best_test;
  result.best_epoch = best_epoch;
  return result;
}

double relative_test_error(const FnoModel& model, const Dataset& ds,
                           const Partition& partition) {
  const int n_train = ds.train_count();
  const int n_total = ds.size();
  if (n_train >= n_total)
    throw InvalidArgument("relative_test_error: dataset has no test split");
  double total = 0.0;
  int count = 0;
  for (int r = n_train; r < n_total; ++r) {
    const auto& rec = ds.records[static_cast<std::size_t>(r)];
    const Eigen::MatrixXd in = select_rows(rec.observables, partition.in_indices);
    const Eigen::MatrixXd truth =
        select_rows(rec.observables, partition.out_indices);
    const Tensor pred = model.predict(to_tensor(in));
    double acc = 0.0;
    for (long t = 0; t < truth.cols(); ++t) {
      double num = 0.0, den = 0.0;
      for (long i = 0; i < truth.rows(); ++i) {
        const double d = pred.at(i, t) - truth(i, t);
        num += d * d;
        den += truth(i, t) * truth(i, t);
      }
      acc += den > 0 ? num / den : 0.0;
    }
    total += acc / static_cast<double>(truth.cols());
    ++count;
  }
  return total / std::max(1, count);
}

}  // namespace floqfno
