#include "floqfno/fno.hpp"

#include "floqfno/io.hpp"
#include "floqfno/version.hpp"

namespace floqfno {

void FnoConfig::validate() const {
  if (d_in < 1 || d_out < 1) throw InvalidArgument("fno: channel counts must be positive");
  if (width < 1) throw InvalidArgument("fno: width must be positive");
  if (layers < 1) throw InvalidArgument("fno: need at least one Fourier layer");
  if (k_max < 1) throw InvalidArgument("fno: k_max must be positive");
  if (padding.n < 0) throw InvalidArgument("fno: n_padding must be >= 0");
}

long FnoConfig::parameter_count() const {
  return (d_in + 1) * width +
         layers * (2 * width * width * k_max + width * width + width) +
         (width + 1) * d_out;
}

FnoModel::FnoModel(FnoConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  lift_w = Tensor({cfg_.width, cfg_.d_in});
  lift_b = Tensor({cfg_.width});
  layers.resize(static_cast<std::size_t>(cfg_.layers));
  for (auto& l : layers) {
    l.r_re = Tensor({cfg_.k_max, cfg_.width, cfg_.width});
    l.r_im = Tensor({cfg_.k_max, cfg_.width, cfg_.width});
    l.byp_w = Tensor({cfg_.width, cfg_.width});
    l.byp_b = Tensor({cfg_.width});
  }
  proj_w = Tensor({cfg_.d_out, cfg_.width});
  proj_b = Tensor({cfg_.d_out});
  input_mean = Eigen::VectorXd::Zero(cfg_.d_in);
  input_std = Eigen::VectorXd::Ones(cfg_.d_in);
}

FnoModel::FnoModel(FnoConfig cfg, RngStream& init) : FnoModel(cfg) {
  auto fill_uniform = [&](Tensor& t, double s) {
    for (long i = 0; i < t.size(); ++i) t[i] = init.uniform(-s, s);
  };
  const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg_.d_in));
  const double s_w = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
  const double s_r = 1.0 / static_cast<double>(cfg_.width);
  fill_uniform(lift_w, s_in);
  fill_uniform(lift_b, s_in);
  for (auto& l : layers) {
    fill_uniform(l.r_re, s_r);
    fill_uniform(l.r_im, s_r);
    fill_uniform(l.byp_w, s_w);
    fill_uniform(l.byp_b, s_w);
  }
  fill_uniform(proj_w, s_w);
  fill_uniform(proj_b, s_w);
}

FnoModel FnoModel::zeros(FnoConfig cfg) { return FnoModel(cfg); }

std::vector<Tensor*> FnoModel::parameters() {
  std::vector<Tensor*> out{&lift_w, &lift_b};
  for (auto& l : layers) {
    out.push_back(&l.r_re);
    out.push_back(&l.r_im);
    out.push_back(&l.byp_w);
    out.push_back(&l.byp_b);
  }
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  return out;
}

std::vector<const Tensor*> FnoModel::parameters() const {
  auto mutable_params = const_cast<FnoModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<std::string> FnoModel::parameter_names() const {
  std::vector<std::string> names{"lift_w", "lift_b"};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + "/";
    names.push_back(p + "r_re");
    names.push_back(p + "r_im");
    names.push_back(p + "byp_w");
    names.push_back(p + "byp_b");
  }
  names.push_back("proj_w");
  names.push_back("proj_b");
  return names;
}

FnoModel::TapeBinding FnoModel::bind(Tape& tape) const {
  TapeBinding b;
  for (const Tensor* p : parameters()) b.params.push_back(tape.leaf(*p));
  return b;
}

void FnoModel::check_resolution(long n_time) const {
  const long padded = cfg_.padding.padded_length(n_time);
  if (padded % 2 != 0)
    throw InvalidArgument("fno: padded length " + std::to_string(padded) +
                          " must be even");
  if (cfg_.k_max > padded / 2 + 1)
    throw InvalidArgument("fno: k_max=" + std::to_string(cfg_.k_max) +
                          " exceeds available modes " +
                          std::to_string(padded / 2 + 1) + " at N=" +
                          std::to_string(n_time));
}

Var FnoModel::forward(Tape& tape, const TapeBinding& binding, Var u,
                      long segments) const {
  const Tensor& tu = tape.value(u);
  if (tu.rank() != 2 || tu.dim(0) != cfg_.d_in)
    throw InvalidArgument("fno: input shape " + tu.shape_str() +
                          " incompatible with d_in=" + std::to_string(cfg_.d_in));
  if (segments < 1 || tu.dim(1) % segments != 0)
    throw InvalidArgument("fno: input columns not divisible into " +
                          std::to_string(segments) + " segments");
  const long n = tu.dim(1) / segments;
  check_resolution(n);
  const long padded = cfg_.padding.padded_length(n);

  std::size_t pi = 0;
  const Var lw = binding.params[pi++];
  const Var lb = binding.params[pi++];

  Var h = tape.pad_time(u, cfg_.padding, segments);
  h = tape.add_bias(tape.matmul(lw, h), lb);
  for (long l = 0; l < cfg_.layers; ++l) {
    const Var r_re = binding.params[pi++];
    const Var r_im = binding.params[pi++];
    const Var bw = binding.params[pi++];
    const Var bb = binding.params[pi++];
    const Var spec =
        tape.mode_multiply(tape.rfft(h, segments), r_re, r_im, segments);
    const Var conv = tape.irfft(spec, padded, segments);
    const Var bypass = tape.add_bias(tape.matmul(bw, h), bb);
    h = tape.add(conv, bypass);
    if (l + 1 < cfg_.layers) h = tape.tanh(h);
  }
  const Var pw = binding.params[pi++];
  const Var pb = binding.params[pi++];
  Var y = tape.add_bias(tape.matmul(pw, h), pb);
  if (padded != n) y = tape.slice_segments(y, padded, n);
  return y;
}

Tensor FnoModel::predict(const Tensor& u) const {
  Tensor norm = u;
  for (long i = 0; i < norm.dim(0); ++i)
    for (long j = 0; j < norm.dim(1); ++j)
      norm.at(i, j) = (norm.at(i, j) - input_mean(i)) / input_std(i);
  Tape tape;
  const TapeBinding binding = bind(tape);
  const Var out = forward(tape, binding, tape.constant(std::move(norm)));
  return tape.value(out);
}

void FnoModel::save(const std::string& path, const nlohmann::json& extra) const {
  nlohmann::json header;
  header["kind"] = "checkpoint";
  header["format_version"] = kCheckpointFormatVersion;
  header["code_version"] = kCodeHash;
  header["arch"] = {{"d_in", cfg_.d_in},       {"d_out", cfg_.d_out},
                    {"width", cfg_.width},     {"layers", cfg_.layers},
                    {"k_max", cfg_.k_max},     {"pad_mode", to_string(cfg_.padding.mode)},
                    {"n_padding", cfg_.padding.n}};
  if (!extra.is_null() && !extra.empty()) header["meta"] = extra;

  ContainerWriter writer(path, header);
  const auto params = parameters();
  const auto names = parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i)
    writer.add_tensor(names[i], *params[i]);
  writer.add_tensor("input_mean", {static_cast<long>(input_mean.size())},
                    input_mean.data());
  writer.add_tensor("input_std", {static_cast<long>(input_std.size())},
                    input_std.data());
  writer.close();
}

nlohmann::json FnoModel::read_checkpoint_header(const std::string& path) {
  return ContainerReader::open(path).header();
}

FnoModel FnoModel::load(const std::string& path) {
  ContainerReader reader = ContainerReader::open(path);
  const auto& header = reader.header();
  if (header.value("kind", "") != "checkpoint")
    throw IoError(IoError::Kind::Format, path + ": not a checkpoint");
  if (header.value("format_version", -1) != kCheckpointFormatVersion)
    throw IoError(IoError::Kind::Version,
                  path + ": unsupported checkpoint format version");
  const auto& arch = header.at("arch");
  FnoConfig cfg;
  cfg.d_in = arch.at("d_in").get<long>();
  cfg.d_out = arch.at("d_out").get<long>();
  cfg.width = arch.at("width").get<long>();
  cfg.layers = arch.at("layers").get<long>();
  cfg.k_max = arch.at("k_max").get<long>();
  cfg.padding.mode = pad_mode_from_string(arch.at("pad_mode").get<std::string>());
  cfg.padding.n = arch.at("n_padding").get<long>();

  FnoModel model = FnoModel::zeros(cfg);
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = reader.read_tensor(names[i]);
    if (!t.same_shape(*params[i]))
      throw IoError(IoError::Kind::Format,
                    path + ": tensor " + names[i] + " has shape " +
                        t.shape_str() + ", expected " + params[i]->shape_str());
    *params[i] = std::move(t);
  }
  const Tensor mean = reader.read_tensor("input_mean");
  const Tensor std_dev = reader.read_tensor("input_std");
  model.input_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  model.input_std =
      Eigen::Map<const Eigen::VectorXd>(std_dev.data(), std_dev.size());
  return model;
}

Tensor pad(const Tensor& u, const PaddingPolicy& policy) {
  Tape tape;
  return tape.value(tape.pad_time(tape.constant(u), policy));
}

Tensor unpad(const Tensor& v, const PaddingPolicy& policy) {
  if (policy.mode == PadMode::None || policy.n == 0) return v;
  if (v.rank() != 2 || v.dim(1) <= policy.n)
    throw InvalidArgument("unpad: input shorter than padding");
  Tape tape;
  return tape.value(
      tape.slice_cols(tape.constant(v), 0, v.dim(1) - policy.n));
}

Eigen::VectorXd spectral_leakage(const Eigen::VectorXd& u,
                                 const PaddingPolicy& policy) {
  Tensor t({1, static_cast<long>(u.size())});
  std::copy(u.data(), u.data() + u.size(), t.data());
  Tape tape;
  const Var padded = tape.pad_time(tape.constant(std::move(t)), policy);
  const long n = tape.value(padded).dim(1);
  if (n % 2 != 0)
    throw InvalidArgument("spectral_leakage: padded length must be even");
  const Var spec = tape.rfft(padded);
  const Tensor& s = tape.value(spec);
  const long k = s.dim(1);  // (2, K, 1) for a single channel
  Eigen::VectorXd mags(k);
  for (long j = 0; j < k; ++j)
    mags(j) = std::hypot(s[j], s[k + j]);
  return mags;
}

}  // namespace floqfno
