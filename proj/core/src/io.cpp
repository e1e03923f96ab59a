#include "floqfno/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

namespace floqfno {

namespace {
constexpr char kMagic[8] = {'F', 'Q', 'N', 'O', 'C', '0', '0', '1'};
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n_bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n_bytes; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoError::Kind::Open, "cannot open " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError(IoError::Kind::Open, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError(IoError::Kind::Open, "cannot rename " + tmp + " -> " + path);
}

ContainerWriter::ContainerWriter(std::string path, nlohmann::json header)
    : path_(std::move(path)),
      tmp_path_(path_ + ".payload.tmp"),
      header_(std::move(header)),
      payload_(tmp_path_, std::ios::binary | std::ios::trunc) {
  if (!payload_)
    throw IoError(IoError::Kind::Open, "cannot open " + tmp_path_);
}

ContainerWriter::~ContainerWriter() {
  try {
    close();
  } catch (...) {
    // Destructor must not throw; an unflushed writer leaves only tmp files.
  }
}

void ContainerWriter::add_tensor(const std::string& name,
                                 const std::vector<long>& shape,
                                 const double* data) {
  if (closed_) throw IoError(IoError::Kind::Open, "writer already closed");
  long n = 1;
  for (long d : shape) n *= d;
  nlohmann::json e;
  e["name"] = name;
  e["shape"] = shape;
  e["offset_bytes"] = payload_bytes_;
  e["n_values"] = n;
  index_.push_back(std::move(e));
  const std::size_t bytes = static_cast<std::size_t>(n) * sizeof(double);
  payload_.write(reinterpret_cast<const char*>(data),
                 static_cast<std::streamsize>(bytes));
  if (!payload_)
    throw IoError(IoError::Kind::Open, "short write to " + tmp_path_);
  fnv_ = fnv1a64(data, bytes, fnv_);
  payload_bytes_ += bytes;
}

void ContainerWriter::close() {
  if (closed_) return;
  closed_ = true;
  payload_.flush();
  payload_.close();

  header_["tensors"] = index_;
  header_["payload_bytes"] = payload_bytes_;
  char checksum[17];
  std::snprintf(checksum, sizeof checksum, "%016llx",
                static_cast<unsigned long long>(fnv_));
  header_["payload_fnv1a64"] = checksum;
  const std::string json = header_.dump();

  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoError::Kind::Open, "cannot open " + tmp);
    out.write(kMagic, 8);
    const std::uint64_t hlen = json.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    const std::size_t pad = (8 - (16 + json.size()) % 8) % 8;
    const char zeros[8] = {};
    out.write(zeros, static_cast<std::streamsize>(pad));

    if (payload_bytes_ > 0) {
      std::ifstream payload(tmp_path_, std::ios::binary);
      out << payload.rdbuf();
    }
    if (!out) throw IoError(IoError::Kind::Open, "short write to " + tmp);
  }
  std::remove(tmp_path_.c_str());
  if (std::rename(tmp.c_str(), path_.c_str()) != 0)
    throw IoError(IoError::Kind::Open, "cannot rename " + tmp + " -> " + path_);
}

ContainerReader ContainerReader::open(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::Open, "cannot open " + path);

  char magic[8];
  std::uint64_t hlen = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in) throw IoError(IoError::Kind::Truncated, path + ": truncated prologue");
  if (std::memcmp(magic, kMagic, 5) != 0)
    throw IoError(IoError::Kind::Format, path + ": not a container file");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(IoError::Kind::Version,
                  path + ": unsupported container version " +
                      std::string(magic + 5, 3));

  std::string json(hlen, '\0');
  in.read(json.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError(IoError::Kind::Truncated, path + ": truncated header");

  ContainerReader r;
  r.path_ = path;
  try {
    r.header_ = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::Format, path + ": bad header: " + e.what());
  }
  const std::size_t pad = (8 - (16 + hlen) % 8) % 8;
  r.payload_start_ = 16 + hlen + pad;

  for (const auto& e : r.header_.at("tensors")) {
    Entry entry;
    entry.shape = e.at("shape").get<std::vector<long>>();
    entry.offset_bytes = e.at("offset_bytes").get<std::uint64_t>();
    entry.n_values = e.at("n_values").get<std::uint64_t>();
    r.entries_[e.at("name").get<std::string>()] = entry;
  }

  const std::uint64_t payload_bytes =
      r.header_.at("payload_bytes").get<std::uint64_t>();
  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  if (file_size < r.payload_start_ + payload_bytes)
    throw IoError(IoError::Kind::Truncated,
                  path + ": payload shorter than declared (" +
                      std::to_string(file_size - r.payload_start_) + " < " +
                      std::to_string(payload_bytes) + " bytes)");

  // Streaming checksum pass; tensors are still read lazily afterwards.
  in.seekg(static_cast<std::streamoff>(r.payload_start_));
  std::uint64_t fnv = kFnvOffset;
  std::vector<char> buf(1 << 20);
  std::uint64_t remaining = payload_bytes;
  while (remaining > 0) {
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(remaining, buf.size()));
    in.read(buf.data(), static_cast<std::streamsize>(chunk));
    if (!in) throw IoError(IoError::Kind::Truncated, path + ": payload read failed");
    fnv = fnv1a64(buf.data(), chunk, fnv);
    remaining -= chunk;
  }
  char checksum[17];
  std::snprintf(checksum, sizeof checksum, "%016llx",
                static_cast<unsigned long long>(fnv));
  if (r.header_.at("payload_fnv1a64").get<std::string>() != checksum)
    throw IoError(IoError::Kind::Checksum, path + ": payload checksum mismatch");
  return r;
}

bool ContainerReader::has_tensor(const std::string& name) const {
  return entries_.count(name) > 0;
}

std::vector<std::string> ContainerReader::tensor_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& [name, e] : entries_) names.push_back(name);
  return names;
}

const ContainerReader::Entry& ContainerReader::entry(
    const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw IoError(IoError::Kind::Format, path_ + ": no tensor '" + name + "'");
  return it->second;
}

std::vector<long> ContainerReader::tensor_shape(const std::string& name) const {
  return entry(name).shape;
}

Tensor ContainerReader::read_tensor(const std::string& name) const {
  const Entry& e = entry(name);
  Tensor t(e.shape);
  if (static_cast<std::uint64_t>(t.size()) != e.n_values)
    throw IoError(IoError::Kind::Format,
                  path_ + ": index inconsistent for '" + name + "'");
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::Open, "cannot open " + path_);
  in.seekg(static_cast<std::streamoff>(payload_start_ + e.offset_bytes));
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(e.n_values * sizeof(double)));
  if (!in) throw IoError(IoError::Kind::Truncated,
                         path_ + ": tensor '" + name + "' truncated");
  return t;
}

}  // namespace floqfno
