#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "floqfno/common.hpp"
#include "floqfno/tensor.hpp"

namespace floqfno {

/// Binary container used by dataset files and model checkpoints:
///   bytes 0..7   magic "FQNOC001" (last byte is the format version digit)
///   bytes 8..15  little-endian u64 header length H
///   16..16+H     JSON header (tensor index with explicit byte offsets,
///                payload byte count, FNV-1a 64 checksum, kind-specific fields)
///   padding to 8-byte alignment, then the float64 little-endian payload.
class ContainerWriter {
 public:
  explicit ContainerWriter(std::string path, nlohmann::json header);
  ~ContainerWriter();

  /// Appends one named float64 tensor to the payload.
  void add_tensor(const std::string& name, const std::vector<long>& shape,
                  const double* data);
  void add_tensor(const std::string& name, const Tensor& t) {
    add_tensor(name, t.shape(), t.data());
  }

  /// Finalizes the header (index + checksum) and renames into place
  /// atomically. No-op if already closed.
  void close();

 private:
  std::string path_;
  std::string tmp_path_;
  nlohmann::json header_;
  nlohmann::json index_ = nlohmann::json::array();
  std::ofstream payload_;
  std::uint64_t payload_bytes_ = 0;
  std::uint64_t fnv_ = 14695981039346656037ULL;
  bool closed_ = false;
};

/// Reader. open() validates magic, version, payload size, and checksum;
/// tensors are then read lazily by name.
class ContainerReader {
 public:
  static ContainerReader open(const std::string& path);

  const nlohmann::json& header() const { return header_; }
  bool has_tensor(const std::string& name) const;
  std::vector<long> tensor_shape(const std::string& name) const;
  Tensor read_tensor(const std::string& name) const;
  std::vector<std::string> tensor_names() const;

 private:
  struct Entry {
    std::vector<long> shape;
    std::uint64_t offset_bytes;
    std::uint64_t n_values;
  };
  const Entry& entry(const std::string& name) const;

  std::string path_;
  nlohmann::json header_;
  std::map<std::string, Entry> entries_;
  std::uint64_t payload_start_ = 0;
};

std::uint64_t fnv1a64(const void* data, std::size_t n_bytes, std::uint64_t seed);

/// Writes text to path atomically (tmp file + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace floqfno
