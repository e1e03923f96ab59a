#include "floqfno/tensor.hpp"

#include <cmath>
#include <sstream>

namespace floqfno {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

PadMode pad_mode_from_string(const std::string& s) {
  if (s == "none") return PadMode::None;
  if (s == "zero") return PadMode::Zero;
  if (s == "reflect") return PadMode::Reflect;
  if (s == "circular") return PadMode::Circular;
  throw InvalidArgument("unknown padding mode '" + s + "'");
}

std::string to_string(PadMode m) {
  switch (m) {
    case PadMode::None: return "none";
    case PadMode::Zero: return "zero";
    case PadMode::Reflect: return "reflect";
    case PadMode::Circular: return "circular";
  }
  return "none";
}

}  // namespace floqfno
