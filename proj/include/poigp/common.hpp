#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace poigp {

// Error taxonomy. The CLI maps these onto exit codes:
// input 2, training 3, artifact 4.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct parameter_error : input_error {
  using input_error::input_error;
};
struct state_error : input_error {
  using input_error::input_error;
};
struct training_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : training_error {
  using training_error::training_error;
};
struct artifact_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Inverse of softplus; y must be > 0.
inline double softplus_inv(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shortest round-trip decimal representation. Used for every double we
// serialize so reruns produce byte-identical files.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Strict, locale-independent parse of a full token.
inline bool parse_double(std::string_view s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace poigp
