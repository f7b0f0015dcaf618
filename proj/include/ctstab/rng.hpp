#ifndef CTSTAB_RNG_HPP
#define CTSTAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

namespace ctstab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream_hi, stream_lo); draws advance a
/// 64-bit block counter, so streams never overlap and a replicate's draws do
/// not depend on scheduling order or thread count.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint32_t stream_hi = 0,
                  std::uint32_t stream_lo = 0)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_hi_(stream_hi),
        stream_lo_(stream_lo) {}

  std::uint32_t next_u32() {
    if (avail_ == 0) refill();
    return out_[4 - avail_--];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log() finite
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next_gaussian();
    return v;
  }

  /// Column-major fill, matching Eigen's storage order.
  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = next_gaussian();
    return m;
  }

 private:
  static std::uint32_t mul_hi_lo(std::uint32_t a, std::uint32_t b,
                                 std::uint32_t& lo) {
    const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(prod);
    return static_cast<std::uint32_t>(prod >> 32);
  }

  void refill() {
    std::uint32_t x0 = static_cast<std::uint32_t>(block_);
    std::uint32_t x1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t x2 = stream_lo_;
    std::uint32_t x3 = stream_hi_;
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t lo0, lo1;
      const std::uint32_t hi0 = mul_hi_lo(0xD2511F53u, x0, lo0);
      const std::uint32_t hi1 = mul_hi_lo(0xCD9E8D57u, x2, lo1);
      x0 = hi1 ^ x1 ^ k0;
      x1 = lo1;
      x2 = hi0 ^ x3 ^ k1;
      x3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = x0;
    out_[1] = x1;
    out_[2] = x2;
    out_[3] = x3;
    avail_ = 4;
    ++block_;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t stream_hi_, stream_lo_;
  std::uint64_t block_ = 0;
  std::uint32_t out_[4] = {};
  int avail_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Substream for one Monte Carlo replicate, a pure function of
/// (base_seed, grid point index, replicate index).
inline Philox replicate_stream(std::uint64_t base_seed, std::uint32_t grid_index,
                               std::uint32_t replicate) {
  return Philox(base_seed, grid_index, replicate);
}

}  // namespace ctstab

#endif  // CTSTAB_RNG_HPP
