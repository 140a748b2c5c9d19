#include "enkflab/rng.hpp"

#include <cmath>

#include "enkflab/errors.hpp"

namespace enkflab::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kBump0 = 0x9E3779B9u;
constexpr std::uint32_t kBump1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& c, std::uint32_t k0,
                         std::uint32_t k1) {
  const std::uint64_t p0 = std::uint64_t(kMul0) * c[0];
  const std::uint64_t p1 = std::uint64_t(kMul1) * c[2];
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
}

inline std::array<std::uint32_t, 4> stream_block(std::uint64_t seed,
                                                 std::uint32_t replicate,
                                                 std::uint32_t particle,
                                                 std::uint32_t step, Role role,
                                                 std::uint32_t block) {
  if (replicate >= (1u << 24))
    throw InternalError("rng: replicate id exceeds the 24-bit stream budget");
  const std::array<std::uint32_t, 2> key = {std::uint32_t(seed),
                                            std::uint32_t(seed >> 32)};
  const std::array<std::uint32_t, 4> ctr = {
      particle, step, (static_cast<std::uint32_t>(role) << 24) | replicate, block};
  return Philox4x32::block(key, ctr);
}

inline double to_unit(std::uint64_t v) {
  // 53-bit mantissa, strictly inside (0,1) so log() is always finite.
  return (double((v >> 11)) + 0.5) * 0x1p-53;
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32::block(std::array<std::uint32_t, 2> key,
                                               std::array<std::uint32_t, 4> ctr) {
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, k0, k1);
    k0 += kBump0;
    k1 += kBump1;
  }
  return ctr;
}

double normal(std::uint64_t seed, std::uint32_t replicate, std::uint32_t particle,
              std::uint32_t step, Role role, std::uint32_t component) {
  const auto r = stream_block(seed, replicate, particle, step, role, component >> 1);
  const std::uint64_t v1 = (std::uint64_t(r[0]) << 32) | r[1];
  const std::uint64_t v2 = (std::uint64_t(r[2]) << 32) | r[3];
  const double u1 = to_unit(v1);
  const double u2 = to_unit(v2);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * M_PI * u2;
  return (component & 1u) ? rad * std::sin(ang) : rad * std::cos(ang);
}

Eigen::VectorXd normal_vector(std::uint64_t seed, std::uint32_t replicate,
                              std::uint32_t particle, std::uint32_t step, Role role,
                              int dim) {
  Eigen::VectorXd z(dim);
  for (int k = 0; k < dim; ++k)
    z[k] = normal(seed, replicate, particle, step, role, std::uint32_t(k));
  return z;
}

double uniform01(std::uint64_t seed, std::uint32_t replicate, std::uint32_t particle,
                 std::uint32_t step, Role role, std::uint32_t component) {
  return to_unit(uniform_u64(seed, replicate, particle, step, role, component));
}

std::uint64_t uniform_u64(std::uint64_t seed, std::uint32_t replicate,
                          std::uint32_t particle, std::uint32_t step, Role role,
                          std::uint32_t component) {
  const auto r = stream_block(seed, replicate, particle, step, role, component);
  return (std::uint64_t(r[0]) << 32) | r[1];
}

}  // namespace enkflab::rng
