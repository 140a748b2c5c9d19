#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>

namespace enkflab::rng {

// Counter-based generator (Philox4x32-10). Every draw is a pure function of
// (master seed, replicate, particle, step, role, component), so any stream
// can be replayed in isolation and replicas can consume the identical noise
// as the particles they shadow. No mutable generator state exists anywhere.
struct Philox4x32 {
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 2> key,
                                            std::array<std::uint32_t, 4> ctr);
};

enum class Role : std::uint32_t {
  init = 0,         // ensemble / replica initialization draws
  dynamics = 1,     // xi_j, the dynamics noise
  observation = 2,  // eta_{j+1}, the observation noise
  truth_init = 3,   // u_0 of the synthetic truth path
  truth_dynamics = 4,
  truth_observation = 5,
  scramble = 6,  // bootstrap resampling, randomized test instances
};

// k-th standard normal of the stream addressed by the tuple.
double normal(std::uint64_t seed, std::uint32_t replicate, std::uint32_t particle,
              std::uint32_t step, Role role, std::uint32_t component);

// dim iid standard normals of one stream, components 0..dim-1.
Eigen::VectorXd normal_vector(std::uint64_t seed, std::uint32_t replicate,
                              std::uint32_t particle, std::uint32_t step, Role role,
                              int dim);

// Uniform in (0,1), same addressing scheme.
double uniform01(std::uint64_t seed, std::uint32_t replicate, std::uint32_t particle,
                 std::uint32_t step, Role role, std::uint32_t component);

// Uniform 64-bit word (index draws for bootstrap resampling).
std::uint64_t uniform_u64(std::uint64_t seed, std::uint32_t replicate,
                          std::uint32_t particle, std::uint32_t step, Role role,
                          std::uint32_t component);

}  // namespace enkflab::rng
