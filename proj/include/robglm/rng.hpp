#pragma once

#include <cstdint>
#include <random>

namespace robglm {

// splitmix64 step; used to derive well-separated seeds for independent
// streams from (master seed, stream id) without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2c13bb1cad5ULL;
  return z ^ (z >> 31);
}

// One random stream.  Streams derived with distinct ids from the same
// master seed are independent for practical purposes, so replicate r of a
// simulation always sees the same draws no matter how work is scheduled.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t master, std::uint64_t id, std::uint64_t sub = 0) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s ^= id * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= sub * 0xd1b54a32d192ed03ULL;
    std::uint64_t c = splitmix64(s);
    std::seed_seq seq{static_cast<unsigned>(a), static_cast<unsigned>(a >> 32),
                      static_cast<unsigned>(b), static_cast<unsigned>(b >> 32),
                      static_cast<unsigned>(c), static_cast<unsigned>(c >> 32)};
    gen_.seed(seq);
  }

  std::mt19937_64& engine() { return gen_; }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(gen_);
  }

  long long poisson(double lambda) {
    return std::poisson_distribution<long long>(lambda)(gen_);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace robglm
