#pragma once

#include <array>
#include <cstdint>

namespace hglm {

// Philox4x32-10 counter-based generator. A (seed, stream) pair selects an
// independent sequence, so replicate r of a simulation can use stream r and
// the results do not depend on thread scheduling.
struct Philox4x32 {
    using counter_t = std::array<std::uint32_t, 4>;
    using key_t = std::array<std::uint32_t, 2>;

    static counter_t block(counter_t ctr, key_t key);
};

class PhiloxStream {
  public:
    PhiloxStream(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on (0, 1), 53-bit resolution, never exactly 0 or 1.
    double uniform();
    // Standard normal via Box-Muller (consumes uniforms in pairs).
    double normal();
    // Poisson draw, exact for any mean >= 0 (chunked Knuth multiplication).
    long poisson(double mean);

  private:
    void refill();

    Philox4x32::key_t key_;
    Philox4x32::counter_t counter_;
    std::array<std::uint32_t, 4> buffer_;
    int buffer_pos_;
    bool have_cached_normal_;
    double cached_normal_;
};

}  // namespace hglm
