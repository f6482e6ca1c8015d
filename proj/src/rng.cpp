#include "hglm/rng.hpp"

#include <cmath>

namespace hglm {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline Philox4x32::counter_t round_once(const Philox4x32::counter_t& c, const Philox4x32::key_t& k) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

Philox4x32::counter_t Philox4x32::block(counter_t ctr, key_t key) {
    ctr = round_once(ctr, key);
    for (int r = 1; r < 10; ++r) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
        ctr = round_once(ctr, key);
    }
    return ctr;
}

PhiloxStream::PhiloxStream(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      counter_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
      buffer_pos_(4),
      have_cached_normal_(false),
      cached_normal_(0.0) {}

void PhiloxStream::refill() {
    buffer_ = Philox4x32::block(counter_, key_);
    buffer_pos_ = 0;
    if (++counter_[0] == 0) ++counter_[1];  // 64-bit counter; streams live in words 2-3
}

std::uint32_t PhiloxStream::next_u32() {
    if (buffer_pos_ >= 4) refill();
    return buffer_[buffer_pos_++];
}

std::uint64_t PhiloxStream::next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

double PhiloxStream::uniform() {
    std::uint64_t bits53 = next_u64() >> 11;
    return (static_cast<double>(bits53) + 0.5) * 0x1.0p-53;
}

double PhiloxStream::normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

long PhiloxStream::poisson(double mean) {
    // Poisson(m) = sum of Poisson pieces with mean <= 500 each, so the Knuth
    // product of uniforms never underflows.
    long total = 0;
    while (mean > 0.0) {
        double chunk = mean > 500.0 ? 500.0 : mean;
        mean -= chunk;
        double limit = std::exp(-chunk);
        double prod = uniform();
        long k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        total += k;
    }
    return total;
}

}  // namespace hglm
