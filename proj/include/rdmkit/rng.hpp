#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "rdmkit/core.hpp"

namespace rdmkit {

// Philox4x32-10 counter-based generator. Each (key, stream) pair addresses an
// independent substream of 2^64 blocks, so trial t of a simulation draws from
// stream(seed, t) and results do not depend on how trials are scheduled
// across worker threads.
class Philox4x32 {
  public:
    Philox4x32(std::uint64_t key, std::uint64_t stream)
        : key0_(static_cast<std::uint32_t>(key)),
          key1_(static_cast<std::uint32_t>(key >> 32)),
          stream_(stream),
          block_(0) {}

    std::array<std::uint32_t, 4> next_block() {
        std::uint32_t c0 = static_cast<std::uint32_t>(block_);
        std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
        std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
        ++block_;
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(c0);
            std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(c2);
            std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return {c0, c1, c2, c3};
    }

  private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    std::uint32_t key0_, key1_;
    std::uint64_t stream_;
    std::uint64_t block_;
};

// Buffered stream of uniform/normal doubles on top of Philox4x32-10.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : gen_(seed, stream), buf_pos_(4) {}

    std::uint64_t next_u64() {
        std::uint32_t lo = next_u32();
        std::uint32_t hi = next_u32();
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    }

    // Uniform on (0, 1): 53-bit mantissa offset by half an ulp so neither
    // endpoint can occur.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; pairs are generated together and the
    // second value cached, keeping consumption deterministic.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    void fill_normal(Matrix& m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) m(i, j) = normal();
    }

    Matrix normal_matrix(Index rows, Index cols) {
        Matrix m(rows, cols);
        fill_normal(m);
        return m;
    }

    // Standardized non-Gaussian draws used by the robustness scenarios.
    double chi2_df6_standardized() {
        double s = 0.0;
        for (int i = 0; i < 6; ++i) {
            double z = normal();
            s += z * z;
        }
        return (s - 6.0) / std::sqrt(12.0);
    }

    double t_df6_standardized() {
        double z = normal();
        double s = 0.0;
        for (int i = 0; i < 6; ++i) {
            double w = normal();
            s += w * w;
        }
        // var(t_6) = 6/4
        return z / std::sqrt(s / 6.0) / std::sqrt(1.5);
    }

  private:
    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            buf_ = gen_.next_block();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    Philox4x32 gen_;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

inline RandomStream make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return RandomStream(seed, stream_id);
}

}  // namespace rdmkit
