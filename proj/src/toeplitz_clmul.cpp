// PCLMULQDQ-backed carry-less multiply kernel. This translation unit is the
// only one built with -mpclmul; callers go through the runtime dispatch below.

#include <cstddef>
#include <cstdint>

#if defined(__PCLMUL__) && defined(__x86_64__)
#include <immintrin.h>
#define QKDSIM_PCLMUL_KERNEL 1
#endif

namespace qkdsim::detail {

bool clmul_runtime_supported() {
#if defined(QKDSIM_PCLMUL_KERNEL)
    return __builtin_cpu_supports("pclmul");
#else
    return false;
#endif
}

void clmul_accumulate_fast(const std::uint64_t* a, std::size_t na,
                           const std::uint64_t* b, std::size_t nb,
                           std::uint64_t* out) {
#if defined(QKDSIM_PCLMUL_KERNEL)
    for (std::size_t j = 0; j < nb; ++j) {
        if (b[j] == 0) continue;
        const __m128i bv = _mm_set_epi64x(0, static_cast<long long>(b[j]));
        for (std::size_t i = 0; i < na; ++i) {
            if (a[i] == 0) continue;
            const __m128i av = _mm_set_epi64x(0, static_cast<long long>(a[i]));
            const __m128i prod = _mm_clmulepi64_si128(av, bv, 0x00);
            out[i + j] ^= static_cast<std::uint64_t>(_mm_cvtsi128_si64(prod));
            out[i + j + 1] ^= static_cast<std::uint64_t>(
                _mm_cvtsi128_si64(_mm_unpackhi_epi64(prod, prod)));
        }
    }
#else
    (void)a;
    (void)na;
    (void)b;
    (void)nb;
    (void)out;
#endif
}

}  // namespace qkdsim::detail
