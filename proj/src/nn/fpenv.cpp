#include "dstrip/nn/fpenv.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace dstrip::nn {

namespace {

#if defined(__SSE__)
constexpr unsigned kFlushBits = 0x8040; // FTZ | DAZ

void set_all_threads(unsigned csr) {
  _mm_setcsr(csr);
#pragma omp parallel
  { _mm_setcsr(csr); }
}
#endif

} // namespace

FlushDenormals::FlushDenormals() {
#if defined(__SSE__)
  saved_ = _mm_getcsr();
  set_all_threads(saved_ | kFlushBits);
#endif
}

FlushDenormals::~FlushDenormals() {
#if defined(__SSE__)
  set_all_threads(saved_);
#endif
}

} // namespace dstrip::nn
