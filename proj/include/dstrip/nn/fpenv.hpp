#pragma once

namespace dstrip::nn {

/// Flushes subnormal floats to zero on the calling thread and the OpenMP
/// worker threads for its lifetime. Saturated softmax outputs otherwise
/// produce subnormal gradients that slow the convolutions by an order of
/// magnitude. No-op on targets without SSE control registers.
class FlushDenormals {
public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
  unsigned saved_ = 0;
};

} // namespace dstrip::nn
