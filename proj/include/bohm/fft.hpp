#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <tuple>

namespace bohm::detail {

// Thin wrapper over FFTW. Plans are created once per shape with FFTW_ESTIMATE
// (deterministic, no timing-based planning) and executed through the new-array
// interface, so any unaligned buffer of the right shape can be transformed.
// Transforms are unnormalized, as in FFTW.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

  ~FftPlans() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  // `rank` 1 or 2; for rank 1 `howmany` independent rows of length n0 laid out
  // contiguously (row r starts at r * n0). For rank 2, the array is n1 rows of n0
  // (x fastest), i.e. FFTW dims {n1, n0}.
  fftw_plan get(int rank, int n0, int n1, int howmany, int sign) {
    const Key key{rank, n0, n1, howmany, sign};
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const int total = rank == 1 ? n0 * howmany : n0 * n1;
    auto* buf = fftw_alloc_complex(static_cast<size_t>(total));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    if (rank == 1) {
      int n[] = {n0};
      plan = fftw_plan_many_dft(1, n, howmany, buf, nullptr, 1, n0, buf, nullptr, 1, n0, sign, flags);
    } else {
      plan = fftw_plan_dft_2d(n1, n0, buf, buf, sign, flags);
    }
    fftw_free(buf);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  FftPlans() = default;
  using Key = std::tuple<int, int, int, int, int>;
  std::mutex mutex_;
  std::map<Key, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

/// In-place transform of `data` (shape as described in FftPlans::get).
inline void fft_inplace(std::span<std::complex<double>> data, int rank, int n0, int n1, int howmany,
                        bool forward) {
  fftw_plan plan = FftPlans::instance().get(rank, n0, n1, howmany, forward ? FFTW_FORWARD : FFTW_BACKWARD);
  fftw_execute_dft(plan, as_fftw(data.data()), as_fftw(data.data()));
}

}  // namespace bohm::detail
