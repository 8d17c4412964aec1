#include "fft_engine.hpp"

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace matchkit::detail {
namespace {

enum class PlanKind { R2C, C2R, R2R };
using PlanKey = std::tuple<PlanKind, int, int, int>;

struct PlanCache {
  std::mutex mutex;
  std::map<PlanKey, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(PlanKind kind, int n, int k0 = 0, int k1 = 0) {
    std::lock_guard lock(mutex);
    const PlanKey key{kind, n, k0, k1};
    if (auto it = plans.find(key); it != plans.end()) return it->second;

    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const std::size_t real_size = static_cast<std::size_t>(n) * n;
    const std::size_t half_size = static_cast<std::size_t>(n) * (n / 2 + 1);
    std::vector<double> real(real_size);
    std::vector<std::complex<double>> cplx(half_size);
    auto* c = reinterpret_cast<fftw_complex*>(cplx.data());

    fftw_plan plan = nullptr;
    switch (kind) {
      case PlanKind::R2C:
        plan = fftw_plan_dft_r2c_2d(n, n, real.data(), c, flags);
        break;
      case PlanKind::C2R:
        plan = fftw_plan_dft_c2r_2d(n, n, c, real.data(), flags);
        break;
      case PlanKind::R2R: {
        std::vector<double> out(real_size);
        plan = fftw_plan_r2r_2d(n, n, real.data(), out.data(), static_cast<fftw_r2r_kind>(k0),
                                static_cast<fftw_r2r_kind>(k1), flags);
        break;
      }
    }
    plans.emplace(key, plan);
    return plan;
  }
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void forward_r2c(int n, const double* in, std::complex<double>* out) {
  fftw_plan plan = cache().get(PlanKind::R2C, n);
  fftw_execute_dft_r2c(plan, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void inverse_c2r(int n, std::complex<double>* in, double* out) {
  fftw_plan plan = cache().get(PlanKind::C2R, n);
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(in), out);
}

void r2r(int n, fftw_r2r_kind kind0, fftw_r2r_kind kind1, const double* in, double* out) {
  fftw_plan plan = cache().get(PlanKind::R2R, n, kind0, kind1);
  fftw_execute_r2r(plan, const_cast<double*>(in), out);
}

}  // namespace matchkit::detail
