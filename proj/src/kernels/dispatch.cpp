#include <atomic>
#include <cstdlib>
#include <cstring>

#include "probelab/kernels.hpp"

namespace probelab::kernels {

extern const Table<float> kScalarTableF32;
extern const Table<double> kScalarTableF64;
extern const Table<float> kAvx2TableF32;
extern const Table<double> kAvx2TableF64;
extern const bool kHaveAvx2Tables;

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return kHaveAvx2Tables && __builtin_cpu_supports("avx2") &&
         __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Isa resolve_default() {
  if (const char* env = std::getenv("PROBELAB_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Isa::avx2;
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{resolve_default()};
  return slot;
}

}  // namespace

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) isa = Isa::scalar;
  active_slot().store(isa, std::memory_order_relaxed);
}

template <>
const Table<float>& table_for<float>(Isa isa) {
  return (isa == Isa::avx2 && kHaveAvx2Tables) ? kAvx2TableF32 : kScalarTableF32;
}

template <>
const Table<double>& table_for<double>(Isa isa) {
  return (isa == Isa::avx2 && kHaveAvx2Tables) ? kAvx2TableF64 : kScalarTableF64;
}

}  // namespace probelab::kernels
