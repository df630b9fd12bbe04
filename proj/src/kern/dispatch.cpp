#include <cstdlib>
#include <cstring>

#include "macn/kern/kernels.hpp"

namespace macn::kern {

const Ops* avx2_table();  // defined in kernels_avx2.cpp

const Ops* avx2_ops() {
  const Ops* table = avx2_table();
  if (table == nullptr) return nullptr;
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return table;
#endif
  return nullptr;
}

namespace {

const Ops& select() {
  if (const char* force = std::getenv("MACN_LAB_KERNELS")) {
    if (std::strcmp(force, "scalar") == 0) return scalar_ops();
    if (std::strcmp(force, "avx2") == 0 && avx2_ops()) return *avx2_ops();
  }
  if (const Ops* v = avx2_ops()) return *v;
  return scalar_ops();
}

}  // namespace

const Ops& active() {
  static const Ops& chosen = select();
  return chosen;
}

}  // namespace macn::kern
