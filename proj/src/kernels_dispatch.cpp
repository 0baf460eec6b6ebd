#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "g2flow/kernels.hpp"

namespace g2flow::kernels {
namespace {

const Backend* g_active = nullptr;

bool avx2_available() {
#if G2FLOW_HAVE_AVX2
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Backend* by_name(const char* name) {
  if (std::strcmp(name, "scalar") == 0) return &scalar_backend();
#if G2FLOW_HAVE_AVX2
  if (std::strcmp(name, "avx2") == 0 && avx2_available())
    return &avx2_backend();
#endif
  return nullptr;
}

const Backend* choose() {
  if (const char* env = std::getenv("G2FLOW_KERNELS")) {
    if (const Backend* b = by_name(env)) return b;
    std::fprintf(stderr,
                 "g2flow: kernel backend '%s' unavailable, using scalar\n",
                 env);
    return &scalar_backend();
  }
#if G2FLOW_HAVE_AVX2
  if (avx2_available()) return &avx2_backend();
#endif
  return &scalar_backend();
}

}  // namespace

const Backend& active() {
  if (!g_active) g_active = choose();
  return *g_active;
}

bool force(const char* name) {
  const Backend* b = by_name(name);
  if (!b) return false;
  g_active = b;
  return true;
}

}  // namespace g2flow::kernels
