#include "ysf/parallel.hpp"

#include <cstdlib>
#include <memory>

namespace ysf {

namespace {
int g_workers = 0;
std::unique_ptr<ThreadPool> g_pool;
}  // namespace

int default_workers() {
  if (const char* env = std::getenv("YSF_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

void set_workers(int workers) {
  const int w = workers >= 1 ? workers : default_workers();
  if (g_pool && g_workers == w) return;
  g_pool = std::make_unique<ThreadPool>(w);
  g_workers = w;
}

ThreadPool& pool() {
  if (!g_pool) set_workers(0);
  return *g_pool;
}

}  // namespace ysf
