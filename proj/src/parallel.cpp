#include "radhop/parallel.hpp"

#include <atomic>

namespace radhop {

int hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

namespace {
std::atomic<int> g_default_threads{0};
}

int default_threads() { return g_default_threads.load(); }

void set_default_threads(int n) { g_default_threads.store(n < 0 ? 0 : n); }

} // namespace radhop
