#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ATen/Parallel.h>

namespace {

// Replay-equality tests compare losses and checkpoints bitwise; a single
// compute thread keeps reduction order fixed.
struct ThreadPin {
  ThreadPin() { at::set_num_threads(1); }
};
const ThreadPin pin;

}  // namespace
