#include "care/kernels.hpp"

namespace care::kernels {
namespace {

BackendKind g_active = BackendKind::Parallel;

}  // namespace

const Backend& active_backend() {
  return g_active == BackendKind::Serial ? serial_backend() : parallel_backend();
}

BackendKind active_backend_kind() { return g_active; }

void set_active_backend(BackendKind kind) { g_active = kind; }

}  // namespace care::kernels
