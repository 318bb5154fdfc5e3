#pragma once

// Minimal reverse-mode differentiable-array engine: exactly the operations
// the waypoint model needs, f32 by default with the same templates usable
// at f64 for shadow-mode gradient checks.

#include "wtp/diff/tensor.hpp"    // IWYU pragma: export
#include "wtp/diff/gemm.hpp"      // IWYU pragma: export
#include "wtp/diff/tape.hpp"      // IWYU pragma: export
#include "wtp/diff/ops.hpp"       // IWYU pragma: export
#include "wtp/diff/optim.hpp"     // IWYU pragma: export
#include "wtp/diff/checkpoint.hpp"  // IWYU pragma: export
