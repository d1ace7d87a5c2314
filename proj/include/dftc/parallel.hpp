#pragma once

namespace dftc {

// Every data-parallel kernel has an OpenMP path and a serial reference
// path. Both produce identical results; reductions always run in a fixed
// index order after the parallel region.
enum class Execution { Serial, Parallel };

int max_threads();

}  // namespace dftc
