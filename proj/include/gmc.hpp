#pragma once

// Everything at once.  Individual headers under gmc/ can be included on their own.

#include "gmc/error.hpp"
#include "gmc/rng.hpp"
#include "gmc/lattice.hpp"
#include "gmc/fft.hpp"
#include "gmc/quadrature.hpp"
#include "gmc/parallel.hpp"
#include "gmc/report.hpp"
#include "gmc/kernels.hpp"
#include "gmc/field_synthesis.hpp"
#include "gmc/snapshot.hpp"
#include "gmc/chaos_measures.hpp"
#include "gmc/spine.hpp"
#include "gmc/estimators.hpp"
#include "gmc/free_fields.hpp"
#include "gmc/kpz.hpp"
#include "gmc/runner/config.hpp"
#include "gmc/runner/experiments.hpp"
#include "gmc/runner/run.hpp"
