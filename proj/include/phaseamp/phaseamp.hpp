#pragma once

// Umbrella header for the library. The JSON run configuration lives in
// phaseamp/config.hpp and is included separately since it needs json.hpp.

#include "phaseamp/core.hpp"
#include "phaseamp/random.hpp"
#include "phaseamp/parallel.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/autodiff.hpp"
#include "phaseamp/neural.hpp"
#include "phaseamp/objective.hpp"
#include "phaseamp/adam.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/checkpoint.hpp"
#include "phaseamp/preprocess.hpp"
#include "phaseamp/spectrum.hpp"
#include "phaseamp/training.hpp"
#include "phaseamp/simulation.hpp"
#include "phaseamp/feedback.hpp"
#include "phaseamp/dmp.hpp"
#include "phaseamp/scenario.hpp"
