#pragma once

#include "noisediag/error.hpp"
#include "noisediag/numeric.hpp"
#include "noisediag/tensor.hpp"
#include "noisediag/npy.hpp"
#include "noisediag/dataset.hpp"
#include "noisediag/scores.hpp"
#include "noisediag/rng.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/fft.hpp"
#include "noisediag/geometry.hpp"
#include "noisediag/spectral.hpp"
#include "noisediag/paired.hpp"
#include "noisediag/synth.hpp"
#include "noisediag/report.hpp"
#include "noisediag/cli.hpp"
