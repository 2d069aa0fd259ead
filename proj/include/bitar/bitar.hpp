#pragma once

// Umbrella header: the whole library.

#include "bitar/bytes.hpp"
#include "bitar/checkpoint.hpp"
#include "bitar/container.hpp"
#include "bitar/correction.hpp"
#include "bitar/error.hpp"
#include "bitar/featurizer.hpp"
#include "bitar/grid.hpp"
#include "bitar/ivc.hpp"
#include "bitar/model.hpp"
#include "bitar/nn.hpp"
#include "bitar/numeric.hpp"
#include "bitar/pyramid.hpp"
#include "bitar/quantizer.hpp"
#include "bitar/random.hpp"
#include "bitar/resample.hpp"
#include "bitar/rope2d.hpp"
#include "bitar/sampler.hpp"
#include "bitar/schedule.hpp"
#include "bitar/tensor.hpp"
#include "bitar/toy_data.hpp"
#include "bitar/trainer.hpp"
