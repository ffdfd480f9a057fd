#pragma once

#include "reef/baselines.hpp"
#include "reef/cka.hpp"
#include "reef/error.hpp"
#include "reef/kernel.hpp"
#include "reef/matrix.hpp"
#include "reef/probe.hpp"
#include "reef/rng.hpp"
#include "reef/synth.hpp"
#include "reef/tensor_store.hpp"
#include "reef/transforms.hpp"
#include "reef/verdict.hpp"
#include "reef/version.hpp"
