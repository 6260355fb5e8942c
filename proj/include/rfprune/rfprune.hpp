#pragma once

#include "rfprune/tensor.hpp"
#include "rfprune/network.hpp"
#include "rfprune/kernels.hpp"
#include "rfprune/engine.hpp"
#include "rfprune/train.hpp"
#include "rfprune/gradcheck.hpp"
#include "rfprune/activations.hpp"
#include "rfprune/presets.hpp"
#include "rfprune/serialize.hpp"
#include "rfprune/radarsynth.hpp"
#include "rfprune/stft.hpp"
#include "rfprune/dataset.hpp"
#include "rfprune/plan.hpp"
#include "rfprune/saliency.hpp"
#include "rfprune/surgeon.hpp"
#include "rfprune/schedules.hpp"
#include "rfprune/experiment.hpp"
#include "rfprune/harness.hpp"
