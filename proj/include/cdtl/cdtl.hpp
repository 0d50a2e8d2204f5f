#pragma once

#include "cdtl/bytes.hpp"
#include "cdtl/classifier.hpp"
#include "cdtl/dataset.hpp"
#include "cdtl/distance.hpp"
#include "cdtl/encoder.hpp"
#include "cdtl/error.hpp"
#include "cdtl/experiment.hpp"
#include "cdtl/layers.hpp"
#include "cdtl/metrics.hpp"
#include "cdtl/optimizer.hpp"
#include "cdtl/rng.hpp"
#include "cdtl/sampler.hpp"
#include "cdtl/synthetic.hpp"
#include "cdtl/tensor.hpp"
#include "cdtl/trainer.hpp"
#include "cdtl/triplet_loss.hpp"
