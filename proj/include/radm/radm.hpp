#pragma once

#include "radm/checkpoint.hpp"
#include "radm/config_io.hpp"
#include "radm/core.hpp"
#include "radm/decoder.hpp"
#include "radm/diffusion.hpp"
#include "radm/encoders.hpp"
#include "radm/gram.hpp"
#include "radm/losses.hpp"
#include "radm/metrics.hpp"
#include "radm/model.hpp"
#include "radm/optim.hpp"
#include "radm/pipeline.hpp"
#include "radm/raster.hpp"
#include "radm/render.hpp"
#include "radm/serialization.hpp"
#include "radm/synthdata.hpp"
#include "radm/tensor.hpp"
#include "radm/training.hpp"
#include "radm/vtram.hpp"
