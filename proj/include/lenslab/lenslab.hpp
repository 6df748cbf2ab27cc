#pragma once

// Umbrella header: the whole library.

#include "lenslab/common.hpp"
#include "lenslab/config.hpp"
#include "lenslab/corpus.hpp"
#include "lenslab/detect.hpp"
#include "lenslab/distrib.hpp"
#include "lenslab/explain.hpp"
#include "lenslab/gemm.hpp"
#include "lenslab/lens.hpp"
#include "lenslab/lookback.hpp"
#include "lenslab/model.hpp"
#include "lenslab/pipeline.hpp"
#include "lenslab/stats.hpp"
#include "lenslab/svg.hpp"
#include "lenslab/trace.hpp"
#include "lenslab/train.hpp"
#include "lenslab/vocab.hpp"
