#pragma once

#include "baselines.hpp"
#include "bench.hpp"
#include "byte_io.hpp"
#include "codec.hpp"
#include "coder.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "image_io.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "random.hpp"
#include "trainer.hpp"
