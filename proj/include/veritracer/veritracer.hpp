#pragma once

#include "veritracer/autodiff.hpp"
#include "veritracer/bounds.hpp"
#include "veritracer/certify.hpp"
#include "veritracer/config.hpp"
#include "veritracer/dataset.hpp"
#include "veritracer/eval.hpp"
#include "veritracer/losses.hpp"
#include "veritracer/model.hpp"
#include "veritracer/ops.hpp"
#include "veritracer/schema.hpp"
#include "veritracer/serialize.hpp"
#include "veritracer/simul_crown.hpp"
#include "veritracer/toml.hpp"
#include "veritracer/trainer.hpp"
