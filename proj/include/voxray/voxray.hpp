// Umbrella header.

#pragma once

#include "camera.hpp"
#include "dataset.hpp"
#include "dataset_gen.hpp"
#include "depth_priors.hpp"
#include "eval.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "losses.hpp"
#include "math.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "png_io.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "trainer.hpp"
#include "volume_render.hpp"
#include "voxel_field.hpp"
