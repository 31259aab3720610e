#pragma once

#include "wcpvol/conformal.hpp"
#include "wcpvol/config.hpp"
#include "wcpvol/dataset_io.hpp"
#include "wcpvol/density_ratio.hpp"
#include "wcpvol/error.hpp"
#include "wcpvol/experiment.hpp"
#include "wcpvol/latent.hpp"
#include "wcpvol/random.hpp"
#include "wcpvol/report.hpp"
#include "wcpvol/synthgen.hpp"
#include "wcpvol/trimask.hpp"
#include "wcpvol/volumetric_core.hpp"
