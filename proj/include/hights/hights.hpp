#pragma once

#include "hights/errors.hpp"
#include "hights/tensor.hpp"
#include "hights/autodiff.hpp"
#include "hights/data.hpp"
#include "hights/temporal.hpp"
#include "hights/complex.hpp"
#include "hights/spatial.hpp"
#include "hights/objectives.hpp"
#include "hights/config.hpp"
#include "hights/model.hpp"
#include "hights/optim.hpp"
#include "hights/checkpoint.hpp"
#include "hights/metrics.hpp"
#include "hights/train.hpp"
