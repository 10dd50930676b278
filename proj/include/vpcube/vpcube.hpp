#pragma once

#include "vpcube/core.hpp"
#include "vpcube/geometry.hpp"
#include "vpcube/maps.hpp"
#include "vpcube/norms.hpp"
#include "vpcube/permutations.hpp"
#include "vpcube/pipelines.hpp"
#include "vpcube/serialization.hpp"
#include "vpcube/suites.hpp"
#include "vpcube/translation.hpp"
