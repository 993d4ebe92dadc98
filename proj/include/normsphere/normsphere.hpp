#pragma once

#include "normsphere/errors.hpp"
#include "normsphere/linalg.hpp"
#include "normsphere/norm.hpp"
#include "normsphere/sphere.hpp"
#include "normsphere/geom_gradient.hpp"
