#pragma once

#include "ifem/assembly.hpp"
#include "ifem/benchmark.hpp"
#include "ifem/errors.hpp"
#include "ifem/geometry.hpp"
#include "ifem/interface_geometry.hpp"
#include "ifem/io.hpp"
#include "ifem/mesh.hpp"
#include "ifem/solver.hpp"
#include "ifem/sparse.hpp"
