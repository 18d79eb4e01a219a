#pragma once

#include <gnc/error.hpp>
#include <gnc/glasso.hpp>
#include <gnc/graph.hpp>
#include <gnc/harness.hpp>
#include <gnc/kmeans.hpp>
#include <gnc/pipeline.hpp>
#include <gnc/sim.hpp>
#include <gnc/smoother.hpp>
