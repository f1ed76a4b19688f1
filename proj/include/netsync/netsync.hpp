#ifndef NETSYNC_NETSYNC_HPP_
#define NETSYNC_NETSYNC_HPP_

// Umbrella header: simulation and analysis of position/velocity
// synchronization for networks of second-order agents that exchange sampled,
// delayed, lossy messages over a directed graph.

#include "netsync/analysis.hpp"
#include "netsync/channel.hpp"
#include "netsync/consensus.hpp"
#include "netsync/engine.hpp"
#include "netsync/graph.hpp"
#include "netsync/plant.hpp"
#include "netsync/scenario.hpp"
#include "netsync/syncterm.hpp"
#include "netsync/trace.hpp"

#endif  // NETSYNC_NETSYNC_HPP_
