#pragma once

#include <set>

#include "chase/types.hpp"

namespace chase {

// Assembles the heterogeneous invocation graph from one trace bundle.
//
// Repeated occurrences of the same instance id collapse into one node that
// keeps the earliest start_ts. order_k is assigned by (start_ts, id)
// ascending. Every instance receives exactly one log node (empty when the
// bundle has no log record for it); metric series are NaN-imputed by
// last-observation-carried-forward, remaining gaps become zero.
//
// Throws EmptyTrace, DanglingReference, CycleDetected, EmptySeries.
InvocationGraph build_invocation_graph(const TraceBundle& bundle);

// All instance indices with a directed path to v (v excluded).
std::set<int> topological_ancestors(const InvocationGraph& g, int v);

// All instance indices reachable from v (v excluded).
std::set<int> topological_descendants(const InvocationGraph& g, int v);

// True iff the instance/invocation subgraph contains no directed cycle.
bool is_dag(int num_nodes, const std::vector<InvocationEdge>& edges);

} // namespace chase
