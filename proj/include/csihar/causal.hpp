#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "csihar/pose.hpp"

namespace csihar {

// Binary time series, one row per step and one column per named variable.
struct BinaryEventPanel {
  std::vector<std::string> variables;
  std::vector<std::vector<int>> values;

  std::size_t steps() const { return values.size(); }
};

// Rejects duplicate or missing variable names, ragged rows and values
// outside {0, 1}.
void validate(const BinaryEventPanel& panel);

// Stacks per-interval event vectors into a panel named after the events.
BinaryEventPanel panel_from_events(const std::vector<BinaryEvents>& events);

// A variable observed `lag` steps before the reference row.
struct LaggedVar {
  std::string variable;
  std::size_t lag = 0;
};

// Plug-in conditional mutual information I(x; y | z) in bits, estimated from
// the empirical joint counts over all rows where every lagged value exists.
// y is read at the reference row. Cells with zero count contribute zero.
// At most three conditioning variables are supported.
double cmi_plugin(const BinaryEventPanel& panel, const LaggedVar& x,
                  const std::string& y, const std::vector<LaggedVar>& z);

struct ShuffleResult {
  double p_value = 1.0;
  // Set when every stratum holds a single row, leaving nothing to permute.
  bool degenerate = false;
};

// Permutation test of I(x; y | z) > 0. The x column is reshuffled uniformly
// within strata of identical z-assignments (globally when z is empty) and
// the CMI recomputed per permutation; p = (1 + #{perm >= observed}) /
// (permutations + 1). Deterministic for a given seed; permutations >= 99.
ShuffleResult local_shuffle_pvalue(const BinaryEventPanel& panel,
                                   const LaggedVar& x, const std::string& y,
                                   const std::vector<LaggedVar>& z,
                                   std::size_t permutations,
                                   std::uint64_t seed);

struct CausalEdge {
  std::string source;
  std::string target;
  std::size_t lag = 1;
  double cmi_bits = 0.0;
  double p_value = 1.0;
};

struct CausalGraph {
  std::vector<CausalEdge> edges;
};

// Two-phase lagged discovery. Phase one screens, per target, every
// (variable, lag <= max_lag) candidate: condition-set sizes 0, 1 and 2 are
// tried in turn, each candidate tested given the strongest other remaining
// candidates and dropped as soon as its p-value exceeds alpha. Phase two
// confirms each surviving link with a momentary test conditioned on the
// target's other parents and the source's own parents shifted by the link
// lag (at most three conditions, strongest first). Edges carry the
// confirming test's CMI and p-value and are sorted by target, source, lag.
// Requires steps >= 50, alpha in (0, 1) and permutations >= 99.
CausalGraph discover_lagged_parents(const BinaryEventPanel& panel,
                                    std::size_t max_lag, double alpha,
                                    std::size_t permutations,
                                    std::uint64_t seed);

// Renders the graph as one activity clause whose body holds an indexed
// predicate per distinct (source, lag), with yes polarity, ready for hand
// editing and rule parsing. An empty graph yields "% no edges found".
std::string graph_to_temporal_rules(const CausalGraph& graph,
                                    const std::string& activity);

// CSV with header source,target,lag,cmi_bits,p_value.
std::string graph_to_csv(const CausalGraph& graph);

// Panel CSV: a header of variable names, then one 0/1 row per step.
void save_panel(const BinaryEventPanel& panel, const std::string& path);
BinaryEventPanel load_panel(const std::string& path);

}  // namespace csihar
