#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csihar/tensor.hpp"

namespace csihar {

// Predicate applied to zero or more terms. Terms starting with an uppercase
// letter are variables, everything else is a constant.
struct Atom {
  std::string predicate;
  std::vector<std::string> args;
};

bool is_variable(const std::string& term);
std::string to_string(const Atom& atom);

// Parses a single atom such as "activity(w, walk)".
Atom parse_atom(const std::string& text);

struct ProbFact {
  double probability = 0.0;
  Atom atom;
};

// "nn(m_legs, [X], Y, [yes, no])::move_legs(X, Y)." declares that a network
// called m_legs maps an instance X to a distribution over the listed values,
// exposed through the predicate move_legs.
struct NeuralDecl {
  std::string network;
  std::string input_var;
  std::string output_var;
  std::vector<std::string> values;
  std::string predicate;
};

struct Clause {
  Atom head;
  std::vector<Atom> body;
};

struct RuleProgram {
  std::vector<ProbFact> prob_facts;
  std::vector<NeuralDecl> neural_decls;
  std::vector<Clause> clauses;
};

// Parses a rule file. The grammar is line oriented with % comments:
//   prob_fact := FLOAT "::" atom "."
//   neural    := "nn(" name ", [" VAR "], " VAR ", [" value ("," value)* "])"
//                "::" pred "(" VAR "," VAR ")" "."
//   clause    := atom ":-" literal ("," literal)* "."
// A statement may span lines; it ends at the closing period. Throws
// std::invalid_argument with a "line L, column C" prefix on syntax errors,
// duplicate neural declarations, facts that are also clause heads, and
// cyclic clause dependencies.
RuleProgram parse_program(const std::string& text);

// Connects indexed predicates to feature-head outputs. An atom such as
// move_upper_legs_2(X, yes) resolves through the entry for
// "move_upper_legs_2": the named head evaluated on sub-interval 2, with the
// value list giving the softmax output index of each value ("yes" -> 0).
// Interval 0 is reserved for whole-window heads, reached by using a declared
// neural predicate without an index.
struct TemporalBinding {
  struct Entry {
    std::string head;
    std::size_t interval = 0;
    std::vector<std::string> values;
  };
  std::map<std::string, Entry> entries;
};

// Builds the conventional binding: every neural predicate p gains entries
// p_1 .. p_intervals pointing at its own network and value list.
TemporalBinding derive_bindings(const RuleProgram& program,
                                std::size_t intervals = 10);

// One probability slot of a compiled circuit: the output of `head` on
// `interval` for the value at `value_index` of the bound value list.
// Probabilistic facts do not appear here; their probabilities are constants
// baked into the circuit.
struct NeuralLeaf {
  std::string head;
  std::size_t interval = 0;
  std::size_t value_index = 0;
  std::string value;
};

bool operator==(const NeuralLeaf& a, const NeuralLeaf& b);

// Sum-of-products DAG computing P(query). Sum children correspond to
// mutually exclusive possible worlds. Nodes are stored in evaluation order:
// every child precedes its parents.
struct ArithmeticCircuit {
  enum class NodeKind {
    Constant,    // fixed value
    FactLeaf,    // probability of a ground fact, or 1 - p when complement
    NeuralLeaf,  // leaf_probs[leaf] at evaluation time
    Residual,    // 1 - sum of the child leaves of one head and interval
    Product,
    Sum,
  };
  struct Node {
    NodeKind kind = NodeKind::Constant;
    double value = 0.0;
    bool complement = false;
    std::size_t leaf = 0;
    std::vector<std::size_t> children;
  };
  std::vector<Node> nodes;
  std::size_t root = 0;
  std::vector<NeuralLeaf> leaves;
};

// The neural leaves the query can reach, sorted by head, interval and value
// index. ground_and_compile stores exactly this list in its circuit, and
// brute_force_query reads its leaf_probs argument in the same order.
std::vector<NeuralLeaf> collect_leaves(const RuleProgram& program,
                                       const Atom& query,
                                       const TemporalBinding& binding);

// Grounds the program towards the query and compiles the weighted count of
// satisfying worlds into a circuit. The query must be ground and its
// predicate defined. Throws std::invalid_argument when an indexed predicate
// has no binding, when a body variable is not bound by its clause head, and
// when the program exceeds the 20 ground fact capacity.
ArithmeticCircuit ground_and_compile(const RuleProgram& program,
                                     const Atom& query,
                                     const TemporalBinding& binding);

struct CircuitEval {
  double probability = 0.0;
  std::vector<double> leaf_gradients;
};

// Evaluates the circuit at the given leaf probabilities and returns the
// probability together with d(probability)/d(leaf) for every leaf, computed
// by one reverse sweep. leaf_probs must align with circuit.leaves and stay
// within [0, 1]; the values bound to one head and interval must not sum to
// more than 1.
CircuitEval eval_circuit(const ArithmeticCircuit& circuit,
                         const std::vector<double>& leaf_probs);

// Oracle for ground_and_compile + eval_circuit: enumerates every world state
// of the program's facts and reachable head intervals, runs consequence
// closure in each, and sums the weights of the worlds where the query holds.
// leaf_probs is read in collect_leaves order. Same capacity bound as the
// compiler.
double brute_force_query(const RuleProgram& program, const Atom& query,
                         const TemporalBinding& binding,
                         const std::vector<double>& leaf_probs);

// Records circuit evaluation on the tape as one node so that a loss on the
// returned probability backpropagates into the leaf tensors. Each leaf
// tensor must hold exactly one element.
Tensor circuit_probability(Tape& tape, const ArithmeticCircuit& circuit,
                           const std::vector<Tensor>& leaf_tensors);

// Distribution tensors keyed by (head, interval), interval 1-based as in the
// rule text and 0 for whole-window heads.
using HeadOutputs = std::map<std::pair<std::string, std::size_t>, Tensor>;

// Convenience over the tensor overload: pulls each leaf's probability out of
// the matching head distribution (rank 1, indexed by value_index) and feeds
// the scalars to circuit_probability.
Tensor circuit_probability(Tape& tape, const ArithmeticCircuit& circuit,
                           const HeadOutputs& head_outputs);

}  // namespace csihar
