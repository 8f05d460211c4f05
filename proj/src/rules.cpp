#include "csihar/rules.hpp"

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace csihar {
namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

[[noreturn]] void fail_at(int line, int col, const std::string& message) {
  throw std::invalid_argument("line " + std::to_string(line) + ", column " +
                              std::to_string(col) + ": " + message);
}

enum class TokKind {
  Ident,
  Variable,
  Number,
  ColonColon,
  ColonDash,
  LParen,
  RParen,
  LBracket,
  RBracket,
  Comma,
  Dot,
  End,
};

struct Token {
  TokKind kind = TokKind::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int col = 1;
};

std::vector<Token> lex(const std::string& text) {
  std::vector<Token> toks;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (text[i + k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    i += n;
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '%') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j + 1 < text.size() && text[j] == '.' &&
          std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      t.kind = TokKind::Number;
      t.text = text.substr(i, j - i);
      t.number = std::stod(t.text);
      advance(j - i);
      toks.push_back(std::move(t));
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
        ++j;
      }
      t.kind = std::isupper(static_cast<unsigned char>(c)) ? TokKind::Variable
                                                           : TokKind::Ident;
      t.text = text.substr(i, j - i);
      advance(j - i);
      toks.push_back(std::move(t));
      continue;
    }
    switch (c) {
      case ':':
        if (i + 1 < text.size() && text[i + 1] == ':') {
          t.kind = TokKind::ColonColon;
          advance(2);
        } else if (i + 1 < text.size() && text[i + 1] == '-') {
          t.kind = TokKind::ColonDash;
          advance(2);
        } else {
          fail_at(line, col, "expected '::' or ':-'");
        }
        break;
      case '(':
        t.kind = TokKind::LParen;
        advance(1);
        break;
      case ')':
        t.kind = TokKind::RParen;
        advance(1);
        break;
      case '[':
        t.kind = TokKind::LBracket;
        advance(1);
        break;
      case ']':
        t.kind = TokKind::RBracket;
        advance(1);
        break;
      case ',':
        t.kind = TokKind::Comma;
        advance(1);
        break;
      case '.':
        t.kind = TokKind::Dot;
        advance(1);
        break;
      default:
        fail_at(line, col, std::string("unexpected character '") + c + "'");
    }
    toks.push_back(std::move(t));
  }
  Token end;
  end.kind = TokKind::End;
  end.line = line;
  end.col = col;
  toks.push_back(std::move(end));
  return toks;
}

struct Parser {
  const std::vector<Token>& toks;
  std::size_t pos = 0;

  const Token& peek() const { return toks[pos]; }
  const Token& peek2() const {
    return toks[std::min(pos + 1, toks.size() - 1)];
  }
  Token take() { return toks[pos++]; }

  [[noreturn]] void fail(const Token& t, const std::string& message) const {
    fail_at(t.line, t.col, message);
  }

  Token expect(TokKind kind, const std::string& what) {
    if (peek().kind != kind) fail(peek(), "expected " + what);
    return take();
  }

  std::string term() {
    const Token& t = peek();
    if (t.kind == TokKind::Ident || t.kind == TokKind::Variable ||
        t.kind == TokKind::Number) {
      return take().text;
    }
    fail(t, "expected a term");
  }

  Atom atom() {
    const Token& t = peek();
    if (t.kind == TokKind::Variable) fail(t, "predicate names must be lowercase");
    Token name = expect(TokKind::Ident, "a predicate name");
    Atom a;
    a.predicate = name.text;
    if (peek().kind == TokKind::LParen) {
      take();
      a.args.push_back(term());
      while (peek().kind == TokKind::Comma) {
        take();
        a.args.push_back(term());
      }
      expect(TokKind::RParen, "')'");
    }
    return a;
  }
};

std::optional<std::pair<std::string, std::size_t>> split_index(
    const std::string& predicate) {
  auto underscore = predicate.rfind('_');
  if (underscore == std::string::npos || underscore + 1 >= predicate.size()) {
    return std::nullopt;
  }
  std::string suffix = predicate.substr(underscore + 1);
  if (suffix.size() > 9) return std::nullopt;
  for (char c : suffix) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  }
  return std::make_pair(predicate.substr(0, underscore),
                        static_cast<std::size_t>(std::stoul(suffix)));
}

// Grounds a goal against a clause head: variables in the head bind to the
// goal's constants, repeated variables must agree.
std::optional<std::map<std::string, std::string>> unify(const Atom& goal,
                                                        const Atom& head) {
  if (goal.predicate != head.predicate || goal.args.size() != head.args.size()) {
    return std::nullopt;
  }
  std::map<std::string, std::string> subst;
  for (std::size_t i = 0; i < head.args.size(); ++i) {
    if (is_variable(head.args[i])) {
      auto [it, inserted] = subst.emplace(head.args[i], goal.args[i]);
      if (!inserted && it->second != goal.args[i]) return std::nullopt;
    } else if (head.args[i] != goal.args[i]) {
      return std::nullopt;
    }
  }
  return subst;
}

Atom substitute(const Atom& atom, const std::map<std::string, std::string>& subst) {
  Atom out;
  out.predicate = atom.predicate;
  out.args.reserve(atom.args.size());
  for (const auto& arg : atom.args) {
    auto it = subst.find(arg);
    out.args.push_back(it == subst.end() ? arg : it->second);
  }
  return out;
}

struct CatKey {
  std::string head;
  std::size_t interval = 0;
  auto operator<=>(const CatKey&) const = default;
};

struct CatInfo {
  std::vector<std::size_t> value_indices;
  std::vector<std::string> value_names;
};

// Everything the query can reach: which facts matter, which head intervals
// are consulted and with which values, and the leaf list both evaluation
// paths share.
struct Cone {
  std::vector<std::size_t> fact_indices;
  std::vector<std::pair<CatKey, CatInfo>> cats;
  std::vector<NeuralLeaf> leaves;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> leaf_pos;
};

struct ProgramIndex {
  std::map<std::string, std::size_t> fact_by_atom;
  std::set<std::string> fact_predicates;
  std::map<std::string, const NeuralDecl*> neural_by_predicate;
  std::map<std::string, std::vector<const Clause*>> clauses_by_predicate;
};

ProgramIndex index_program(const RuleProgram& program) {
  ProgramIndex ix;
  for (std::size_t i = 0; i < program.prob_facts.size(); ++i) {
    ix.fact_by_atom.emplace(to_string(program.prob_facts[i].atom), i);
    ix.fact_predicates.insert(program.prob_facts[i].atom.predicate);
  }
  for (const auto& decl : program.neural_decls) {
    ix.neural_by_predicate.emplace(decl.predicate, &decl);
  }
  for (const auto& clause : program.clauses) {
    ix.clauses_by_predicate[clause.head.predicate].push_back(&clause);
  }
  return ix;
}

// Resolves a ground neural atom to (head, interval, value index) through a
// direct declaration or a temporal binding entry; nullopt when the predicate
// is not neural at all.
std::optional<NeuralLeaf> resolve_neural(const Atom& goal, const ProgramIndex& ix,
                                         const TemporalBinding& binding,
                                         bool validate) {
  const std::vector<std::string>* values = nullptr;
  std::string head;
  std::size_t interval = 0;
  if (auto it = ix.neural_by_predicate.find(goal.predicate);
      it != ix.neural_by_predicate.end()) {
    values = &it->second->values;
    head = it->second->network;
  } else if (auto split = split_index(goal.predicate)) {
    if (!ix.neural_by_predicate.count(split->first)) return std::nullopt;
    auto bit = binding.entries.find(goal.predicate);
    if (bit == binding.entries.end()) {
      if (!validate) return std::nullopt;
      throw std::invalid_argument("no binding for indexed predicate '" +
                                  goal.predicate + "'");
    }
    values = &bit->second.values;
    head = bit->second.head;
    interval = bit->second.interval;
  } else {
    return std::nullopt;
  }
  if (goal.args.size() != 2) {
    if (!validate) return std::nullopt;
    throw std::invalid_argument("neural atom '" + to_string(goal) +
                                "' must have two arguments");
  }
  auto vit = std::find(values->begin(), values->end(), goal.args[1]);
  if (vit == values->end()) {
    if (!validate) return std::nullopt;
    throw std::invalid_argument("value '" + goal.args[1] +
                                "' is not declared for '" + goal.predicate + "'");
  }
  NeuralLeaf leaf;
  leaf.head = head;
  leaf.interval = interval;
  leaf.value_index = static_cast<std::size_t>(vit - values->begin());
  leaf.value = goal.args[1];
  return leaf;
}

Cone walk_cone(const Atom& query, const TemporalBinding& binding,
               const ProgramIndex& ix) {
  for (const auto& arg : query.args) {
    if (is_variable(arg)) {
      throw std::invalid_argument("query must be ground, got '" +
                                  to_string(query) + "'");
    }
  }
  std::set<std::size_t> facts;
  std::map<CatKey, std::set<std::pair<std::size_t, std::string>>> cats;
  std::set<std::string> visited;
  std::vector<Atom> pending{query};
  while (!pending.empty()) {
    Atom goal = std::move(pending.back());
    pending.pop_back();
    if (!visited.insert(to_string(goal)).second) continue;
    if (auto fit = ix.fact_by_atom.find(to_string(goal));
        fit != ix.fact_by_atom.end()) {
      facts.insert(fit->second);
      continue;
    }
    if (ix.fact_predicates.count(goal.predicate)) continue;
    if (auto leaf = resolve_neural(goal, ix, binding, true)) {
      cats[{leaf->head, leaf->interval}].emplace(leaf->value_index, leaf->value);
      continue;
    }
    auto cit = ix.clauses_by_predicate.find(goal.predicate);
    if (cit == ix.clauses_by_predicate.end()) {
      throw std::invalid_argument("predicate '" + goal.predicate +
                                  "' is not defined");
    }
    for (const Clause* clause : cit->second) {
      auto subst = unify(goal, clause->head);
      if (!subst) continue;
      for (const Atom& literal : clause->body) {
        Atom ground = substitute(literal, *subst);
        for (const auto& arg : ground.args) {
          if (is_variable(arg)) {
            throw std::invalid_argument(
                "variable '" + arg + "' in the body of the clause for '" +
                clause->head.predicate + "' is not bound by its head");
          }
        }
        pending.push_back(std::move(ground));
      }
    }
  }
  Cone cone;
  cone.fact_indices.assign(facts.begin(), facts.end());
  for (const auto& [key, refs] : cats) {
    CatInfo info;
    for (const auto& [index, name] : refs) {
      info.value_indices.push_back(index);
      info.value_names.push_back(name);
    }
    cone.cats.emplace_back(key, std::move(info));
  }
  for (const auto& [key, info] : cone.cats) {
    for (std::size_t i = 0; i < info.value_indices.size(); ++i) {
      NeuralLeaf leaf;
      leaf.head = key.head;
      leaf.interval = key.interval;
      leaf.value_index = info.value_indices[i];
      leaf.value = info.value_names[i];
      cone.leaf_pos.emplace(
          std::make_tuple(leaf.head, leaf.interval, leaf.value_index),
          cone.leaves.size());
      cone.leaves.push_back(std::move(leaf));
    }
  }
  return cone;
}

void check_fact_capacity(const RuleProgram& program) {
  if (program.prob_facts.size() > 20) {
    throw std::invalid_argument(
        "capacity: " + std::to_string(program.prob_facts.size()) +
        " probabilistic facts exceed the 20 fact enumeration bound");
  }
}

void check_leaf_probs(const std::vector<NeuralLeaf>& leaves,
                      const std::vector<double>& leaf_probs,
                      const std::string& what) {
  if (leaf_probs.size() != leaves.size()) {
    throw std::invalid_argument("circuit has " + std::to_string(leaves.size()) +
                                " leaves, got " +
                                std::to_string(leaf_probs.size()) + " " + what);
  }
  for (std::size_t i = 0; i < leaf_probs.size(); ++i) {
    if (!(leaf_probs[i] >= 0.0 && leaf_probs[i] <= 1.0)) {
      throw std::invalid_argument("leaf probability " + fmt(leaf_probs[i]) +
                                  " for '" + leaves[i].head + "' is out of [0, 1]");
    }
  }
  std::map<std::pair<std::string, std::size_t>, double> sums;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    double& total = sums[{leaves[i].head, leaves[i].interval}];
    total += leaf_probs[i];
    if (total > 1.0 + 1e-9) {
      throw std::invalid_argument("probabilities for head '" + leaves[i].head +
                                  "' on interval " +
                                  std::to_string(leaves[i].interval) +
                                  " sum to more than 1");
    }
  }
}

}  // namespace

bool is_variable(const std::string& term) {
  return !term.empty() && std::isupper(static_cast<unsigned char>(term[0]));
}

std::string to_string(const Atom& atom) {
  if (atom.args.empty()) return atom.predicate;
  std::string out = atom.predicate + "(";
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i > 0) out += ", ";
    out += atom.args[i];
  }
  out += ")";
  return out;
}

Atom parse_atom(const std::string& text) {
  auto toks = lex(text);
  Parser p{toks};
  Atom a = p.atom();
  if (p.peek().kind != TokKind::End) p.fail(p.peek(), "expected end of input");
  return a;
}

bool operator==(const NeuralLeaf& a, const NeuralLeaf& b) {
  return a.head == b.head && a.interval == b.interval &&
         a.value_index == b.value_index && a.value == b.value;
}

RuleProgram parse_program(const std::string& text) {
  auto toks = lex(text);
  Parser p{toks};
  RuleProgram program;
  std::vector<Token> fact_starts;
  std::vector<Token> clause_starts;
  std::vector<Token> decl_starts;

  while (p.peek().kind != TokKind::End) {
    Token start = p.peek();
    if (start.kind == TokKind::Number) {
      p.take();
      if (start.number < 0.0 || start.number > 1.0) {
        p.fail(start, "probability " + start.text + " out of [0, 1]");
      }
      p.expect(TokKind::ColonColon, "'::'");
      Atom atom = p.atom();
      for (const auto& arg : atom.args) {
        if (is_variable(arg)) p.fail(start, "probabilistic facts must be ground");
      }
      p.expect(TokKind::Dot, "'.' at the end of the statement");
      program.prob_facts.push_back({start.number, std::move(atom)});
      fact_starts.push_back(start);
      continue;
    }
    if (start.kind == TokKind::Ident && start.text == "nn" &&
        p.peek2().kind == TokKind::LParen) {
      p.take();
      p.take();
      NeuralDecl decl;
      decl.network = p.expect(TokKind::Ident, "a network name").text;
      p.expect(TokKind::Comma, "','");
      p.expect(TokKind::LBracket, "'['");
      decl.input_var = p.expect(TokKind::Variable, "a variable").text;
      p.expect(TokKind::RBracket, "']'");
      p.expect(TokKind::Comma, "','");
      decl.output_var = p.expect(TokKind::Variable, "a variable").text;
      p.expect(TokKind::Comma, "','");
      p.expect(TokKind::LBracket, "'['");
      while (true) {
        const Token& t = p.peek();
        if (t.kind == TokKind::Variable) p.fail(t, "values must be constants");
        if (t.kind != TokKind::Ident && t.kind != TokKind::Number) {
          p.fail(t, "expected a value");
        }
        if (std::find(decl.values.begin(), decl.values.end(), t.text) !=
            decl.values.end()) {
          p.fail(t, "duplicate value '" + t.text + "'");
        }
        decl.values.push_back(p.take().text);
        if (p.peek().kind != TokKind::Comma) break;
        p.take();
      }
      p.expect(TokKind::RBracket, "']'");
      p.expect(TokKind::RParen, "')'");
      p.expect(TokKind::ColonColon, "'::'");
      Token pred = p.expect(TokKind::Ident, "a predicate name");
      decl.predicate = pred.text;
      p.expect(TokKind::LParen, "'('");
      std::string a1 = p.expect(TokKind::Variable, "a variable").text;
      p.expect(TokKind::Comma, "','");
      std::string a2 = p.expect(TokKind::Variable, "a variable").text;
      p.expect(TokKind::RParen, "')'");
      p.expect(TokKind::Dot, "'.' at the end of the statement");
      if (decl.input_var == decl.output_var) {
        p.fail(start, "declaration input and output variables must differ");
      }
      if (a1 != decl.input_var || a2 != decl.output_var) {
        p.fail(pred, "declaration head must be " + decl.predicate + "(" +
                         decl.input_var + ", " + decl.output_var + ")");
      }
      for (const auto& existing : program.neural_decls) {
        if (existing.predicate == decl.predicate ||
            existing.network == decl.network) {
          p.fail(start, "duplicate neural declaration for '" + decl.predicate +
                            "'");
        }
      }
      program.neural_decls.push_back(std::move(decl));
      decl_starts.push_back(start);
      continue;
    }
    Clause clause;
    clause.head = p.atom();
    p.expect(TokKind::ColonDash, "':-' after the clause head");
    if (p.peek().kind == TokKind::Dot) p.fail(p.peek(), "expected a body literal");
    clause.body.push_back(p.atom());
    while (p.peek().kind == TokKind::Comma) {
      p.take();
      clause.body.push_back(p.atom());
    }
    p.expect(TokKind::Dot, "'.' at the end of the statement");
    program.clauses.push_back(std::move(clause));
    clause_starts.push_back(start);
  }

  for (std::size_t i = 0; i < program.prob_facts.size(); ++i) {
    for (std::size_t j = i + 1; j < program.prob_facts.size(); ++j) {
      if (to_string(program.prob_facts[i].atom) ==
          to_string(program.prob_facts[j].atom)) {
        p.fail(fact_starts[j], "duplicate probabilistic fact '" +
                                   to_string(program.prob_facts[j].atom) + "'");
      }
    }
  }

  std::set<std::string> fact_preds;
  for (const auto& fact : program.prob_facts) {
    fact_preds.insert(fact.atom.predicate);
  }
  auto neural_name = [&](const std::string& pred) -> bool {
    for (const auto& decl : program.neural_decls) {
      if (decl.predicate == pred) return true;
      if (auto split = split_index(pred); split && split->first == decl.predicate) {
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < program.prob_facts.size(); ++i) {
    if (neural_name(program.prob_facts[i].atom.predicate)) {
      p.fail(fact_starts[i], "probabilistic fact '" +
                                 program.prob_facts[i].atom.predicate +
                                 "' shadows a neural predicate");
    }
  }
  for (std::size_t i = 0; i < program.clauses.size(); ++i) {
    const std::string& head = program.clauses[i].head.predicate;
    if (fact_preds.count(head)) {
      p.fail(clause_starts[i], "predicate '" + head +
                                   "' is declared both as a probabilistic fact "
                                   "and a clause head");
    }
    if (neural_name(head)) {
      p.fail(clause_starts[i], "clause head '" + head +
                                   "' shadows a neural predicate");
    }
  }

  std::set<std::string> head_preds;
  for (const auto& clause : program.clauses) {
    head_preds.insert(clause.head.predicate);
  }
  std::map<std::string, int> color;
  std::map<std::string, Token> first_clause;
  for (std::size_t i = 0; i < program.clauses.size(); ++i) {
    first_clause.emplace(program.clauses[i].head.predicate, clause_starts[i]);
  }
  std::function<void(const std::string&)> visit = [&](const std::string& pred) {
    color[pred] = 1;
    for (const auto& clause : program.clauses) {
      if (clause.head.predicate != pred) continue;
      for (const auto& literal : clause.body) {
        if (!head_preds.count(literal.predicate)) continue;
        int c = color.count(literal.predicate) ? color[literal.predicate] : 0;
        if (c == 1) {
          const Token& at = first_clause.at(literal.predicate);
          fail_at(at.line, at.col,
                  "cyclic dependency through predicate '" + literal.predicate +
                      "'");
        }
        if (c == 0) visit(literal.predicate);
      }
    }
    color[pred] = 2;
  };
  for (const auto& pred : head_preds) {
    if (!color.count(pred)) visit(pred);
  }

  return program;
}

TemporalBinding derive_bindings(const RuleProgram& program,
                                std::size_t intervals) {
  TemporalBinding binding;
  for (const auto& decl : program.neural_decls) {
    for (std::size_t k = 1; k <= intervals; ++k) {
      TemporalBinding::Entry entry;
      entry.head = decl.network;
      entry.interval = k;
      entry.values = decl.values;
      binding.entries.emplace(decl.predicate + "_" + std::to_string(k),
                              std::move(entry));
    }
  }
  return binding;
}

std::vector<NeuralLeaf> collect_leaves(const RuleProgram& program,
                                       const Atom& query,
                                       const TemporalBinding& binding) {
  auto ix = index_program(program);
  return walk_cone(query, binding, ix).leaves;
}

ArithmeticCircuit ground_and_compile(const RuleProgram& program,
                                     const Atom& query,
                                     const TemporalBinding& binding) {
  check_fact_capacity(program);
  auto ix = index_program(program);
  Cone cone = walk_cone(query, binding, ix);

  unsigned long long worlds = 1;
  for (std::size_t i = 0; i < cone.fact_indices.size(); ++i) worlds *= 2;
  for (const auto& [key, info] : cone.cats) {
    worlds *= info.value_indices.size() + 1;
    if (worlds > (1ull << 22)) {
      throw std::invalid_argument(
          "capacity: the query reaches more than 2^22 possible worlds");
    }
  }
  if (worlds > (1ull << 22)) {
    throw std::invalid_argument(
        "capacity: the query reaches more than 2^22 possible worlds");
  }

  // World state: one bit per relevant fact plus one choice per head interval,
  // where choice == value count stands for "some unreferenced value".
  std::vector<std::size_t> choice(cone.cats.size(), 0);

  ArithmeticCircuit circuit;
  circuit.leaves = cone.leaves;
  std::map<double, std::size_t> constant_ids;
  auto constant_node = [&](double v) {
    auto it = constant_ids.find(v);
    if (it != constant_ids.end()) return it->second;
    ArithmeticCircuit::Node node;
    node.kind = ArithmeticCircuit::NodeKind::Constant;
    node.value = v;
    circuit.nodes.push_back(node);
    return constant_ids.emplace(v, circuit.nodes.size() - 1).first->second;
  };
  std::vector<std::size_t> leaf_nodes(cone.leaves.size(),
                                      static_cast<std::size_t>(-1));
  auto leaf_node = [&](std::size_t leaf) {
    if (leaf_nodes[leaf] == static_cast<std::size_t>(-1)) {
      ArithmeticCircuit::Node node;
      node.kind = ArithmeticCircuit::NodeKind::NeuralLeaf;
      node.leaf = leaf;
      circuit.nodes.push_back(node);
      leaf_nodes[leaf] = circuit.nodes.size() - 1;
    }
    return leaf_nodes[leaf];
  };
  std::vector<std::size_t> residual_nodes(cone.cats.size(),
                                          static_cast<std::size_t>(-1));
  auto residual_node = [&](std::size_t cat) {
    if (residual_nodes[cat] == static_cast<std::size_t>(-1)) {
      ArithmeticCircuit::Node node;
      node.kind = ArithmeticCircuit::NodeKind::Residual;
      const auto& [key, info] = cone.cats[cat];
      for (std::size_t vi : info.value_indices) {
        node.children.push_back(
            leaf_node(cone.leaf_pos.at({key.head, key.interval, vi})));
      }
      circuit.nodes.push_back(std::move(node));
      residual_nodes[cat] = circuit.nodes.size() - 1;
    }
    return residual_nodes[cat];
  };
  std::map<std::pair<std::size_t, bool>, std::size_t> fact_nodes;
  auto fact_node = [&](std::size_t fact, bool complement) {
    auto it = fact_nodes.find({fact, complement});
    if (it != fact_nodes.end()) return it->second;
    ArithmeticCircuit::Node node;
    node.kind = ArithmeticCircuit::NodeKind::FactLeaf;
    node.value = program.prob_facts[fact].probability;
    node.complement = complement;
    circuit.nodes.push_back(node);
    return fact_nodes.emplace(std::make_pair(fact, complement),
                              circuit.nodes.size() - 1)
        .first->second;
  };

  std::vector<std::size_t> world_nodes;
  for (unsigned long long mask = 0; mask < (1ull << cone.fact_indices.size());
       ++mask) {
    std::fill(choice.begin(), choice.end(), 0);
    while (true) {
      std::map<std::string, bool> memo;
      std::function<bool(const Atom&)> provable = [&](const Atom& goal) {
        std::string key = to_string(goal);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        bool result = false;
        if (auto fit = ix.fact_by_atom.find(key); fit != ix.fact_by_atom.end()) {
          auto pos = std::lower_bound(cone.fact_indices.begin(),
                                      cone.fact_indices.end(), fit->second);
          result = pos != cone.fact_indices.end() && *pos == fit->second &&
                   ((mask >> (pos - cone.fact_indices.begin())) & 1ull);
        } else if (ix.fact_predicates.count(goal.predicate)) {
          result = false;
        } else if (auto leaf = resolve_neural(goal, ix, binding, false)) {
          for (std::size_t c = 0; c < cone.cats.size(); ++c) {
            const auto& [ck, info] = cone.cats[c];
            if (ck.head != leaf->head || ck.interval != leaf->interval) continue;
            result = choice[c] < info.value_indices.size() &&
                     info.value_indices[choice[c]] == leaf->value_index;
            break;
          }
        } else if (auto cit = ix.clauses_by_predicate.find(goal.predicate);
                   cit != ix.clauses_by_predicate.end()) {
          for (const Clause* clause : cit->second) {
            auto subst = unify(goal, clause->head);
            if (!subst) continue;
            bool all = true;
            for (const Atom& literal : clause->body) {
              if (!provable(substitute(literal, *subst))) {
                all = false;
                break;
              }
            }
            if (all) {
              result = true;
              break;
            }
          }
        }
        memo.emplace(std::move(key), result);
        return result;
      };

      if (provable(query)) {
        bool zero = false;
        std::vector<std::size_t> factors;
        for (std::size_t f = 0; f < cone.fact_indices.size(); ++f) {
          bool on = (mask >> f) & 1ull;
          double p = program.prob_facts[cone.fact_indices[f]].probability;
          double effective = on ? p : 1.0 - p;
          if (effective == 0.0) {
            zero = true;
            break;
          }
          if (effective == 1.0) continue;
          factors.push_back(fact_node(cone.fact_indices[f], !on));
        }
        if (!zero) {
          for (std::size_t c = 0; c < cone.cats.size(); ++c) {
            const auto& [ck, info] = cone.cats[c];
            if (choice[c] < info.value_indices.size()) {
              factors.push_back(leaf_node(cone.leaf_pos.at(
                  {ck.head, ck.interval, info.value_indices[choice[c]]})));
            } else {
              factors.push_back(residual_node(c));
            }
          }
          if (factors.empty()) {
            world_nodes.push_back(constant_node(1.0));
          } else if (factors.size() == 1) {
            world_nodes.push_back(factors[0]);
          } else {
            ArithmeticCircuit::Node node;
            node.kind = ArithmeticCircuit::NodeKind::Product;
            node.children = std::move(factors);
            circuit.nodes.push_back(std::move(node));
            world_nodes.push_back(circuit.nodes.size() - 1);
          }
        }
      }

      std::size_t c = 0;
      for (; c < choice.size(); ++c) {
        if (++choice[c] <= cone.cats[c].second.value_indices.size()) break;
        choice[c] = 0;
      }
      if (c == choice.size()) break;
    }
  }

  if (world_nodes.empty()) {
    circuit.root = constant_node(0.0);
  } else if (world_nodes.size() == 1) {
    circuit.root = world_nodes[0];
  } else {
    ArithmeticCircuit::Node node;
    node.kind = ArithmeticCircuit::NodeKind::Sum;
    node.children = std::move(world_nodes);
    circuit.nodes.push_back(std::move(node));
    circuit.root = circuit.nodes.size() - 1;
  }
  return circuit;
}

CircuitEval eval_circuit(const ArithmeticCircuit& circuit,
                         const std::vector<double>& leaf_probs) {
  if (circuit.nodes.empty()) {
    throw std::invalid_argument("cannot evaluate an empty circuit");
  }
  check_leaf_probs(circuit.leaves, leaf_probs, "probabilities");

  std::vector<double> value(circuit.nodes.size(), 0.0);
  for (std::size_t i = 0; i < circuit.nodes.size(); ++i) {
    const auto& node = circuit.nodes[i];
    switch (node.kind) {
      case ArithmeticCircuit::NodeKind::Constant:
        value[i] = node.value;
        break;
      case ArithmeticCircuit::NodeKind::FactLeaf:
        value[i] = node.complement ? 1.0 - node.value : node.value;
        break;
      case ArithmeticCircuit::NodeKind::NeuralLeaf:
        value[i] = leaf_probs[node.leaf];
        break;
      case ArithmeticCircuit::NodeKind::Residual: {
        double total = 0.0;
        for (std::size_t child : node.children) total += value[child];
        value[i] = std::max(1.0 - total, 0.0);
        break;
      }
      case ArithmeticCircuit::NodeKind::Product: {
        double prod = 1.0;
        for (std::size_t child : node.children) prod *= value[child];
        value[i] = prod;
        break;
      }
      case ArithmeticCircuit::NodeKind::Sum: {
        double total = 0.0;
        for (std::size_t child : node.children) total += value[child];
        value[i] = total;
        break;
      }
    }
  }

  std::vector<double> adjoint(circuit.nodes.size(), 0.0);
  adjoint[circuit.root] = 1.0;
  for (std::size_t i = circuit.nodes.size(); i-- > 0;) {
    double a = adjoint[i];
    if (a == 0.0) continue;
    const auto& node = circuit.nodes[i];
    switch (node.kind) {
      case ArithmeticCircuit::NodeKind::Sum:
        for (std::size_t child : node.children) adjoint[child] += a;
        break;
      case ArithmeticCircuit::NodeKind::Residual:
        for (std::size_t child : node.children) adjoint[child] -= a;
        break;
      case ArithmeticCircuit::NodeKind::Product:
        for (std::size_t child : node.children) {
          double others = 1.0;
          for (std::size_t other : node.children) {
            if (other != child) others *= value[other];
          }
          adjoint[child] += a * others;
        }
        break;
      default:
        break;
    }
  }

  CircuitEval out;
  out.probability = value[circuit.root];
  out.leaf_gradients.assign(circuit.leaves.size(), 0.0);
  for (std::size_t i = 0; i < circuit.nodes.size(); ++i) {
    if (circuit.nodes[i].kind == ArithmeticCircuit::NodeKind::NeuralLeaf) {
      out.leaf_gradients[circuit.nodes[i].leaf] += adjoint[i];
    }
  }
  return out;
}

double brute_force_query(const RuleProgram& program, const Atom& query,
                         const TemporalBinding& binding,
                         const std::vector<double>& leaf_probs) {
  check_fact_capacity(program);
  auto ix = index_program(program);
  Cone cone = walk_cone(query, binding, ix);
  check_leaf_probs(cone.leaves, leaf_probs, "probabilities");

  std::set<std::string> constant_set;
  for (const auto& arg : query.args) constant_set.insert(arg);
  for (const auto& fact : program.prob_facts) {
    for (const auto& arg : fact.atom.args) constant_set.insert(arg);
  }
  for (const auto& clause : program.clauses) {
    for (const auto& arg : clause.head.args) {
      if (!is_variable(arg)) constant_set.insert(arg);
    }
    for (const auto& literal : clause.body) {
      for (const auto& arg : literal.args) {
        if (!is_variable(arg)) constant_set.insert(arg);
      }
    }
  }
  std::vector<std::string> constants(constant_set.begin(), constant_set.end());

  // Every ground instance of every clause, variables running over the
  // constants seen anywhere in the program or query.
  std::vector<Clause> instances;
  for (const auto& clause : program.clauses) {
    std::vector<std::string> vars;
    auto collect = [&](const Atom& atom) {
      for (const auto& arg : atom.args) {
        if (is_variable(arg) &&
            std::find(vars.begin(), vars.end(), arg) == vars.end()) {
          vars.push_back(arg);
        }
      }
    };
    collect(clause.head);
    for (const auto& literal : clause.body) collect(literal);
    if (vars.empty()) {
      instances.push_back(clause);
      continue;
    }
    unsigned long long count = 1;
    for (std::size_t v = 0; v < vars.size(); ++v) count *= constants.size();
    if (count > (1ull << 16)) {
      throw std::invalid_argument(
          "capacity: too many ground instances of the clause for '" +
          clause.head.predicate + "'");
    }
    std::vector<std::size_t> pick(vars.size(), 0);
    while (true) {
      std::map<std::string, std::string> subst;
      for (std::size_t v = 0; v < vars.size(); ++v) {
        subst[vars[v]] = constants[pick[v]];
      }
      Clause ground;
      ground.head = substitute(clause.head, subst);
      for (const auto& literal : clause.body) {
        ground.body.push_back(substitute(literal, subst));
      }
      instances.push_back(std::move(ground));
      std::size_t v = 0;
      for (; v < pick.size(); ++v) {
        if (++pick[v] < constants.size()) break;
        pick[v] = 0;
      }
      if (v == pick.size()) break;
    }
  }

  std::vector<std::size_t> choice(cone.cats.size(), 0);
  const std::size_t n = program.prob_facts.size();
  double total = 0.0;

  for (unsigned long long mask = 0; mask < (1ull << n); ++mask) {
    double fact_weight = 1.0;
    for (std::size_t f = 0; f < n; ++f) {
      double p = program.prob_facts[f].probability;
      fact_weight *= ((mask >> f) & 1ull) ? p : 1.0 - p;
    }
    if (fact_weight == 0.0) continue;

    std::fill(choice.begin(), choice.end(), 0);
    while (true) {
      double weight = fact_weight;
      for (std::size_t c = 0; c < cone.cats.size(); ++c) {
        const auto& [key, info] = cone.cats[c];
        if (choice[c] < info.value_indices.size()) {
          weight *= leaf_probs[cone.leaf_pos.at(
              {key.head, key.interval, info.value_indices[choice[c]]})];
        } else {
          double covered = 0.0;
          for (std::size_t vi : info.value_indices) {
            covered += leaf_probs[cone.leaf_pos.at({key.head, key.interval, vi})];
          }
          weight *= std::max(1.0 - covered, 0.0);
        }
      }

      if (weight > 0.0) {
        auto base_true = [&](const Atom& atom) {
          if (auto fit = ix.fact_by_atom.find(to_string(atom));
              fit != ix.fact_by_atom.end()) {
            return bool((mask >> fit->second) & 1ull);
          }
          if (auto leaf = resolve_neural(atom, ix, binding, false)) {
            for (std::size_t c = 0; c < cone.cats.size(); ++c) {
              const auto& [key, info] = cone.cats[c];
              if (key.head != leaf->head || key.interval != leaf->interval) {
                continue;
              }
              return choice[c] < info.value_indices.size() &&
                     info.value_indices[choice[c]] == leaf->value_index;
            }
          }
          return false;
        };

        std::set<std::string> derived;
        bool changed = true;
        while (changed) {
          changed = false;
          for (const auto& instance : instances) {
            if (derived.count(to_string(instance.head))) continue;
            bool all = true;
            for (const auto& literal : instance.body) {
              if (!derived.count(to_string(literal)) && !base_true(literal)) {
                all = false;
                break;
              }
            }
            if (all) {
              derived.insert(to_string(instance.head));
              changed = true;
            }
          }
        }
        if (derived.count(to_string(query)) || base_true(query)) {
          total += weight;
        }
      }

      std::size_t c = 0;
      for (; c < choice.size(); ++c) {
        if (++choice[c] <= cone.cats[c].second.value_indices.size()) break;
        choice[c] = 0;
      }
      if (c == choice.size()) break;
    }
  }
  return total;
}

Tensor circuit_probability(Tape& tape, const ArithmeticCircuit& circuit,
                           const std::vector<Tensor>& leaf_tensors) {
  if (leaf_tensors.size() != circuit.leaves.size()) {
    throw std::invalid_argument(
        "circuit has " + std::to_string(circuit.leaves.size()) +
        " leaves, got " + std::to_string(leaf_tensors.size()) + " tensors");
  }
  std::vector<double> leaf_probs(leaf_tensors.size(), 0.0);
  for (std::size_t i = 0; i < leaf_tensors.size(); ++i) {
    if (leaf_tensors[i].size() != 1) {
      throw std::invalid_argument(
          "leaf tensors must hold exactly one element, got shape " +
          shape_to_string(leaf_tensors[i].shape()));
    }
    leaf_probs[i] = leaf_tensors[i].values()[0];
  }
  CircuitEval eval = eval_circuit(circuit, leaf_probs);
  return tape.custom(
      "circuit_probability", leaf_tensors, {1}, {eval.probability},
      [grads = std::move(eval.leaf_gradients)](
          const std::vector<double>& out_grad,
          const std::vector<std::span<double>>& input_grads) {
        for (std::size_t i = 0; i < input_grads.size(); ++i) {
          input_grads[i][0] += out_grad[0] * grads[i];
        }
      });
}

Tensor circuit_probability(Tape& tape, const ArithmeticCircuit& circuit,
                           const HeadOutputs& head_outputs) {
  std::vector<Tensor> leaf_tensors;
  leaf_tensors.reserve(circuit.leaves.size());
  for (const auto& leaf : circuit.leaves) {
    auto it = head_outputs.find({leaf.head, leaf.interval});
    if (it == head_outputs.end()) {
      throw std::invalid_argument("no output for head '" + leaf.head +
                                  "' on interval " +
                                  std::to_string(leaf.interval));
    }
    const Tensor& dist = it->second;
    if (dist.rank() != 1) {
      throw std::invalid_argument("head outputs must be rank 1, got shape " +
                                  shape_to_string(dist.shape()));
    }
    if (leaf.value_index >= dist.size()) {
      throw std::invalid_argument(
          "head '" + leaf.head + "' has " + std::to_string(dist.size()) +
          " outputs, value '" + leaf.value + "' wants index " +
          std::to_string(leaf.value_index));
    }
    Tensor column = tape.reshape(dist, {dist.size(), 1});
    Tensor picked = tape.slice_rows(column, leaf.value_index, 1);
    leaf_tensors.push_back(tape.reshape(picked, {1}));
  }
  return circuit_probability(tape, circuit, leaf_tensors);
}

}  // namespace csihar
