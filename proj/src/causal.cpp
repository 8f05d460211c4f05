#include "csihar/causal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace csihar {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives per-test seeds from variable names rather than column positions,
// so reordering panel columns cannot change any permutation draw.
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return splitmix64(base ^ h);
}

std::size_t var_index(const BinaryEventPanel& panel, const std::string& name) {
  for (std::size_t i = 0; i < panel.variables.size(); ++i) {
    if (panel.variables[i] == name) return i;
  }
  throw std::invalid_argument("panel has no variable named '" + name + "'");
}

// Rows of (x shifted by its lag, y at the reference row, packed z bits),
// restricted to reference rows where every lagged value exists.
struct AlignedRows {
  std::vector<std::uint8_t> x;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> z;
  std::size_t strata = 1;
};

AlignedRows align_rows(const BinaryEventPanel& panel, const LaggedVar& x,
                       const std::string& y, const std::vector<LaggedVar>& z) {
  if (z.size() > 3) {
    throw std::invalid_argument(
        "at most three conditioning variables are supported, got " +
        std::to_string(z.size()));
  }
  const std::size_t xi = var_index(panel, x.variable);
  const std::size_t yi = var_index(panel, y);
  std::vector<std::size_t> zi;
  std::size_t max_lag = x.lag;
  for (const auto& v : z) {
    zi.push_back(var_index(panel, v.variable));
    max_lag = std::max(max_lag, v.lag);
  }
  const std::size_t steps = panel.steps();
  if (steps <= max_lag) {
    throw std::invalid_argument("no aligned samples: " +
                                std::to_string(steps) + " steps with lag " +
                                std::to_string(max_lag));
  }
  AlignedRows rows;
  rows.strata = std::size_t{1} << z.size();
  for (std::size_t t = max_lag; t < steps; ++t) {
    rows.x.push_back(static_cast<std::uint8_t>(panel.values[t - x.lag][xi]));
    rows.y.push_back(static_cast<std::uint8_t>(panel.values[t][yi]));
    std::uint8_t bits = 0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      bits = static_cast<std::uint8_t>(
          bits | (panel.values[t - z[j].lag][zi[j]] << j));
    }
    rows.z.push_back(bits);
  }
  return rows;
}

// Plug-in CMI in bits from integer count tables. Identical tables give
// bitwise identical results, which keeps permutation comparisons exact.
double cmi_from_rows(const AlignedRows& rows) {
  const std::size_t strata = rows.strata;
  std::vector<long long> cxyz(strata * 4, 0);
  std::vector<long long> cz(strata, 0);
  std::vector<long long> cxz(strata * 2, 0);
  std::vector<long long> cyz(strata * 2, 0);
  const std::size_t n = rows.x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t zi = rows.z[i];
    const std::size_t xv = rows.x[i];
    const std::size_t yv = rows.y[i];
    ++cxyz[(zi * 2 + xv) * 2 + yv];
    ++cz[zi];
    ++cxz[zi * 2 + xv];
    ++cyz[zi * 2 + yv];
  }
  double total = 0.0;
  for (std::size_t zi = 0; zi < strata; ++zi) {
    for (std::size_t xv = 0; xv < 2; ++xv) {
      for (std::size_t yv = 0; yv < 2; ++yv) {
        const long long c = cxyz[(zi * 2 + xv) * 2 + yv];
        if (c == 0) continue;
        const double ratio =
            static_cast<double>(c) * static_cast<double>(cz[zi]) /
            (static_cast<double>(cxz[zi * 2 + xv]) *
             static_cast<double>(cyz[zi * 2 + yv]));
        total += static_cast<double>(c) / static_cast<double>(n) *
                 std::log2(ratio);
      }
    }
  }
  return std::max(0.0, total);
}

ShuffleResult shuffle_pvalue_rows(const AlignedRows& rows,
                                  std::size_t permutations,
                                  std::uint64_t seed) {
  if (permutations < 99) {
    throw std::invalid_argument("at least 99 permutations are required, got " +
                                std::to_string(permutations));
  }
  const double observed = cmi_from_rows(rows);
  std::vector<std::vector<std::size_t>> strata(rows.strata);
  for (std::size_t i = 0; i < rows.x.size(); ++i) {
    strata[rows.z[i]].push_back(i);
  }
  bool any_pair = false;
  for (const auto& s : strata) {
    if (s.size() > 1) any_pair = true;
  }
  if (!any_pair) return {1.0, true};

  AlignedRows permuted = rows;
  std::size_t at_least = 0;
  for (std::size_t b = 0; b < permutations; ++b) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(b + 1)));
    permuted.x = rows.x;
    for (const auto& s : strata) {
      // rng() % k instead of uniform_int_distribution keeps the draws
      // identical across standard library implementations.
      for (std::size_t i = s.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(permuted.x[s[i - 1]], permuted.x[s[j]]);
      }
    }
    if (cmi_from_rows(permuted) >= observed) ++at_least;
  }
  const double p = static_cast<double>(1 + at_least) /
                   static_cast<double>(permutations + 1);
  return {p, false};
}

struct Candidate {
  std::string variable;
  std::size_t lag = 1;
  double strength = 0.0;
};

// Strongest first; ties prefer shorter lags, then names.
bool stronger(const Candidate& a, const Candidate& b) {
  if (a.strength != b.strength) return a.strength > b.strength;
  if (a.lag != b.lag) return a.lag < b.lag;
  return a.variable < b.variable;
}

std::string pc_tag(const std::string& target, const Candidate& c,
                   std::size_t level) {
  return "pc|" + std::to_string(level) + "|" + target + "|" + c.variable +
         "|" + std::to_string(c.lag);
}

std::string mci_tag(const std::string& target, const Candidate& c) {
  return "mci|" + target + "|" + c.variable + "|" + std::to_string(c.lag);
}

}  // namespace

void validate(const BinaryEventPanel& panel) {
  if (panel.variables.empty()) {
    throw std::invalid_argument("panel has no variables");
  }
  std::set<std::string> seen;
  for (const auto& name : panel.variables) {
    if (name.empty()) {
      throw std::invalid_argument("panel has an empty variable name");
    }
    if (!seen.insert(name).second) {
      throw std::invalid_argument("duplicate panel variable '" + name + "'");
    }
  }
  for (std::size_t t = 0; t < panel.values.size(); ++t) {
    if (panel.values[t].size() != panel.variables.size()) {
      throw std::invalid_argument(
          "panel row " + std::to_string(t) + " has " +
          std::to_string(panel.values[t].size()) + " values, expected " +
          std::to_string(panel.variables.size()));
    }
    for (int v : panel.values[t]) {
      if (v != 0 && v != 1) {
        throw std::invalid_argument("panel row " + std::to_string(t) +
                                    " holds " + std::to_string(v) +
                                    ", expected 0 or 1");
      }
    }
  }
}

BinaryEventPanel panel_from_events(const std::vector<BinaryEvents>& events) {
  BinaryEventPanel panel;
  panel.variables.assign(kEventNames.begin(), kEventNames.end());
  panel.values.reserve(events.size());
  for (const auto& e : events) {
    const auto bits = to_array(e);
    std::vector<int> row(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) row[i] = bits[i] ? 1 : 0;
    panel.values.push_back(std::move(row));
  }
  return panel;
}

double cmi_plugin(const BinaryEventPanel& panel, const LaggedVar& x,
                  const std::string& y, const std::vector<LaggedVar>& z) {
  validate(panel);
  return cmi_from_rows(align_rows(panel, x, y, z));
}

ShuffleResult local_shuffle_pvalue(const BinaryEventPanel& panel,
                                   const LaggedVar& x, const std::string& y,
                                   const std::vector<LaggedVar>& z,
                                   std::size_t permutations,
                                   std::uint64_t seed) {
  validate(panel);
  return shuffle_pvalue_rows(align_rows(panel, x, y, z), permutations, seed);
}

CausalGraph discover_lagged_parents(const BinaryEventPanel& panel,
                                    std::size_t max_lag, double alpha,
                                    std::size_t permutations,
                                    std::uint64_t seed) {
  validate(panel);
  if (max_lag == 0) {
    throw std::invalid_argument("max_lag must be at least 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie strictly inside (0, 1)");
  }
  if (permutations < 99) {
    throw std::invalid_argument("at least 99 permutations are required, got " +
                                std::to_string(permutations));
  }
  if (panel.steps() < 50) {
    throw std::invalid_argument("discovery needs at least 50 steps, got " +
                                std::to_string(panel.steps()));
  }

  std::map<std::string, std::vector<Candidate>> parents;
  for (const auto& target : panel.variables) {
    std::vector<Candidate> alive;
    for (const auto& source : panel.variables) {
      for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        alive.push_back({source, lag, 0.0});
      }
    }
    for (std::size_t level = 0; level <= 2 && !alive.empty(); ++level) {
      std::sort(alive.begin(), alive.end(), stronger);
      // Weakest candidates are tested first and removed immediately, so a
      // dropped link never serves as a condition for a stronger one.
      for (std::size_t i = alive.size(); i-- > 0;) {
        if (alive.size() <= level) break;
        std::vector<LaggedVar> z;
        for (std::size_t j = 0; j < alive.size() && z.size() < level; ++j) {
          if (j != i) z.push_back({alive[j].variable, alive[j].lag});
        }
        const auto rows =
            align_rows(panel, {alive[i].variable, alive[i].lag}, target, z);
        alive[i].strength = cmi_from_rows(rows);
        const auto result = shuffle_pvalue_rows(
            rows, permutations,
            derive_seed(seed, pc_tag(target, alive[i], level)));
        if (result.p_value > alpha) {
          alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(i));
        }
      }
    }
    std::sort(alive.begin(), alive.end(), stronger);
    parents[target] = std::move(alive);
  }

  CausalGraph graph;
  for (const auto& target : panel.variables) {
    for (const auto& link : parents[target]) {
      // Momentary test: condition on the target's other parents and on the
      // source's parents shifted forward by the link lag.
      std::vector<LaggedVar> z;
      std::set<std::pair<std::string, std::size_t>> used;
      used.insert({link.variable, link.lag});
      for (const auto& other : parents[target]) {
        if (z.size() >= 3) break;
        if (used.insert({other.variable, other.lag}).second) {
          z.push_back({other.variable, other.lag});
        }
      }
      for (const auto& up : parents[link.variable]) {
        if (z.size() >= 3) break;
        if (used.insert({up.variable, up.lag + link.lag}).second) {
          z.push_back({up.variable, up.lag + link.lag});
        }
      }
      const auto rows =
          align_rows(panel, {link.variable, link.lag}, target, z);
      const double cmi = cmi_from_rows(rows);
      const auto result = shuffle_pvalue_rows(
          rows, permutations, derive_seed(seed, mci_tag(target, link)));
      if (result.p_value <= alpha) {
        graph.edges.push_back(
            {link.variable, target, link.lag, cmi, result.p_value});
      }
    }
  }
  std::sort(graph.edges.begin(), graph.edges.end(),
            [](const CausalEdge& a, const CausalEdge& b) {
              if (a.target != b.target) return a.target < b.target;
              if (a.source != b.source) return a.source < b.source;
              return a.lag < b.lag;
            });
  return graph;
}

std::string graph_to_temporal_rules(const CausalGraph& graph,
                                    const std::string& activity) {
  if (activity.empty() || !std::islower(static_cast<unsigned char>(activity[0]))) {
    throw std::invalid_argument("activity must be a lowercase identifier");
  }
  for (char c : activity) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') {
      throw std::invalid_argument("activity must be a lowercase identifier");
    }
  }
  if (graph.edges.empty()) return "% no edges found\n";
  std::set<std::pair<std::string, std::size_t>> used;
  std::string body;
  for (const auto& edge : graph.edges) {
    if (!used.insert({edge.source, edge.lag}).second) continue;
    if (!body.empty()) body += ", ";
    body += edge.source + "_" + std::to_string(edge.lag) + "(X, yes)";
  }
  return "activity(X, " + activity + ") :- " + body + ".\n";
}

std::string graph_to_csv(const CausalGraph& graph) {
  std::ostringstream out;
  out.precision(12);
  out << "source,target,lag,cmi_bits,p_value\n";
  for (const auto& edge : graph.edges) {
    out << edge.source << ',' << edge.target << ',' << edge.lag << ','
        << edge.cmi_bits << ',' << edge.p_value << '\n';
  }
  return out.str();
}

void save_panel(const BinaryEventPanel& panel, const std::string& path) {
  validate(panel);
  for (const auto& name : panel.variables) {
    if (name.find_first_of(",\r\n") != std::string::npos) {
      throw std::invalid_argument("save_panel: variable name '" + name +
                                  "' contains a delimiter");
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_panel: cannot open " + path);
  for (std::size_t i = 0; i < panel.variables.size(); ++i) {
    if (i > 0) out << ',';
    out << panel.variables[i];
  }
  out << '\n';
  for (const auto& row : panel.values) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("save_panel: write failed for " + path);
}

BinaryEventPanel load_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_panel: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  BinaryEventPanel panel;
  std::stringstream header(line);
  std::string field;
  while (std::getline(header, field, ',')) panel.variables.push_back(field);
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++row_number;
    std::vector<int> row;
    std::stringstream cells(line);
    while (std::getline(cells, field, ',')) {
      if (field == "0") {
        row.push_back(0);
      } else if (field == "1") {
        row.push_back(1);
      } else {
        throw std::runtime_error(path + ": row " + std::to_string(row_number) +
                                 " holds '" + field + "', expected 0 or 1");
      }
    }
    if (row.size() != panel.variables.size()) {
      throw std::runtime_error(path + ": row " + std::to_string(row_number) +
                               " has " + std::to_string(row.size()) +
                               " fields, expected " +
                               std::to_string(panel.variables.size()));
    }
    panel.values.push_back(std::move(row));
  }
  try {
    validate(panel);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return panel;
}

}  // namespace csihar
