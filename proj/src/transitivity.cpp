#include "geometre/transitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "geometre/errors.hpp"

namespace geometre {

namespace {

class PathWalker {
 public:
  PathWalker(const std::map<EntityId, std::vector<EntityId>>& out, RelationId r,
             std::size_t max_chains)
      : out_(out), r_(r), max_(max_chains) {}

  void walk(EntityId start) {
    path_.assign(1, start);
    on_path_.assign(1, start);
    visit(start);
  }

  std::vector<Chain> chains;
  std::set<EntityId> seen;
  std::size_t truncated = 0;

 private:
  bool on_path(EntityId e) const {
    return std::find(on_path_.begin(), on_path_.end(), e) != on_path_.end();
  }

  void emit() {
    if (chains.size() >= max_) {
      throw CapacityError("extract_chains: more than " + std::to_string(max_) +
                          " chains");
    }
    chains.push_back({r_, path_});
  }

  void visit(EntityId u) {
    seen.insert(u);
    auto it = out_.find(u);
    if (it == out_.end()) {
      emit();
      return;
    }
    bool cut = false;
    for (EntityId v : it->second) {
      if (on_path(v)) {
        cut = true;
        continue;
      }
      path_.push_back(v);
      on_path_.push_back(v);
      visit(v);
      path_.pop_back();
      on_path_.pop_back();
    }
    if (cut) {
      ++truncated;
      spdlog::warn("relation {}: cycle at entity {}, chain truncated", r_, u);
      emit();
    }
  }

  const std::map<EntityId, std::vector<EntityId>>& out_;
  RelationId r_;
  std::size_t max_;
  std::vector<EntityId> path_;
  std::vector<EntityId> on_path_;
};

// +1 when values should fall from head to tail, -1 when they should rise.
double expected_sign(const EmbeddingStore& store, RelationId r, std::size_t& dim) {
  const auto t = store.transitive_target(r);
  if (!t) {
    throw InvalidArgument("relation " + std::to_string(r) +
                          " has no transitive dimension");
  }
  dim = t->dim;
  return t->direction == OrderingDirection::forward ? 1.0 : -1.0;
}

}  // namespace

std::vector<Chain> extract_chains(const std::vector<Triple>& triples, RelationId r,
                                  std::size_t* truncated, ChainOptions options) {
  std::map<EntityId, std::vector<EntityId>> out;
  std::map<EntityId, std::size_t> indegree;
  for (const Triple& t : triples) {
    if (t.relation != r) continue;
    out[t.head].push_back(t.tail);
    indegree[t.head];
    ++indegree[t.tail];
  }
  for (auto& [u, vs] : out) {
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  }

  PathWalker walker(out, r, options.max_chains);
  for (const auto& [u, d] : indegree) {
    if (d == 0) walker.walk(u);
  }
  // Components without a root are all cycle.
  for (const auto& [u, d] : indegree) {
    if (!walker.seen.count(u)) {
      walker.walk(u);
    }
  }
  if (truncated) *truncated = walker.truncated;
  return std::move(walker.chains);
}

std::vector<double> fractional_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: size mismatch");
  if (x.size() < 2) throw InvalidArgument("spearman: need at least 2 items");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SpearmanSummary spearman_chain_summary(const std::vector<Chain>& chains,
                                       const EmbeddingStore& store, RelationId r) {
  std::size_t dim = 0;
  const double sign = expected_sign(store, r, dim);
  SpearmanSummary s;
  double total = 0.0;
  for (const Chain& c : chains) {
    if (c.entities.size() < 2) {
      s.per_chain.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::vector<double> expected, values;
    for (std::size_t j = 0; j < c.entities.size(); ++j) {
      expected.push_back(-sign * static_cast<double>(j));
      values.push_back(store.answer(c.entities[j])[dim]);
    }
    const double rho = spearman(expected, values);
    s.per_chain.push_back(rho);
    total += rho;
    ++s.n_scored;
  }
  if (s.n_scored == 0) throw InvalidArgument("spearman_chain_score: no chain to score");
  s.mean = total / static_cast<double>(s.n_scored);
  return s;
}

double spearman_chain_score(const std::vector<Chain>& chains,
                            const EmbeddingStore& store, RelationId r) {
  return spearman_chain_summary(chains, store, r).mean;
}

std::string chain_preservation_csv(const std::vector<Chain>& chains,
                                   const EmbeddingStore& store, RelationId r) {
  std::size_t dim = 0;
  const double sign = expected_sign(store, r, dim);
  std::string out = "chain_id,position,entity,value,preserved\n";
  char buf[64];
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& es = chains[c].entities;
    for (std::size_t j = 0; j < es.size(); ++j) {
      const double v = store.answer(es[j])[dim];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += std::to_string(c) + "," + std::to_string(j) + "," +
             std::to_string(es[j]) + "," + buf + ",";
      if (j + 1 < es.size()) {
        const double next = store.answer(es[j + 1])[dim];
        out += sign * (v - next) > 0.0 ? "1" : "0";
      }
      out += "\n";
    }
  }
  return out;
}

void chain_preservation_report(const std::vector<Chain>& chains,
                               const EmbeddingStore& store, RelationId r,
                               const std::filesystem::path& out) {
  const std::string csv = chain_preservation_csv(chains, store, r);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write " + out.string());
  f << csv;
  if (!f) throw IoError("write failed: " + out.string());
}

}  // namespace geometre
