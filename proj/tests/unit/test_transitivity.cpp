#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "geometre/errors.hpp"
#include "geometre/random.hpp"
#include "geometre/transitivity.hpp"

using namespace geometre;

namespace {

std::vector<std::vector<EntityId>> paths_of(const std::vector<Chain>& chains) {
  std::vector<std::vector<EntityId>> out;
  for (const auto& c : chains) out.push_back(c.entities);
  std::sort(out.begin(), out.end());
  return out;
}

// Grows every simple path edge by edge and keeps the ones that start at a
// source and end at a sink.
std::vector<std::vector<EntityId>> brute_force_paths(std::size_t n,
                                                     const std::vector<Triple>& ts) {
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  std::vector<int> in(n, 0), out(n, 0), touched(n, 0);
  for (const auto& t : ts) {
    adj[t.head][t.tail] = 1;
    touched[t.head] = touched[t.tail] = 1;
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (adj[u][v]) {
        ++out[u];
        ++in[v];
      }
    }
  }
  std::vector<std::vector<EntityId>> frontier, done;
  for (EntityId u = 0; u < n; ++u) {
    if (touched[u] && in[u] == 0) frontier.push_back({u});
  }
  while (!frontier.empty()) {
    std::vector<std::vector<EntityId>> next;
    for (const auto& p : frontier) {
      if (out[p.back()] == 0) done.push_back(p);
      for (EntityId v = 0; v < n; ++v) {
        if (adj[p.back()][v] && std::find(p.begin(), p.end(), v) == p.end()) {
          auto q = p;
          q.push_back(v);
          next.push_back(q);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(done.begin(), done.end());
  return done;
}

EmbeddingStore one_dim_store(const std::vector<double>& values,
                             OrderingDirection dir = OrderingDirection::forward) {
  StoreConfig sc;
  if (dir == OrderingDirection::forward) {
    sc.relations = {{true, {}}};
  } else {
    sc.relations = {{true, 1}, {true, 0}};
  }
  auto s = EmbeddingStore::init(values.size(), sc.relations.size(), 2, sc, 0);
  auto& p = s.mutable_params();
  const std::size_t dim = s.transitive_target(0)->dim;
  for (std::size_t e = 0; e < values.size(); ++e) p.entity_centers[e * 2 + dim] = values[e];
  return s;
}

}  // namespace

TEST_CASE("chain extraction examples") {
  // a=0 b=1 c=2 d=3 e=4
  const std::vector<Triple> ts = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {2, 0, 4}, {0, 1, 4}};
  CHECK(paths_of(extract_chains(ts, 0)) ==
        std::vector<std::vector<EntityId>>{{0, 1, 2, 3}, {0, 1, 2, 4}});
  CHECK(paths_of(extract_chains({{5, 0, 6}}, 0)) ==
        std::vector<std::vector<EntityId>>{{5, 6}});
  std::size_t cut = 0;
  CHECK(paths_of(extract_chains({{0, 0, 1}, {1, 0, 0}}, 0, &cut)) ==
        std::vector<std::vector<EntityId>>{{0, 1}});
  CHECK(cut == 1);
  CHECK(extract_chains({}, 0).empty());
  CHECK_THROWS_AS(extract_chains(ts, 0, nullptr, {1}), CapacityError);
}

TEST_CASE("chain extraction matches exhaustive path enumeration on DAGs") {
  Rng rng(31);
  for (int g = 0; g < 200; ++g) {
    const std::size_t n = 2 + uniform_index(rng, 11);
    std::vector<EntityId> perm(n);
    for (EntityId i = 0; i < n; ++i) perm[i] = i;
    shuffle(perm, rng);
    const double p = uniform_real(rng, 0.1, 0.5);
    std::vector<Triple> ts;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (uniform01(rng) < p) ts.push_back({perm[i], 0, perm[j]});
      }
    }
    std::size_t cut = 0;
    CHECK(paths_of(extract_chains(ts, 0, &cut)) == brute_force_paths(n, ts));
    CHECK(cut == 0);
  }
}

TEST_CASE("spearman basics") {
  CHECK(fractional_ranks({3.0, 1.0, 3.0, 2.0}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
  CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  // Textbook value with ties: ranks (1,2.5,2.5,4) vs (1,2,3,4).
  CHECK(spearman({1, 2, 3, 4}, {1, 2, 2, 3}) == doctest::Approx(0.9486833).epsilon(1e-6));
  CHECK_THROWS_AS(spearman({1}, {1}), InvalidArgument);
}

TEST_CASE("chain score follows the expected direction") {
  const std::vector<Chain> chains = {{0, {0, 1, 2, 3}}};
  CHECK(spearman_chain_score(chains, one_dim_store({4, 3, 2, 1}), 0) ==
        doctest::Approx(1.0));
  CHECK(spearman_chain_score(chains, one_dim_store({1, 2, 3, 4}), 0) ==
        doctest::Approx(-1.0));
  // Inverse-form relation expects rising values.
  const auto inv = one_dim_store({1, 2, 3, 4}, OrderingDirection::inverse);
  CHECK(inv.transitive_target(1)->direction == OrderingDirection::inverse);
  CHECK(spearman_chain_score({{1, {0, 1, 2, 3}}}, inv, 1) == doctest::Approx(1.0));

  // Singletons are skipped.
  auto s = spearman_chain_summary({{0, {0}}, {0, {0, 1}}}, one_dim_store({2, 1}), 0);
  CHECK(s.n_scored == 1);
  CHECK(std::isnan(s.per_chain[0]));
  CHECK(s.mean == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman_chain_score({{0, {0}}}, one_dim_store({2}), 0),
                  InvalidArgument);
}

TEST_CASE("chain score is invariant under increasing transforms") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(8), w;
    for (double& x : v) x = std::round(uniform_real(rng, -3.0, 3.0));
    for (double x : v) w.push_back(std::exp(x) + x * x * x);
    const std::vector<Chain> chains = {{0, {0, 1, 2, 3}}, {0, {4, 5, 6, 7}}, {0, {0, 5, 7}}};
    CHECK(spearman_chain_score(chains, one_dim_store(v), 0) ==
          doctest::Approx(spearman_chain_score(chains, one_dim_store(w), 0)));
  }
}

TEST_CASE("preservation csv") {
  CHECK(chain_preservation_csv({{0, {0, 1}}}, one_dim_store({2, 1}), 0) ==
        "chain_id,position,entity,value,preserved\n0,0,0,2,1\n0,1,1,1,\n");
  CHECK(chain_preservation_csv({{0, {0, 1}}}, one_dim_store({1, 1}), 0) ==
        "chain_id,position,entity,value,preserved\n0,0,0,1,0\n0,1,1,1,\n");
  CHECK(chain_preservation_csv({}, one_dim_store({1}), 0) ==
        "chain_id,position,entity,value,preserved\n");
  const auto path = std::filesystem::temp_directory_path() / "geometre_chains.csv";
  chain_preservation_report({{0, {0, 1}}}, one_dim_store({2, 1}), 0, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().rfind("chain_id", 0) == 0);
  CHECK_THROWS_AS(chain_preservation_report({}, one_dim_store({1}), 0,
                                            "/nonexistent/dir/x.csv"),
                  IoError);
}
