#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometre/dataset.hpp"
#include "geometre/embedding_store.hpp"
#include "geometre/query.hpp"

namespace geometre {

struct RankingResult {
  std::size_t query = 0;  // index into the split's query list
  EntityId answer = 0;
  std::size_t rank = 1;
  double reciprocal = 1.0;
};

struct EvalConfig {
  double alpha = 0.2;
  double lambda = 0.1;
  bool transitive_scoring = true;
  std::size_t threads = 1;
};

// Scores of every entity's answer point against one compiled query.
std::vector<double> score_all(const CompiledQuery& cq, const EmbeddingStore& store,
                              double alpha, double lambda);

// 1 + #{u not filtered, u != v: s(u) < s(v)} + #{tied u with smaller id}.
// `filter` must be sorted and must not contain v.
std::size_t rank_from_scores(const std::vector<double>& scores, EntityId v,
                             const std::vector<EntityId>& filter);

std::size_t rank_answer(const CompiledQuery& cq, EntityId v,
                        const EmbeddingStore& store,
                        const std::vector<EntityId>& filter,
                        const EvalConfig& cfg);

// Mean of 1/rank.
double mean_reciprocal_rank(const std::vector<std::size_t>& ranks);

// Expected reciprocal rank of a uniformly random ranking of n candidates:
// H_n / n.
double random_baseline_mrr(std::size_t n);

struct TypeMetrics {
  double mrr = 0.0;             // mean over queries of the per-query MRR
  double random_baseline = 0.0; // same average for random rankings
  std::size_t n_queries = 0;
};

struct EvalReport {
  std::map<QueryType, TypeMetrics> per_type;
  double overall_mrr = 0.0;  // mean over all evaluated queries
  std::size_t n_queries = 0;
  std::vector<RankingResult> rankings;

  // type,mrr,n_queries with MRR x100 at one decimal.
  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

// Filtered ranking of each query's answers that first appear in `split`;
// queries without such answers are skipped. Negation queries are scored
// through their rewritten form.
EvalReport evaluate(const Dataset& data, Split split, const EmbeddingStore& store,
                    const EvalConfig& cfg);

}  // namespace geometre
