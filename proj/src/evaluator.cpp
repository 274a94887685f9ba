#include "geometre/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "geometre/errors.hpp"

namespace geometre {

std::vector<double> score_all(const CompiledQuery& cq, const EmbeddingStore& store,
                              double alpha, double lambda) {
  std::vector<double> out(store.num_entities());
  for (EntityId u = 0; u < out.size(); ++u) {
    out[u] = score(cq, store.answer(u), alpha, lambda);
  }
  return out;
}

std::size_t rank_from_scores(const std::vector<double>& scores, EntityId v,
                             const std::vector<EntityId>& filter) {
  if (v >= scores.size()) throw LookupError("rank: entity id out of range");
  if (std::binary_search(filter.begin(), filter.end(), v)) {
    throw InvalidArgument("rank: the ranked answer is in its own filter");
  }
  const double sv = scores[v];
  std::size_t rank = 1;
  auto f = filter.begin();
  for (EntityId u = 0; u < scores.size(); ++u) {
    while (f != filter.end() && *f < u) ++f;
    if (f != filter.end() && *f == u) continue;
    if (u == v) continue;
    if (scores[u] < sv || (scores[u] == sv && u < v)) ++rank;
  }
  return rank;
}

std::size_t rank_answer(const CompiledQuery& cq, EntityId v,
                        const EmbeddingStore& store,
                        const std::vector<EntityId>& filter,
                        const EvalConfig& cfg) {
  return rank_from_scores(score_all(cq, store, cfg.alpha, cfg.lambda), v, filter);
}

double mean_reciprocal_rank(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw InvalidArgument("mrr of an empty rank list");
  double sum = 0.0;
  for (std::size_t r : ranks) sum += 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(ranks.size());
}

double random_baseline_mrr(std::size_t n) {
  if (n == 0) throw InvalidArgument("random baseline needs candidates");
  double h = 0.0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  return h / static_cast<double>(n);
}

std::string EvalReport::to_csv() const {
  std::string out = "type,mrr,n_queries\n";
  char buf[64];
  for (const auto& [type, m] : per_type) {
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * m.mrr);
    out += std::string(to_string(type)) + "," + buf + "," +
           std::to_string(m.n_queries) + "\n";
  }
  return out;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  auto pct = [](double x) { return std::round(1000.0 * x) / 10.0; };
  j["overall_mrr"] = pct(overall_mrr);
  j["n_queries"] = n_queries;
  nlohmann::ordered_json types = nlohmann::ordered_json::object();
  for (const auto& [type, m] : per_type) {
    types[std::string(to_string(type))] = {
        {"mrr", pct(m.mrr)},
        {"random_baseline", pct(m.random_baseline)},
        {"n_queries", m.n_queries}};
  }
  j["per_type"] = types;
  return j;
}

namespace {

struct QueryOutcome {
  bool evaluated = false;
  double mrr = 0.0;
  double baseline = 0.0;
  std::vector<RankingResult> rankings;
};

QueryOutcome evaluate_one(const QueryRecord& q, std::size_t index, Split split,
                          const EmbeddingStore& store, const EvalConfig& cfg) {
  QueryOutcome out;
  const auto hard = q.hard_answers(split);
  if (hard.empty()) return out;
  const auto cq = compile(rewrite_negation(q.dag), store,
                          {.transitive_scoring = cfg.transitive_scoring});
  const auto scores = score_all(cq, store, cfg.alpha, cfg.lambda);
  const auto& known = q.answers(split);
  std::vector<std::size_t> ranks;
  double baseline = 0.0;
  for (EntityId v : hard) {
    std::vector<EntityId> filter;
    filter.reserve(known.size());
    for (EntityId u : known) {
      if (u != v) filter.push_back(u);
    }
    const std::size_t rank = rank_from_scores(scores, v, filter);
    ranks.push_back(rank);
    out.rankings.push_back({index, v, rank, 1.0 / static_cast<double>(rank)});
    baseline += random_baseline_mrr(store.num_entities() - filter.size());
  }
  out.evaluated = true;
  out.mrr = mean_reciprocal_rank(ranks);
  out.baseline = baseline / static_cast<double>(hard.size());
  return out;
}

}  // namespace

EvalReport evaluate(const Dataset& data, Split split, const EmbeddingStore& store,
                    const EvalConfig& cfg) {
  const auto& queries = data.queries_of(split);
  std::vector<QueryOutcome> outcomes(queries.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(cfg.threads, queries.size()));
  auto run = [&](std::size_t worker) {
    for (std::size_t i = worker; i < queries.size(); i += workers) {
      outcomes[i] = evaluate_one(queries[i], i, split, store, cfg);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }

  // Aggregation runs in query order regardless of the thread count.
  EvalReport report;
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.evaluated) continue;
    auto& m = report.per_type[queries[i].type];
    m.mrr += o.mrr;
    m.random_baseline += o.baseline;
    ++m.n_queries;
    total += o.mrr;
    ++report.n_queries;
    report.rankings.insert(report.rankings.end(), o.rankings.begin(),
                           o.rankings.end());
  }
  for (auto& [type, m] : report.per_type) {
    m.mrr /= static_cast<double>(m.n_queries);
    m.random_baseline /= static_cast<double>(m.n_queries);
  }
  if (report.n_queries > 0) {
    report.overall_mrr = total / static_cast<double>(report.n_queries);
  }
  return report;
}

}  // namespace geometre
