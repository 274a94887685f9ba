#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometre/embedding_store.hpp"
#include "geometre/query.hpp"

namespace geometre {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

enum class Split { train, valid, test };
inline constexpr std::array<Split, 3> kAllSplits = {Split::train, Split::valid,
                                                     Split::test};
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct KnowledgeGraph {
  std::size_t num_entities = 0;
  std::vector<RelationInfo> relations;
  std::vector<Triple> triples;

  std::size_t num_relations() const { return relations.size(); }
};

// One line of a queries_*.jsonl file. Answer lists are sorted and unique.
struct QueryRecord {
  QueryType type = QueryType::p1;
  std::vector<EntityId> anchors;
  std::vector<std::vector<RelationId>> rels;
  QueryDag dag;  // as written, before any negation rewrite
  std::vector<EntityId> answers_train;
  std::vector<EntityId> answers_valid;
  std::vector<EntityId> answers_test;

  const std::vector<EntityId>& answers(Split split) const;
  // Answers first seen in `split` (all answers for the train split).
  std::vector<EntityId> hard_answers(Split split) const;

  nlohmann::ordered_json to_json() const;
};

struct Dataset {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<RelationInfo> relations;
  std::array<std::vector<Triple>, 3> triples;       // disjoint per split
  std::array<std::vector<QueryRecord>, 3> queries;  // indexed by Split

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }
  const std::vector<QueryRecord>& queries_of(Split s) const {
    return queries[static_cast<std::size_t>(s)];
  }
  // Graph visible at a split: train, train + valid, or all triples.
  KnowledgeGraph graph(Split split) const;
};

// Reads entities.tsv, relations.tsv, triples_{train,valid,test}.tsv and
// queries_{train,valid,test}.jsonl. Every problem is reported as a
// ValidationError prefixed with file:line.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes the same layout; output is byte-stable for equal datasets.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// Per-type query counts for one split.
std::map<QueryType, std::size_t> count_by_type(
    const std::vector<QueryRecord>& queries);

enum class ClosureMode { raw, transitive_closed };

// Exact set semantics over the graph, negation as complement within V.
// Returns a sorted id list.
std::vector<EntityId> brute_force_answers(const KnowledgeGraph& kg,
                                          const QueryDag& q,
                                          ClosureMode closure = ClosureMode::raw);

// Precomputed adjacency for repeated oracle calls on one graph.
class GraphIndex {
 public:
  explicit GraphIndex(const KnowledgeGraph& kg,
                      ClosureMode closure = ClosureMode::raw);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return out_.size(); }
  const std::vector<EntityId>& tails(RelationId r, EntityId h) const {
    return out_[r][h];
  }
  const std::vector<EntityId>& heads(RelationId r, EntityId t) const {
    return in_[r][t];
  }

  std::vector<EntityId> answers(const QueryDag& q) const;

 private:
  std::size_t num_entities_ = 0;
  std::vector<std::vector<std::vector<EntityId>>> out_;
  std::vector<std::vector<std::vector<EntityId>>> in_;
};

struct SyntheticConfig {
  std::size_t n_entities = 200;
  std::size_t n_relations = 6;   // total, including transitive and inverses
  std::size_t n_transitive = 1;
  std::size_t chain_length = 4;  // entities per chain
  double density = 0.2;          // edge probability between linked clusters
  std::uint64_t seed = 0;

  // Beyond the basic knobs:
  std::size_t n_clusters = 8;
  std::size_t chains_per_relation = 0;  // 0: as many as fit in V
  bool inverse_relations = false;       // add an inverse per transitive one
  double closure_train_fraction = 0.0;  // share of closure edges kept in train
  double valid_fraction = 0.1;          // of non-transitive edges
  double test_fraction = 0.1;
  bool all_train_1p = true;  // one 1p training query per (head, relation)
  std::map<QueryType, std::size_t> train_counts;
  std::map<QueryType, std::size_t> eval_counts;  // per valid and test split
  std::size_t max_attempts_per_query = 400;

  // Default per-type counts for the desk-scale fixtures.
  static SyntheticConfig with_default_counts();
};

// Deterministic for a fixed config. Throws GenerationError when the config
// is infeasible.
Dataset generate_synthetic(const SyntheticConfig& config);

// Key = value parser shared with the training config format.
SyntheticConfig synthetic_config_from_kv(
    const std::map<std::string, std::string>& kv);

}  // namespace geometre
