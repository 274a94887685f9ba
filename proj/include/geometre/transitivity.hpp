#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "geometre/dataset.hpp"
#include "geometre/embedding_store.hpp"

namespace geometre {

struct Chain {
  RelationId relation = 0;
  std::vector<EntityId> entities;

  bool operator==(const Chain&) const = default;
};

struct ChainOptions {
  // Guard against path explosion on dense graphs.
  std::size_t max_chains = 1'000'000;
};

// Every maximal path of r-edges, depth-first from each entity without an
// incoming r-edge (ascending id, children visited in ascending id). Entities
// only reachable through cycles are then used as extra starts. A path that
// would revisit an entity stops there and counts as a truncation (logged as a
// warning). Throws CapacityError past `max_chains`.
std::vector<Chain> extract_chains(const std::vector<Triple>& triples, RelationId r,
                                  std::size_t* truncated = nullptr,
                                  ChainOptions options = {});

// Average ranks, ties sharing the mean of their positions (1-based).
std::vector<double> fractional_ranks(const std::vector<double>& values);

// Pearson correlation of the fractional ranks; 0 when either side is
// constant. Throws InvalidArgument on size mismatch or fewer than 2 items.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SpearmanSummary {
  double mean = 0.0;           // over scored chains
  std::size_t n_scored = 0;    // chains with at least 2 entities
  std::vector<double> per_chain;  // NaN for chains too short to score
};

// Rank agreement between chain position and the answer coordinate on the
// relation's transitive dimension: head-to-tail values are expected to fall
// (rise for inverse-form relations). Throws InvalidArgument when r has no
// transitive dimension or no chain can be scored.
SpearmanSummary spearman_chain_summary(const std::vector<Chain>& chains,
                                       const EmbeddingStore& store, RelationId r);
double spearman_chain_score(const std::vector<Chain>& chains,
                            const EmbeddingStore& store, RelationId r);

// chain_id,position,entity,value,preserved. `preserved` describes the link
// from this position to the next (strict inequality in the expected
// direction) and is left blank on the last position.
std::string chain_preservation_csv(const std::vector<Chain>& chains,
                                   const EmbeddingStore& store, RelationId r);
void chain_preservation_report(const std::vector<Chain>& chains,
                               const EmbeddingStore& store, RelationId r,
                               const std::filesystem::path& out);

}  // namespace geometre
