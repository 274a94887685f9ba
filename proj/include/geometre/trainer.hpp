#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometre/config.hpp"
#include "geometre/dataset.hpp"
#include "geometre/embedding_store.hpp"
#include "geometre/evaluator.hpp"
#include "geometre/query.hpp"
#include "geometre/random.hpp"

namespace geometre {

struct TrainingConfig {
  double alpha = 0.2;
  double gamma = 20.0;   // loss margin
  double lambda = 0.1;   // ordering margin
  double learning_rate = 1e-3;
  std::size_t dim = 32;
  std::size_t negatives_k = 16;
  std::size_t batch_size = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  AnswerMode answer_mode = AnswerMode::tied;
  ProjectionMode projection_mode = ProjectionMode::full;
  bool transitive_loss_enabled = true;
  double answer_consistency_weight = 1.0;
  double init_gamma = 0.0;  // init range scale; 0 means "same as gamma"

  std::size_t log_every = 100;
  std::size_t eval_every = 0;  // 0: validate only after the last step
  std::size_t patience = 0;    // steps without validation gain; 0 disables

  // Throws InvalidArgument on out-of-range values.
  void validate() const;
  double effective_init_gamma() const {
    return init_gamma > 0.0 ? init_gamma : gamma;
  }

  // Keys absent from `kv` keep the value from `base`.
  static TrainingConfig from_kv(const KeyValues& kv, const TrainingConfig& base);
  static TrainingConfig from_kv(const KeyValues& kv);
  nlohmann::ordered_json to_json() const;
};

// One training item: a negation-free query, its positive answer and the
// sampled negatives.
struct BatchItem {
  const QueryDag* query = nullptr;
  EntityId positive = 0;
  std::vector<EntityId> negatives;
};

// k ids drawn with replacement, uniform over entities outside `exclusion`
// (sorted). Throws InvalidArgument if nothing is left to sample.
std::vector<EntityId> sample_negatives(std::size_t k,
                                       const std::vector<EntityId>& exclusion,
                                       std::size_t num_entities, Rng& rng);

// -log sigmoid(gamma - d_pos) - (1/k) sum log sigmoid(d_neg - gamma).
double loss_from_distances(double positive, std::span<const double> negatives,
                           double gamma);
double loss(const CompiledQuery& cq, std::span<const double> positive,
            const std::vector<std::span<const double>>& negatives,
            const TrainingConfig& cfg);

// |r1[i] - 1| + |r3[i] - 1| + |r2[i]| + |r4[i]|; r must be transitive on i.
double transitive_reg_loss(const RelationEmbedding& r, std::size_t i);

// Sum of transitive_reg_loss over every transitive relation of the store; adds
// its subgradient into `grads` (same layout as the store's parameters).
double add_transitive_reg_gradients(const EmbeddingStore& store, ParameterSet& grads);

// dist_box of an entity's own box to its answer point; 0 when tied.
double answer_consistency_loss(EntityId e, const EmbeddingStore& store,
                               double alpha);

// Total objective of a batch, evaluated through compile/score:
// mean query loss + transitive regularizers (when enabled)
// + weight * mean answer consistency of the positives (free answers only).
double batch_loss(const EmbeddingStore& store, const std::vector<BatchItem>& batch,
                  const TrainingConfig& cfg);

// Exact subgradient of batch_loss. Ties in max/min go to the first operand,
// clamps at a boundary go to the boundary, |x| at 0 takes slope +1. Slots
// masked by the projection mode get zero.
ParameterSet gradients(const EmbeddingStore& store,
                       const std::vector<BatchItem>& batch,
                       const TrainingConfig& cfg, double* loss_out = nullptr);

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ParameterSet& params);
};

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               double learning_rate);

struct TrainingExample {
  QueryType type = QueryType::p1;
  QueryDag query;                  // rewritten, negation-free
  std::vector<EntityId> answers;   // positives and negative-sampling exclusion
};

std::vector<TrainingExample> training_examples(const Dataset& data);

struct TrainResult {
  EmbeddingStore final_store;
  std::optional<EmbeddingStore> best_store;  // by validation MRR
  std::optional<std::size_t> best_step;
  double best_valid_mrr = 0.0;
  double initial_loss = 0.0;  // loss of the first batch, before any update
  double final_loss = 0.0;    // mean of the last logged window
  std::size_t steps_run = 0;
  std::vector<nlohmann::ordered_json> log;
};

struct TrainHooks {
  // Receives every metrics record as it is produced.
  std::function<void(const nlohmann::ordered_json&)> on_log;
  bool validate = true;
  std::size_t eval_threads = 1;
};

// Throws NumericalError naming the step and parameter block on NaN/Inf.
TrainResult train(const Dataset& data, const TrainingConfig& cfg,
                  const TrainHooks& hooks = {});

EmbeddingStore init_store_for(const Dataset& data, const TrainingConfig& cfg);

}  // namespace geometre
