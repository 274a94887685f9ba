#include "geometre/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "geometre/errors.hpp"
#include "geometre/random.hpp"

namespace geometre {

std::string_view to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::full:
      return "full";
    case ProjectionMode::additive:
      return "additive";
    case ProjectionMode::multiplicative:
      return "multiplicative";
  }
  return "full";
}

std::string_view to_string(AnswerMode mode) {
  return mode == AnswerMode::tied ? "tied" : "free";
}

ProjectionMode projection_mode_from_string(std::string_view s) {
  if (s == "full") return ProjectionMode::full;
  if (s == "additive") return ProjectionMode::additive;
  if (s == "multiplicative") return ProjectionMode::multiplicative;
  throw InvalidArgument("unknown projection mode '" + std::string(s) + "'");
}

AnswerMode answer_mode_from_string(std::string_view s) {
  // "answer_embedding = yes" means a separate answer vector.
  if (s == "tied" || s == "no") return AnswerMode::tied;
  if (s == "free" || s == "yes") return AnswerMode::free;
  throw InvalidArgument("unknown answer mode '" + std::string(s) + "'");
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z;
  z.entity_centers.assign(entity_centers.size(), 0.0);
  z.entity_offsets_raw.assign(entity_offsets_raw.size(), 0.0);
  z.answer_centers.assign(answer_centers.size(), 0.0);
  z.relation_params.assign(relation_params.size(), 0.0);
  return z;
}

std::map<RelationId, std::size_t> assign_transitive_dims(
    const std::vector<std::pair<RelationId, std::optional<RelationId>>>&
        relations,
    std::size_t dim) {
  std::set<RelationId> seen;
  for (const auto& [id, inverse] : relations) {
    if (!seen.insert(id).second) {
      throw InvalidArgument("assign_transitive_dims: duplicate relation id " +
                            std::to_string(id));
    }
  }
  // Group each relation with its inverse partner; a group is keyed by its
  // smallest member so that groups come out in ascending id order.
  std::map<RelationId, RelationId> group_of;
  for (const auto& [id, inverse] : relations) {
    RelationId key = id;
    if (inverse) key = std::min(key, *inverse);
    auto existing = group_of.find(id);
    if (existing != group_of.end()) key = std::min(key, existing->second);
    if (inverse) {
      auto partner = group_of.find(*inverse);
      if (partner != group_of.end()) key = std::min(key, partner->second);
      group_of[*inverse] = key;
    }
    group_of[id] = key;
  }
  std::set<RelationId> groups;
  for (const auto& [id, key] : group_of) groups.insert(key);
  if (!groups.empty() && dim < 2) {
    throw CapacityError(
        "transitive relations need at least two embedding dimensions");
  }
  if (groups.size() > dim) {
    throw CapacityError("cannot place " + std::to_string(groups.size()) +
                        " transitive relation groups in " +
                        std::to_string(dim) + " dimensions");
  }
  std::map<RelationId, std::size_t> dim_of_group;
  std::size_t next = 0;
  for (RelationId key : groups) dim_of_group[key] = next++;
  std::map<RelationId, std::size_t> out;
  for (const auto& [id, key] : group_of) out[id] = dim_of_group.at(key);
  return out;
}

EmbeddingStore EmbeddingStore::init(std::size_t num_entities,
                                    std::size_t num_relations, std::size_t dim,
                                    const StoreConfig& config,
                                    std::uint64_t seed) {
  if (num_entities == 0 || num_relations == 0 || dim == 0) {
    throw InvalidArgument("init_store: counts and dimension must be positive");
  }
  if (config.relations.size() > num_relations) {
    throw InvalidArgument("init_store: more relation infos than relations");
  }
  if (!(config.gamma > 0.0)) {
    throw InvalidArgument("init_store: gamma must be positive");
  }

  EmbeddingStore s;
  s.num_entities_ = num_entities;
  s.num_relations_ = num_relations;
  s.dim_ = dim;
  s.projection_mode_ = config.projection_mode;
  s.answer_mode_ = config.answer_mode;
  s.seed_ = seed;
  s.init_gamma_ = config.gamma;
  s.relations_ = config.relations;
  s.relations_.resize(num_relations);

  std::vector<std::pair<RelationId, std::optional<RelationId>>> transitive;
  for (RelationId r = 0; r < num_relations; ++r) {
    const RelationInfo& info = s.relations_[r];
    if (info.inverse_of && *info.inverse_of >= num_relations) {
      throw InvalidArgument("relation " + std::to_string(r) +
                            ": inverse_of out of range");
    }
    if (!info.transitive) continue;
    std::optional<RelationId> partner;
    if (info.inverse_of) {
      if (!s.relations_[*info.inverse_of].transitive) {
        throw InvalidArgument("relation " + std::to_string(r) +
                              " is transitive but its inverse is not");
      }
      partner = info.inverse_of;
    }
    transitive.emplace_back(r, partner);
  }
  s.transitive_dims_ = assign_transitive_dims(transitive, dim);

  Rng rng(seed);
  const double scale = config.gamma / std::sqrt(static_cast<double>(dim));
  const std::size_t block = num_entities * dim;
  s.params_.entity_centers.resize(block);
  s.params_.entity_offsets_raw.resize(block);
  for (double& x : s.params_.entity_centers) x = uniform_real(rng, -scale, scale);
  for (double& x : s.params_.entity_offsets_raw) {
    x = uniform_real(rng, -scale, scale);
  }
  if (config.answer_mode == AnswerMode::free) {
    s.params_.answer_centers = s.params_.entity_centers;
  }
  s.params_.relation_params.resize(num_relations * kSlots * dim);
  for (RelationId r = 0; r < num_relations; ++r) {
    for (int slot = 0; slot < kSlots; ++slot) {
      const bool multiplicative = slot == 0 || slot == 2;
      for (std::size_t d = 0; d < dim; ++d) {
        s.params_.relation_params[(r * kSlots + slot) * dim + d] =
            multiplicative ? uniform_real(rng, 0.9, 1.1)
                           : uniform_real(rng, -0.1, 0.1);
      }
    }
  }
  return s;
}

void EmbeddingStore::check_entity(EntityId e) const {
  if (e >= num_entities_) {
    throw LookupError("entity id " + std::to_string(e) + " out of range");
  }
}

void EmbeddingStore::check_relation(RelationId r) const {
  if (r >= num_relations_) {
    throw LookupError("relation id " + std::to_string(r) + " out of range");
  }
}

std::span<const double> EmbeddingStore::entity_center(EntityId e) const {
  check_entity(e);
  return std::span<const double>(params_.entity_centers).subspan(e * dim_, dim_);
}

std::span<const double> EmbeddingStore::entity_offset_raw(EntityId e) const {
  check_entity(e);
  return std::span<const double>(params_.entity_offsets_raw)
      .subspan(e * dim_, dim_);
}

Box EmbeddingStore::query_box(EntityId e) const {
  const auto center = entity_center(e);
  const auto raw = entity_offset_raw(e);
  Vector offset(dim_);
  for (std::size_t d = 0; d < dim_; ++d) offset[d] = std::abs(raw[d]);
  return Box::from_center_offset(center, offset);
}

std::span<const double> EmbeddingStore::answer(EntityId e) const {
  if (answer_mode_ == AnswerMode::tied) return entity_center(e);
  check_entity(e);
  return std::span<const double>(params_.answer_centers).subspan(e * dim_, dim_);
}

std::span<const double> EmbeddingStore::relation_slot(RelationId r,
                                                      int slot) const {
  check_relation(r);
  return std::span<const double>(params_.relation_params)
      .subspan((r * kSlots + slot) * dim_, dim_);
}

bool EmbeddingStore::slot_active(int slot) const {
  switch (projection_mode_) {
    case ProjectionMode::full:
      return true;
    case ProjectionMode::additive:
      return slot == 1 || slot == 3;
    case ProjectionMode::multiplicative:
      return slot == 0 || slot == 2;
  }
  return true;
}

RelationEmbedding EmbeddingStore::relation(RelationId r) const {
  RelationEmbedding out;
  Vector* slots[kSlots] = {&out.r1, &out.r2, &out.r3, &out.r4};
  for (int slot = 0; slot < kSlots; ++slot) {
    if (slot_active(slot)) {
      const auto raw = relation_slot(r, slot);
      slots[slot]->assign(raw.begin(), raw.end());
    } else {
      // Masked multiplicative slots read as 1, masked additive slots as 0.
      slots[slot]->assign(dim_, (slot == 0 || slot == 2) ? 1.0 : 0.0);
    }
  }
  const RelationInfo& info = relations_[r];
  out.transitive = info.transitive;
  out.inverse_of = info.inverse_of;
  if (auto target = transitive_target(r)) {
    out.transitive_dim = target->dim;
    out.ordering = target->direction;
  }
  return out;
}

std::optional<TransitiveTarget> EmbeddingStore::transitive_target(
    RelationId r) const {
  check_relation(r);
  auto it = transitive_dims_.find(r);
  if (it == transitive_dims_.end()) return std::nullopt;
  // Within an inverse pair the smaller id keeps the forward ordering.
  bool inverse = false;
  if (relations_[r].inverse_of && *relations_[r].inverse_of < r) inverse = true;
  for (RelationId q = 0; q < r; ++q) {
    if (relations_[q].transitive && relations_[q].inverse_of == r) {
      inverse = true;
    }
  }
  return TransitiveTarget{
      it->second,
      inverse ? OrderingDirection::inverse : OrderingDirection::forward};
}

}  // namespace geometre
