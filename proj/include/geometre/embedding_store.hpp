#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometre/geometry.hpp"

namespace geometre {

// Which relation slots are trainable. additive reads r1 = r3 = 1,
// multiplicative reads r2 = r4 = 0.
enum class ProjectionMode { full, additive, multiplicative };

// tied: an entity's answer point is the center of its query box.
enum class AnswerMode { tied, free };

std::string_view to_string(ProjectionMode mode);
std::string_view to_string(AnswerMode mode);
ProjectionMode projection_mode_from_string(std::string_view s);
AnswerMode answer_mode_from_string(std::string_view s);

struct RelationInfo {
  bool transitive = false;
  std::optional<RelationId> inverse_of;

  bool operator==(const RelationInfo&) const = default;
};

struct StoreConfig {
  double gamma = 20.0;
  ProjectionMode projection_mode = ProjectionMode::full;
  AnswerMode answer_mode = AnswerMode::tied;
  // One entry per relation; missing entries mean "not transitive".
  std::vector<RelationInfo> relations;
};

// Every trainable tensor, flattened row-major. Gradients and Adam moments
// reuse the same layout.
struct ParameterSet {
  Vector entity_centers;      // |V| x n
  Vector entity_offsets_raw;  // |V| x n, abs() applied at use
  Vector answer_centers;      // |V| x n in free mode, empty when tied
  Vector relation_params;     // |R| x 4 x n

  bool operator==(const ParameterSet&) const = default;

  // Same shapes, all zeros.
  ParameterSet zeros_like() const;

  template <typename Fn>
  void for_each_block(Fn&& fn) {
    fn(std::string_view("entity_centers"), entity_centers);
    fn(std::string_view("entity_offsets"), entity_offsets_raw);
    fn(std::string_view("answer_centers"), answer_centers);
    fn(std::string_view("relation_params"), relation_params);
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    fn(std::string_view("entity_centers"), entity_centers);
    fn(std::string_view("entity_offsets"), entity_offsets_raw);
    fn(std::string_view("answer_centers"), answer_centers);
    fn(std::string_view("relation_params"), relation_params);
  }
};

// Ordering dimension and direction used when the final hop of a query is a
// transitive relation.
struct TransitiveTarget {
  std::size_t dim = 0;
  OrderingDirection direction = OrderingDirection::forward;

  bool operator==(const TransitiveTarget&) const = default;
};

// Gives each transitive relation its own coordinate, ascending relation id to
// ascending dimension. A relation and its inverse share one coordinate.
// Throws InvalidArgument on duplicate ids, CapacityError when the groups do
// not fit in `dim` or when dim < 2.
std::map<RelationId, std::size_t> assign_transitive_dims(
    const std::vector<std::pair<RelationId, std::optional<RelationId>>>&
        relations,
    std::size_t dim);

class EmbeddingStore;

// Little-endian binary with a JSON header. `annotations` is stored verbatim
// in the header (training config, provenance).
void save_checkpoint(const EmbeddingStore& store,
                     const std::filesystem::path& path,
                     const nlohmann::json& annotations = nlohmann::json::object());

// Throws CheckpointError on bad magic, version, truncation, or when
// `expected_answers` disagrees with the stored answer mode.
EmbeddingStore load_checkpoint(
    const std::filesystem::path& path,
    std::optional<AnswerMode> expected_answers = std::nullopt,
    nlohmann::json* annotations = nullptr);

class EmbeddingStore {
 public:
  static constexpr int kSlots = 4;

  EmbeddingStore() = default;

  static EmbeddingStore init(std::size_t num_entities,
                             std::size_t num_relations, std::size_t dim,
                             const StoreConfig& config, std::uint64_t seed);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t dim() const { return dim_; }
  ProjectionMode projection_mode() const { return projection_mode_; }
  AnswerMode answer_mode() const { return answer_mode_; }
  std::uint64_t seed() const { return seed_; }
  double init_gamma() const { return init_gamma_; }
  const std::vector<RelationInfo>& relation_info() const { return relations_; }
  const std::map<RelationId, std::size_t>& transitive_dims() const {
    return transitive_dims_;
  }

  std::span<const double> entity_center(EntityId e) const;
  std::span<const double> entity_offset_raw(EntityId e) const;
  // Query box of an entity with offsets mapped through abs().
  Box query_box(EntityId e) const;
  // Answer point; aliases entity_center in tied mode.
  std::span<const double> answer(EntityId e) const;

  // Raw slot storage (slot 0..3 = r1..r4), ignoring the projection mode.
  std::span<const double> relation_slot(RelationId r, int slot) const;
  // Effective embedding under the projection mode, with transitive metadata.
  RelationEmbedding relation(RelationId r) const;
  // Whether the slot is trainable under the projection mode.
  bool slot_active(int slot) const;

  std::optional<TransitiveTarget> transitive_target(RelationId r) const;

  const ParameterSet& params() const { return params_; }
  // Single writer only; readers must not observe a partial update.
  ParameterSet& mutable_params() { return params_; }

  bool operator==(const EmbeddingStore&) const = default;

 private:
  friend EmbeddingStore load_checkpoint(const std::filesystem::path&,
                                        std::optional<AnswerMode>,
                                        nlohmann::json*);

  void check_entity(EntityId e) const;
  void check_relation(RelationId r) const;

  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::size_t dim_ = 0;
  ProjectionMode projection_mode_ = ProjectionMode::full;
  AnswerMode answer_mode_ = AnswerMode::tied;
  std::uint64_t seed_ = 0;
  double init_gamma_ = 0.0;
  std::vector<RelationInfo> relations_;
  std::map<RelationId, std::size_t> transitive_dims_;
  ParameterSet params_;
};

}  // namespace geometre
