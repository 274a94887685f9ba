#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometre/embedding_store.hpp"
#include "geometre/geometry.hpp"

namespace geometre {

enum class QueryType {
  p1, p2, p3, i2, i3, pi, ip, u2, up, in2, in3, inp, pin, pni
};

inline constexpr std::array<QueryType, 14> kAllQueryTypes = {
    QueryType::p1,  QueryType::p2,  QueryType::p3,  QueryType::i2,
    QueryType::i3,  QueryType::pi,  QueryType::ip,  QueryType::u2,
    QueryType::up,  QueryType::in2, QueryType::in3, QueryType::inp,
    QueryType::pin, QueryType::pni};

// "1p", "2in", ...
std::string_view to_string(QueryType type);
std::optional<QueryType> query_type_from_string(std::string_view name);
bool has_negation(QueryType type);

// Branch layout of a query type, which is also the layout of a query record:
// one anchor per branch, `branch_hops[b]` relations on branch b, then an
// optional final projection applied after the branches are merged.
struct QueryShape {
  enum class Merge { none, intersection, union_ };

  std::vector<int> branch_hops;
  Merge merge = Merge::none;
  std::optional<std::size_t> negated_branch;
  bool final_projection = false;
};

const QueryShape& shape_of(QueryType type);

using NodeId = std::size_t;

struct Anchor {
  EntityId entity;
  bool operator==(const Anchor&) const = default;
};
struct Projection {
  RelationId relation;
  NodeId child;
  bool operator==(const Projection&) const = default;
};
struct Intersection {
  std::vector<NodeId> children;
  bool operator==(const Intersection&) const = default;
};
struct Union {
  std::vector<NodeId> children;
  bool operator==(const Union&) const = default;
};
struct Negation {
  NodeId child;
  bool operator==(const Negation&) const = default;
};

using QueryNode = std::variant<Anchor, Projection, Intersection, Union, Negation>;

// Nodes are stored children-first: every child id is smaller than its
// parent's, which keeps the graph acyclic by construction.
struct QueryDag {
  std::vector<QueryNode> nodes;
  NodeId root = 0;

  NodeId add(QueryNode node);
  const QueryNode& at(NodeId id) const { return nodes.at(id); }

  bool operator==(const QueryDag&) const = default;
};

// Builds the canonical DAG of `type` from per-branch anchors and relations.
// `rels` holds one list per branch plus one single-relation list for the
// final projection when the shape has one. Throws ParseError on arity
// mismatch.
QueryDag build_query(QueryType type, std::span<const EntityId> anchors,
                     const std::vector<std::vector<RelationId>>& rels);

// Checks the structural invariants: single root, child ids before parents,
// anchors as leaves, unions only at the root or under a root projection.
// Throws ParseError naming the offending node.
void validate_dag(const QueryDag& dag);

// Recognizes which of the 14 shapes a DAG has, if any.
std::optional<QueryType> classify_shape(const QueryDag& dag);

// Parses {"type", "anchors", "rels"} and checks ids against the vocabulary.
QueryDag parse_query(const nlohmann::json& record, std::size_t num_entities,
                     std::size_t num_relations);

// Replaces each intersection with negated members by the intersection of its
// positive members (collapsing to a lone member). Identity on queries without
// negation. Throws UnsupportedQuery for negation outside an intersection or an
// intersection with no positive member.
QueryDag rewrite_negation(const QueryDag& dag);

// Splits a query into union-free conjunctive terms.
std::vector<QueryDag> dnf_terms(const QueryDag& dag);

// Relation of the last hop shared by every branch reaching the root of a
// union-free term, if there is one.
std::optional<RelationId> final_relation(const QueryDag& term);

struct CompiledQuery {
  std::vector<Box> disjuncts;
  std::optional<TransitiveTarget> transitive;
};

struct CompileOptions {
  // Score final transitive hops with the ordering distance.
  bool transitive_scoring = true;
};

// One box per DNF term. The query must be negation-free.
CompiledQuery compile(const QueryDag& dag, const EmbeddingStore& store,
                      CompileOptions options = {});

// Distance of one answer point to one disjunct box, choosing dist_box_tr
// when the query carries a transitive target.
double score_disjunct(const Box& box, std::span<const double> answer,
                      const std::optional<TransitiveTarget>& transitive,
                      double alpha, double lambda);

// Minimum over disjuncts; lower is better.
double score(const CompiledQuery& cq, std::span<const double> answer,
             double alpha, double lambda);

}  // namespace geometre
