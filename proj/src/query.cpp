#include "geometre/query.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "geometre/errors.hpp"

namespace geometre {

namespace {

constexpr std::array<std::string_view, 14> kTypeNames = {
    "1p", "2p", "3p", "2i", "3i", "pi", "ip",
    "2u", "up", "2in", "3in", "inp", "pin", "pni"};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<NodeId> children_of(const QueryNode& node) {
  return std::visit(
      Overloaded{
          [](const Anchor&) { return std::vector<NodeId>{}; },
          [](const Projection& p) { return std::vector<NodeId>{p.child}; },
          [](const Intersection& i) { return i.children; },
          [](const Union& u) { return u.children; },
          [](const Negation& n) { return std::vector<NodeId>{n.child}; },
      },
      node);
}

std::string signature(const QueryDag& dag, NodeId id) {
  const QueryNode& node = dag.at(id);
  auto joined = [&](const std::vector<NodeId>& children) {
    std::vector<std::string> parts;
    for (NodeId c : children) parts.push_back(signature(dag, c));
    std::sort(parts.begin(), parts.end());
    std::string out;
    for (const auto& part : parts) {
      if (!out.empty()) out += ',';
      out += part;
    }
    return out;
  };
  return std::visit(
      Overloaded{
          [](const Anchor&) { return std::string("e"); },
          [&](const Projection& p) { return "p" + signature(dag, p.child); },
          [&](const Intersection& i) { return "i[" + joined(i.children) + "]"; },
          [&](const Union& u) { return "u[" + joined(u.children) + "]"; },
          [&](const Negation& n) { return "n" + signature(dag, n.child); },
      },
      node);
}

bool contains_negation(const QueryDag& dag) {
  return std::any_of(dag.nodes.begin(), dag.nodes.end(), [](const QueryNode& n) {
    return std::holds_alternative<Negation>(n);
  });
}

// Copies `src` into `dst` and returns the id of src's root inside dst.
NodeId append(QueryDag& dst, const QueryDag& src) {
  const NodeId base = dst.nodes.size();
  for (QueryNode node : src.nodes) {
    std::visit(Overloaded{
                   [](Anchor&) {},
                   [&](Projection& p) { p.child += base; },
                   [&](Intersection& i) {
                     for (NodeId& c : i.children) c += base;
                   },
                   [&](Union& u) {
                     for (NodeId& c : u.children) c += base;
                   },
                   [&](Negation& n) { n.child += base; },
               },
               node);
    dst.nodes.push_back(std::move(node));
  }
  return src.root + base;
}

std::vector<QueryDag> expand(const QueryDag& dag, NodeId id) {
  const QueryNode& node = dag.at(id);
  if (const auto* a = std::get_if<Anchor>(&node)) {
    QueryDag t;
    t.root = t.add(*a);
    return {t};
  }
  if (const auto* p = std::get_if<Projection>(&node)) {
    auto terms = expand(dag, p->child);
    for (QueryDag& t : terms) t.root = t.add(Projection{p->relation, t.root});
    return terms;
  }
  if (const auto* u = std::get_if<Union>(&node)) {
    std::vector<QueryDag> out;
    for (NodeId c : u->children) {
      auto terms = expand(dag, c);
      out.insert(out.end(), terms.begin(), terms.end());
    }
    return out;
  }
  if (const auto* in = std::get_if<Intersection>(&node)) {
    struct Partial {
      QueryDag dag;
      std::vector<NodeId> roots;
    };
    std::vector<Partial> partial(1);
    for (NodeId c : in->children) {
      const auto terms = expand(dag, c);
      std::vector<Partial> next;
      for (const Partial& p : partial) {
        for (const QueryDag& t : terms) {
          Partial q = p;
          q.roots.push_back(append(q.dag, t));
          next.push_back(std::move(q));
        }
      }
      partial = std::move(next);
    }
    std::vector<QueryDag> out;
    for (Partial& p : partial) {
      p.dag.root = p.dag.add(Intersection{p.roots});
      out.push_back(std::move(p.dag));
    }
    return out;
  }
  throw UnsupportedQuery("dnf_terms: negation must be rewritten first");
}

Box evaluate_term(const QueryDag& term, NodeId id, const EmbeddingStore& store) {
  const QueryNode& node = term.at(id);
  if (const auto* a = std::get_if<Anchor>(&node)) {
    return store.query_box(a->entity);
  }
  if (const auto* p = std::get_if<Projection>(&node)) {
    return project(evaluate_term(term, p->child, store),
                   store.relation(p->relation));
  }
  if (const auto* in = std::get_if<Intersection>(&node)) {
    std::vector<Box> boxes;
    boxes.reserve(in->children.size());
    for (NodeId c : in->children) {
      boxes.push_back(evaluate_term(term, c, store));
    }
    return intersect(boxes);
  }
  throw UnsupportedQuery("compile: unexpected node in conjunctive term");
}

}  // namespace

std::string_view to_string(QueryType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<QueryType> query_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<QueryType>(i);
  }
  return std::nullopt;
}

bool has_negation(QueryType type) {
  return shape_of(type).negated_branch.has_value();
}

const QueryShape& shape_of(QueryType type) {
  using M = QueryShape::Merge;
  static const std::array<QueryShape, 14> shapes = {{
      {{1}, M::none, std::nullopt, false},            // 1p
      {{2}, M::none, std::nullopt, false},            // 2p
      {{3}, M::none, std::nullopt, false},            // 3p
      {{1, 1}, M::intersection, std::nullopt, false},     // 2i
      {{1, 1, 1}, M::intersection, std::nullopt, false},  // 3i
      {{2, 1}, M::intersection, std::nullopt, false},     // pi
      {{1, 1}, M::intersection, std::nullopt, true},      // ip
      {{1, 1}, M::union_, std::nullopt, false},           // 2u
      {{1, 1}, M::union_, std::nullopt, true},            // up
      {{1, 1}, M::intersection, 1, false},                // 2in
      {{1, 1, 1}, M::intersection, 2, false},             // 3in
      {{1, 1}, M::intersection, 1, true},                 // inp
      {{2, 1}, M::intersection, 1, false},                // pin
      {{2, 1}, M::intersection, 0, false},                // pni
  }};
  return shapes[static_cast<std::size_t>(type)];
}

NodeId QueryDag::add(QueryNode node) {
  nodes.push_back(std::move(node));
  return nodes.size() - 1;
}

QueryDag build_query(QueryType type, std::span<const EntityId> anchors,
                     const std::vector<std::vector<RelationId>>& rels) {
  const QueryShape& shape = shape_of(type);
  const std::size_t branches = shape.branch_hops.size();
  const std::string name(to_string(type));
  if (anchors.size() != branches) {
    throw ParseError(name + " query needs " + std::to_string(branches) +
                     " anchor(s), got " + std::to_string(anchors.size()));
  }
  const std::size_t expected_lists = branches + (shape.final_projection ? 1 : 0);
  if (rels.size() != expected_lists) {
    throw ParseError(name + " query needs " + std::to_string(expected_lists) +
                     " relation list(s), got " + std::to_string(rels.size()));
  }
  for (std::size_t b = 0; b < branches; ++b) {
    if (rels[b].size() != static_cast<std::size_t>(shape.branch_hops[b])) {
      throw ParseError(name + " query branch " + std::to_string(b) + " needs " +
                       std::to_string(shape.branch_hops[b]) +
                       " relation(s), got " + std::to_string(rels[b].size()));
    }
  }
  if (shape.final_projection && rels.back().size() != 1) {
    throw ParseError(name + " query final projection needs exactly 1 relation");
  }

  QueryDag dag;
  std::vector<NodeId> heads;
  for (std::size_t b = 0; b < branches; ++b) {
    NodeId head = dag.add(Anchor{anchors[b]});
    for (RelationId r : rels[b]) head = dag.add(Projection{r, head});
    if (shape.negated_branch == b) head = dag.add(Negation{head});
    heads.push_back(head);
  }
  NodeId root = heads.front();
  if (shape.merge == QueryShape::Merge::intersection) {
    root = dag.add(Intersection{heads});
  } else if (shape.merge == QueryShape::Merge::union_) {
    root = dag.add(Union{heads});
  }
  if (shape.final_projection) root = dag.add(Projection{rels.back()[0], root});
  dag.root = root;
  return dag;
}

void validate_dag(const QueryDag& dag) {
  if (dag.nodes.empty()) throw ParseError("query has no nodes");
  if (dag.root >= dag.nodes.size()) throw ParseError("query root out of range");
  std::vector<int> parents(dag.nodes.size(), 0);
  std::vector<std::optional<NodeId>> parent_of(dag.nodes.size());
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    const auto children = children_of(dag.nodes[id]);
    const bool is_set_op = std::holds_alternative<Intersection>(dag.nodes[id]) ||
                           std::holds_alternative<Union>(dag.nodes[id]);
    if (is_set_op && children.empty()) {
      throw ParseError("node " + std::to_string(id) + " has no children");
    }
    for (NodeId c : children) {
      if (c >= id) {
        throw ParseError("node " + std::to_string(id) +
                         " references a later node " + std::to_string(c));
      }
      ++parents[c];
      parent_of[c] = id;
    }
  }
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    if (id == dag.root) {
      if (parents[id] != 0) throw ParseError("root node has a parent");
      continue;
    }
    if (parents[id] == 0) {
      throw ParseError("node " + std::to_string(id) + " is not reachable");
    }
  }
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    if (!std::holds_alternative<Union>(dag.nodes[id]) || id == dag.root) {
      continue;
    }
    const NodeId parent = *parent_of[id];
    if (parent != dag.root ||
        !std::holds_alternative<Projection>(dag.nodes[parent]) ||
        parents[id] != 1) {
      throw ParseError("union node " + std::to_string(id) +
                       " must be the root or directly under a root projection");
    }
  }
}

std::optional<QueryType> classify_shape(const QueryDag& dag) {
  static const auto table = [] {
    std::map<std::string, QueryType> t;
    for (QueryType type : kAllQueryTypes) {
      const QueryShape& s = shape_of(type);
      std::vector<EntityId> anchors(s.branch_hops.size(), 0);
      std::vector<std::vector<RelationId>> rels;
      for (int hops : s.branch_hops) rels.emplace_back(hops, 0);
      if (s.final_projection) rels.emplace_back(1, 0);
      const QueryDag canonical = build_query(type, anchors, rels);
      t.emplace(signature(canonical, canonical.root), type);
    }
    return t;
  }();
  if (dag.nodes.empty() || dag.root >= dag.nodes.size()) return std::nullopt;
  auto it = table.find(signature(dag, dag.root));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

QueryDag parse_query(const nlohmann::json& record, std::size_t num_entities,
                     std::size_t num_relations) {
  if (!record.is_object()) throw ParseError("query record is not an object");
  const auto type_it = record.find("type");
  if (type_it == record.end() || !type_it->is_string()) {
    throw ParseError("query record lacks a string \"type\"");
  }
  const auto type = query_type_from_string(type_it->get<std::string>());
  if (!type) {
    throw ParseError("unknown query type '" + type_it->get<std::string>() + "'");
  }
  // Single-path shapes may also be written {"anchor": e, "rels": [r, ...]}.
  nlohmann::json anchors_json;
  nlohmann::json rels_json;
  if (record.contains("anchors")) {
    anchors_json = record["anchors"];
  } else if (record.contains("anchor")) {
    anchors_json = nlohmann::json::array({record["anchor"]});
  }
  if (record.contains("rels")) rels_json = record["rels"];
  if (!anchors_json.is_array()) {
    throw ParseError("query record lacks an \"anchors\" array");
  }
  if (!rels_json.is_array()) {
    throw ParseError("query record lacks a \"rels\" array");
  }
  const bool flat = std::none_of(rels_json.begin(), rels_json.end(),
                                 [](const auto& v) { return v.is_array(); });
  if (flat && !rels_json.empty()) {
    rels_json = nlohmann::json::array({rels_json});
  }
  const auto* anchors_it = &anchors_json;
  const auto* rels_it = &rels_json;

  std::vector<EntityId> anchors;
  for (std::size_t i = 0; i < anchors_it->size(); ++i) {
    const auto& v = (*anchors_it)[i];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
        v.get<std::uint64_t>() >= num_entities) {
      throw ParseError("anchors[" + std::to_string(i) + "]: unknown entity id " +
                       v.dump());
    }
    anchors.push_back(v.get<EntityId>());
  }
  std::vector<std::vector<RelationId>> rels;
  for (std::size_t b = 0; b < rels_it->size(); ++b) {
    const auto& branch = (*rels_it)[b];
    if (!branch.is_array()) {
      throw ParseError("rels[" + std::to_string(b) + "] is not a list");
    }
    std::vector<RelationId> list;
    for (std::size_t h = 0; h < branch.size(); ++h) {
      const auto& v = branch[h];
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
          v.get<std::uint64_t>() >= num_relations) {
        throw ParseError("rels[" + std::to_string(b) + "][" + std::to_string(h) +
                         "]: unknown relation id " + v.dump());
      }
      list.push_back(v.get<RelationId>());
    }
    rels.push_back(std::move(list));
  }

  QueryDag dag = build_query(*type, anchors, rels);
  validate_dag(dag);
  if (classify_shape(dag) != type) {
    throw ParseError("query shape does not match declared type " +
                     std::string(to_string(*type)));
  }
  return dag;
}

QueryDag rewrite_negation(const QueryDag& dag) {
  if (!contains_negation(dag)) return dag;
  QueryDag out;
  auto rebuild = [&](auto&& self, NodeId id) -> NodeId {
    const QueryNode& node = dag.at(id);
    if (const auto* a = std::get_if<Anchor>(&node)) return out.add(*a);
    if (const auto* p = std::get_if<Projection>(&node)) {
      const NodeId child = self(self, p->child);
      return out.add(Projection{p->relation, child});
    }
    if (const auto* u = std::get_if<Union>(&node)) {
      std::vector<NodeId> children;
      for (NodeId c : u->children) children.push_back(self(self, c));
      return out.add(Union{children});
    }
    if (const auto* in = std::get_if<Intersection>(&node)) {
      std::vector<NodeId> kept;
      for (NodeId c : in->children) {
        if (std::holds_alternative<Negation>(dag.at(c))) continue;
        kept.push_back(self(self, c));
      }
      if (kept.empty()) {
        throw UnsupportedQuery("intersection node " + std::to_string(id) +
                               " has only negated members");
      }
      if (kept.size() == 1) return kept.front();
      return out.add(Intersection{kept});
    }
    throw UnsupportedQuery("negation node " + std::to_string(id) +
                           " is not a member of an intersection");
  };
  out.root = rebuild(rebuild, dag.root);
  // Dropped branches leave no orphans: they were never copied.
  return out;
}

std::vector<QueryDag> dnf_terms(const QueryDag& dag) {
  return expand(dag, dag.root);
}

std::optional<RelationId> final_relation(const QueryDag& term) {
  const QueryNode& root = term.at(term.root);
  if (const auto* p = std::get_if<Projection>(&root)) return p->relation;
  if (const auto* in = std::get_if<Intersection>(&root)) {
    std::optional<RelationId> shared;
    for (NodeId c : in->children) {
      const auto* p = std::get_if<Projection>(&term.at(c));
      if (!p) return std::nullopt;
      if (shared && *shared != p->relation) return std::nullopt;
      shared = p->relation;
    }
    return shared;
  }
  return std::nullopt;
}

CompiledQuery compile(const QueryDag& dag, const EmbeddingStore& store,
                      CompileOptions options) {
  if (contains_negation(dag)) {
    throw UnsupportedQuery("compile: negation must be rewritten first");
  }
  CompiledQuery cq;
  std::optional<std::optional<TransitiveTarget>> shared_target;
  for (const QueryDag& term : dnf_terms(dag)) {
    cq.disjuncts.push_back(evaluate_term(term, term.root, store));
    std::optional<TransitiveTarget> target;
    if (options.transitive_scoring) {
      if (auto r = final_relation(term)) target = store.transitive_target(*r);
    }
    if (!shared_target) {
      shared_target = target;
    } else if (*shared_target != target) {
      shared_target = std::optional<TransitiveTarget>{};
    }
  }
  if (shared_target) cq.transitive = *shared_target;
  return cq;
}

double score_disjunct(const Box& box, std::span<const double> answer,
                      const std::optional<TransitiveTarget>& transitive,
                      double alpha, double lambda) {
  if (transitive) {
    return dist_box_tr(box, answer, transitive->dim, alpha, lambda,
                       transitive->direction);
  }
  return dist_box(box, answer, alpha);
}

double score(const CompiledQuery& cq, std::span<const double> answer,
             double alpha, double lambda) {
  double best = std::numeric_limits<double>::infinity();
  for (const Box& box : cq.disjuncts) {
    best = std::min(best,
                    score_disjunct(box, answer, cq.transitive, alpha, lambda));
  }
  return best;
}

}  // namespace geometre
