#include <string>

#include "doctest.h"
#include "geometre/errors.hpp"
#include "geometre/query.hpp"
#include "geometre/random.hpp"

using namespace geometre;
using json = nlohmann::json;

namespace {

QueryDag make(QueryType type, std::vector<EntityId> anchors,
              std::vector<std::vector<RelationId>> rels) {
  return build_query(type, anchors, rels);
}

// Random well-formed instance of `type` over the given vocabulary sizes.
QueryDag random_query(QueryType type, Rng& rng, std::size_t ne,
                      std::size_t nr) {
  const QueryShape& s = shape_of(type);
  std::vector<EntityId> anchors;
  std::vector<std::vector<RelationId>> rels;
  for (int hops : s.branch_hops) {
    anchors.push_back(static_cast<EntityId>(uniform_index(rng, ne)));
    std::vector<RelationId> chain;
    for (int h = 0; h < hops; ++h) {
      chain.push_back(static_cast<RelationId>(uniform_index(rng, nr)));
    }
    rels.push_back(chain);
  }
  if (s.final_projection) {
    rels.push_back({static_cast<RelationId>(uniform_index(rng, nr))});
  }
  return build_query(type, anchors, rels);
}

}  // namespace

TEST_CASE("type names round trip") {
  for (QueryType t : kAllQueryTypes) {
    CHECK(query_type_from_string(to_string(t)) == t);
  }
  CHECK_FALSE(query_type_from_string("4p"));
  CHECK(has_negation(QueryType::pni));
  CHECK_FALSE(has_negation(QueryType::up));
}

TEST_CASE("parse_query examples") {
  QueryDag p = parse_query(json::parse(R"({"type":"1p","anchor":0,"rels":[0]})"),
                           3, 2);
  REQUIRE(p.nodes.size() == 2);
  CHECK(std::get<Anchor>(p.nodes[0]).entity == 0);
  CHECK(std::get<Projection>(p.at(p.root)) == Projection{0, 0});

  QueryDag i = parse_query(
      json::parse(R"({"type":"2i","anchors":[0,1],"rels":[[0],[1]]})"), 3, 2);
  const auto& inter = std::get<Intersection>(i.at(i.root));
  REQUIRE(inter.children.size() == 2);
  for (NodeId c : inter.children) {
    CHECK(std::holds_alternative<Projection>(i.at(c)));
  }

  CHECK_THROWS_AS(
      parse_query(json::parse(R"({"type":"2p","anchors":[0],"rels":[[0]]})"), 3, 2),
      ParseError);
}

TEST_CASE("parse_query rejects bad records and names the node") {
  try {
    parse_query(json::parse(R"({"type":"2i","anchors":[0,7],"rels":[[0],[1]]})"),
                3, 2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("anchors[1]") != std::string::npos);
  }
  try {
    parse_query(json::parse(R"({"type":"2p","anchors":[0],"rels":[[0,5]]})"), 3, 2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("rels[0][1]") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_query(json::parse(R"({"type":"9z","anchors":[0],"rels":[[0]]})"), 3, 2),
                  ParseError);
  CHECK_THROWS_AS(parse_query(json::parse(R"({"type":"1p"})"), 3, 2), ParseError);
  CHECK_THROWS_AS(parse_query(json::parse("[1,2]"), 3, 2), ParseError);
}

TEST_CASE("every canonical shape classifies as itself") {
  Rng rng(1);
  for (QueryType t : kAllQueryTypes) {
    QueryDag q = random_query(t, rng, 6, 3);
    validate_dag(q);
    CHECK(classify_shape(q) == t);
  }
}

TEST_CASE("validate_dag structural checks") {
  QueryDag bad;
  bad.add(Anchor{0});
  bad.add(Projection{0, 1});
  bad.root = 1;
  CHECK_THROWS_AS(validate_dag(bad), ParseError);

  QueryDag orphan;
  orphan.add(Anchor{0});
  orphan.add(Anchor{1});
  orphan.root = orphan.add(Projection{0, 1});
  CHECK_THROWS_AS(validate_dag(orphan), ParseError);

  // Union below an intersection is not in DNF position.
  QueryDag deep;
  NodeId a = deep.add(Anchor{0});
  NodeId b = deep.add(Anchor{1});
  NodeId u = deep.add(Union{{a, b}});
  NodeId c = deep.add(Anchor{2});
  deep.root = deep.add(Intersection{{u, c}});
  CHECK_THROWS_AS(validate_dag(deep), ParseError);
}

TEST_CASE("rewrite_negation follows the approximation table") {
  QueryDag in2 = make(QueryType::in2, {0, 1}, {{0}, {1}});
  CHECK(rewrite_negation(in2) == make(QueryType::p1, {0}, {{0}}));

  QueryDag in3 = make(QueryType::in3, {0, 1, 2}, {{0}, {1}, {2}});
  CHECK(rewrite_negation(in3) == make(QueryType::i2, {0, 1}, {{0}, {1}}));

  QueryDag pni = make(QueryType::pni, {0, 1}, {{0, 1}, {2}});
  CHECK(rewrite_negation(pni) == make(QueryType::p1, {1}, {{2}}));

  QueryDag pin = make(QueryType::pin, {0, 1}, {{0, 1}, {2}});
  CHECK(rewrite_negation(pin) == make(QueryType::p2, {0}, {{0, 1}}));

  QueryDag inp = make(QueryType::inp, {0, 1}, {{0}, {1}, {2}});
  CHECK(rewrite_negation(inp) == make(QueryType::p2, {0}, {{0, 2}}));

  QueryDag i2 = make(QueryType::i2, {0, 1}, {{0}, {1}});
  CHECK(rewrite_negation(i2) == i2);
}

TEST_CASE("rewrite_negation is idempotent and maps types per the table") {
  const std::map<QueryType, QueryType> expected = {
      {QueryType::in2, QueryType::p1}, {QueryType::in3, QueryType::i2},
      {QueryType::pni, QueryType::p1}, {QueryType::inp, QueryType::p2},
      {QueryType::pin, QueryType::p2}};
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    for (QueryType type : kAllQueryTypes) {
      QueryDag q = random_query(type, rng, 10, 4);
      QueryDag once = rewrite_negation(q);
      CHECK(rewrite_negation(once) == once);
      validate_dag(once);
      auto it = expected.find(type);
      CHECK(classify_shape(once) == (it == expected.end() ? type : it->second));
    }
  }
}

TEST_CASE("rewrite_negation rejects unsupported placements") {
  QueryDag q;
  NodeId a = q.add(Anchor{0});
  NodeId p = q.add(Projection{0, a});
  q.root = q.add(Negation{p});
  CHECK_THROWS_AS(rewrite_negation(q), UnsupportedQuery);

  QueryDag all_neg;
  NodeId x = all_neg.add(Anchor{0});
  NodeId nx = all_neg.add(Negation{x});
  NodeId y = all_neg.add(Anchor{1});
  NodeId ny = all_neg.add(Negation{y});
  all_neg.root = all_neg.add(Intersection{{nx, ny}});
  CHECK_THROWS_AS(rewrite_negation(all_neg), UnsupportedQuery);
}

TEST_CASE("dnf_terms") {
  QueryDag up = make(QueryType::up, {0, 1}, {{0}, {1}, {2}});
  auto terms = dnf_terms(up);
  REQUIRE(terms.size() == 2);
  CHECK(terms[0] == make(QueryType::p2, {0}, {{0, 2}}));
  CHECK(terms[1] == make(QueryType::p2, {1}, {{1, 2}}));

  QueryDag pi = make(QueryType::pi, {0, 1}, {{0, 1}, {2}});
  auto single = dnf_terms(pi);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == pi);
}

TEST_CASE("compile") {
  StoreConfig cfg;
  cfg.relations = {{false, {}}, {true, {}}};
  auto store = EmbeddingStore::init(4, 2, 3, cfg, 5);

  QueryDag p2 = make(QueryType::p2, {1}, {{0, 1}});
  auto cq = compile(p2, store);
  REQUIRE(cq.disjuncts.size() == 1);
  Box by_hand =
      project(project(store.query_box(1), store.relation(0)), store.relation(1));
  CHECK(cq.disjuncts[0] == by_hand);
  CHECK(cq.transitive == store.transitive_target(1));
  CHECK_FALSE(compile(p2, store, {.transitive_scoring = false}).transitive);

  QueryDag p2b = make(QueryType::p2, {1}, {{1, 0}});
  CHECK_FALSE(compile(p2b, store).transitive);

  QueryDag u2 = make(QueryType::u2, {0, 2}, {{0}, {0}});
  auto cu = compile(u2, store);
  REQUIRE(cu.disjuncts.size() == 2);
  CHECK(cu.disjuncts[0] == project(store.query_box(0), store.relation(0)));
  CHECK(cu.disjuncts[1] == project(store.query_box(2), store.relation(0)));

  QueryDag neg = make(QueryType::in2, {0, 1}, {{0}, {1}});
  CHECK_THROWS_AS(compile(neg, store), UnsupportedQuery);
  CHECK_THROWS_AS(compile(make(QueryType::p1, {9}, {{0}}), store), LookupError);
}

TEST_CASE("compile of disjoint branches gives an empty box scored > 0") {
  auto store = EmbeddingStore::init(2, 1, 2, StoreConfig{}, 1);
  auto& p = store.mutable_params();
  p.entity_centers = {0, 0, 10, 10};
  p.entity_offsets_raw = {1, 1, 1, 1};
  p.relation_params = {1, 1, 0, 0, 1, 1, 0, 0};
  QueryDag i2 = make(QueryType::i2, {0, 1}, {{0}, {0}});
  auto cq = compile(i2, store);
  REQUIRE(cq.disjuncts.size() == 1);
  CHECK(cq.disjuncts[0].is_empty());
  // Corners are lower = (9, 9), upper = (1, 1); the midpoint (5, 5) violates
  // both sides of each dimension by 4.
  CHECK(score(cq, Vector{5, 5}, 0.0, 0.1) == doctest::Approx(16.0));
  CHECK(score(cq, Vector{0, 0}, 0.5, 0.1) > 0.0);
}

TEST_CASE("score takes the minimum over disjuncts") {
  CompiledQuery cq;
  cq.disjuncts.push_back(box_from_corners({0, 0}, {1, 1}));
  CHECK(score(cq, Vector{0.5, 0.5}, 0.0, 0.1) == 0.0);

  CompiledQuery two;
  two.disjuncts.push_back(box_from_corners({4, 0}, {5, 1}));    // dist 3
  two.disjuncts.push_back(box_from_corners({0, 0}, {0.3, 1}));  // dist 0.7
  CHECK(score(two, Vector{1, 0.5}, 0.0, 0.1) == doctest::Approx(0.7));

  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    CompiledQuery grow;
    Vector a = {uniform_real(rng, -3, 3), uniform_real(rng, -3, 3)};
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4; ++k) {
      Vector c = {uniform_real(rng, -3, 3), uniform_real(rng, -3, 3)};
      Vector o = {uniform_real(rng, 0, 1), uniform_real(rng, 0, 1)};
      grow.disjuncts.push_back(Box::from_center_offset(c, o));
      const double s = score(grow, a, 0.3, 0.1);
      CHECK(s <= prev);
      prev = s;
    }
  }
}
