#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "../support/hand_fixture.hpp"
#include "doctest.h"
#include "geometre/config.hpp"
#include "geometre/dataset.hpp"
#include "geometre/errors.hpp"
#include "geometre/random.hpp"

using namespace geometre;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("geometre_ds_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void append_line(const fs::path& p, const std::string& line) {
  std::ofstream(p, std::ios::app) << line << '\n';
}

SyntheticConfig small_config() {
  SyntheticConfig c = SyntheticConfig::with_default_counts();
  c.n_entities = 60;
  c.n_relations = 4;
  c.n_transitive = 1;
  c.chain_length = 4;
  c.n_clusters = 4;
  c.density = 0.3;
  c.seed = 5;
  for (auto& [t, n] : c.train_counts) n = 10;
  for (auto& [t, n] : c.eval_counts) n = 4;
  return c;
}

}  // namespace

TEST_CASE("oracle matches hand enumeration for every query type") {
  const auto kg = hand::graph();
  for (const auto& c : hand::cases()) {
    CAPTURE(to_string(c.type));
    CHECK(brute_force_answers(kg, build_query(c.type, c.anchors, c.rels)) ==
          c.expected);
  }
}

TEST_CASE("oracle closes transitive relations on request") {
  KnowledgeGraph kg;
  kg.num_entities = 4;
  kg.relations = {{true, {}}};
  kg.triples = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}};
  QueryDag q = build_query(QueryType::p1, std::vector<EntityId>{0},
                           {{0}});
  CHECK(brute_force_answers(kg, q) == std::vector<EntityId>{1});
  CHECK(brute_force_answers(kg, q, ClosureMode::transitive_closed) ==
        std::vector<EntityId>{1, 2, 3});
}

TEST_CASE("dropping a negated conjunct only enlarges the answer set") {
  Rng rng(21);
  for (int g = 0; g < 3; ++g) {
    KnowledgeGraph kg;
    kg.num_entities = 8;
    kg.relations.resize(2);
    for (EntityId h = 0; h < 8; ++h) {
      for (RelationId r = 0; r < 2; ++r) {
        for (EntityId t = 0; t < 8; ++t) {
          if (uniform01(rng) < 0.25) kg.triples.push_back({h, r, t});
        }
      }
    }
    GraphIndex index(kg);
    for (EntityId a = 0; a < 8; ++a) {
      for (EntityId b = 0; b < 8; ++b) {
        for (RelationId r = 0; r < 2; ++r) {
          for (RelationId s = 0; s < 2; ++s) {
            QueryDag q = build_query(QueryType::in2, std::vector<EntityId>{a, b},
                                     {{r}, {s}});
            auto exact = index.answers(q);
            auto approx = index.answers(rewrite_negation(q));
            CHECK(std::includes(approx.begin(), approx.end(), exact.begin(),
                                exact.end()));
          }
        }
      }
    }
  }
}

TEST_CASE("write then load round trips") {
  auto data = generate_synthetic(small_config());
  const auto dir = fresh_dir("roundtrip");
  write_dataset(data, dir);
  auto loaded = load_dataset(dir);
  CHECK(loaded.entity_names == data.entity_names);
  CHECK(loaded.relations == data.relations);
  CHECK(loaded.triples == data.triples);
  for (Split s : kAllSplits) {
    const auto& a = data.queries_of(s);
    const auto& b = loaded.queries_of(s);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].to_json() == b[i].to_json());
      CHECK(a[i].dag == b[i].dag);
    }
  }
}

TEST_CASE("load_dataset validation errors name file and line") {
  auto data = generate_synthetic(small_config());

  auto expect_error = [](const fs::path& dir, const std::string& needle) {
    try {
      load_dataset(dir);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos,
                    e.what());
    }
  };

  {
    const auto dir = fresh_dir("bad_entity");
    write_dataset(data, dir);
    const auto lines = data.queries_of(Split::test).size();
    append_line(dir / "queries_test.jsonl",
                R"({"type":"1p","anchors":[999],"rels":[[0]],"answers_train":[],"answers_valid":[],"answers_test":[1]})");
    expect_error(dir, "queries_test.jsonl:" + std::to_string(lines + 1));
  }
  {
    const auto dir = fresh_dir("inclusion");
    write_dataset(data, dir);
    append_line(dir / "queries_valid.jsonl",
                R"({"type":"1p","anchors":[0],"rels":[[0]],"answers_train":[],"answers_valid":[1,2],"answers_test":[1]})");
    expect_error(dir, "inclusion violated");
  }
  {
    const auto dir = fresh_dir("triple_range");
    write_dataset(data, dir);
    append_line(dir / "triples_train.tsv", "0\t0\t100000");
    expect_error(dir, "triples_train.tsv:");
  }
  {
    const auto dir = fresh_dir("missing");
    write_dataset(data, dir);
    fs::remove(dir / "relations.tsv");
    expect_error(dir, "relations.tsv");
  }
}

TEST_CASE("generator is deterministic and byte-stable") {
  const auto a = fresh_dir("gen_a");
  const auto b = fresh_dir("gen_b");
  write_dataset(generate_synthetic(small_config()), a);
  write_dataset(generate_synthetic(small_config()), b);
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  auto other = small_config();
  other.seed = 6;
  const auto c = fresh_dir("gen_c");
  write_dataset(generate_synthetic(other), c);
  CHECK(slurp(a / "triples_train.tsv") != slurp(c / "triples_train.tsv"));
}

TEST_CASE("generated data respects the construction rules") {
  auto cfg = small_config();
  auto data = generate_synthetic(cfg);
  const std::size_t half = data.num_entities() / 2;
  for (Split s : kAllSplits) {
    for (const auto& q : data.queries_of(s)) {
      CHECK(std::includes(q.answers_valid.begin(), q.answers_valid.end(),
                          q.answers_train.begin(), q.answers_train.end()));
      CHECK(std::includes(q.answers_test.begin(), q.answers_test.end(),
                          q.answers_valid.begin(), q.answers_valid.end()));
      CHECK_FALSE(q.answers(s).empty());
      CHECK(q.answers_test.size() <= half);
      CHECK(q.answers_test == brute_force_answers(data.graph(Split::test), q.dag));
    }
  }
  for (QueryType t : kAllQueryTypes) {
    CHECK(count_by_type(data.queries_of(Split::test))[t] == 4);
  }

  // Chains: base links in train, closure links in test only.
  std::set<Triple> train(data.triples[0].begin(), data.triples[0].end());
  std::size_t closure = 0;
  for (const Triple& t : data.triples[2]) {
    if (t.relation != 0) continue;
    ++closure;
    CHECK_FALSE(train.count(t));
  }
  // 15 chains of 4 entities: 3 closure links each.
  CHECK(closure == 15 * 3);
  std::size_t base = 0;
  for (const Triple& t : data.triples[0]) base += t.relation == 0;
  CHECK(base == 15 * 3);
}

TEST_CASE("generator preconditions") {
  auto cfg = small_config();
  cfg.chain_length = 2;
  CHECK_THROWS_AS(generate_synthetic(cfg), GenerationError);

  auto sparse = small_config();
  sparse.n_transitive = 0;
  sparse.density = 0.0;
  CHECK_THROWS_AS(generate_synthetic(sparse), GenerationError);
}

TEST_CASE("synthetic config from key values") {
  auto kv = parse_key_values(
      "# toy\n[data]\nn_entities = 30\ndensity = 0.5  # inline\n"
      "inverse_relations = yes\ntrain_count.2i = 7\n",
      "inline");
  auto c = synthetic_config_from_kv(kv);
  CHECK(c.n_entities == 30);
  CHECK(c.density == 0.5);
  CHECK(c.inverse_relations);
  CHECK(c.train_counts[QueryType::i2] == 7);
  CHECK_THROWS_AS(parse_key_values("novalue\n", "x"), ParseError);
  CHECK_THROWS_AS(kv_double({{"a", "x1"}}, "a", 0), ParseError);
}
