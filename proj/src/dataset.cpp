#include "geometre/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "geometre/config.hpp"
#include "geometre/errors.hpp"
#include "geometre/random.hpp"

namespace geometre {

namespace {

constexpr std::array<const char*, 3> kSplitNames = {"train", "valid", "test"};

std::size_t idx(Split s) { return static_cast<std::size_t>(s); }

// Lines of a text file; a missing file is a validation problem.
std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": missing or unreadable file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void fail_at(const std::filesystem::path& file, std::size_t line,
                          const std::string& what) {
  throw ValidationError(file.filename().string() + ":" + std::to_string(line) +
                        ": " + what);
}

std::int64_t field_int(const std::filesystem::path& file, std::size_t line,
                       std::string_view s, const char* what) {
  std::int64_t v = 0;
  if (!parse_int(s, v)) {
    fail_at(file, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::vector<EntityId> read_answers(const nlohmann::json& record,
                                   const char* key, std::size_t num_entities,
                                   const std::filesystem::path& file,
                                   std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_array()) {
    fail_at(file, line, std::string("missing \"") + key + "\" array");
  }
  std::vector<EntityId> out;
  for (const auto& v : *it) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
        v.get<std::uint64_t>() >= num_entities) {
      fail_at(file, line, std::string(key) + ": entity id " + v.dump() +
                              " out of range");
    }
    out.push_back(v.get<EntityId>());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_subset(const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<Triple> load_triples(const std::filesystem::path& path,
                                 std::size_t ne, std::size_t nr) {
  std::vector<Triple> out;
  std::set<Triple> seen;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 3) fail_at(path, lineno, "expected head<TAB>relation<TAB>tail");
    const auto h = field_int(path, lineno, f[0], "head");
    const auto r = field_int(path, lineno, f[1], "relation");
    const auto t = field_int(path, lineno, f[2], "tail");
    if (h < 0 || static_cast<std::size_t>(h) >= ne) {
      fail_at(path, lineno, "head id " + std::to_string(h) + " out of range");
    }
    if (t < 0 || static_cast<std::size_t>(t) >= ne) {
      fail_at(path, lineno, "tail id " + std::to_string(t) + " out of range");
    }
    if (r < 0 || static_cast<std::size_t>(r) >= nr) {
      fail_at(path, lineno, "relation id " + std::to_string(r) + " out of range");
    }
    Triple tr{static_cast<EntityId>(h), static_cast<RelationId>(r),
              static_cast<EntityId>(t)};
    if (!seen.insert(tr).second) fail_at(path, lineno, "duplicate triple");
    out.push_back(tr);
  }
  return out;
}

std::vector<QueryRecord> load_queries(const std::filesystem::path& path,
                                      std::size_t ne, std::size_t nr) {
  std::vector<QueryRecord> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (lines[i].empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      fail_at(path, lineno, std::string("malformed JSON: ") + e.what());
    }
    QueryRecord q;
    try {
      q.dag = parse_query(record, ne, nr);
    } catch (const ParseError& e) {
      fail_at(path, lineno, e.what());
    }
    q.type = *query_type_from_string(record["type"].get<std::string>());
    // Keep the canonical layout, whichever spelling the line used.
    for (const QueryNode& node : q.dag.nodes) {
      if (const auto* a = std::get_if<Anchor>(&node)) q.anchors.push_back(a->entity);
    }
    const QueryShape& shape = shape_of(q.type);
    for (int hops : shape.branch_hops) q.rels.emplace_back(hops);
    if (shape.final_projection) q.rels.emplace_back(1);
    {
      // Walk the canonical DAG in build order to recover the relation lists.
      std::size_t branch = 0, hop = 0;
      for (const QueryNode& node : q.dag.nodes) {
        if (std::holds_alternative<Anchor>(node)) {
          hop = 0;
        } else if (const auto* p = std::get_if<Projection>(&node)) {
          if (branch < shape.branch_hops.size() &&
              hop < static_cast<std::size_t>(shape.branch_hops[branch])) {
            q.rels[branch][hop++] = p->relation;
            if (hop == static_cast<std::size_t>(shape.branch_hops[branch])) ++branch;
          } else {
            q.rels.back()[0] = p->relation;
          }
        }
      }
    }
    q.answers_train = read_answers(record, "answers_train", ne, path, lineno);
    q.answers_valid = read_answers(record, "answers_valid", ne, path, lineno);
    q.answers_test = read_answers(record, "answers_test", ne, path, lineno);
    if (!is_subset(q.answers_train, q.answers_valid)) {
      fail_at(path, lineno, "inclusion violated: answers_train not within answers_valid");
    }
    if (!is_subset(q.answers_valid, q.answers_test)) {
      fail_at(path, lineno, "inclusion violated: answers_valid not within answers_test");
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

std::string_view to_string(Split split) { return kSplitNames[idx(split)]; }

Split split_from_string(std::string_view name) {
  for (Split s : kAllSplits) {
    if (name == kSplitNames[idx(s)]) return s;
  }
  throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

const std::vector<EntityId>& QueryRecord::answers(Split split) const {
  switch (split) {
    case Split::train:
      return answers_train;
    case Split::valid:
      return answers_valid;
    case Split::test:
      return answers_test;
  }
  return answers_test;
}

std::vector<EntityId> QueryRecord::hard_answers(Split split) const {
  if (split == Split::train) return answers_train;
  const auto& now = answers(split);
  const auto& before = split == Split::valid ? answers_train : answers_valid;
  std::vector<EntityId> out;
  std::set_difference(now.begin(), now.end(), before.begin(), before.end(),
                      std::back_inserter(out));
  return out;
}

nlohmann::ordered_json QueryRecord::to_json() const {
  nlohmann::ordered_json j;
  j["type"] = std::string(to_string(type));
  j["anchors"] = anchors;
  j["rels"] = rels;
  j["answers_train"] = answers_train;
  j["answers_valid"] = answers_valid;
  j["answers_test"] = answers_test;
  return j;
}

KnowledgeGraph Dataset::graph(Split split) const {
  KnowledgeGraph kg;
  kg.num_entities = num_entities();
  kg.relations = relations;
  for (Split s : kAllSplits) {
    const auto& t = triples[idx(s)];
    kg.triples.insert(kg.triples.end(), t.begin(), t.end());
    if (s == split) break;
  }
  std::sort(kg.triples.begin(), kg.triples.end());
  kg.triples.erase(std::unique(kg.triples.begin(), kg.triples.end()),
                   kg.triples.end());
  return kg;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  {
    const auto path = dir / "entities.tsv";
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto f = split_tabs(lines[i]);
      if (f.size() < 2) fail_at(path, i + 1, "expected id<TAB>name");
      const auto id = field_int(path, i + 1, f[0], "entity id");
      if (id != static_cast<std::int64_t>(d.entity_names.size())) {
        fail_at(path, i + 1, "entity ids must be dense and in order");
      }
      d.entity_names.emplace_back(f[1]);
    }
  }
  {
    const auto path = dir / "relations.tsv";
    const auto lines = read_lines(path);
    std::vector<std::int64_t> inverse;
    std::vector<std::size_t> line_of;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto f = split_tabs(lines[i]);
      if (f.size() != 4) {
        fail_at(path, i + 1, "expected id<TAB>name<TAB>transitive<TAB>inverse_of");
      }
      const auto id = field_int(path, i + 1, f[0], "relation id");
      if (id != static_cast<std::int64_t>(d.relation_names.size())) {
        fail_at(path, i + 1, "relation ids must be dense and in order");
      }
      const auto tr = field_int(path, i + 1, f[2], "transitive flag");
      if (tr != 0 && tr != 1) fail_at(path, i + 1, "transitive flag must be 0 or 1");
      d.relation_names.emplace_back(f[1]);
      RelationInfo info;
      info.transitive = tr == 1;
      d.relations.push_back(info);
      inverse.push_back(field_int(path, i + 1, f[3], "inverse_of"));
      line_of.push_back(i + 1);
    }
    const auto nr = static_cast<std::int64_t>(d.relations.size());
    for (std::size_t r = 0; r < d.relations.size(); ++r) {
      const auto inv = inverse[r];
      if (inv == -1) continue;
      if (inv < 0 || inv >= nr || inv == static_cast<std::int64_t>(r)) {
        fail_at(path, line_of[r], "inverse_of " + std::to_string(inv) + " invalid");
      }
      if (inverse[inv] != static_cast<std::int64_t>(r)) {
        fail_at(path, line_of[r], "inverse_of must be mutual");
      }
      if (d.relations[r].transitive != d.relations[inv].transitive) {
        fail_at(path, line_of[r],
                "a transitive relation and its inverse must both be transitive");
      }
      d.relations[r].inverse_of = static_cast<RelationId>(inv);
    }
  }
  if (d.entity_names.empty()) throw ValidationError("entities.tsv: no entities");
  if (d.relation_names.empty()) throw ValidationError("relations.tsv: no relations");

  for (Split s : kAllSplits) {
    const std::string name(to_string(s));
    d.triples[idx(s)] = load_triples(dir / ("triples_" + name + ".tsv"),
                                     d.num_entities(), d.num_relations());
    d.queries[idx(s)] = load_queries(dir / ("queries_" + name + ".jsonl"),
                                     d.num_entities(), d.num_relations());
  }

  spdlog::info("loaded {}: {} entities, {} relations, triples {}/{}/{}",
               dir.string(), d.num_entities(), d.num_relations(),
               d.triples[0].size(), d.triples[1].size(), d.triples[2].size());
  for (Split s : kAllSplits) {
    std::string line;
    for (const auto& [type, n] : count_by_type(d.queries_of(s))) {
      line += " " + std::string(to_string(type)) + "=" + std::to_string(n);
    }
    spdlog::info("{} queries:{}", to_string(s), line.empty() ? " none" : line);
  }
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("entities.tsv");
    for (std::size_t i = 0; i < data.entity_names.size(); ++i) {
      f << i << '\t' << data.entity_names[i] << '\n';
    }
  }
  {
    auto f = open("relations.tsv");
    for (std::size_t r = 0; r < data.relation_names.size(); ++r) {
      const auto& info = data.relations[r];
      f << r << '\t' << data.relation_names[r] << '\t' << (info.transitive ? 1 : 0)
        << '\t'
        << (info.inverse_of ? static_cast<std::int64_t>(*info.inverse_of) : -1)
        << '\n';
    }
  }
  for (Split s : kAllSplits) {
    const std::string name(to_string(s));
    auto t = open("triples_" + name + ".tsv");
    for (const Triple& tr : data.triples[idx(s)]) {
      t << tr.head << '\t' << tr.relation << '\t' << tr.tail << '\n';
    }
    auto q = open("queries_" + name + ".jsonl");
    for (const QueryRecord& rec : data.queries[idx(s)]) {
      q << rec.to_json().dump() << '\n';
    }
  }
}

std::map<QueryType, std::size_t> count_by_type(
    const std::vector<QueryRecord>& queries) {
  std::map<QueryType, std::size_t> out;
  for (const auto& q : queries) ++out[q.type];
  return out;
}

GraphIndex::GraphIndex(const KnowledgeGraph& kg, ClosureMode closure)
    : num_entities_(kg.num_entities) {
  const std::size_t nr = kg.num_relations();
  out_.assign(nr, std::vector<std::vector<EntityId>>(num_entities_));
  in_.assign(nr, std::vector<std::vector<EntityId>>(num_entities_));
  for (const Triple& t : kg.triples) {
    if (t.relation >= nr || t.head >= num_entities_ || t.tail >= num_entities_) {
      throw InvalidArgument("GraphIndex: triple id out of range");
    }
    out_[t.relation][t.head].push_back(t.tail);
  }
  for (RelationId r = 0; r < nr; ++r) {
    if (closure == ClosureMode::transitive_closed && kg.relations[r].transitive) {
      const auto raw = out_[r];
      for (EntityId h = 0; h < num_entities_; ++h) {
        std::vector<char> seen(num_entities_, 0);
        std::vector<EntityId> stack = raw[h];
        std::vector<EntityId> reach;
        while (!stack.empty()) {
          const EntityId v = stack.back();
          stack.pop_back();
          if (seen[v]) continue;
          seen[v] = 1;
          reach.push_back(v);
          for (EntityId w : raw[v]) {
            if (!seen[w]) stack.push_back(w);
          }
        }
        out_[r][h] = std::move(reach);
      }
    }
    for (EntityId h = 0; h < num_entities_; ++h) {
      auto& tails = out_[r][h];
      std::sort(tails.begin(), tails.end());
      tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
      for (EntityId t : tails) in_[r][t].push_back(h);
    }
  }
}

std::vector<EntityId> GraphIndex::answers(const QueryDag& q) const {
  using Set = std::vector<char>;
  const std::size_t n = num_entities_;
  auto eval = [&](auto&& self, NodeId id) -> Set {
    const QueryNode& node = q.at(id);
    Set out(n, 0);
    if (const auto* a = std::get_if<Anchor>(&node)) {
      if (a->entity >= n) throw LookupError("oracle: anchor out of range");
      out[a->entity] = 1;
    } else if (const auto* p = std::get_if<Projection>(&node)) {
      if (p->relation >= out_.size()) throw LookupError("oracle: relation out of range");
      const Set in = self(self, p->child);
      for (EntityId h = 0; h < n; ++h) {
        if (!in[h]) continue;
        for (EntityId t : out_[p->relation][h]) out[t] = 1;
      }
    } else if (const auto* i = std::get_if<Intersection>(&node)) {
      std::fill(out.begin(), out.end(), 1);
      for (NodeId c : i->children) {
        const Set s = self(self, c);
        for (std::size_t e = 0; e < n; ++e) out[e] = out[e] && s[e];
      }
    } else if (const auto* u = std::get_if<Union>(&node)) {
      for (NodeId c : u->children) {
        const Set s = self(self, c);
        for (std::size_t e = 0; e < n; ++e) out[e] = out[e] || s[e];
      }
    } else {
      const Set s = self(self, std::get<Negation>(node).child);
      for (std::size_t e = 0; e < n; ++e) out[e] = !s[e];
    }
    return out;
  };
  const Set result = eval(eval, q.root);
  std::vector<EntityId> ids;
  for (EntityId e = 0; e < n; ++e) {
    if (result[e]) ids.push_back(e);
  }
  return ids;
}

std::vector<EntityId> brute_force_answers(const KnowledgeGraph& kg,
                                          const QueryDag& q,
                                          ClosureMode closure) {
  return GraphIndex(kg, closure).answers(q);
}

// ---------------------------------------------------------------------------
// Synthetic generation

SyntheticConfig SyntheticConfig::with_default_counts() {
  SyntheticConfig c;
  for (QueryType t : {QueryType::p2, QueryType::p3, QueryType::i2, QueryType::i3}) {
    c.train_counts[t] = 200;
  }
  for (QueryType t : {QueryType::in2, QueryType::in3, QueryType::inp,
                      QueryType::pin, QueryType::pni}) {
    c.train_counts[t] = 50;
  }
  for (QueryType t : kAllQueryTypes) c.eval_counts[t] = 20;
  return c;
}

namespace {

struct Incoming {
  RelationId relation;
  EntityId head;
};

class QuerySampler {
 public:
  QuerySampler(const Dataset& data, Split split, Rng& rng,
               std::size_t max_attempts)
      : data_(data), split_(split), rng_(rng), max_attempts_(max_attempts) {
    for (Split s : kAllSplits) indices_.emplace_back(data.graph(s));
    const GraphIndex& g = indices_[idx(split)];
    incoming_.resize(data.num_entities());
    for (RelationId r = 0; r < g.num_relations(); ++r) {
      for (EntityId t = 0; t < data.num_entities(); ++t) {
        for (EntityId h : g.heads(r, t)) incoming_[t].push_back({r, h});
      }
    }
    for (EntityId t = 0; t < data.num_entities(); ++t) {
      if (!incoming_[t].empty()) targets_.push_back(t);
    }
  }

  QueryRecord make_record(QueryType type, std::vector<EntityId> anchors,
                          std::vector<std::vector<RelationId>> rels) const {
    QueryRecord q;
    q.type = type;
    q.anchors = std::move(anchors);
    q.rels = std::move(rels);
    q.dag = build_query(type, q.anchors, q.rels);
    q.answers_train = indices_[0].answers(q.dag);
    q.answers_valid = indices_[1].answers(q.dag);
    q.answers_test = indices_[2].answers(q.dag);
    return q;
  }

  void sample(QueryType type, std::size_t count, std::vector<QueryRecord>& out,
              std::set<std::string>& seen) {
    std::size_t made = 0;
    std::size_t attempts = 0;
    while (made < count) {
      if (++attempts > max_attempts_ * count) {
        throw GenerationError(
            "could only generate " + std::to_string(made) + " of " +
            std::to_string(count) + " " + std::string(to_string(type)) + " " +
            std::string(to_string(split_)) +
            " queries; the graph is too sparse for this shape");
      }
      auto q = try_sample(type);
      if (!q || !acceptable(*q)) continue;
      const std::string key = q->to_json().dump();
      if (!seen.insert(key.substr(0, key.find("\"answers_train\""))).second) {
        continue;
      }
      out.push_back(std::move(*q));
      ++made;
    }
  }

 private:
  // Random backward walk of `hops` edges ending at `target`.
  bool walk_back(EntityId target, int hops, EntityId& anchor,
                 std::vector<RelationId>& rels) {
    rels.assign(static_cast<std::size_t>(hops), 0);
    EntityId cur = target;
    for (int h = hops - 1; h >= 0; --h) {
      const auto& in = incoming_[cur];
      if (in.empty()) return false;
      const Incoming& e = in[uniform_index(rng_, in.size())];
      rels[static_cast<std::size_t>(h)] = e.relation;
      cur = e.head;
    }
    anchor = cur;
    return true;
  }

  std::optional<QueryRecord> try_sample(QueryType type) {
    if (targets_.empty()) return std::nullopt;
    const QueryShape& shape = shape_of(type);
    const EntityId target = targets_[uniform_index(rng_, targets_.size())];
    EntityId branch_target = target;
    RelationId final_rel = 0;
    if (shape.final_projection) {
      const auto& in = incoming_[target];
      const Incoming& e = in[uniform_index(rng_, in.size())];
      final_rel = e.relation;
      branch_target = e.head;
    }
    std::vector<EntityId> anchors;
    std::vector<std::vector<RelationId>> rels;
    for (std::size_t b = 0; b < shape.branch_hops.size(); ++b) {
      // A negated branch should not contain the target, so it starts from an
      // unrelated entity.
      const EntityId from = shape.negated_branch == b
                                ? targets_[uniform_index(rng_, targets_.size())]
                                : branch_target;
      EntityId anchor = 0;
      std::vector<RelationId> chain;
      if (!walk_back(from, shape.branch_hops[b], anchor, chain)) return std::nullopt;
      anchors.push_back(anchor);
      rels.push_back(std::move(chain));
    }
    if (shape.final_projection) rels.push_back({final_rel});
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      for (std::size_t b = a + 1; b < anchors.size(); ++b) {
        if (anchors[a] == anchors[b] && rels[a] == rels[b]) return std::nullopt;
      }
    }
    return make_record(type, std::move(anchors), std::move(rels));
  }

  bool acceptable(const QueryRecord& q) const {
    const std::size_t half = data_.num_entities() / 2;
    for (Split s : kAllSplits) {
      if (q.answers(s).size() > half) return false;
    }
    if (q.answers(split_).empty()) return false;
    // Exact negation is not monotone in the graph; keep only queries whose
    // answer sets still nest.
    if (!is_subset(q.answers_train, q.answers_valid) ||
        !is_subset(q.answers_valid, q.answers_test)) {
      return false;
    }
    return !q.hard_answers(split_).empty();
  }

  const Dataset& data_;
  Split split_;
  Rng& rng_;
  std::size_t max_attempts_;
  std::vector<GraphIndex> indices_;
  std::vector<std::vector<Incoming>> incoming_;
  std::vector<EntityId> targets_;
};

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& c) {
  if (c.n_entities < 2) throw GenerationError("need at least 2 entities");
  if (c.n_transitive >= 1 && c.chain_length < 3) {
    throw GenerationError("chain_length must be at least 3 with transitive relations");
  }
  const std::size_t per_transitive = c.inverse_relations ? 2 : 1;
  if (c.n_relations < c.n_transitive * per_transitive || c.n_relations == 0) {
    throw GenerationError("n_relations too small for the transitive relations");
  }
  if (c.n_clusters == 0 || c.n_clusters > c.n_entities) {
    throw GenerationError("n_clusters must be in [1, n_entities]");
  }
  if (!(c.density >= 0.0 && c.density <= 1.0) ||
      !(c.closure_train_fraction >= 0.0 && c.closure_train_fraction <= 1.0) ||
      !(c.valid_fraction >= 0.0 && c.test_fraction >= 0.0 &&
        c.valid_fraction + c.test_fraction < 1.0)) {
    throw GenerationError("fractions and density must lie in [0, 1]");
  }
  std::size_t chains = c.chains_per_relation;
  if (c.n_transitive > 0) {
    if (chains == 0) chains = c.n_entities / c.chain_length;
    if (chains * c.chain_length > c.n_entities || chains == 0) {
      throw GenerationError("chains do not fit in the entity set");
    }
  }

  Rng rng(c.seed);
  Dataset d;
  for (std::size_t e = 0; e < c.n_entities; ++e) {
    d.entity_names.push_back("e" + std::to_string(e));
  }
  d.relations.resize(c.n_relations);
  for (std::size_t r = 0; r < c.n_relations; ++r) {
    std::string name = "r" + std::to_string(r);
    if (r < c.n_transitive) {
      d.relations[r].transitive = true;
      name += "_tr";
      if (c.inverse_relations) {
        d.relations[r].inverse_of = static_cast<RelationId>(r + c.n_transitive);
      }
    } else if (c.inverse_relations && r < 2 * c.n_transitive) {
      d.relations[r].transitive = true;
      d.relations[r].inverse_of = static_cast<RelationId>(r - c.n_transitive);
      name += "_tr_inv";
    }
    d.relation_names.push_back(name);
  }

  std::array<std::set<Triple>, 3> edges;
  auto add_edge = [&](Split s, EntityId h, RelationId r, EntityId t) {
    edges[idx(s)].insert({h, r, t});
    const auto& inv = d.relations[r].inverse_of;
    if (inv) edges[idx(s)].insert({t, *inv, h});
  };

  for (RelationId r = 0; r < c.n_transitive; ++r) {
    std::vector<EntityId> pool(c.n_entities);
    for (std::size_t e = 0; e < c.n_entities; ++e) pool[e] = static_cast<EntityId>(e);
    shuffle(pool, rng);
    for (std::size_t k = 0; k < chains; ++k) {
      const EntityId* chain = &pool[k * c.chain_length];
      for (std::size_t j = 0; j + 1 < c.chain_length; ++j) {
        add_edge(Split::train, chain[j], r, chain[j + 1]);
        for (std::size_t m = j + 2; m < c.chain_length; ++m) {
          const bool keep = uniform01(rng) < c.closure_train_fraction;
          add_edge(keep ? Split::train : Split::test, chain[j], r, chain[m]);
        }
      }
    }
  }

  std::vector<std::size_t> cluster(c.n_entities);
  {
    std::vector<EntityId> perm(c.n_entities);
    for (std::size_t e = 0; e < c.n_entities; ++e) perm[e] = static_cast<EntityId>(e);
    shuffle(perm, rng);
    for (std::size_t i = 0; i < c.n_entities; ++i) cluster[perm[i]] = i % c.n_clusters;
  }
  std::vector<std::vector<EntityId>> members(c.n_clusters);
  for (std::size_t e = 0; e < c.n_entities; ++e) {
    members[cluster[e]].push_back(static_cast<EntityId>(e));
  }
  for (std::size_t r = c.n_transitive * per_transitive; r < c.n_relations; ++r) {
    std::vector<std::size_t> target(c.n_clusters);
    for (auto& t : target) t = uniform_index(rng, c.n_clusters);
    for (std::size_t h = 0; h < c.n_entities; ++h) {
      for (EntityId t : members[target[cluster[h]]]) {
        if (t == h || uniform01(rng) >= c.density) continue;
        const double u = uniform01(rng);
        const Split s = u < c.test_fraction ? Split::test
                        : u < c.test_fraction + c.valid_fraction ? Split::valid
                                                                 : Split::train;
        add_edge(s, static_cast<EntityId>(h), static_cast<RelationId>(r), t);
      }
    }
  }
  // An edge lives in the earliest split that produced it.
  for (const Triple& t : edges[0]) {
    edges[1].erase(t);
    edges[2].erase(t);
  }
  for (const Triple& t : edges[1]) edges[2].erase(t);
  for (Split s : kAllSplits) {
    d.triples[idx(s)].assign(edges[idx(s)].begin(), edges[idx(s)].end());
  }

  for (Split s : kAllSplits) {
    QuerySampler sampler(d, s, rng, c.max_attempts_per_query);
    std::set<std::string> seen;
    auto& out = d.queries[idx(s)];
    if (s == Split::train && c.all_train_1p) {
      const KnowledgeGraph g = d.graph(Split::train);
      std::set<std::pair<EntityId, RelationId>> pairs;
      for (const Triple& t : g.triples) pairs.insert({t.head, t.relation});
      for (const auto& [h, r] : pairs) {
        out.push_back(sampler.make_record(QueryType::p1, {h}, {{r}}));
        const std::string key = out.back().to_json().dump();
        seen.insert(key.substr(0, key.find("\"answers_train\"")));
      }
    }
    const auto& counts = s == Split::train ? c.train_counts : c.eval_counts;
    for (const auto& [type, n] : counts) {
      if (s == Split::train && c.all_train_1p && type == QueryType::p1) continue;
      sampler.sample(type, n, out, seen);
    }
  }
  return d;
}

SyntheticConfig synthetic_config_from_kv(const KeyValues& kv) {
  SyntheticConfig c = SyntheticConfig::with_default_counts();
  c.n_entities = kv_uint(kv, "n_entities", c.n_entities);
  c.n_relations = kv_uint(kv, "n_relations", c.n_relations);
  c.n_transitive = kv_uint(kv, "n_transitive", c.n_transitive);
  c.chain_length = kv_uint(kv, "chain_length", c.chain_length);
  c.density = kv_double(kv, "density", c.density);
  c.seed = kv_uint(kv, "seed", c.seed);
  c.n_clusters = kv_uint(kv, "n_clusters", c.n_clusters);
  c.chains_per_relation = kv_uint(kv, "chains_per_relation", c.chains_per_relation);
  c.inverse_relations = kv_bool(kv, "inverse_relations", c.inverse_relations);
  c.closure_train_fraction =
      kv_double(kv, "closure_train_fraction", c.closure_train_fraction);
  c.valid_fraction = kv_double(kv, "valid_fraction", c.valid_fraction);
  c.test_fraction = kv_double(kv, "test_fraction", c.test_fraction);
  c.all_train_1p = kv_bool(kv, "all_train_1p", c.all_train_1p);
  c.max_attempts_per_query =
      kv_uint(kv, "max_attempts_per_query", c.max_attempts_per_query);
  for (QueryType t : kAllQueryTypes) {
    const std::string name(to_string(t));
    if (kv.count("train_count." + name)) {
      c.train_counts[t] = kv_uint(kv, "train_count." + name, 0);
    }
    if (kv.count("eval_count." + name)) {
      c.eval_counts[t] = kv_uint(kv, "eval_count." + name, 0);
    }
  }
  return c;
}

}  // namespace geometre
