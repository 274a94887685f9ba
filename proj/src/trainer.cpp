#include "geometre/trainer.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

#include "geometre/errors.hpp"

namespace geometre {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Slope of |x|, taking +1 at 0.
double abs_slope(double x) { return x >= 0.0 ? 1.0 : -1.0; }

// Gradient accumulator with the parameter layout of a store.
class GradSink {
 public:
  GradSink(const EmbeddingStore& store, ParameterSet& grads)
      : store_(store), g_(grads), n_(store.dim()) {}

  double* center(EntityId e) { return &g_.entity_centers[e * n_]; }
  double* offset_raw(EntityId e) { return &g_.entity_offsets_raw[e * n_]; }
  double* answer(EntityId e) {
    return store_.answer_mode() == AnswerMode::tied ? center(e)
                                                    : &g_.answer_centers[e * n_];
  }
  // Null for slots the projection mode freezes.
  double* slot(RelationId r, int s) {
    if (!store_.slot_active(s)) return nullptr;
    return &g_.relation_params[(r * EmbeddingStore::kSlots + s) * n_];
  }

 private:
  const EmbeddingStore& store_;
  ParameterSet& g_;
  std::size_t n_;
};

// Adds coef * d dist / d(lower, upper, answer) for one box/answer pair, where
// dist is dist_box, or dist_box_tr when `tr` is set.
void dist_backward(const Box& q, std::span<const double> a, double alpha,
                   double lambda, const std::optional<TransitiveTarget>& tr,
                   double coef, Vector& dlo, Vector& dhi, double* da) {
  const auto& lo = q.lower();
  const auto& hi = q.upper();
  const std::size_t n = q.dim();
  const std::size_t skip = tr ? tr->dim : n;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == skip) continue;
    if (a[i] - hi[i] >= 0.0) {
      dhi[i] -= coef;
      da[i] += coef;
    }
    if (lo[i] - a[i] >= 0.0) {
      dlo[i] += coef;
      da[i] -= coef;
    }
    if (q.is_empty() || alpha == 0.0) continue;
    // clamp = min(hi, max(lo, a)); ties resolve to the box side.
    const bool took_lo = !(lo[i] < a[i]);
    const double inner = took_lo ? lo[i] : a[i];
    const bool took_hi = !(inner < hi[i]);
    const double clamp = took_hi ? hi[i] : inner;
    const double s = abs_slope(q.center(i) - clamp) * alpha * coef;
    dlo[i] += 0.5 * s;
    dhi[i] += 0.5 * s;
    if (took_hi) {
      dhi[i] -= s;
    } else if (took_lo) {
      dlo[i] -= s;
    } else {
      da[i] -= s;
    }
  }
  if (tr) {
    const std::size_t i = tr->dim;
    const bool forward = tr->direction == OrderingDirection::forward;
    const double gap = forward ? a[i] - q.center(i) : q.center(i) - a[i];
    if (gap + lambda >= 0.0) {
      const double sign = forward ? 1.0 : -1.0;
      da[i] += sign * coef;
      dlo[i] -= 0.5 * sign * coef;
      dhi[i] -= 0.5 * sign * coef;
    }
  }
}

void anchor_backward(const EmbeddingStore& store, EntityId e, const Vector& dlo,
                     const Vector& dhi, GradSink& sink) {
  const auto raw = store.entity_offset_raw(e);
  double* gc = sink.center(e);
  double* go = sink.offset_raw(e);
  for (std::size_t i = 0; i < store.dim(); ++i) {
    gc[i] += dlo[i] + dhi[i];
    go[i] += (dhi[i] - dlo[i]) * abs_slope(raw[i]);
  }
}

// Forward values of one union-free term, kept for the backward pass.
struct Tape {
  std::vector<Box> boxes;  // per node id
  std::vector<RelationEmbedding> relations;  // per node id, projections only
};

Tape forward(const QueryDag& term, const EmbeddingStore& store) {
  Tape t;
  t.boxes.resize(term.nodes.size());
  t.relations.resize(term.nodes.size());
  for (NodeId id = 0; id < term.nodes.size(); ++id) {
    const QueryNode& node = term.nodes[id];
    if (const auto* a = std::get_if<Anchor>(&node)) {
      t.boxes[id] = store.query_box(a->entity);
    } else if (const auto* p = std::get_if<Projection>(&node)) {
      t.relations[id] = store.relation(p->relation);
      t.boxes[id] = project(t.boxes[p->child], t.relations[id]);
    } else if (const auto* in = std::get_if<Intersection>(&node)) {
      std::vector<Box> kids;
      for (NodeId c : in->children) kids.push_back(t.boxes[c]);
      t.boxes[id] = intersect(kids);
    } else {
      throw UnsupportedQuery("gradients: term must be union- and negation-free");
    }
  }
  return t;
}

// Propagates root corner gradients down to the parameters.
void backward(const QueryDag& term, const Tape& t, const EmbeddingStore& store,
              std::vector<Vector> dlo, std::vector<Vector> dhi, GradSink& sink) {
  const std::size_t n = store.dim();
  for (NodeId id = term.nodes.size(); id-- > 0;) {
    const QueryNode& node = term.nodes[id];
    if (const auto* a = std::get_if<Anchor>(&node)) {
      anchor_backward(store, a->entity, dlo[id], dhi[id], sink);
    } else if (const auto* p = std::get_if<Projection>(&node)) {
      const Box& in = t.boxes[p->child];
      const RelationEmbedding& r = t.relations[id];
      double* g[4] = {sink.slot(p->relation, 0), sink.slot(p->relation, 1),
                      sink.slot(p->relation, 2), sink.slot(p->relation, 3)};
      for (std::size_t i = 0; i < n; ++i) {
        const double dc = dlo[id][i] + dhi[id][i];
        const double pre = r.r3[i] * in.offset(i) + r.r4[i];
        const double dpre = (dhi[id][i] - dlo[id][i]) * abs_slope(pre);
        if (g[0]) g[0][i] += dc * in.center(i);
        if (g[1]) g[1][i] += dc;
        if (g[2]) g[2][i] += dpre * in.offset(i);
        if (g[3]) g[3][i] += dpre;
        const double dcin = dc * r.r1[i];
        const double doin = in.is_empty() ? 0.0 : dpre * r.r3[i];
        dlo[p->child][i] += 0.5 * (dcin - doin);
        dhi[p->child][i] += 0.5 * (dcin + doin);
      }
    } else if (const auto* inter = std::get_if<Intersection>(&node)) {
      for (std::size_t i = 0; i < n; ++i) {
        // The fold keeps the first child on ties.
        NodeId lo_src = inter->children.front();
        NodeId hi_src = lo_src;
        for (NodeId c : inter->children) {
          if (t.boxes[lo_src].lower()[i] < t.boxes[c].lower()[i]) lo_src = c;
          if (t.boxes[c].upper()[i] < t.boxes[hi_src].upper()[i]) hi_src = c;
        }
        dlo[lo_src][i] += dlo[id][i];
        dhi[hi_src][i] += dhi[id][i];
      }
    }
  }
}

void check_batch(const std::vector<BatchItem>& batch) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  for (const auto& item : batch) {
    if (!item.query) throw InvalidArgument("batch item without a query");
    if (item.negatives.empty()) throw InvalidArgument("batch item without negatives");
  }
}

std::string block_with_non_finite(const ParameterSet& p) {
  std::string bad;
  p.for_each_block([&](std::string_view name, const Vector& v) {
    if (!bad.empty()) return;
    for (double x : v) {
      if (!std::isfinite(x)) {
        bad = std::string(name);
        return;
      }
    }
  });
  return bad;
}

}  // namespace

void TrainingConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("training config: ") + what);
  };
  require(gamma > 0.0, "gamma must be > 0");
  require(lambda > 0.0, "lambda must be > 0");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(negatives_k >= 1, "negatives_k must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(dim >= 1, "dim must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(answer_consistency_weight >= 0.0,
          "answer_consistency_weight must be >= 0");
  require(init_gamma >= 0.0, "init_gamma must be >= 0");
}

TrainingConfig TrainingConfig::from_kv(const KeyValues& kv,
                                       const TrainingConfig& base) {
  TrainingConfig c = base;
  c.alpha = kv_double(kv, "alpha", c.alpha);
  c.gamma = kv_double(kv, "gamma", c.gamma);
  c.lambda = kv_double(kv, "lambda", c.lambda);
  c.learning_rate = kv_double(kv, "learning_rate", c.learning_rate);
  c.dim = kv_uint(kv, "dim", c.dim);
  c.negatives_k = kv_uint(kv, "negatives_k", c.negatives_k);
  c.batch_size = kv_uint(kv, "batch_size", c.batch_size);
  c.steps = kv_uint(kv, "steps", c.steps);
  c.seed = kv_uint(kv, "seed", c.seed);
  if (kv.count("answer_embedding")) {
    c.answer_mode = answer_mode_from_string(kv.at("answer_embedding"));
  }
  if (kv.count("projection_mode")) {
    c.projection_mode = projection_mode_from_string(kv.at("projection_mode"));
  }
  c.transitive_loss_enabled =
      kv_bool(kv, "transitive_loss", c.transitive_loss_enabled);
  c.answer_consistency_weight =
      kv_double(kv, "answer_consistency_weight", c.answer_consistency_weight);
  c.init_gamma = kv_double(kv, "init_gamma", c.init_gamma);
  c.log_every = kv_uint(kv, "log_every", c.log_every);
  c.eval_every = kv_uint(kv, "eval_every", c.eval_every);
  c.patience = kv_uint(kv, "patience", c.patience);
  return c;
}

TrainingConfig TrainingConfig::from_kv(const KeyValues& kv) {
  return from_kv(kv, TrainingConfig{});
}

nlohmann::ordered_json TrainingConfig::to_json() const {
  return {{"alpha", alpha},
          {"gamma", gamma},
          {"lambda", lambda},
          {"learning_rate", learning_rate},
          {"dim", dim},
          {"negatives_k", negatives_k},
          {"batch_size", batch_size},
          {"steps", steps},
          {"seed", seed},
          {"answer_embedding", answer_mode == AnswerMode::free ? "yes" : "no"},
          {"projection_mode", std::string(to_string(projection_mode))},
          {"transitive_loss", transitive_loss_enabled},
          {"answer_consistency_weight", answer_consistency_weight},
          {"init_gamma", init_gamma},
          {"log_every", log_every},
          {"eval_every", eval_every},
          {"patience", patience}};
}

std::vector<EntityId> sample_negatives(std::size_t k,
                                       const std::vector<EntityId>& exclusion,
                                       std::size_t num_entities, Rng& rng) {
  std::size_t excluded = 0;
  for (EntityId e : exclusion) excluded += e < num_entities;
  if (excluded >= num_entities) {
    throw InvalidArgument("sample_negatives: every entity is excluded");
  }
  std::vector<EntityId> out;
  out.reserve(k);
  if (2 * excluded > num_entities) {
    std::vector<EntityId> pool;
    for (EntityId e = 0; e < num_entities; ++e) {
      if (!std::binary_search(exclusion.begin(), exclusion.end(), e)) pool.push_back(e);
    }
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[uniform_index(rng, pool.size())]);
    return out;
  }
  while (out.size() < k) {
    const auto e = static_cast<EntityId>(uniform_index(rng, num_entities));
    if (!std::binary_search(exclusion.begin(), exclusion.end(), e)) out.push_back(e);
  }
  return out;
}

double loss_from_distances(double positive, std::span<const double> negatives,
                           double gamma) {
  if (negatives.empty()) throw InvalidArgument("loss: no negatives");
  double neg = 0.0;
  for (double d : negatives) neg += softplus(gamma - d);
  return softplus(positive - gamma) + neg / static_cast<double>(negatives.size());
}

double loss(const CompiledQuery& cq, std::span<const double> positive,
            const std::vector<std::span<const double>>& negatives,
            const TrainingConfig& cfg) {
  std::vector<double> d;
  for (const auto& a : negatives) d.push_back(score(cq, a, cfg.alpha, cfg.lambda));
  return loss_from_distances(score(cq, positive, cfg.alpha, cfg.lambda), d,
                             cfg.gamma);
}

double transitive_reg_loss(const RelationEmbedding& r, std::size_t i) {
  if (!r.transitive || r.transitive_dim != i) {
    throw InvalidArgument("transitive_reg_loss: relation is not transitive on dim " +
                          std::to_string(i));
  }
  return std::abs(r.r1[i] - 1.0) + std::abs(r.r3[i] - 1.0) + std::abs(r.r2[i]) +
         std::abs(r.r4[i]);
}

double add_transitive_reg_gradients(const EmbeddingStore& store,
                                    ParameterSet& grads) {
  GradSink sink(store, grads);
  double total = 0.0;
  for (RelationId r = 0; r < store.num_relations(); ++r) {
    const auto t = store.transitive_target(r);
    if (!t) continue;
    const auto eff = store.relation(r);
    const std::size_t i = t->dim;
    total += transitive_reg_loss(eff, i);
    const double targets[4] = {1.0, 0.0, 1.0, 0.0};
    const Vector* values[4] = {&eff.r1, &eff.r2, &eff.r3, &eff.r4};
    for (int s = 0; s < EmbeddingStore::kSlots; ++s) {
      if (double* g = sink.slot(r, s)) g[i] += abs_slope((*values[s])[i] - targets[s]);
    }
  }
  return total;
}

double answer_consistency_loss(EntityId e, const EmbeddingStore& store,
                               double alpha) {
  if (store.answer_mode() == AnswerMode::tied) return 0.0;
  return dist_box(store.query_box(e), store.answer(e), alpha);
}

double batch_loss(const EmbeddingStore& store, const std::vector<BatchItem>& batch,
                  const TrainingConfig& cfg) {
  check_batch(batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& item : batch) {
    const auto cq = compile(*item.query, store,
                            {.transitive_scoring = cfg.transitive_loss_enabled});
    std::vector<std::span<const double>> negs;
    for (EntityId e : item.negatives) negs.push_back(store.answer(e));
    total += inv_b * loss(cq, store.answer(item.positive), negs, cfg);
  }
  if (cfg.transitive_loss_enabled) {
    for (RelationId r = 0; r < store.num_relations(); ++r) {
      if (auto t = store.transitive_target(r)) {
        total += transitive_reg_loss(store.relation(r), t->dim);
      }
    }
  }
  if (store.answer_mode() == AnswerMode::free && cfg.answer_consistency_weight > 0) {
    for (const auto& item : batch) {
      total += cfg.answer_consistency_weight * inv_b *
               answer_consistency_loss(item.positive, store, cfg.alpha);
    }
  }
  return total;
}

ParameterSet gradients(const EmbeddingStore& store,
                       const std::vector<BatchItem>& batch,
                       const TrainingConfig& cfg, double* loss_out) {
  check_batch(batch);
  ParameterSet grads = store.params().zeros_like();
  GradSink sink(store, grads);
  const std::size_t n = store.dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;

  for (const auto& item : batch) {
    const auto cq = compile(*item.query, store,
                            {.transitive_scoring = cfg.transitive_loss_enabled});
    const auto& tr = cq.transitive;
    const auto terms = dnf_terms(*item.query);
    std::vector<Tape> tapes;
    for (const auto& term : terms) tapes.push_back(forward(term, store));

    // Distance of one answer: min over terms, first minimum wins.
    auto distance = [&](EntityId e, std::size_t& which) {
      double best = std::numeric_limits<double>::infinity();
      which = 0;
      for (std::size_t j = 0; j < tapes.size(); ++j) {
        const double d = score_disjunct(tapes[j].boxes[terms[j].root],
                                        store.answer(e), tr, cfg.alpha, cfg.lambda);
        if (d < best) {
          best = d;
          which = j;
        }
      }
      return best;
    };

    std::vector<std::pair<EntityId, double>> seeds;  // (answer, dL/dD)
    std::vector<std::size_t> seed_terms;
    std::size_t which = 0;
    const double dpos = distance(item.positive, which);
    seeds.emplace_back(item.positive, inv_b * sigmoid(dpos - cfg.gamma));
    seed_terms.push_back(which);
    std::vector<double> dnegs;
    const double inv_k = 1.0 / static_cast<double>(item.negatives.size());
    for (EntityId e : item.negatives) {
      const double d = distance(e, which);
      dnegs.push_back(d);
      seeds.emplace_back(e, -inv_b * inv_k * sigmoid(cfg.gamma - d));
      seed_terms.push_back(which);
    }
    total += inv_b * loss_from_distances(dpos, dnegs, cfg.gamma);

    std::vector<std::vector<Vector>> dlo(terms.size()), dhi(terms.size());
    for (std::size_t j = 0; j < terms.size(); ++j) {
      dlo[j].assign(terms[j].nodes.size(), Vector(n, 0.0));
      dhi[j].assign(terms[j].nodes.size(), Vector(n, 0.0));
    }
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto [e, coef] = seeds[s];
      const std::size_t j = seed_terms[s];
      const NodeId root = terms[j].root;
      dist_backward(tapes[j].boxes[root], store.answer(e), cfg.alpha, cfg.lambda,
                    tr, coef, dlo[j][root], dhi[j][root], sink.answer(e));
    }
    for (std::size_t j = 0; j < terms.size(); ++j) {
      backward(terms[j], tapes[j], store, std::move(dlo[j]), std::move(dhi[j]),
               sink);
    }
  }

  if (cfg.transitive_loss_enabled) total += add_transitive_reg_gradients(store, grads);

  if (store.answer_mode() == AnswerMode::free && cfg.answer_consistency_weight > 0) {
    const double coef = cfg.answer_consistency_weight * inv_b;
    for (const auto& item : batch) {
      const EntityId e = item.positive;
      const Box box = store.query_box(e);
      total += coef * dist_box(box, store.answer(e), cfg.alpha);
      Vector dlo(n, 0.0), dhi(n, 0.0);
      dist_backward(box, store.answer(e), cfg.alpha, cfg.lambda, std::nullopt, coef,
                    dlo, dhi, sink.answer(e));
      anchor_backward(store, e, dlo, dhi, sink);
    }
  }

  if (loss_out) *loss_out = total;
  return grads;
}

AdamState AdamState::for_params(const ParameterSet& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               double learning_rate) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  Vector* p[4] = {&params.entity_centers, &params.entity_offsets_raw,
                  &params.answer_centers, &params.relation_params};
  const Vector* g[4] = {&grads.entity_centers, &grads.entity_offsets_raw,
                        &grads.answer_centers, &grads.relation_params};
  Vector* m[4] = {&state.m.entity_centers, &state.m.entity_offsets_raw,
                  &state.m.answer_centers, &state.m.relation_params};
  Vector* v[4] = {&state.v.entity_centers, &state.v.entity_offsets_raw,
                  &state.v.answer_centers, &state.v.relation_params};
  for (int b = 0; b < 4; ++b) {
    if (p[b]->size() != g[b]->size() || p[b]->size() != m[b]->size() ||
        p[b]->size() != v[b]->size()) {
      throw InvalidArgument("adam_step: shape mismatch");
    }
    for (std::size_t i = 0; i < p[b]->size(); ++i) {
      const double gi = (*g[b])[i];
      double& mi = (*m[b])[i];
      double& vi = (*v[b])[i];
      mi = state.beta1 * mi + (1.0 - state.beta1) * gi;
      vi = state.beta2 * vi + (1.0 - state.beta2) * gi * gi;
      (*p[b])[i] -= learning_rate * (mi / c1) / (std::sqrt(vi / c2) + state.epsilon);
    }
  }
}

std::vector<TrainingExample> training_examples(const Dataset& data) {
  std::vector<TrainingExample> out;
  for (const auto& q : data.queries_of(Split::train)) {
    if (q.answers_train.empty()) continue;
    out.push_back({q.type, rewrite_negation(q.dag), q.answers_train});
  }
  return out;
}

EmbeddingStore init_store_for(const Dataset& data, const TrainingConfig& cfg) {
  StoreConfig sc;
  sc.gamma = cfg.effective_init_gamma();
  sc.projection_mode = cfg.projection_mode;
  sc.answer_mode = cfg.answer_mode;
  sc.relations = data.relations;
  return EmbeddingStore::init(data.num_entities(), data.num_relations(), cfg.dim,
                              sc, cfg.seed);
}

TrainResult train(const Dataset& data, const TrainingConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  TrainResult result;
  result.final_store = init_store_for(data, cfg);
  if (cfg.steps == 0) return result;

  const auto examples = training_examples(data);
  if (examples.empty()) throw InvalidArgument("train: no training queries");
  EmbeddingStore& store = result.final_store;
  AdamState adam = AdamState::for_params(store.params());
  // Separate stream from the initializer so data order does not depend on
  // the parameter count.
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  std::size_t cursor = 0;

  const bool can_validate = hooks.validate && !data.queries_of(Split::valid).empty();
  const EvalConfig eval_cfg{cfg.alpha, cfg.lambda, cfg.transitive_loss_enabled,
                             hooks.eval_threads};
  std::size_t last_improvement = 0;
  double window = 0.0;
  std::size_t window_n = 0;
  bool have_best = false;

  auto emit = [&](nlohmann::ordered_json record) {
    if (hooks.on_log) hooks.on_log(record);
    result.log.push_back(std::move(record));
  };

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<BatchItem> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      const TrainingExample& ex = examples[order[cursor++]];
      BatchItem item;
      item.query = &ex.query;
      item.positive = ex.answers[uniform_index(rng, ex.answers.size())];
      item.negatives =
          sample_negatives(cfg.negatives_k, ex.answers, data.num_entities(), rng);
      batch.push_back(std::move(item));
    }

    double step_loss = 0.0;
    const ParameterSet grads = gradients(store, batch, cfg, &step_loss);
    if (!std::isfinite(step_loss)) {
      throw NumericalError("step " + std::to_string(step) +
                           ": non-finite loss on batch " + std::to_string(step) +
                           " (block: loss)");
    }
    if (auto bad = block_with_non_finite(grads); !bad.empty()) {
      throw NumericalError("step " + std::to_string(step) +
                           ": non-finite gradient on batch " +
                           std::to_string(step) + " in parameter block " + bad);
    }
    adam_step(store.mutable_params(), grads, adam, cfg.learning_rate);
    if (auto bad = block_with_non_finite(store.params()); !bad.empty()) {
      throw NumericalError("step " + std::to_string(step) +
                           ": update produced non-finite values on batch " +
                           std::to_string(step) + " in parameter block " + bad);
    }
    if (step == 1) result.initial_loss = step_loss;
    window += step_loss;
    ++window_n;
    result.steps_run = step;

    const bool last = step == cfg.steps;
    if ((cfg.log_every > 0 && step % cfg.log_every == 0) || last) {
      result.final_loss = window / static_cast<double>(window_n);
      nlohmann::ordered_json rec;
      rec["step"] = step;
      rec["split"] = "train";
      rec["loss"] = result.final_loss;
      emit(std::move(rec));
      window = 0.0;
      window_n = 0;
    }

    const bool eval_now =
        can_validate && ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || last);
    if (eval_now) {
      const auto report = evaluate(data, Split::valid, store, eval_cfg);
      nlohmann::ordered_json rec;
      rec["step"] = step;
      rec["split"] = "valid";
      rec["mrr"] = report.to_json()["overall_mrr"];
      nlohmann::ordered_json per_type = nlohmann::ordered_json::object();
      for (const auto& [type, m] : report.per_type) {
        per_type[std::string(to_string(type))] = std::round(1000.0 * m.mrr) / 10.0;
      }
      rec["per_type_mrr"] = per_type;
      emit(std::move(rec));
      if (!have_best || report.overall_mrr > result.best_valid_mrr) {
        have_best = true;
        result.best_valid_mrr = report.overall_mrr;
        result.best_store = store;
        result.best_step = step;
        last_improvement = step;
      } else if (cfg.patience > 0 && step - last_improvement >= cfg.patience) {
        nlohmann::ordered_json stop;
        stop["step"] = step;
        stop["split"] = "train";
        stop["event"] = "early_stop";
        emit(std::move(stop));
        break;
      }
    }
  }
  return result;
}

}  // namespace geometre
