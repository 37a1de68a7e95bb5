#include "dvta/alignment/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"

namespace dvta {
namespace {

/// Parameter handles on a tape, looked up by name.
class ParamVars {
 public:
  ParamVars(GradTape& tape, const ModelParams& params, bool trainable) : params_(&params) {
    vars_.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      vars_.push_back(trainable ? tape.parameter(params.tensor(i)) : tape.constant(params.tensor(i)));
    }
  }

  Var operator[](std::string_view name) const {
    for (std::size_t i = 0; i < params_->count(); ++i) {
      if (params_->name(i) == name) return vars_[i];
    }
    throw std::out_of_range("model has no parameter " + std::string(name));
  }

  const std::vector<Var>& all() const { return vars_; }

 private:
  const ModelParams* params_;
  std::vector<Var> vars_;
};

void check_params(const ModelConfig& config, const ModelParams& params) {
  const auto layout = parameter_layout(config);
  if (layout.size() != params.count()) {
    throw ShapeError("parameter set has " + std::to_string(params.count()) + " tensors, config needs " +
                     std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Matrix& t = params.tensor(i);
    if (params.name(i) != layout[i].name || t.rows() != layout[i].rows || t.cols() != layout[i].cols) {
      throw ShapeError("parameter " + params.name(i) + " does not match the config layout (" +
                       layout[i].name + " " + std::to_string(layout[i].rows) + "x" +
                       std::to_string(layout[i].cols) + ")");
    }
  }
}

Var linear(GradTape& t, Var x, Var w, Var b) { return ad::add_bias(t, ad::matmul(t, x, w), b); }

Var visual_forward(GradTape& t, const ModelConfig& c, const ParamVars& p, Var v) {
  if (t.value(v).cols() != c.visual_dim) {
    throw ShapeError("visual features have " + std::to_string(t.value(v).cols()) +
                     " columns, model expects " + std::to_string(c.visual_dim));
  }
  if (!c.deep_visual_projector) return linear(t, v, p["visual.w"], p["visual.b"]);
  Var hidden = ad::relu(t, linear(t, v, p["visual.w1"], p["visual.b1"]));
  return linear(t, hidden, p["visual.w2"], p["visual.b2"]);
}

Var text_forward(GradTape& t, const ModelConfig& c, const ParamVars& p, Var text) {
  if (t.value(text).cols() != c.text_dim) {
    throw ShapeError("text features have " + std::to_string(t.value(text).cols()) +
                     " columns, model expects " + std::to_string(c.text_dim));
  }
  return linear(t, text, p["text.w"], p["text.b"]);
}

/// Raw metric network output E([x_v, x_t]) for each row of `pairs`.
Var metric_forward(GradTape& t, const ModelConfig& c, const ParamVars& p, Var pairs) {
  Var x = pairs;
  std::size_t k = 1;
  for (; k <= c.metric_hidden.size(); ++k) {
    const std::string s = std::to_string(k);
    x = ad::leaky_relu(t, linear(t, x, p["metric.w" + s], p["metric.b" + s]), c.metric_slope);
  }
  const std::string s = std::to_string(k);
  return linear(t, x, p["metric.w" + s], p["metric.b" + s]);
}

Var score_activation(GradTape& t, const ModelConfig& c, Var raw) {
  switch (c.activation) {
    case ScoreActivation::kNone: return raw;
    case ScoreActivation::kSigmoid: return ad::sigmoid(t, raw);
    case ScoreActivation::kLeakySigmoid: return ad::leaky_sigmoid(t, raw, c.gamma);
  }
  return raw;
}

Var temperature(GradTape& t, const ModelConfig& c, const ParamVars& p) {
  if (c.learnable_tau) return ad::clamped_exp(t, p["log_tau"], kTauMin, kTauMax);
  return t.constant(Matrix(1, 1, c.tau));
}

/// Row-wise two-key cross-attention; see sde_augment().
Var sde_attention(GradTape& t, Var query, Var label, Var context) {
  const Matrix& q = t.value(query);
  const Matrix& k0 = t.value(label);
  const Matrix& k1 = t.value(context);
  if (q.rows() != k0.rows() || q.rows() != k1.rows() || q.cols() != k0.cols() ||
      q.cols() != k1.cols()) {
    throw ShapeError("sde_augment: query, label and context must share a shape");
  }
  const std::size_t n = q.rows();
  const std::size_t h = q.cols();
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
  std::vector<double> w0(n);
  Matrix out(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    double s0 = 0.0;
    double s1 = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
      s0 += q(i, k) * k0(i, k);
      s1 += q(i, k) * k1(i, k);
    }
    // Two-way softmax in its numerically stable logistic form.
    w0[i] = sigmoid((s0 - s1) * inv_sqrt_h);
    for (std::size_t k = 0; k < h; ++k) out(i, k) = w0[i] * k0(i, k) + (1.0 - w0[i]) * k1(i, k);
  }
  const std::array<Var, 3> inputs{query, label, context};
  return t.record(std::move(out), inputs,
                  [query, label, context, w0 = std::move(w0), inv_sqrt_h](GradTape& tp,
                                                                          const Matrix& g) {
                    const Matrix& q = tp.value(query);
                    const Matrix& k0 = tp.value(label);
                    const Matrix& k1 = tp.value(context);
                    const std::size_t n = q.rows();
                    const std::size_t h = q.cols();
                    Matrix gq(n, h);
                    Matrix g0(n, h);
                    Matrix g1(n, h);
                    for (std::size_t i = 0; i < n; ++i) {
                      const double a = w0[i];
                      double gk0 = 0.0;
                      double gk1 = 0.0;
                      for (std::size_t k = 0; k < h; ++k) {
                        gk0 += g(i, k) * k0(i, k);
                        gk1 += g(i, k) * k1(i, k);
                      }
                      // d out / d (s0 - s1) = a (1 - a) (k0 - k1).
                      const double ds = a * (1.0 - a) * (gk0 - gk1) * inv_sqrt_h;
                      for (std::size_t k = 0; k < h; ++k) {
                        gq(i, k) = ds * (k0(i, k) - k1(i, k));
                        g0(i, k) = a * g(i, k) + ds * q(i, k);
                        g1(i, k) = (1.0 - a) * g(i, k) - ds * q(i, k);
                      }
                    }
                    tp.accumulate(query, gq);
                    tp.accumulate(label, g0);
                    tp.accumulate(context, g1);
                  });
}

Var softmax_with_tau(GradTape& t, Var logits, Var tau) {
  return ad::row_softmax(t, ad::divide_by_scalar(t, logits, tau));
}

}  // namespace

// ---------------------------------------------------------------------------

Matrix project_visual(const ModelConfig& config, const ModelParams& params, const Matrix& visual) {
  check_params(config, params);
  GradTape t;
  ParamVars p(t, params, false);
  return t.value(visual_forward(t, config, p, t.constant(l2_normalize_rows(visual))));
}

Matrix project_text(const ModelConfig& config, const ModelParams& params, const Matrix& text) {
  check_params(config, params);
  GradTape t;
  ParamVars p(t, params, false);
  return t.value(text_forward(t, config, p, t.constant(l2_normalize_rows(text))));
}

Matrix sde_augment(const Matrix& query, const Matrix& label, const Matrix& context) {
  GradTape t;
  return t.value(sde_attention(t, t.constant(query), t.constant(label), t.constant(context)));
}

SimilarityPair direct_similarity(const Matrix& visual_embed, const Matrix& text_embed, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("direct_similarity: tau must be positive");
  const Matrix logits = cosine_similarity_matrix(visual_embed, text_embed);
  return {row_softmax(logits, tau), row_softmax(transpose(logits), tau)};
}

Matrix dmn_scores(const ModelConfig& config, const ModelParams& params, const Matrix& visual_embed,
                  const Matrix& text_embed) {
  check_params(config, params);
  if (!config.use_aa) throw std::invalid_argument("dmn_scores: model has no metric network");
  if (visual_embed.cols() != config.embed_dim || text_embed.cols() != config.embed_dim) {
    throw ShapeError("dmn_scores: embeddings must have embed_dim columns");
  }
  GradTape t;
  ParamVars p(t, params, false);
  Var pairs = ad::pair_concat(t, t.constant(visual_embed), t.constant(text_embed));
  Var g = score_activation(t, config, metric_forward(t, config, p, pairs));
  return Matrix(visual_embed.rows(), text_embed.rows(), t.value(g).values());
}

double dmn_score(const ModelConfig& config, const ModelParams& params,
                 std::span<const double> visual_row, std::span<const double> text_row) {
  if (visual_row.size() != text_row.size()) throw ShapeError("dmn_score: row lengths differ");
  Matrix v(1, visual_row.size(), {visual_row.begin(), visual_row.end()});
  Matrix tr(1, text_row.size(), {text_row.begin(), text_row.end()});
  return dmn_scores(config, params, v, tr)(0, 0);
}

SimilarityPair augmented_similarity(const ModelConfig& config, const ModelParams& params,
                                    const Matrix& visual_embed, const Matrix& text_embed, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("augmented_similarity: tau must be positive");
  const Matrix g = dmn_scores(config, params, visual_embed, text_embed);
  return {row_softmax(g, tau), row_softmax(transpose(g), tau)};
}

Matrix fuse(const Matrix& p1, const Matrix& p2) {
  if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) throw ShapeError("fuse: shapes differ");
  return scale(add(p1, p2), 0.5);
}

TargetPair build_targets(std::span<const int> labels) {
  const std::size_t b = labels.size();
  if (b == 0) throw std::invalid_argument("build_targets: empty batch");
  Matrix y(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    double positives = 0.0;
    for (std::size_t j = 0; j < b; ++j) positives += labels[i] == labels[j] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < b; ++j) y(i, j) = labels[i] == labels[j] ? 1.0 / positives : 0.0;
  }
  Matrix yt = transpose(y);
  for (std::size_t i = 0; i < b; ++i) {
    double total = 0.0;
    for (double x : yt.row(i)) total += x;
    for (double& x : yt.row(i)) x /= total;
  }
  return {std::move(y), std::move(yt)};
}

TargetPair one_hot_targets(std::size_t batch) {
  return {Matrix::identity(batch), Matrix::identity(batch)};
}

double effective_tau(const ModelConfig& config, const ModelParams& params) {
  if (!config.learnable_tau) return config.tau;
  return std::clamp(std::exp(params.at("log_tau")(0, 0)), kTauMin, kTauMax);
}

// ---------------------------------------------------------------------------

namespace {

LossResult run_forward(const ModelConfig& config, const ModelParams& params, const Batch& batch,
                       const ClassBank& classes, bool trainable) {
  check_params(config, params);
  const std::size_t b = batch.labels.size();
  if (b == 0) throw std::invalid_argument("total_loss: empty batch");
  if (batch.visual.rows() != b) throw ShapeError("total_loss: visual rows != label count");

  // Distinct batch classes in first-appearance order, and each sample's slot.
  std::vector<int> batch_classes;
  std::vector<std::size_t> slot(b);
  std::map<int, std::size_t> slot_of;
  for (std::size_t i = 0; i < b; ++i) {
    const int id = batch.labels[i];
    auto [it, inserted] = slot_of.emplace(id, batch_classes.size());
    if (inserted) batch_classes.push_back(id);
    slot[i] = it->second;
  }
  Matrix label_text(batch_classes.size(), classes.text_dim());
  Matrix context_text(batch_classes.size(), classes.text_dim());
  for (std::size_t k = 0; k < batch_classes.size(); ++k) {
    const std::size_t r = classes.row_of(batch_classes[k]);
    std::ranges::copy(classes.label_embeddings().row(r), label_text.row(k).begin());
    std::ranges::copy(classes.context_embeddings().row(r), context_text.row(k).begin());
  }

  LossResult result;
  ForwardCache& c = result.cache;
  GradTape& t = c.tape;
  ParamVars p(t, params, trainable);
  c.params = p.all();
  c.batch_classes = batch_classes;

  c.visual_embed = visual_forward(t, config, p, t.constant(l2_normalize_rows(batch.visual)));
  c.text_embed = text_forward(t, config, p, t.constant(l2_normalize_rows(label_text)));
  c.context_embed = text_forward(t, config, p, t.constant(l2_normalize_rows(context_text)));
  Var own_label = ad::gather_rows(t, c.text_embed, slot);
  c.augmented_text = own_label;
  if (config.use_sde) {
    Var own_context = ad::gather_rows(t, c.context_embed, slot);
    c.augmented_text = sde_attention(t, c.visual_embed, own_label, own_context);
  }
  c.tau = temperature(t, config, p);

  if (config.use_da) {
    Var logits = ad::cosine_similarity_matrix(t, c.visual_embed, c.augmented_text);
    c.p1_v2t = softmax_with_tau(t, logits, c.tau);
    c.p1_t2v = softmax_with_tau(t, ad::transpose(t, logits), c.tau);
  }
  if (config.use_aa) {
    Var pairs = ad::pair_concat(t, c.visual_embed, c.augmented_text);
    Var g = score_activation(t, config, metric_forward(t, config, p, pairs));
    Var scores = ad::reshape(t, g, b, b);
    c.p2_v2t = softmax_with_tau(t, scores, c.tau);
    c.p2_t2v = softmax_with_tau(t, ad::transpose(t, scores), c.tau);
  }
  if (config.use_da && config.use_aa) {
    c.p_v2t = ad::average(t, *c.p1_v2t, *c.p2_v2t);
    c.p_t2v = ad::average(t, *c.p1_t2v, *c.p2_t2v);
  } else if (config.use_da) {
    c.p_v2t = *c.p1_v2t;
    c.p_t2v = *c.p1_t2v;
  } else {
    c.p_v2t = *c.p2_v2t;
    c.p_t2v = *c.p2_t2v;
  }

  c.targets = config.loss == LossKind::kKld ? build_targets(batch.labels) : one_hot_targets(b);
  Var loss = ad::kl_rows(t, c.targets.v2t, c.p_v2t);
  if (config.loss != LossKind::kSoftmaxCe) {
    loss = ad::add_scalars(t, loss, ad::kl_rows(t, c.targets.t2v, c.p_t2v));
  }
  c.loss = loss;
  result.value = t.value(loss)(0, 0);
  if (!std::isfinite(result.value)) throw NumericError("total_loss: loss is not finite");
  return result;
}

}  // namespace

LossResult total_loss(const ModelConfig& config, const ModelParams& params, const Batch& batch,
                      const ClassBank& classes) {
  for (int id : batch.labels) {
    if (!classes.is_seen(id)) {
      throw ContractViolation("label " + std::to_string(id) + " in a training batch is not a seen class");
    }
  }
  return run_forward(config, params, batch, classes, true);
}

LossResult forward_batch(const ModelConfig& config, const ModelParams& params, const Batch& batch,
                         const ClassBank& classes) {
  for (int id : batch.labels) classes.row_of(id);
  return run_forward(config, params, batch, classes, false);
}

ModelParams gradients(ForwardCache& cache, const ModelParams& params) {
  cache.tape.backward(cache.loss);
  ModelParams grads = ModelParams::zeros_like(params);
  for (std::size_t i = 0; i < params.count(); ++i) grads.tensor(i) = cache.tape.grad(cache.params[i]);
  return grads;
}

// ---------------------------------------------------------------------------

ClassScores score_classes(const ModelConfig& config, const ModelParams& params,
                          const Matrix& visual, const ClassBank& candidates) {
  check_params(config, params);
  const std::size_t b = visual.rows();
  const std::size_t n = candidates.size();
  if (n == 0) throw std::invalid_argument("score_classes: no candidate classes");

  GradTape t;
  ParamVars p(t, params, false);
  Var v_e = visual_forward(t, config, p, t.constant(l2_normalize_rows(visual)));
  Var t_e = text_forward(t, config, p, t.constant(l2_normalize_rows(candidates.label_embeddings())));
  Var t_c = text_forward(t, config, p, t.constant(l2_normalize_rows(candidates.context_embeddings())));

  std::vector<std::size_t> sample_index(b * n);
  std::vector<std::size_t> class_index(b * n);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sample_index[i * n + j] = i;
      class_index[i * n + j] = j;
    }
  }
  Var query = ad::gather_rows(t, v_e, sample_index);
  Var text = ad::gather_rows(t, t_e, class_index);
  if (config.use_sde) text = sde_attention(t, query, text, ad::gather_rows(t, t_c, class_index));
  Var tau = temperature(t, config, p);

  ClassScores out;
  for (const auto& info : candidates.classes()) out.class_ids.push_back(info.id);
  if (config.use_da) {
    Var cos = ad::rowwise_dot(t, ad::l2_normalize_rows(t, query), ad::l2_normalize_rows(t, text));
    out.direct = t.value(softmax_with_tau(t, ad::reshape(t, cos, b, n), tau));
  }
  if (config.use_aa) {
    Var g = score_activation(t, config, metric_forward(t, config, p, ad::concat_cols(t, query, text)));
    out.augmented = t.value(softmax_with_tau(t, ad::reshape(t, g, b, n), tau));
  }
  if (config.use_da && config.use_aa) {
    out.fused = fuse(out.direct, out.augmented);
  } else {
    out.fused = config.use_da ? out.direct : out.augmented;
  }

  out.predicted.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      const double s = out.fused(i, j);
      const double bs = out.fused(i, best);
      if (s > bs || (s == bs && out.class_ids[j] < out.class_ids[best])) best = j;
    }
    out.predicted[i] = out.class_ids[best];
  }
  return out;
}

Classification classify(const ModelConfig& config, const ModelParams& params, const Matrix& visual,
                        const ClassBank& classes) {
  if (visual.rows() != 1) throw ShapeError("classify: expects a single 1 x d_v feature row");
  if (classes.unseen().empty()) throw std::invalid_argument("classify: no unseen classes");
  const ClassBank unseen = classes.unseen().size() == classes.size() ? classes
                                                                     : classes.subset(classes.unseen());
  ClassScores s = score_classes(config, params, visual, unseen);
  return Classification{s.predicted[0], s.class_ids, {s.fused.row(0).begin(), s.fused.row(0).end()}};
}

}  // namespace dvta
