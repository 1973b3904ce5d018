#include "colberter/train.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "colberter/error.hpp"
#include "colberter/score.hpp"

namespace colberter {

// ---- triples file --------------------------------------------------------

std::vector<TrainTriple> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triples " + path.string());
  std::vector<TrainTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainTriple t{j.at("q").get<std::string>(), j.at("pos").get<std::string>(),
                    j.at("neg").get<std::string>(), j.at("t_margin").get<double>()};
      if (!std::isfinite(t.teacher_margin)) throw Error("non-finite teacher margin");
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw Error("triples line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_triples(const std::filesystem::path& path, std::span<const TrainTriple> triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : triples) {
    out << nlohmann::json{{"q", t.query}, {"pos", t.positive}, {"neg", t.negative},
                          {"t_margin", t.teacher_margin}}
               .dump()
        << '\n';
  }
}

void LossWeights::validate() const {
  if (bow < 0 || cls < 0 || cs < 0) throw Error("loss weights must be non-negative");
  if (bow == 0 && cls == 0 && cs == 0) throw Error("loss weights must not all be zero");
}

std::optional<ParamGroup> parse_param_group(std::string_view name) {
  if (name == "cls") return ParamGroup::cls;
  if (name == "token") return ParamGroup::token;
  if (name == "gate") return ParamGroup::gate;
  if (name == "gamma") return ParamGroup::gamma;
  if (name == "uni") return ParamGroup::uni;
  return std::nullopt;
}

// ---- preparation ---------------------------------------------------------

PreparedText prepare_text(std::string_view text, const Vocabulary& vocab, const Encoder& encoder,
                          bool stemming) {
  const auto tokens = tokenize(text, vocab, stemming);
  const auto raw = encoder.encode(tokens, "");
  std::vector<Vector> token_vectors;
  token_vectors.reserve(raw.token_count());
  for (std::size_t i = 0; i < raw.token_count(); ++i) {
    const auto t = raw.token(i);
    token_vectors.emplace_back(t.begin(), t.end());
  }
  PreparedText out;
  out.cls_raw.assign(raw.cls_raw.begin(), raw.cls_raw.end());
  for (auto& w : aggregate_bow2(token_vectors, tokens)) {
    out.hashes.push_back(word_hash(w.stem));
    out.stems.push_back(std::move(w.stem));
    out.word_raw.push_back(std::move(w.vector));
  }
  return out;
}

PreparedTriple prepare_triple(const TrainTriple& triple, const Vocabulary& vocab,
                              const Encoder& encoder, bool stemming) {
  return {prepare_text(triple.query, vocab, encoder, stemming),
          prepare_text(triple.positive, vocab, encoder, stemming),
          prepare_text(triple.negative, vocab, encoder, stemming), triple.teacher_margin};
}

double margin_mse(double s_pos, double s_neg, double teacher_margin) {
  const double diff = (s_pos - s_neg) - teacher_margin;
  return diff * diff;
}

double margin_mse(std::span<const double> s_pos, std::span<const double> s_neg,
                  std::span<const double> teacher_margins) {
  if (s_pos.size() != s_neg.size() || s_pos.size() != teacher_margins.size() || s_pos.empty()) {
    throw Error("margin_mse: batch sizes differ or are empty");
  }
  double sum = 0;
  for (std::size_t i = 0; i < s_pos.size(); ++i) sum += margin_mse(s_pos[i], s_neg[i], teacher_margins[i]);
  return sum / static_cast<double>(s_pos.size());
}

// ---- forward / backward --------------------------------------------------

namespace {

struct TextForward {
  Vector cls;
  std::vector<Vector> h;       // word_raw * W_t
  std::vector<double> z;       // gate pre-activation (passages with gating)
  std::vector<double> r;       // gate value; 1 for queries / gating off
  std::vector<Vector> v;       // r * h
  std::vector<double> uni_pre; // v * W_u
  std::vector<Vector> f;       // final word vectors
  std::vector<char> kept;
};

TextForward forward_text(const PreparedText& text, const ReductionHeads& heads, bool passage,
                         const TrainOptions& options) {
  TextForward fw;
  fw.cls = row_times(text.cls_raw, heads.w_cls);
  const std::size_t n = text.word_raw.size();
  fw.h.reserve(n);
  for (const auto& raw : text.word_raw) fw.h.push_back(row_times(raw, heads.w_token));
  const bool gated = passage && options.gating;
  fw.z.assign(n, 0.0);
  fw.r.assign(n, 1.0);
  fw.kept.assign(n, 1);
  fw.v.resize(n);
  fw.f.resize(n);
  fw.uni_pre.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (gated) {
      fw.z[j] = dot(fw.h[j], heads.w_gate) + heads.b_gate;
      fw.r[j] = std::max(0.0, fw.z[j]);
      fw.kept[j] = fw.r[j] > 0.0;
    }
    fw.v[j] = fw.h[j];
    for (double& x : fw.v[j]) x *= fw.r[j];
    if (heads.uni()) {
      fw.uni_pre[j] = dot(fw.v[j], heads.w_uni.data());
      const double u = options.uni_nonneg ? std::max(0.0, fw.uni_pre[j]) : fw.uni_pre[j];
      fw.f[j] = Vector{u};
    } else {
      fw.f[j] = fw.v[j];
    }
  }
  return fw;
}

struct PairForward {
  double s_cls = 0;
  double s_tok = 0;
  double s_total = 0;
  std::vector<int> match;  // passage word per query word, -1 for none
};

PairForward forward_pair(const PreparedText& q_text, const TextForward& q,
                         const PreparedText& p_text, const TextForward& p,
                         const ReductionHeads& heads, const TrainOptions& options,
                         ActivationPattern* pattern) {
  PairForward pf;
  pf.s_cls = dot(q.cls, p.cls);
  pf.match.assign(q.f.size(), -1);
  for (std::size_t j = 0; j < q.f.size(); ++j) {
    double best = 0.0;
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.f.size(); ++i) {
      if (!p.kept[i]) continue;
      if (options.exact_match && q_text.hashes[j] != p_text.hashes[i]) continue;
      const double s = dot(q.f[j], p.f[i]);
      if (pf.match[j] < 0 || s > best) {
        if (pf.match[j] >= 0) second = best;
        best = s;
        pf.match[j] = static_cast<int>(i);
      } else {
        second = std::max(second, s);
      }
    }
    if (pf.match[j] >= 0) pf.s_tok += best;
    if (pattern) {
      pattern->decisions.push_back(pf.match[j]);
      pattern->min_max_margin = std::min(pattern->min_max_margin, best - second);
    }
  }
  const auto agg = aggregate_score(pf.s_cls, pf.s_tok, heads.gamma);
  pf.s_total = agg.s_total;
  return pf;
}

struct TextGrad {
  Vector d_cls;
  std::vector<Vector> d_f;
};

TextGrad zero_grad(const TextForward& fw) {
  TextGrad g;
  g.d_cls.assign(fw.cls.size(), 0.0);
  g.d_f.reserve(fw.f.size());
  for (const auto& f : fw.f) g.d_f.emplace_back(f.size(), 0.0);
  return g;
}

void backward_pair(const TextForward& q, const TextForward& p, const PairForward& pf,
                   double d_cls, double d_tok, TextGrad& gq, TextGrad& gp) {
  for (std::size_t k = 0; k < q.cls.size(); ++k) {
    gq.d_cls[k] += d_cls * p.cls[k];
    gp.d_cls[k] += d_cls * q.cls[k];
  }
  if (d_tok == 0.0) return;
  for (std::size_t j = 0; j < pf.match.size(); ++j) {
    if (pf.match[j] < 0) continue;
    const auto i = static_cast<std::size_t>(pf.match[j]);
    for (std::size_t k = 0; k < q.f[j].size(); ++k) {
      gq.d_f[j][k] += d_tok * p.f[i][k];
      gp.d_f[i][k] += d_tok * q.f[j][k];
    }
  }
}

void backward_text(const PreparedText& text, const TextForward& fw, const TextGrad& g,
                   bool passage, double cs_weight, const ReductionHeads& heads,
                   const TrainOptions& options, ReductionHeads& grad) {
  add_outer(grad.w_cls, text.cls_raw, g.d_cls, 1.0);
  const bool gated = passage && options.gating;
  const std::size_t d_t = heads.dims.token;
  Vector dv(d_t), dh(d_t);
  for (std::size_t j = 0; j < fw.f.size(); ++j) {
    if (heads.uni()) {
      const bool active = !options.uni_nonneg || fw.uni_pre[j] > 0.0;
      const double d_pre = active ? g.d_f[j][0] : 0.0;
      for (std::size_t k = 0; k < d_t; ++k) {
        grad.w_uni(k, 0) += fw.v[j][k] * d_pre;
        dv[k] = heads.w_uni(k, 0) * d_pre;
      }
    } else {
      dv = g.d_f[j];
    }
    if (gated) {
      double d_r = dot(dv, fw.h[j]) + cs_weight;
      const double d_z = fw.z[j] > 0.0 ? d_r : 0.0;
      for (std::size_t k = 0; k < d_t; ++k) {
        dh[k] = fw.r[j] * dv[k] + d_z * heads.w_gate[k];
        grad.w_gate[k] += d_z * fw.h[j][k];
      }
      grad.b_gate += d_z;
    } else {
      dh = dv;
    }
    add_outer(grad.w_token, text.word_raw[j], dh, 1.0);
  }
}

ReductionHeads zeros_like(const ReductionHeads& heads) {
  ReductionHeads g;
  g.dims = heads.dims;
  g.w_cls = Matrix(heads.w_cls.rows(), heads.w_cls.cols());
  g.w_token = Matrix(heads.w_token.rows(), heads.w_token.cols());
  g.w_gate = Vector(heads.w_gate.size(), 0.0);
  g.b_gate = 0.0;
  g.gamma = 0.0;
  if (heads.uni()) g.w_uni = Matrix(heads.w_uni.rows(), heads.w_uni.cols());
  return g;
}

void zero_frozen(ReductionHeads& grad, const std::set<ParamGroup>& frozen) {
  for_each_parameter(grad, [&](ParamGroup group, const std::string&, double& value) {
    if (frozen.contains(group)) value = 0.0;
  });
}

}  // namespace

void for_each_parameter(ReductionHeads& heads,
                        const std::function<void(ParamGroup, const std::string&, double&)>& fn) {
  const auto matrix = [&](ParamGroup group, const char* name, Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        fn(group, std::string(name) + "[" + std::to_string(r) + "," + std::to_string(c) + "]", m(r, c));
      }
    }
  };
  matrix(ParamGroup::cls, "W_CLS", heads.w_cls);
  matrix(ParamGroup::token, "W_t", heads.w_token);
  for (std::size_t k = 0; k < heads.w_gate.size(); ++k) {
    fn(ParamGroup::gate, "W_s[" + std::to_string(k) + "]", heads.w_gate[k]);
  }
  fn(ParamGroup::gate, "b_s", heads.b_gate);
  fn(ParamGroup::gamma, "gamma", heads.gamma);
  if (heads.uni()) matrix(ParamGroup::uni, "W_u", heads.w_uni);
}

LossTerms total_loss(std::span<const PreparedTriple> batch, const ReductionHeads& heads,
                     const TrainOptions& options, ReductionHeads* gradient,
                     ActivationPattern* pattern) {
  if (batch.empty()) throw Error("total_loss: empty batch");
  options.weights.validate();
  const auto& w = options.weights;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double sigma = sigmoid(heads.gamma);

  if (gradient) *gradient = zeros_like(heads);
  LossTerms terms;
  for (const auto& t : batch) {
    const auto q = forward_text(t.query, heads, false, options);
    const auto pos = forward_text(t.positive, heads, true, options);
    const auto neg = forward_text(t.negative, heads, true, options);
    if (pattern) {
      for (const auto* fw : {&pos, &neg}) {
        for (std::size_t j = 0; j < fw->z.size(); ++j) {
          if (options.gating) {
            pattern->decisions.push_back(fw->z[j] > 0.0);
            pattern->min_abs_gate_preactivation =
                std::min(pattern->min_abs_gate_preactivation, std::abs(fw->z[j]));
          }
          if (heads.uni() && options.uni_nonneg && fw->kept[j]) {
            pattern->decisions.push_back(fw->uni_pre[j] > 0.0);
            pattern->min_abs_gate_preactivation =
                std::min(pattern->min_abs_gate_preactivation, std::abs(fw->uni_pre[j]));
          }
        }
      }
      if (heads.uni() && options.uni_nonneg) {
        for (std::size_t j = 0; j < q.uni_pre.size(); ++j) {
          pattern->decisions.push_back(q.uni_pre[j] > 0.0);
          pattern->min_abs_gate_preactivation =
              std::min(pattern->min_abs_gate_preactivation, std::abs(q.uni_pre[j]));
        }
      }
    }
    const auto fp = forward_pair(t.query, q, t.positive, pos, heads, options, pattern);
    const auto fn = forward_pair(t.query, q, t.negative, neg, heads, options, pattern);

    const double diff_b = (fp.s_total - fn.s_total) - t.teacher_margin;
    const double diff_c = (fp.s_cls - fn.s_cls) - t.teacher_margin;
    double gates = 0.0;
    if (options.gating) {
      for (const auto* fw : {&pos, &neg}) {
        double passage_gates = 0.0;
        for (const double r : fw->r) {
          passage_gates += r;
          terms.zero_gates += r == 0.0;
        }
        terms.gate_count += fw->r.size();
        terms.gate_sum += passage_gates;
        gates += options.cs_per_word && !fw->r.empty() ? passage_gates / double(fw->r.size()) : passage_gates;
      }
    }
    terms.bow += diff_b * diff_b * inv_batch;
    terms.cls += diff_c * diff_c * inv_batch;
    terms.cs += gates * inv_batch;

    if (!gradient) continue;
    const double g_total = w.bow * 2.0 * diff_b * inv_batch;  // dL/ds_total(pos) = -dL/ds_total(neg)
    const double g_cls = w.cls * 2.0 * diff_c * inv_batch;
    gradient->gamma += g_total * sigma * (1.0 - sigma) * ((fp.s_cls - fp.s_tok) - (fn.s_cls - fn.s_tok));

    auto gq = zero_grad(q);
    auto gp = zero_grad(pos);
    auto gn = zero_grad(neg);
    backward_pair(q, pos, fp, g_total * sigma + g_cls, g_total * (1.0 - sigma), gq, gp);
    backward_pair(q, neg, fn, -(g_total * sigma + g_cls), -g_total * (1.0 - sigma), gq, gn);
    const auto cs_weight = [&](const TextForward& fw) {
      const double base = w.cs * inv_batch;
      return options.cs_per_word && !fw.r.empty() ? base / double(fw.r.size()) : base;
    };
    backward_text(t.query, q, gq, false, 0.0, heads, options, *gradient);
    backward_text(t.positive, pos, gp, true, cs_weight(pos), heads, options, *gradient);
    backward_text(t.negative, neg, gn, true, cs_weight(neg), heads, options, *gradient);
  }
  terms.total = w.bow * terms.bow + w.cls * terms.cls + w.cs * terms.cs;
  if (gradient) zero_frozen(*gradient, options.frozen);
  return terms;
}

TrainRecord train_step(std::span<const PreparedTriple> batch, ReductionHeads& heads,
                       const TrainOptions& options, double lr) {
  if (!(lr >= 0.0)) throw Error("learning rate must be >= 0");
  ReductionHeads grad;
  TrainRecord record;
  record.loss = total_loss(batch, heads, options, &grad);
  if (!std::isfinite(record.loss.total)) {
    std::ostringstream msg;
    msg << "non-finite loss (L_b=" << record.loss.bow << ", L_CLS=" << record.loss.cls
        << ", L_CS=" << record.loss.cs << ", gamma=" << heads.gamma << ", b_s=" << heads.b_gate << ")";
    throw Error(msg.str());
  }
  double norm2 = 0.0;
  for_each_parameter(grad, [&](ParamGroup, const std::string&, double& g) { norm2 += g * g; });
  record.gradient_norm = std::sqrt(norm2);
  if (lr == 0.0) return record;

  std::vector<double> flat;
  for_each_parameter(grad, [&](ParamGroup, const std::string&, double& g) { flat.push_back(g); });
  std::size_t i = 0;
  for_each_parameter(heads, [&](ParamGroup, const std::string&, double& p) { p -= lr * flat[i++]; });
  return record;
}

GradCheckReport grad_check(const ReductionHeads& heads, std::span<const PreparedTriple> batch,
                           const TrainOptions& options, double eps, double tol) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be > 0");
  ReductionHeads analytic;
  ActivationPattern base_pattern;
  total_loss(batch, heads, options, &analytic, &base_pattern);

  const bool near_relu_kink = base_pattern.min_abs_gate_preactivation < 10.0 * eps;
  const bool near_max_tie = base_pattern.min_max_margin < 10.0 * eps;

  std::vector<double> analytic_flat;
  for_each_parameter(analytic, [&](ParamGroup, const std::string&, double& g) { analytic_flat.push_back(g); });

  GradCheckReport report;
  ReductionHeads probe = heads;
  std::size_t index = 0;
  for_each_parameter(probe, [&](ParamGroup group, const std::string& name, double& value) {
    const double a = analytic_flat[index++];
    if (options.frozen.contains(group)) return;
    const bool affects_words = group == ParamGroup::token || group == ParamGroup::gate ||
                               group == ParamGroup::uni;
    const double original = value;
    ActivationPattern plus_pattern, minus_pattern;
    value = original + eps;
    const double plus = total_loss(batch, probe, options, nullptr, &plus_pattern).total;
    value = original - eps;
    const double minus = total_loss(batch, probe, options, nullptr, &minus_pattern).total;
    value = original;

    if (!(plus_pattern == base_pattern) || !(minus_pattern == base_pattern) ||
        (affects_words && (near_relu_kink || near_max_tie))) {
      report.excluded.push_back(name);
      return;
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / scale;
    ++report.checked;
    if (rel <= tol) {
      ++report.passed;
    } else {
      report.failures.push_back({name, a, numeric, rel});
    }
  });
  return report;
}

}  // namespace colberter
