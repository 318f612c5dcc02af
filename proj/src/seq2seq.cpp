// SPDX-License-Identifier: Apache-2.0
#include "flapnet/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flapnet/errors.hpp"
#include "flapnet/kernels.hpp"

namespace flapnet {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kSeq2Seq: return "Seq2Seq";
    case ModelKind::kLinear: return "Linear";
    case ModelKind::kNLinear: return "NLinear";
  }
  return "Seq2Seq";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "Seq2Seq") return ModelKind::kSeq2Seq;
  if (s == "Linear") return ModelKind::kLinear;
  if (s == "NLinear") return ModelKind::kNLinear;
  throw ConfigError("unknown model_class_name '" + s + "' (expected Seq2Seq|Linear|NLinear)");
}

ModelConfig ModelConfig::measured_defaults() {
  ModelConfig c;
  c.input_channels = 4;
  c.feature_win = 512;
  c.enc_embedding_size = 10;
  c.enc_hidden_size = 110;
  c.dec_embedding_size = 10;
  c.dec_hidden_size = 110;
  c.asl.hidden_size = 110;
  c.asl.freq_threshold = 210.0;
  c.asl.sample_rate = 5000.0;
  c.asl.per_freq_layer = true;
  return c;
}

ModelConfig ModelConfig::open_source_defaults() {
  ModelConfig c;
  c.input_channels = 5;
  c.feature_win = 256;
  c.enc_embedding_size = 30;
  c.enc_hidden_size = 100;
  c.dec_embedding_size = 30;
  c.dec_hidden_size = 100;
  c.asl.hidden_size = 100;
  c.asl.freq_threshold = 200.0;
  c.asl.sample_rate = 25.0;
  c.asl.per_freq_layer = false;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(input_channels, "input channel count");
  positive(feature_win, "feature_win");
  positive(target_win, "target_win");
  positive(dec_output_size, "model_args_dec_output_size");
  if (kind == ModelKind::kSeq2Seq) {
    positive(enc_embedding_size, "model_args_enc_embedding_size");
    positive(enc_hidden_size, "model_args_enc_hidden_size");
    positive(enc_num_layers, "model_args_enc_num_layers");
    positive(dec_embedding_size, "model_args_dec_embedding_size");
    positive(dec_hidden_size, "model_args_dec_hidden_size");
    positive(attn_heads, "model_args_attn_heads");
    if (use_asl) {
      asl.validate();
      check_fft_length(feature_win);
    }
  }
}

// ---------------------------------------------------------------------------
// Attention

Attention::Attention(ModelState& state, const std::string& name, std::size_t query_dim,
                     std::size_t key_dim, std::size_t attn_dim, std::size_t heads)
    : query_dim_(query_dim), key_dim_(key_dim), attn_dim_(attn_dim) {
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string p = name + ".head" + std::to_string(h);
    Head head;
    head.weight = state.add(p + ".weight", {query_dim + key_dim, attn_dim});
    head.bias = state.add(p + ".bias", {attn_dim});
    head.score = state.add(p + ".score", {attn_dim, 1});
    heads_.push_back(head);
  }
}

std::size_t Attention::param_count() const {
  return heads_.size() * ((query_dim_ + key_dim_) * attn_dim_ + 2 * attn_dim_);
}

Attention::Keys Attention::precompute(const ModelState& state, const Tensor& keys) const {
  Keys k;
  const std::size_t t_len = keys.rows();
  for (const auto& head : heads_) {
    Tensor p({t_len, attn_dim_});
    const double* w_key = state.value(head.weight).data() + query_dim_ * attn_dim_;
    kernels::gemm(keys.data(), w_key, p.data(), t_len, key_dim_, attn_dim_);
    k.projected.push_back(std::move(p));
  }
  return k;
}

std::vector<double> Attention::attend(const ModelState& state, const Keys& keys,
                                      const Tensor& values, const double* query,
                                      Step* cache) const {
  const std::size_t t_len = values.rows();
  const std::size_t e = values.cols();
  std::vector<double> context(e, 0.0);
  if (cache) {
    cache->query.assign(query, query + query_dim_);
    cache->energy.clear();
    cache->weights.clear();
  }
  std::vector<double> q(attn_dim_);
  const double inv_heads = 1.0 / static_cast<double>(heads_.size());
  for (std::size_t hi = 0; hi < heads_.size(); ++hi) {
    const Head& head = heads_[hi];
    const auto& b = state.value(head.bias).values();
    std::copy(b.begin(), b.end(), q.begin());
    kernels::gemv_row(query, state.value(head.weight).data(), q.data(), query_dim_, attn_dim_);
    const double* v = state.value(head.score).data();
    Tensor energy({t_len, attn_dim_});
    std::vector<double> scores(t_len);
    const Tensor& proj = keys.projected[hi];
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < t_len; ++t) {
      double s = 0.0;
      const double* pr = proj.row(t);
      double* er = energy.row(t);
      for (std::size_t a = 0; a < attn_dim_; ++a) {
        er[a] = std::tanh(pr[a] + q[a]);
        s += v[a] * er[a];
      }
      scores[t] = s;
      max_score = std::max(max_score, s);
    }
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - max_score);
      z += s;
    }
    for (double& s : scores) s /= z;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double w = scores[t] * inv_heads;
      const double* vr = values.row(t);
      for (std::size_t j = 0; j < e; ++j) context[j] += w * vr[j];
    }
    if (cache) {
      cache->energy.push_back(std::move(energy));
      cache->weights.push_back(std::move(scores));
    }
  }
  return context;
}

void Attention::attend_backward(const ModelState& state, const Step& cache, const Tensor& values,
                                const double* dcontext, double* dquery,
                                std::vector<Tensor>& dkeys, Tensor& dvalues,
                                Gradients& grads) const {
  const std::size_t t_len = values.rows();
  const std::size_t e = values.cols();
  const double inv_heads = 1.0 / static_cast<double>(heads_.size());
  std::vector<double> dscore(t_len);
  std::vector<double> dq(attn_dim_);
  for (std::size_t hi = 0; hi < heads_.size(); ++hi) {
    const Head& head = heads_[hi];
    const auto& alpha = cache.weights[hi];
    const Tensor& energy = cache.energy[hi];
    // dα_t = dctx·v_t / heads; values also get α_t·dctx / heads.
    double dot = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* vr = values.row(t);
      double* dvr = dvalues.row(t);
      double da = 0.0;
      for (std::size_t j = 0; j < e; ++j) {
        da += dcontext[j] * vr[j];
        dvr[j] += alpha[t] * inv_heads * dcontext[j];
      }
      da *= inv_heads;
      dscore[t] = da;
      dot += alpha[t] * da;
    }
    for (std::size_t t = 0; t < t_len; ++t) dscore[t] = alpha[t] * (dscore[t] - dot);

    const double* v = state.value(head.score).data();
    double* dv = grads[head.score].data();
    std::fill(dq.begin(), dq.end(), 0.0);
    Tensor& dk = dkeys[hi];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* er = energy.row(t);
      double* dkr = dk.row(t);
      const double ds = dscore[t];
      for (std::size_t a = 0; a < attn_dim_; ++a) {
        dv[a] += ds * er[a];
        const double dpre = ds * v[a] * (1.0 - er[a] * er[a]);
        dq[a] += dpre;
        dkr[a] += dpre;
      }
    }
    double* db = grads[head.bias].data();
    for (std::size_t a = 0; a < attn_dim_; ++a) db[a] += dq[a];
    kernels::outer_acc(cache.query.data(), dq.data(), grads[head.weight].data(), query_dim_,
                       attn_dim_);
    kernels::gemv_col(state.value(head.weight).data(), dq.data(), dquery, query_dim_, attn_dim_);
  }
}

void Attention::finish_backward(const ModelState& state, const Tensor& values,
                                const std::vector<Tensor>& dkeys, Tensor& dvalues,
                                Gradients& grads) const {
  const std::size_t t_len = values.rows();
  for (std::size_t hi = 0; hi < heads_.size(); ++hi) {
    const Head& head = heads_[hi];
    double* gw_key = grads[head.weight].data() + query_dim_ * attn_dim_;
    const double* w_key = state.value(head.weight).data() + query_dim_ * attn_dim_;
    kernels::gemm_tn(values.data(), dkeys[hi].data(), gw_key, t_len, key_dim_, attn_dim_);
    kernels::gemm_nt(dkeys[hi].data(), w_key, dvalues.data(), t_len, attn_dim_, key_dim_);
  }
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(ModelState& state, const ModelConfig& cfg, std::size_t input_width)
    : hidden_(cfg.enc_hidden_size), bidirectional_(cfg.enc_bidirectional) {
  embedding_ = Linear::create(state, "encoder.embedding", input_width, cfg.enc_embedding_size);
  std::size_t in = cfg.enc_embedding_size;
  for (std::size_t l = 0; l < cfg.enc_num_layers; ++l) {
    const std::string p = "encoder.gru" + std::to_string(l);
    forward_cells_.push_back(GruCell::create(state, p + ".forward", in, hidden_));
    if (bidirectional_) {
      backward_cells_.push_back(GruCell::create(state, p + ".backward", in, hidden_));
    }
    in = output_width();
  }
  bridge_ = Linear::create(state, "encoder.bridge", output_width(), cfg.dec_hidden_size);
}

Tensor Encoder::forward(const ModelState& state, const Tensor& x, std::vector<double>& dec_init,
                        Cache* cache) const {
  const std::size_t t_len = x.rows();
  Tensor layer_in = embedding_.forward(state, x);
  if (cache) {
    cache->input = x;
    cache->embedded = layer_in;
    cache->forward_layers.assign(forward_cells_.size(), {});
    cache->backward_layers.assign(backward_cells_.size(), {});
  }
  Tensor out;
  for (std::size_t l = 0; l < forward_cells_.size(); ++l) {
    Tensor fwd = GruSequence::forward(forward_cells_[l], state, layer_in, false,
                                      cache ? &cache->forward_layers[l] : nullptr);
    if (bidirectional_) {
      Tensor bwd = GruSequence::forward(backward_cells_[l], state, layer_in, true,
                                        cache ? &cache->backward_layers[l] : nullptr);
      out = Tensor({t_len, 2 * hidden_});
      for (std::size_t t = 0; t < t_len; ++t) {
        std::copy_n(fwd.row(t), hidden_, out.row(t));
        std::copy_n(bwd.row(t), hidden_, out.row(t) + hidden_);
      }
    } else {
      out = std::move(fwd);
    }
    layer_in = out;
  }
  // Final states: forward direction ends at T-1, backward direction at 0.
  Tensor final_state({output_width()});
  std::copy_n(out.row(t_len - 1), hidden_, final_state.data());
  if (bidirectional_) std::copy_n(out.row(0) + hidden_, hidden_, final_state.data() + hidden_);
  dec_init.assign(bridge_.out, 0.0);
  bridge_.forward(state, final_state.data(), 1, dec_init.data());
  if (cache) {
    cache->outputs = out;
    cache->final_state = std::move(final_state);
  }
  return out;
}

Tensor Encoder::backward(const ModelState& state, const Cache& cache, const Tensor& d_outputs,
                         const std::vector<double>& d_dec_init, Gradients& grads) const {
  const std::size_t t_len = d_outputs.rows();
  std::vector<double> d_final(output_width(), 0.0);
  bridge_.backward(state, cache.final_state.data(), d_dec_init.data(), 1, grads, d_final.data());

  Tensor d_out = d_outputs;
  for (std::size_t l = forward_cells_.size(); l-- > 0;) {
    const bool top = (l + 1 == forward_cells_.size());
    Tensor dfwd({t_len, hidden_});
    Tensor dbwd;
    if (bidirectional_) dbwd = Tensor({t_len, hidden_});
    for (std::size_t t = 0; t < t_len; ++t) {
      std::copy_n(d_out.row(t), hidden_, dfwd.row(t));
      if (bidirectional_) std::copy_n(d_out.row(t) + hidden_, hidden_, dbwd.row(t));
    }
    std::vector<double> df_f, df_b;
    if (top) {
      df_f.assign(d_final.begin(), d_final.begin() + static_cast<std::ptrdiff_t>(hidden_));
      if (bidirectional_) {
        df_b.assign(d_final.begin() + static_cast<std::ptrdiff_t>(hidden_), d_final.end());
      }
    }
    Tensor d_in = GruSequence::backward(forward_cells_[l], state, cache.forward_layers[l], dfwd,
                                        df_f, grads);
    if (bidirectional_) {
      Tensor d_in_b = GruSequence::backward(backward_cells_[l], state, cache.backward_layers[l],
                                            dbwd, df_b, grads);
      for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] += d_in_b[i];
    }
    d_out = std::move(d_in);
  }
  Tensor dx({t_len, embedding_.in});
  embedding_.backward(state, cache.input.data(), d_out.data(), t_len, grads, dx.data());
  return dx;
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(ModelState& state, const ModelConfig& cfg, std::size_t enc_width)
    : target_win_(cfg.target_win),
      out_size_(cfg.dec_output_size),
      emb_(cfg.dec_embedding_size),
      hidden_(cfg.dec_hidden_size),
      enc_width_(enc_width) {
  first_embedding_ =
      Linear::create(state, "decoder.first_embedding", cfg.input_channels, emb_);
  if (target_win_ > 1) {
    feedback_embedding_ =
        Linear::create(state, "decoder.feedback_embedding", out_size_, emb_);
  }
  attention_ = Attention(state, "decoder.attention", hidden_, enc_width, hidden_, cfg.attn_heads);
  cell_ = GruCell::create(state, "decoder.gru", emb_ + enc_width, hidden_);
  output_ = Linear::create(state, "decoder.output", hidden_, out_size_);
}

Tensor Decoder::forward(const ModelState& state, const std::vector<double>& last_input,
                        const std::vector<double>& dec_init, const Tensor& enc_outputs,
                        Cache* cache) const {
  Tensor y({target_win_, out_size_});
  Attention::Keys keys = attention_.precompute(state, enc_outputs);
  std::vector<double> embedded(emb_);
  first_embedding_.forward(state, last_input.data(), 1, embedded.data());
  std::vector<double> s = dec_init;
  std::vector<double> cell_input(emb_ + enc_width_);
  std::vector<double> gx(3 * hidden_);
  if (cache) {
    cache->last_input = last_input;
    cache->steps.assign(target_win_, {});
  }
  for (std::size_t t = 0; t < target_win_; ++t) {
    StepCache* sc = cache ? &cache->steps[t] : nullptr;
    // The query on the first step is the bridged final encoder state.
    std::vector<double> context =
        attention_.attend(state, keys, enc_outputs, s.data(), sc ? &sc->attention : nullptr);
    std::copy(embedded.begin(), embedded.end(), cell_input.begin());
    std::copy(context.begin(), context.end(), cell_input.begin() + static_cast<std::ptrdiff_t>(emb_));
    const auto& b = state.value(cell_.bias).values();
    std::copy(b.begin(), b.end(), gx.begin());
    kernels::gemv_row(cell_input.data(), state.value(cell_.w_input).data(), gx.data(),
                      cell_input.size(), 3 * hidden_);
    std::vector<double> s_next(hidden_);
    cell_.step_projected(state, gx.data(), s.data(), s_next.data(), sc ? &sc->cell : nullptr);
    output_.forward(state, s_next.data(), 1, y.row(t));
    if (sc) {
      sc->embedded = embedded;
      sc->context = std::move(context);
      sc->cell_input = cell_input;
      sc->state_prev = s;
      sc->state = s_next;
      sc->output.assign(y.row(t), y.row(t) + out_size_);
    }
    s = std::move(s_next);
    if (t + 1 < target_win_) feedback_embedding_->forward(state, y.row(t), 1, embedded.data());
  }
  if (cache) cache->keys = std::move(keys);
  return y;
}

std::vector<double> Decoder::backward(const ModelState& state, const Cache& cache,
                                      const Tensor& enc_outputs, const Tensor& dy, Tensor& d_enc,
                                      std::vector<double>& d_last_input, Gradients& grads) const {
  const std::size_t t_len = enc_outputs.rows();
  std::vector<Tensor> dkeys;
  for (std::size_t h = 0; h < attention_.heads(); ++h) {
    dkeys.emplace_back(Shape{t_len, hidden_});
  }
  std::vector<double> ds(hidden_, 0.0);        // dL/d(state after step t)
  std::vector<double> demb_next(emb_, 0.0);    // dL/d(embedded input of step t+1)
  std::vector<double> dout(out_size_);
  std::vector<double> dgx(3 * hidden_);
  std::vector<double> duh(3 * hidden_);
  std::vector<double> dcell_in(emb_ + enc_width_);
  std::vector<double> ds_prev(hidden_);
  for (std::size_t t = target_win_; t-- > 0;) {
    const StepCache& sc = cache.steps[t];
    for (std::size_t j = 0; j < out_size_; ++j) dout[j] = dy(t, j);
    if (t + 1 < target_win_) {
      feedback_embedding_->backward(state, sc.output.data(), demb_next.data(), 1, grads,
                                    dout.data());
    }
    output_.backward(state, sc.state.data(), dout.data(), 1, grads, ds.data());

    std::fill(dgx.begin(), dgx.end(), 0.0);
    std::fill(ds_prev.begin(), ds_prev.end(), 0.0);
    cell_.step_projected_backward(state, sc.cell, sc.state_prev.data(), ds.data(), dgx.data(),
                                  duh.data(), ds_prev.data());
    kernels::outer_acc(sc.state_prev.data(), duh.data(), grads[cell_.w_hidden].data(), hidden_,
                       3 * hidden_);
    kernels::outer_acc(sc.cell_input.data(), dgx.data(), grads[cell_.w_input].data(),
                       dcell_in.size(), 3 * hidden_);
    double* db = grads[cell_.bias].data();
    for (std::size_t j = 0; j < 3 * hidden_; ++j) db[j] += dgx[j];
    std::fill(dcell_in.begin(), dcell_in.end(), 0.0);
    kernels::gemv_col(state.value(cell_.w_input).data(), dgx.data(), dcell_in.data(),
                      dcell_in.size(), 3 * hidden_);

    attention_.attend_backward(state, sc.attention, enc_outputs, dcell_in.data() + emb_,
                               ds_prev.data(), dkeys, d_enc, grads);
    std::copy_n(dcell_in.begin(), emb_, demb_next.begin());
    ds = ds_prev;
  }
  attention_.finish_backward(state, enc_outputs, dkeys, d_enc, grads);
  d_last_input.assign(first_embedding_.in, 0.0);
  first_embedding_.backward(state, cache.last_input.data(), demb_next.data(), 1, grads,
                            d_last_input.data());
  return ds;
}

// ---------------------------------------------------------------------------
// Seq2Seq

Seq2Seq::Seq2Seq(ModelState& state, const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  std::size_t enc_in = cfg.input_channels;
  if (cfg.use_asl) {
    asl_.emplace(state, cfg.asl, cfg.feature_win, cfg.input_channels, "asl");
    enc_in = asl_->output_channels();
  }
  encoder_ = Encoder(state, cfg, enc_in);
  decoder_ = Decoder(state, cfg, encoder_.output_width());
}

Tensor Seq2Seq::forward(const ModelState& state, const Tensor& window, Mode mode, Rng& rng,
                        Cache* cache) const {
  if (window.rank() != 2 || window.rows() != cfg_.feature_win ||
      window.cols() != cfg_.input_channels) {
    throw DimensionError("seq2seq: expected window [" + std::to_string(cfg_.feature_win) + "x" +
                         std::to_string(cfg_.input_channels) + "], got " +
                         shape_string(window.shape()));
  }
  Tensor enc_in = asl_ ? asl_->forward(state, window, mode, rng, cache ? &cache->asl : nullptr)
                       : window;
  std::vector<double> dec_init;
  Tensor enc_out = encoder_.forward(state, enc_in, dec_init, cache ? &cache->encoder : nullptr);
  std::vector<double> last(window.row(window.rows() - 1),
                           window.row(window.rows() - 1) + window.cols());
  Tensor y = decoder_.forward(state, last, dec_init, enc_out, cache ? &cache->decoder : nullptr);
  if (cache) cache->encoder_input = std::move(enc_in);
  return y;
}

Tensor Seq2Seq::backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                         Gradients& grads) const {
  const Tensor& enc_out = cache.encoder.outputs;
  Tensor d_enc(enc_out.shape());
  std::vector<double> d_last;
  std::vector<double> d_init =
      decoder_.backward(state, cache.decoder, enc_out, dy, d_enc, d_last, grads);
  Tensor d_enc_in = encoder_.backward(state, cache.encoder, d_enc, d_init, grads);
  Tensor dx = asl_ ? asl_->backward(state, cache.asl, d_enc_in, grads) : std::move(d_enc_in);
  double* last_row = dx.row(dx.rows() - 1);
  for (std::size_t c = 0; c < d_last.size(); ++c) last_row[c] += d_last[c];
  return dx;
}

// ---------------------------------------------------------------------------
// Baselines

LinearBaseline::LinearBaseline(ModelState& state, const ModelConfig& cfg) : cfg_(cfg) {
  fc_ = Linear::create(state, "linear", cfg.feature_win * cfg.input_channels,
                       cfg.target_win * cfg.dec_output_size);
}

Tensor LinearBaseline::forward(const ModelState& state, const Tensor& window,
                               Cache* cache) const {
  if (window.size() != fc_.in) {
    throw DimensionError("linear baseline: window has " + std::to_string(window.size()) +
                         " values, expected " + std::to_string(fc_.in));
  }
  Tensor y({cfg_.target_win, cfg_.dec_output_size});
  fc_.forward(state, window.data(), 1, y.data());
  if (cache) cache->input = window;
  return y;
}

Tensor LinearBaseline::backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                                Gradients& grads) const {
  Tensor dx(cache.input.shape());
  fc_.backward(state, cache.input.data(), dy.data(), 1, grads, dx.data());
  return dx;
}

NLinearBaseline::NLinearBaseline(ModelState& state, const ModelConfig& cfg) : cfg_(cfg) {
  const std::size_t out = cfg.target_win * cfg.dec_output_size;
  fc_ = Linear::create(state, "nlinear.linear", cfg.feature_win * cfg.input_channels, out);
  shift_ = Linear::create(state, "nlinear.shift", cfg.input_channels, out, false);
}

Tensor NLinearBaseline::forward(const ModelState& state, const Tensor& window,
                                Cache* cache) const {
  if (window.size() != fc_.in) {
    throw DimensionError("nlinear baseline: window has " + std::to_string(window.size()) +
                         " values, expected " + std::to_string(fc_.in));
  }
  const std::size_t f = cfg_.input_channels;
  const double* last_row = window.row(window.rows() - 1);
  std::vector<double> last(last_row, last_row + f);
  Tensor centered = window;
  for (std::size_t t = 0; t < centered.rows(); ++t) {
    for (std::size_t c = 0; c < f; ++c) centered(t, c) -= last[c];
  }
  Tensor y({cfg_.target_win, cfg_.dec_output_size});
  fc_.forward(state, centered.data(), 1, y.data());
  std::vector<double> shifted(y.size());
  shift_.forward(state, last.data(), 1, shifted.data());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += shifted[i];
  if (cache) {
    cache->centered = std::move(centered);
    cache->last = std::move(last);
  }
  return y;
}

Tensor NLinearBaseline::backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                                 Gradients& grads) const {
  const std::size_t f = cfg_.input_channels;
  Tensor dx(cache.centered.shape());
  fc_.backward(state, cache.centered.data(), dy.data(), 1, grads, dx.data());
  std::vector<double> dlast(f, 0.0);
  shift_.backward(state, cache.last.data(), dy.data(), 1, grads, dlast.data());
  // centered = x - last: the last row also receives -Σ_t dcentered_t.
  for (std::size_t c = 0; c < f; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < dx.rows(); ++t) acc += dx(t, c);
    dx(dx.rows() - 1, c) += dlast[c] - acc;
  }
  return dx;
}

}  // namespace flapnet
