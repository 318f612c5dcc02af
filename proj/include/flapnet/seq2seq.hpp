// SPDX-License-Identifier: Apache-2.0
//
// GRU encoder, additive FC attention, GRU decoder and their assembly into
// the force-window -> kinematics Seq2Seq network (optionally fronted by the
// Adaptive Spectrum Layer). Linear and NLinear baselines live here too.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flapnet/asl.hpp"
#include "flapnet/gru.hpp"
#include "flapnet/layers.hpp"

namespace flapnet {

enum class ModelKind { kSeq2Seq, kLinear, kNLinear };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::kSeq2Seq;
  std::size_t input_channels = 4;   // M_F
  std::size_t feature_win = 512;
  std::size_t target_win = 1;
  std::size_t enc_embedding_size = 10;
  std::size_t enc_hidden_size = 110;
  std::size_t enc_num_layers = 1;
  bool enc_bidirectional = false;
  std::size_t dec_embedding_size = 10;
  std::size_t dec_hidden_size = 110;
  std::size_t dec_output_size = 3;  // M_K
  std::size_t attn_heads = 1;
  bool use_asl = true;
  AslConfig asl;

  // Best configuration for the 4-sensor, 5 kHz measured dataset.
  static ModelConfig measured_defaults();
  // Best configuration for the 5-channel, 25 Hz open-source dataset.
  static ModelConfig open_source_defaults();

  void validate() const;
};

class Attention {
 public:
  struct Keys {
    std::vector<Tensor> projected;  // per head [T × A]
  };
  struct Step {
    std::vector<double> query;
    std::vector<Tensor> energy;               // per head [T × A], tanh output
    std::vector<std::vector<double>> weights;  // per head [T]
  };

  Attention() = default;
  Attention(ModelState& state, const std::string& name, std::size_t query_dim,
            std::size_t key_dim, std::size_t attn_dim, std::size_t heads);

  Keys precompute(const ModelState& state, const Tensor& keys) const;
  // context = mean over heads of Σ_t softmax(v·tanh(W_q q + W_k k_t + b))_t k_t
  std::vector<double> attend(const ModelState& state, const Keys& keys, const Tensor& values,
                             const double* query, Step* cache) const;
  // Accumulates into dquery, dkeys (per head [T × A]) and dvalues [T × E].
  void attend_backward(const ModelState& state, const Step& cache, const Tensor& values,
                       const double* dcontext, double* dquery, std::vector<Tensor>& dkeys,
                       Tensor& dvalues, Gradients& grads) const;
  // Pushes the accumulated key-projection gradients into W_k and dvalues.
  void finish_backward(const ModelState& state, const Tensor& values,
                       const std::vector<Tensor>& dkeys, Tensor& dvalues, Gradients& grads) const;

  std::size_t heads() const { return heads_.size(); }
  std::size_t param_count() const;

 private:
  struct Head {
    ParamId weight = 0;  // [(query_dim + key_dim) × A]; query rows first
    ParamId bias = 0;    // [A]
    ParamId score = 0;   // [A × 1]
  };
  std::size_t query_dim_ = 0;
  std::size_t key_dim_ = 0;
  std::size_t attn_dim_ = 0;
  std::vector<Head> heads_;
};

class Encoder {
 public:
  struct Cache {
    Tensor input;
    Tensor embedded;
    std::vector<GruSequence::Cache> forward_layers;
    std::vector<GruSequence::Cache> backward_layers;
    Tensor outputs;
    Tensor final_state;
  };

  Encoder() = default;
  Encoder(ModelState& state, const ModelConfig& cfg, std::size_t input_width);

  // Returns per-step outputs [T × D·H]; dec_init receives the bridge output.
  Tensor forward(const ModelState& state, const Tensor& x, std::vector<double>& dec_init,
                 Cache* cache) const;
  Tensor backward(const ModelState& state, const Cache& cache, const Tensor& d_outputs,
                  const std::vector<double>& d_dec_init, Gradients& grads) const;

  std::size_t output_width() const { return directions() * hidden_; }
  std::size_t directions() const { return bidirectional_ ? 2 : 1; }

 private:
  std::size_t hidden_ = 0;
  bool bidirectional_ = false;
  Linear embedding_;
  std::vector<GruCell> forward_cells_;
  std::vector<GruCell> backward_cells_;
  Linear bridge_;
};

class Decoder {
 public:
  struct StepCache {
    std::vector<double> embedded;
    std::vector<double> context;
    std::vector<double> cell_input;   // [embedded ‖ context]
    std::vector<double> state_prev;
    std::vector<double> state;
    std::vector<double> output;
    GruCell::Step cell;
    Attention::Step attention;
  };
  struct Cache {
    std::vector<double> last_input;
    Attention::Keys keys;
    std::vector<StepCache> steps;
  };

  Decoder() = default;
  Decoder(ModelState& state, const ModelConfig& cfg, std::size_t enc_width);

  // Returns [target_win × M_K].
  Tensor forward(const ModelState& state, const std::vector<double>& last_input,
                 const std::vector<double>& dec_init, const Tensor& enc_outputs,
                 Cache* cache) const;
  // Accumulates dL/d(enc_outputs) into d_enc, returns dL/d(dec_init) and
  // writes dL/d(last_input) into d_last_input.
  std::vector<double> backward(const ModelState& state, const Cache& cache,
                               const Tensor& enc_outputs, const Tensor& dy, Tensor& d_enc,
                               std::vector<double>& d_last_input, Gradients& grads) const;

  const Attention& attention() const { return attention_; }

 private:
  std::size_t target_win_ = 1;
  std::size_t out_size_ = 3;
  std::size_t emb_ = 0;
  std::size_t hidden_ = 0;
  std::size_t enc_width_ = 0;
  Linear first_embedding_;
  std::optional<Linear> feedback_embedding_;
  GruCell cell_;
  Linear output_;
  Attention attention_;
};

class Seq2Seq {
 public:
  struct Cache {
    AdaptiveSpectrumLayer::Cache asl;
    Tensor encoder_input;
    Encoder::Cache encoder;
    Decoder::Cache decoder;
  };

  Seq2Seq() = default;
  Seq2Seq(ModelState& state, const ModelConfig& cfg);

  Tensor forward(const ModelState& state, const Tensor& window, Mode mode, Rng& rng,
                 Cache* cache) const;
  Tensor backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;

  bool has_asl() const { return asl_.has_value(); }
  const AdaptiveSpectrumLayer& asl() const { return *asl_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  std::optional<AdaptiveSpectrumLayer> asl_;
  Encoder encoder_;
  Decoder decoder_;
};

// Flattened window -> single FC -> [target_win × M_K].
class LinearBaseline {
 public:
  struct Cache {
    Tensor input;
  };
  LinearBaseline() = default;
  LinearBaseline(ModelState& state, const ModelConfig& cfg);
  Tensor forward(const ModelState& state, const Tensor& window, Cache* cache) const;
  Tensor backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;

 private:
  ModelConfig cfg_;
  Linear fc_;
};

// Subtract the last time step, apply the linear map, add a learned
// projection of the last step.
class NLinearBaseline {
 public:
  struct Cache {
    Tensor centered;
    std::vector<double> last;
  };
  NLinearBaseline() = default;
  NLinearBaseline(ModelState& state, const ModelConfig& cfg);
  Tensor forward(const ModelState& state, const Tensor& window, Cache* cache) const;
  Tensor backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;

 private:
  ModelConfig cfg_;
  Linear fc_;
  Linear shift_;
};

}  // namespace flapnet
