#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ttn/tensor.hpp"

namespace ttn::nn {

enum class LayerKind { Conv2d, Relu, MaxPool2d, Dense, Flatten };

std::string_view kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::size_t out = 0;     // conv2d: output channels, dense: output units
  std::size_t kernel = 0;  // conv2d: kernel side, maxpool2d: window side
  std::size_t stride = 1;
  std::size_t pad = 0;

  static LayerSpec conv2d(std::string name, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                          std::size_t pad = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool2d(std::string name, std::size_t window, std::size_t stride);
  static LayerSpec dense(std::string name, std::size_t out);
  static LayerSpec flatten(std::string name);

  bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Dense; }
  bool operator==(const LayerSpec&) const = default;
};

// A feed-forward stack over per-sample inputs of shape `input` (C, H, W).
struct NetSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  // Per-sample output shape of every layer. Throws ShapeMismatch when
  // consecutive layers are incompatible.
  std::vector<Shape> output_shapes() const;
  std::size_t output_dim() const;
  // Layer index by name; also accepts "input".
  std::optional<std::size_t> find(std::string_view name) const;

  nlohmann::json to_json() const;
  static NetSpec from_json(const nlohmann::json& j);
  bool operator==(const NetSpec&) const = default;
};

// conv(16,3x3,p1) relu pool(2) conv(32,3x3,p1) relu pool(2) flatten
// dense(128) relu dense(k). "pool2" is the pool5 analog and "fc7" the fc7 analog.
NetSpec tiny_topic_net(std::size_t k, std::size_t side = 32, std::size_t channels = 3);

// Maps CaffeNet-style names onto the small reference net ("pool5" -> "pool2").
std::string resolve_layer_alias(const NetSpec& spec, std::string_view name);

struct ParamBlock {
  Tensor weight;
  Tensor bias;
  bool operator==(const ParamBlock&) const = default;
};

// One block per layer; empty tensors for parameter-free layers.
struct NetParams {
  std::vector<ParamBlock> layers;
  std::vector<ParamBlock> velocity;
  bool operator==(const NetParams&) const = default;
};

struct Gradients {
  std::vector<ParamBlock> layers;
  Tensor input;  // filled only when requested
};

// He-style uniform weights (std = sqrt(2 / fan_in)), zero biases, zero velocity.
// Layer i draws from its own stream derived from (seed, i).
NetParams init_params(const NetSpec& spec, std::uint64_t seed);
ParamBlock init_layer(const NetSpec& spec, std::size_t layer, std::uint64_t seed);

struct ForwardCache {
  std::vector<Tensor> activations;  // [0] = input batch, [i+1] = output of layer i
  std::vector<std::vector<std::uint32_t>> pool_argmax;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

// Worker count from TTN_THREADS (default 1).
std::size_t default_threads();

// batch: (B, C, H, W). logits: (B, output_dim). Samples may be processed in
// parallel; every output slice is written by exactly one worker.
ForwardResult forward(const NetSpec& spec, const NetParams& params, const Tensor& batch,
                      std::size_t threads = 1);

// Reverse-mode gradients. Per-sample contributions are summed in sample order
// so the result does not depend on `threads`.
Gradients backward(const NetSpec& spec, const NetParams& params, const ForwardCache& cache, const Tensor& grad_logits,
                   bool want_input_grad = false, std::size_t threads = 1);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

double sigmoid(double x);

// mean_b sum_k [max(x,0) - x t + log(1 + exp(-|x|))]; grad = (sigmoid(x) - t) / B.
LossResult sigmoid_cross_entropy(const Tensor& logits, const Tensor& targets);
// mean_b -log softmax(x_b)[label_b]; grad = (softmax - onehot) / B.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

struct SgdConfig {
  double base_lr = 0.001;
  double lr_decay_factor = 0.1;
  std::size_t lr_step = 50000;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t max_iters = 120000;

  // Topic-regression pretraining schedule.
  static SgdConfig pretrain();
  // Fine-tuning schedule: lr 1e-4, x0.1 every 30,000.
  static SgdConfig finetune();

  void validate() const;
  nlohmann::json to_json() const;
  static SgdConfig from_json(const nlohmann::json& j);
  bool operator==(const SgdConfig&) const = default;
};

// base_lr * decay^floor(iter / lr_step), applied as repeated multiplication.
double learning_rate(const SgdConfig& cfg, std::size_t iter);

// v <- momentum v - lr(iter) g;  w <- w + v.
void sgd_step(NetParams& params, const Gradients& grads, const SgdConfig& cfg, std::size_t iter);

// Weights file: "TTNNET1\0", JSON header (spec plus `extra` fields), then
// little-endian float64 payloads: weight and bias of each parametrized layer
// in declaration order, followed by the velocity buffers in the same order.
std::string serialize_weights(const NetSpec& spec, const NetParams& params, const nlohmann::json& extra = {});

struct WeightsFile {
  NetSpec spec;
  NetParams params;
  nlohmann::json header;
};

WeightsFile deserialize_weights(std::string_view bytes);

}  // namespace ttn::nn
