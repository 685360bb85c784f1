#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dag {

struct AttentionResult {
  torch::Tensor output;   // n_q x d_v
  torch::Tensor weights;  // n_q x n_k (single head) or heads x n_q x n_k
};

/// softmax(Q K^T / sqrt(d)) V for Q: n_q x d, K: n_k x d, V: n_k x d_v.
AttentionResult scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                             const torch::Tensor& v);

struct AttentionOptions {
  int64_t query_dim = 0;
  int64_t context_dim = 0;
  int64_t model_dim = 0;
  int64_t heads = 1;
  bool zero_output = false;  // zero-initialise the output projection
};

// Multi-head attention with learned projections; query and context may have
// different widths. weights are heads x n_q x n_k.
class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  explicit MultiHeadAttentionImpl(const AttentionOptions& options);

  AttentionResult forward(const torch::Tensor& query, const torch::Tensor& context);

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, o_proj{nullptr};

 private:
  AttentionOptions options_;
};
TORCH_MODULE(MultiHeadAttention);

// Linear -> GELU -> Linear.
class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int64_t dim, int64_t hidden, bool zero_output = false);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeedForward);

// Shared per-row perceptron: Linear/ReLU stack over `widths` (input first).
// The final layer is linear unless `activate_last`.
class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(std::vector<int64_t> widths, bool activate_last);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear last() const { return layers_.back(); }
  int64_t out_features() const { return widths_.back(); }

 private:
  std::vector<int64_t> widths_;
  std::vector<torch::nn::Linear> layers_;
  bool activate_last_;
};
TORCH_MODULE(Mlp);

/// 2-D sinusoidal encoding, (h*w) x dim in row-major grid order. Half the
/// channels encode the row, half the column; dim must be divisible by 4.
torch::Tensor positional_encoding_2d(int64_t h, int64_t w, int64_t dim,
                                     torch::TensorOptions options = {});

void zero_(torch::nn::Linear& layer);

/// Marks every parameter of `module` as excluded from optimisation.
void freeze(torch::nn::Module& module);

int64_t count_trainable(const torch::nn::Module& module);

/// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

std::string hex64(std::uint64_t value);

// Seeds torch's global CPU generator for the lifetime of the scope and
// restores the previous state afterwards. Module construction under a scope
// gives seed-determined initial parameters.
class ScopedSeed {
 public:
  explicit ScopedSeed(std::uint64_t seed);
  ~ScopedSeed();
  ScopedSeed(const ScopedSeed&) = delete;
  ScopedSeed& operator=(const ScopedSeed&) = delete;

 private:
  torch::Tensor saved_state_;
};

}  // namespace dag
