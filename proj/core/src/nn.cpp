#include "dag/nn.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstdio>
#include <mutex>

#include "dag/errors.hpp"

namespace dag {

AttentionResult scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                             const torch::Tensor& v) {
  if (q.dim() != 2 || k.dim() != 2 || v.dim() != 2) {
    fail(ErrorKind::Structural, "attention expects 2-D query, key and value matrices");
  }
  if (q.size(1) != k.size(1)) {
    fail(ErrorKind::Structural, "query width " + std::to_string(q.size(1)) + " differs from key width " +
                                    std::to_string(k.size(1)));
  }
  if (k.size(0) != v.size(0)) fail(ErrorKind::Structural, "key and value counts differ");
  if (k.size(0) < 1) fail(ErrorKind::Structural, "attention needs at least one key");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(1)));
  auto weights = torch::softmax(torch::matmul(q, k.t()) * scale, -1);
  return {torch::matmul(weights, v), weights};
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(const AttentionOptions& options) : options_(options) {
  if (options.model_dim % options.heads != 0) {
    fail(ErrorKind::Structural, "attention width must be divisible by the head count");
  }
  q_proj = register_module("q_proj", torch::nn::Linear(options.query_dim, options.model_dim));
  k_proj = register_module("k_proj", torch::nn::Linear(options.context_dim, options.model_dim));
  v_proj = register_module("v_proj", torch::nn::Linear(options.context_dim, options.model_dim));
  o_proj = register_module("o_proj", torch::nn::Linear(options.model_dim, options.query_dim));
  if (options.zero_output) zero_(o_proj);
}

AttentionResult MultiHeadAttentionImpl::forward(const torch::Tensor& query,
                                                const torch::Tensor& context) {
  if (context.size(0) < 1) fail(ErrorKind::Structural, "attention needs at least one key");
  const int64_t h = options_.heads;
  const int64_t dh = options_.model_dim / h;
  // n x (h*dh) -> h x n x dh
  auto split = [&](const torch::Tensor& x) { return x.view({x.size(0), h, dh}).transpose(0, 1); };
  const auto q = split(q_proj(query));
  const auto k = split(k_proj(context));
  const auto v = split(v_proj(context));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto weights = torch::softmax(torch::matmul(q, k.transpose(1, 2)) * scale, -1);
  auto mixed = torch::matmul(weights, v).transpose(0, 1).reshape({query.size(0), options_.model_dim});
  return {o_proj(mixed), weights};
}

FeedForwardImpl::FeedForwardImpl(int64_t dim, int64_t hidden, bool zero_output) {
  fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
  if (zero_output) zero_(fc2);
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
  return fc2(torch::gelu(fc1(x)));
}

MlpImpl::MlpImpl(std::vector<int64_t> widths, bool activate_last)
    : widths_(std::move(widths)), activate_last_(activate_last) {
  if (widths_.size() < 2) fail(ErrorKind::Structural, "perceptron needs at least two widths");
  for (size_t i = 0; i + 1 < widths_.size(); ++i) {
    layers_.push_back(
        register_module("fc" + std::to_string(i), torch::nn::Linear(widths_[i], widths_[i + 1])));
  }
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](x);
    if (i + 1 < layers_.size() || activate_last_) x = torch::relu(x);
  }
  return x;
}

torch::Tensor positional_encoding_2d(int64_t h, int64_t w, int64_t dim, torch::TensorOptions options) {
  if (dim % 4 != 0) fail(ErrorKind::Structural, "2-D positional encoding width must be divisible by 4");
  const int64_t quarter = dim / 4;
  auto opts = options.dtype(torch::kDouble);
  auto freq = torch::exp(torch::arange(quarter, opts) * (-std::log(10000.0) / quarter));
  auto ys = torch::arange(h, opts).unsqueeze(1) * freq.unsqueeze(0);  // h x q
  auto xs = torch::arange(w, opts).unsqueeze(1) * freq.unsqueeze(0);  // w x q
  auto row = torch::cat({torch::sin(ys), torch::cos(ys)}, 1).unsqueeze(1).expand({h, w, 2 * quarter});
  auto col = torch::cat({torch::sin(xs), torch::cos(xs)}, 1).unsqueeze(0).expand({h, w, 2 * quarter});
  auto pe = torch::cat({row, col}, 2).reshape({h * w, dim});
  return pe.to(options.dtype());
}

void zero_(torch::nn::Linear& layer) {
  torch::NoGradGuard guard;
  layer->weight.zero_();
  if (layer->bias.defined()) layer->bias.zero_();
}

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
}

int64_t count_trainable(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) {
    if (p.requires_grad()) n += p.numel();
  }
  return n;
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&](const torch::Tensor& t) {
    const auto c = t.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const size_t n = static_cast<size_t>(c.numel()) * c.element_size();
    for (size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : module.named_parameters(/*recurse=*/true)) mix(p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) mix(b.value());
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

ScopedSeed::ScopedSeed(std::uint64_t seed) {
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  saved_state_ = gen.get_state();
  gen.set_current_seed(seed);
}

ScopedSeed::~ScopedSeed() {
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(saved_state_);
}

}  // namespace dag
