#ifndef MARL_NEURAL_HPP_
#define MARL_NEURAL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "marl/rng.hpp"

namespace marl::nn {

// Fully connected network: ReLU on every hidden layer, linear output.
struct MlpSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output

  void validate() const;
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

enum class InitScheme {
  kOrthogonalGainSqrt2,
  kOrthogonalGain001,
  kOrthogonalUnitGain,
  kXavierUniform,
};

struct InitPlan {
  InitScheme hidden = InitScheme::kOrthogonalGainSqrt2;
  InitScheme output = InitScheme::kOrthogonalGainSqrt2;
};

// Flat parameter storage. Layer l contributes its weight matrix (row-major,
// out x in) followed by its bias vector; layers are stored in order.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(MlpSpec spec);

  static ParamSet from_flat(MlpSpec spec, std::span<const double> values);

  const MlpSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> flat() const { return values_; }
  std::span<double> mutable_flat();

  std::span<const double> weights(int layer) const;
  std::span<const double> bias(int layer) const;
  std::span<double> mutable_weights(int layer);
  std::span<double> mutable_bias(int layer);

  std::size_t weight_offset(int layer) const { return weight_offset_[layer]; }
  std::size_t bias_offset(int layer) const { return bias_offset_[layer]; }

  // Incremented on every mutable access; lets backward() detect stale caches.
  std::uint64_t version() const { return version_; }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.spec_ == b.spec_ && a.values_ == b.values_;
  }

 private:
  MlpSpec spec_;
  std::vector<double> values_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::uint64_t version_ = 0;
};

ParamSet init_params(const MlpSpec& spec, InitScheme scheme, Rng& rng);
ParamSet init_params(const MlpSpec& spec, const InitPlan& plan, Rng& rng);

class StaleCache : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Activations recorded by forward(); reusable across calls to avoid
// reallocating per sample.
struct ForwardCache {
  const ParamSet* params = nullptr;
  std::uint64_t version = 0;
  std::vector<std::vector<double>> layer_inputs;  // input to layer l
  std::vector<std::vector<double>> pre_activations;

  std::span<const double> output() const { return pre_activations.back(); }
};

std::vector<double> forward(const ParamSet& params, std::span<const double> input);
std::span<const double> forward(const ParamSet& params, std::span<const double> input,
                                ForwardCache& cache);

// Accumulates d<output, output_grad>/d(params) into param_grad and, when
// input_grad is non-empty, writes d/d(input) into it.
void backward(const ParamSet& params, const ForwardCache& cache,
              std::span<const double> output_grad, std::span<double> param_grad,
              std::span<double> input_grad = {});

struct Gradients {
  std::vector<double> params;
  std::vector<double> input;
};
Gradients backward(const ParamSet& params, const ForwardCache& cache,
                   std::span<const double> output_grad);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}

  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;
};

// Bias-corrected Adam. Throws std::domain_error on non-finite gradients.
void adam_step(ParamSet& params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config = {});

double global_norm(std::span<const double> values);

// Rescales grads in place so that ||grads|| <= max_norm. Returns the norm
// before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

// Categorical distribution over logits (softmax with max subtraction).
namespace categorical {

struct Sample {
  int action = 0;
  double log_prob = 0.0;
};

void log_softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> probabilities(std::span<const double> logits);
double log_prob(std::span<const double> logits, int action);
double entropy(std::span<const double> logits);
Sample sample(std::span<const double> logits, Rng& rng);

// d log p(action) / d logits = onehot(action) - p
void log_prob_grad(std::span<const double> logits, int action, std::span<double> out);
// d H / d logits_j = -p_j (log p_j + H)
void entropy_grad(std::span<const double> logits, std::span<double> out);

}  // namespace categorical

// Versioned little-endian checkpoint: magic, format version, layer sizes,
// parameter count, then the flat parameter vector as float64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParamSet& params);
ParamSet read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace marl::nn

#endif  // MARL_NEURAL_HPP_
