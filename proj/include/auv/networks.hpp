#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "auv/checkpoint.hpp"
#include "auv/ops.hpp"
#include "auv/rng.hpp"
#include "auv/tape.hpp"

namespace auv {

inline constexpr double kLeakySlope = 0.02;

// Fully connected stack: `depth` hidden layers of `hidden` units with leaky
// rectifiers, then a linear output layer. With cond > 0 the first layer also
// takes a conditioning row vector, applied as x*Wx + (c*Wc + b) so the
// per-shape code is not replicated per point.
struct MlpSpec {
  int in = 0;
  int cond = 0;
  int hidden = 64;
  int depth = 2;
  int out = 1;
};

template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const MlpSpec& spec, Rng& rng);

  // x: [N, in]; cond: [1, cond] (required iff spec.cond > 0).
  Var<T> forward(Tape<T>& tape, const Var<T>& x, const Var<T>* cond = nullptr);

  const MlpSpec& spec() const { return spec_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

 private:
  MlpSpec spec_;
  // weight/bias pairs per layer; the first layer has an extra cond weight
  // stored right after its bias when spec.cond > 0.
  std::vector<Parameter<T>> params_;
};

enum class EncoderKind { Conv2d, Conv3d, Linear };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind k);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::Conv3d;
  int in_channels = 4;
  int resolution = 64;
  int base_channels = 16;
  int code_dim = 256;
  int coeff_count = 0;  // total number of coefficients over all generators
};

// Four stride-2 convolution stages (k=4, pad 1, channels c,2c,4c,8c) followed
// by linear code and coefficient heads. The Linear kind maps the flattened
// input straight to both heads.
template <class T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::string& name, const EncoderSpec& spec, Rng& rng);

  struct Output {
    Var<T> code;    // [1, code_dim]
    Var<T> coeffs;  // [1, coeff_count]
  };
  // Input: [Cin,R,R] (2D), [Cin,R,R,R] (3D), or any tensor of Cin*R*R values
  // (linear). Throws ShapeError on a resolution mismatch.
  Output forward(Tape<T>& tape, const Tensor<T>& input);

  const EncoderSpec& spec() const { return spec_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

 private:
  EncoderSpec spec_;
  std::vector<Parameter<T>> params_;
  int feature_count_ = 0;
};

struct GeneratorSpec {
  int channels = 64;  // N_k basis images
  int width = 1024;   // hidden layer size G_dim
  // > 0: the basis images are a grid x grid texel table sampled bilinearly
  // instead of a coordinate network (the linear restriction).
  int grid = 0;
  bool operator==(const GeneratorSpec&) const = default;
};

// Maps uv [N,2] to N_k basis values [N,N_k].
template <class T>
class BasisGenerator {
 public:
  BasisGenerator() = default;
  BasisGenerator(const std::string& name, const GeneratorSpec& spec, int depth, Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& uv);
  int channels() const { return spec_.channels; }
  std::vector<Parameter<T>>& params() { return spec_.grid > 0 ? table_ : mlp_.params(); }

 private:
  GeneratorSpec spec_;
  Mlp<T> mlp_;
  std::vector<Parameter<T>> table_;
};

struct ModelConfig {
  std::string category = "head";
  int point_dim = 3;  // 2 for the image toy
  int out_channels = 9;
  int code_dim = 256;
  std::vector<GeneratorSpec> generators = {{64, 1024}, {16, 128}};
  int basis_depth = 8;
  int uv_width = 512;
  int uv_depth = 5;
  int mask_width = 512;
  int mask_depth = 5;
  std::string encoder = "conv3d";
  int encoder_channels = 16;
  int input_channels = 4;
  int input_resolution = 64;
  bool identity_uv = false;
  std::uint64_t seed = 0;

  int generator_count() const { return static_cast<int>(generators.size()); }
  bool four_way_mask() const { return generators.size() == 4; }
  // Throws ConfigError describing the first problem found.
  void validate() const;
  std::string to_json() const;
  // Unknown keys are rejected.
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// Per-point network outputs for one shape.
template <class T>
struct ModelOutput {
  Var<T> code;
  std::vector<Var<T>> coefficients;  // [C, N_k] per generator
  Var<T> uv;                         // [N, 2]
  std::vector<Var<T>> masks;         // [N, 1] per generator, summing to 1
  std::vector<Var<T>> generator_outputs;  // [N, C]
  Var<T> prediction;                      // [N, C]
  Var<T> normal_pred;                     // [N, 3], four-way masker only
};

// Encoder -> (code, coefficients); shared UV mapper; masker; K basis generators.
template <class T>
class AuvModel {
 public:
  explicit AuvModel(const ModelConfig& config);
  AuvModel(const AuvModel&) = delete;
  AuvModel& operator=(const AuvModel&) = delete;

  const ModelConfig& config() const { return config_; }

  typename Encoder<T>::Output encode(Tape<T>& tape, const Tensor<T>& input);
  // Coefficient matrices [C, N_k] sliced out of the encoder's flat output.
  std::vector<Var<T>> split_coefficients(const Var<T>& flat);
  Var<T> map_uv(Tape<T>& tape, const Var<T>& points, const Var<T>& code);
  // Two-way: {m, 1-m}. Four-way: chair composition (normal_pred is set).
  std::vector<Var<T>> masks(Tape<T>& tape, const Var<T>& points, const Tensor<T>& normals, const Var<T>& code,
                            Var<T>* normal_pred = nullptr);
  Var<T> basis(Tape<T>& tape, int k, const Var<T>& uv);

  // points: [N, point_dim]; normals: [N, 3] (ignored when K == 1).
  ModelOutput<T> forward(Tape<T>& tape, const Tensor<T>& encoder_input, const Tensor<T>& points,
                         const Tensor<T>& normals);

  // Tape-free evaluation in chunks, for baking and rendering.
  Tensor<T> eval_basis(int k, const Tensor<T>& uv, int chunk = 4096);

  Mlp<T>& uv_mapper() { return uv_mapper_; }
  Mlp<T>& masker() { return masker_; }
  BasisGenerator<T>& generator(int k) { return generators_.at(static_cast<std::size_t>(k)); }
  Encoder<T>& encoder() { return encoder_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<Parameter<T>*> basis_parameters();
  void set_basis_frozen(bool frozen);
  std::size_t parameter_count();

  // Stable hash (FNV-1a) over the raw bytes of the basis-generator weights.
  std::uint64_t basis_hash();

  Checkpoint to_checkpoint();
  // Loads weights into a model built from the embedded config; shapes are
  // checked against the config.
  static std::unique_ptr<AuvModel> from_checkpoint(const Checkpoint& ck);
  void load_weights(const Checkpoint& ck);

 private:
  ModelConfig config_;
  Encoder<T> encoder_;
  Mlp<T> uv_mapper_;
  Mlp<T> masker_;
  std::vector<BasisGenerator<T>> generators_;
};

// basis: [N, N_k], coeffs: [C, N_k] -> [N, C].
template <class T>
Var<T> combine_basis(const Var<T>& basis, const Var<T>& coeffs);
// Sum_k masks[k] * outputs[k]; masks are [N,1], outputs [N,C].
template <class T>
Var<T> blend_masked(const std::vector<Var<T>>& outputs, const std::vector<Var<T>>& masks);
// Four masks (a, b, c, d) = outer([m^n, 1-m^n], [m_pred, 1-m_pred]) with
// m^n = sigmoid(n_pred . n_gt); a = m^n*m_pred, b = (1-m^n)*m_pred,
// c = m^n*(1-m_pred), d = (1-m^n)*(1-m_pred).
template <class T>
std::vector<Var<T>> chair_mask_compose(const Var<T>& m_pred, const Var<T>& n_pred, const Var<T>& n_gt);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace auv
