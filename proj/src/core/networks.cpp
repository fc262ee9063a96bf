#include "auv/networks.hpp"

#include <cmath>
#include <json.hpp>

#include "auv/errors.hpp"

namespace auv {
namespace {

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

double hidden_bound(int fan_in) { return std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in)); }
double output_bound(int fan_in) { return std::sqrt(3.0 / fan_in); }

int pow_int(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- Mlp

template <class T>
Mlp<T>::Mlp(const std::string& name, const MlpSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.in < 1 || spec.out < 1 || spec.depth < 0 || spec.cond < 0 || (spec.depth > 0 && spec.hidden < 1)) {
    throw ConfigError("mlp '" + name + "': invalid layer sizes");
  }
  const int layers = spec.depth + 1;
  params_.reserve(static_cast<std::size_t>(2 * layers + 1));
  for (int l = 0; l < layers; ++l) {
    const int fan_in = l == 0 ? spec.in : spec.hidden;
    const int fan_out = l == layers - 1 ? spec.out : spec.hidden;
    const int total_in = l == 0 ? spec.in + spec.cond : fan_in;
    const double bound = l == layers - 1 ? output_bound(total_in) : hidden_bound(total_in);
    const std::string p = name + ".l" + std::to_string(l);
    params_.emplace_back(p + ".weight", uniform_tensor<T>({fan_in, fan_out}, bound, rng));
    params_.emplace_back(p + ".bias", Tensor<T>({fan_out}));
    if (l == 0 && spec.cond > 0) params_.emplace_back(p + ".cond", uniform_tensor<T>({spec.cond, fan_out}, bound, rng));
  }
}

template <class T>
Var<T> Mlp<T>::forward(Tape<T>& tape, const Var<T>& x, const Var<T>* cond) {
  if (params_.empty()) throw Error(ErrorKind::InvalidArgument, "mlp: forward on an empty network");
  if (x.value().rank() != 2 || x.dim(1) != spec_.in) {
    throw ShapeError("mlp: expected input [N," + std::to_string(spec_.in) + "], got " + shape_str(x.shape()));
  }
  if ((spec_.cond > 0) != (cond != nullptr)) throw ShapeError("mlp: conditioning input mismatch");
  const int layers = spec_.depth + 1;
  std::size_t pi = 0;
  Var<T> h = x;
  for (int l = 0; l < layers; ++l) {
    Var<T> w = tape.param(params_[pi++]);
    Var<T> b = tape.param(params_[pi++]);
    h = ops::matmul(h, w);
    if (l == 0 && spec_.cond > 0) {
      if (cond->value().rank() != 2 || cond->dim(0) != 1 || cond->dim(1) != spec_.cond) {
        throw ShapeError("mlp: expected conditioning [1," + std::to_string(spec_.cond) + "], got " +
                         shape_str(cond->shape()));
      }
      Var<T> wc = tape.param(params_[pi++]);
      h = ops::add_row(h, ops::add_row(ops::matmul(*cond, wc), b));
    } else {
      h = ops::add_row(h, b);
    }
    if (l < layers - 1) h = ops::leaky_relu(h, static_cast<T>(kLeakySlope));
  }
  return h;
}

// ---------------------------------------------------------------- basis

template <class T>
BasisGenerator<T>::BasisGenerator(const std::string& name, const GeneratorSpec& spec, int depth, Rng& rng)
    : spec_(spec) {
  if (spec.grid > 0) {
    table_.emplace_back(name + ".table", uniform_tensor<T>({spec.grid * spec.grid, spec.channels}, 0.1, rng));
  } else {
    mlp_ = Mlp<T>(name, MlpSpec{2, 0, spec.width, depth, spec.channels}, rng);
  }
}

template <class T>
Var<T> BasisGenerator<T>::forward(Tape<T>& tape, const Var<T>& uv) {
  if (spec_.grid > 0) return ops::grid_sample(tape.param(table_[0]), uv, spec_.grid);
  return mlp_.forward(tape, uv);
}

// ---------------------------------------------------------------- Encoder

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "conv2d") return EncoderKind::Conv2d;
  if (s == "conv3d") return EncoderKind::Conv3d;
  if (s == "linear") return EncoderKind::Linear;
  throw ConfigError("unknown encoder kind '" + s + "' (expected conv2d, conv3d or linear)");
}

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::Conv2d: return "conv2d";
    case EncoderKind::Conv3d: return "conv3d";
    case EncoderKind::Linear: return "linear";
  }
  return "?";
}

template <class T>
Encoder<T>::Encoder(const std::string& name, const EncoderSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.in_channels < 1 || spec.resolution < 1 || spec.code_dim < 1 || spec.coeff_count < 1) {
    throw ConfigError("encoder: invalid sizes");
  }
  if (spec.kind == EncoderKind::Linear) {
    feature_count_ = spec.in_channels * spec.resolution * spec.resolution;
  } else {
    if (spec.resolution % 16 != 0) throw ConfigError("encoder: resolution must be a multiple of 16");
    if (spec.base_channels < 1) throw ConfigError("encoder: base_channels must be >= 1");
    const int dims = spec.kind == EncoderKind::Conv2d ? 2 : 3;
    const int kvol = pow_int(4, dims);
    int cin = spec.in_channels;
    for (int s = 0; s < 4; ++s) {
      const int cout = spec.base_channels << s;
      Shape ws{cout, cin, 4, 4};
      if (dims == 3) ws.push_back(4);
      const std::string p = name + ".conv" + std::to_string(s);
      params_.emplace_back(p + ".weight", uniform_tensor<T>(ws, hidden_bound(cin * kvol), rng));
      params_.emplace_back(p + ".bias", Tensor<T>({cout}));
      cin = cout;
    }
    feature_count_ = cin * pow_int(spec.resolution / 16, dims);
  }
  const double bound = output_bound(feature_count_);
  params_.emplace_back(name + ".code.weight", uniform_tensor<T>({feature_count_, spec.code_dim}, bound, rng));
  params_.emplace_back(name + ".code.bias", Tensor<T>({spec.code_dim}));
  params_.emplace_back(name + ".coeff.weight", uniform_tensor<T>({feature_count_, spec.coeff_count}, bound, rng));
  params_.emplace_back(name + ".coeff.bias", Tensor<T>({spec.coeff_count}));
}

template <class T>
typename Encoder<T>::Output Encoder<T>::forward(Tape<T>& tape, const Tensor<T>& input) {
  const int R = spec_.resolution, C = spec_.in_channels;
  Var<T> feat;
  std::size_t pi = 0;
  if (spec_.kind == EncoderKind::Linear) {
    if (input.size() != static_cast<std::size_t>(C) * R * R) {
      throw ShapeError("encoder: expected " + std::to_string(C * R * R) + " input values, got " +
                       shape_str(input.shape()));
    }
    feat = tape.constant(input.reshaped({1, C * R * R}));
  } else {
    const bool is3d = spec_.kind == EncoderKind::Conv3d;
    const Shape expect = is3d ? Shape{C, R, R, R} : Shape{C, R, R};
    if (input.shape() != expect) {
      throw ShapeError("encoder: expected input " + shape_str(expect) + ", got " + shape_str(input.shape()));
    }
    Var<T> h = tape.constant(input);
    for (int s = 0; s < 4; ++s) {
      Var<T> w = tape.param(params_[pi++]);
      Var<T> b = tape.param(params_[pi++]);
      h = is3d ? ops::conv3d(h, w, b, 2, 1) : ops::conv2d(h, w, b, 2, 1);
      h = ops::leaky_relu(h, static_cast<T>(kLeakySlope));
    }
    feat = ops::reshape(h, {1, feature_count_});
  }
  Output out;
  Var<T> wz = tape.param(params_[pi++]);
  Var<T> bz = tape.param(params_[pi++]);
  Var<T> wc = tape.param(params_[pi++]);
  Var<T> bc = tape.param(params_[pi++]);
  out.code = ops::add_row(ops::matmul(feat, wz), bz);
  out.coeffs = ops::add_row(ops::matmul(feat, wc), bc);
  return out;
}

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (point_dim != 2 && point_dim != 3) fail("point_dim must be 2 or 3");
  if (out_channels < 1) fail("out_channels must be >= 1");
  if (code_dim < 1) fail("code_dim must be >= 1");
  const std::size_t K = generators.size();
  if (K != 1 && K != 2 && K != 4) fail("number of generators must be 1, 2 or 4");
  if (K > 1 && point_dim != 3) fail("multiple generators need 3D points with normals");
  for (const GeneratorSpec& g : generators)
    if (g.channels < 1 || g.width < 1 || g.grid < 0) fail("generator channels and width must be >= 1, grid >= 0");
  if (basis_depth < 1) fail("basis_depth must be >= 1");
  if (uv_depth < 0 || mask_depth < 0 || uv_width < 1 || mask_width < 1) fail("invalid uv/mask network sizes");
  const EncoderKind kind = encoder_kind_from_string(encoder);
  if (input_channels < 1 || input_resolution < 1) fail("invalid encoder input size");
  if (kind != EncoderKind::Linear && (input_resolution % 16 != 0 || encoder_channels < 1)) {
    fail("convolutional encoder needs input_resolution divisible by 16 and encoder_channels >= 1");
  }
  if (category.empty()) fail("category must be non-empty");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["category"] = category;
  j["point_dim"] = point_dim;
  j["out_channels"] = out_channels;
  j["code_dim"] = code_dim;
  j["generators"] = nlohmann::ordered_json::array();
  for (const GeneratorSpec& g : generators) {
    nlohmann::ordered_json gj{{"channels", g.channels}, {"width", g.width}};
    if (g.grid > 0) gj["grid"] = g.grid;
    j["generators"].push_back(gj);
  }
  j["basis_depth"] = basis_depth;
  j["uv_width"] = uv_width;
  j["uv_depth"] = uv_depth;
  j["mask_width"] = mask_width;
  j["mask_depth"] = mask_depth;
  j["encoder"] = encoder;
  j["encoder_channels"] = encoder_channels;
  j["input_channels"] = input_channels;
  j["input_resolution"] = input_resolution;
  j["identity_uv"] = identity_uv;
  j["seed"] = seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  ModelConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "category") c.category = v.get<std::string>();
      else if (k == "point_dim") c.point_dim = v.get<int>();
      else if (k == "out_channels") c.out_channels = v.get<int>();
      else if (k == "code_dim") c.code_dim = v.get<int>();
      else if (k == "generators") {
        c.generators.clear();
        for (const auto& g : v) {
          GeneratorSpec s;
          for (auto gi = g.begin(); gi != g.end(); ++gi) {
            if (gi.key() == "channels") s.channels = gi.value().get<int>();
            else if (gi.key() == "width") s.width = gi.value().get<int>();
            else if (gi.key() == "grid") s.grid = gi.value().get<int>();
            else throw ConfigError("model config: unknown generator key '" + gi.key() + "'");
          }
          c.generators.push_back(s);
        }
      } else if (k == "basis_depth") c.basis_depth = v.get<int>();
      else if (k == "uv_width") c.uv_width = v.get<int>();
      else if (k == "uv_depth") c.uv_depth = v.get<int>();
      else if (k == "mask_width") c.mask_width = v.get<int>();
      else if (k == "mask_depth") c.mask_depth = v.get<int>();
      else if (k == "encoder") c.encoder = v.get<std::string>();
      else if (k == "encoder_channels") c.encoder_channels = v.get<int>();
      else if (k == "input_channels") c.input_channels = v.get<int>();
      else if (k == "input_resolution") c.input_resolution = v.get<int>();
      else if (k == "identity_uv") c.identity_uv = v.get<bool>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("model config: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- model

template <class T>
AuvModel<T>::AuvModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed, 0x30DE1);
  int coeff_total = 0;
  for (const GeneratorSpec& g : config_.generators) coeff_total += config_.out_channels * g.channels;
  EncoderSpec es;
  es.kind = encoder_kind_from_string(config_.encoder);
  es.in_channels = config_.input_channels;
  es.resolution = config_.input_resolution;
  es.base_channels = config_.encoder_channels;
  es.code_dim = config_.code_dim;
  es.coeff_count = coeff_total;
  encoder_ = Encoder<T>("encoder", es, rng);
  if (!config_.identity_uv) {
    uv_mapper_ = Mlp<T>("uv", {config_.point_dim, config_.code_dim, config_.uv_width, config_.uv_depth, 2}, rng);
  }
  if (config_.generator_count() == 2) {
    masker_ = Mlp<T>("mask", {config_.point_dim + 3, config_.code_dim, config_.mask_width, config_.mask_depth, 1}, rng);
  } else if (config_.four_way_mask()) {
    masker_ = Mlp<T>("mask", {config_.point_dim, config_.code_dim, config_.mask_width, config_.mask_depth, 4}, rng);
  }
  generators_.reserve(config_.generators.size());
  for (std::size_t k = 0; k < config_.generators.size(); ++k) {
    const GeneratorSpec& g = config_.generators[k];
    generators_.emplace_back("basis" + std::to_string(k), g, config_.basis_depth, rng);
  }
}

template <class T>
typename Encoder<T>::Output AuvModel<T>::encode(Tape<T>& tape, const Tensor<T>& input) {
  return encoder_.forward(tape, input);
}

template <class T>
std::vector<Var<T>> AuvModel<T>::split_coefficients(const Var<T>& flat) {
  std::vector<Var<T>> out;
  int begin = 0;
  const int C = config_.out_channels;
  for (const GeneratorSpec& g : config_.generators) {
    const int n = C * g.channels;
    out.push_back(ops::reshape(ops::slice_cols(flat, begin, begin + n), {C, g.channels}));
    begin += n;
  }
  return out;
}

template <class T>
Var<T> AuvModel<T>::map_uv(Tape<T>& tape, const Var<T>& points, const Var<T>& code) {
  if (config_.identity_uv) return config_.point_dim == 2 ? points : ops::slice_cols(points, 0, 2);
  return uv_mapper_.forward(tape, points, &code);
}

template <class T>
std::vector<Var<T>> AuvModel<T>::masks(Tape<T>& tape, const Var<T>& points, const Tensor<T>& normals,
                                       const Var<T>& code, Var<T>* normal_pred) {
  const int K = config_.generator_count();
  const int N = points.dim(0);
  if (K == 1) return {tape.constant(Tensor<T>({N, 1}, T{1}))};
  if (normals.shape() != Shape{N, 3}) {
    throw ShapeError("masker: expected normals [" + std::to_string(N) + ",3], got " + shape_str(normals.shape()));
  }
  Var<T> n_gt = tape.constant(normals);
  if (K == 2) {
    Var<T> logit = masker_.forward(tape, ops::concat_cols<T>({points, n_gt}), &code);
    Var<T> m = ops::sigmoid(logit);
    return {m, ops::one_minus(m)};
  }
  Var<T> out = masker_.forward(tape, points, &code);
  Var<T> n_pred = ops::slice_cols(out, 0, 3);
  if (normal_pred) *normal_pred = n_pred;
  return chair_mask_compose(ops::sigmoid(ops::slice_cols(out, 3, 4)), n_pred, n_gt);
}

template <class T>
Var<T> AuvModel<T>::basis(Tape<T>& tape, int k, const Var<T>& uv) {
  return generator(k).forward(tape, uv);
}

template <class T>
ModelOutput<T> AuvModel<T>::forward(Tape<T>& tape, const Tensor<T>& encoder_input, const Tensor<T>& points,
                                    const Tensor<T>& normals) {
  if (points.rank() != 2 || points.dim(1) != config_.point_dim || points.dim(0) < 1) {
    throw ShapeError("model: expected points [N," + std::to_string(config_.point_dim) + "], got " +
                     shape_str(points.shape()));
  }
  ModelOutput<T> out;
  auto enc = encode(tape, encoder_input);
  out.code = enc.code;
  out.coefficients = split_coefficients(enc.coeffs);
  Var<T> p = tape.constant(points);
  out.uv = map_uv(tape, p, enc.code);
  out.masks = masks(tape, p, normals, enc.code, &out.normal_pred);
  for (int k = 0; k < config_.generator_count(); ++k) {
    out.generator_outputs.push_back(combine_basis(basis(tape, k, out.uv), out.coefficients[static_cast<std::size_t>(k)]));
  }
  out.prediction = config_.generator_count() == 1 ? out.generator_outputs[0] : blend_masked(out.generator_outputs, out.masks);
  return out;
}

template <class T>
Tensor<T> AuvModel<T>::eval_basis(int k, const Tensor<T>& uv, int chunk) {
  if (uv.rank() != 2 || uv.dim(1) != 2) throw ShapeError("eval_basis: expected uv [N,2], got " + shape_str(uv.shape()));
  const int N = uv.dim(0);
  const int nk = generator(k).channels();
  Tensor<T> out({N, nk});
  for (int begin = 0; begin < N; begin += chunk) {
    const int n = std::min(chunk, N - begin);
    Tensor<T> part({n, 2}, std::vector<T>(uv.data() + 2 * static_cast<std::size_t>(begin),
                                          uv.data() + 2 * static_cast<std::size_t>(begin + n)));
    Tape<T> tape;
    Var<T> b = basis(tape, k, tape.constant(std::move(part)));
    std::copy(b.value().data(), b.value().data() + b.value().size(), out.data() + static_cast<std::size_t>(begin) * nk);
  }
  return out;
}

template <class T>
std::vector<Parameter<T>*> AuvModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& p : encoder_.params()) out.push_back(&p);
  for (auto& p : uv_mapper_.params()) out.push_back(&p);
  for (auto& p : masker_.params()) out.push_back(&p);
  for (auto& g : generators_)
    for (auto& p : g.params()) out.push_back(&p);
  return out;
}

template <class T>
std::vector<Parameter<T>*> AuvModel<T>::basis_parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& g : generators_)
    for (auto& p : g.params()) out.push_back(&p);
  return out;
}

template <class T>
void AuvModel<T>::set_basis_frozen(bool frozen) {
  for (Parameter<T>* p : basis_parameters()) p->frozen = frozen;
}

template <class T>
std::size_t AuvModel<T>::parameter_count() {
  std::size_t n = 0;
  for (Parameter<T>* p : parameters()) n += p->value.size();
  return n;
}

template <class T>
std::uint64_t AuvModel<T>::basis_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Parameter<T>* p : basis_parameters()) h = fnv1a(p->value.data(), p->value.size() * sizeof(T), h);
  return h;
}

template <class T>
Checkpoint AuvModel<T>::to_checkpoint() {
  Checkpoint ck;
  ck.put_text("config", config_.to_json());
  for (Parameter<T>* p : parameters()) ck.put(p->name, p->value.template cast<float>());
  return ck;
}

template <class T>
void AuvModel<T>::load_weights(const Checkpoint& ck) {
  for (Parameter<T>* p : parameters()) p->value = ck.get(p->name, p->value.shape()).template cast<T>();
}

template <class T>
std::unique_ptr<AuvModel<T>> AuvModel<T>::from_checkpoint(const Checkpoint& ck) {
  if (!ck.has_text("config")) throw DataError("checkpoint: no embedded model config");
  auto model = std::make_unique<AuvModel<T>>(ModelConfig::from_json(ck.text("config")));
  model->load_weights(ck);
  return model;
}

// ---------------------------------------------------------------- composition

template <class T>
Var<T> combine_basis(const Var<T>& basis, const Var<T>& coeffs) {
  if (basis.value().rank() != 2 || coeffs.value().rank() != 2 || basis.dim(1) != coeffs.dim(1)) {
    throw ShapeError("combine_basis: incompatible shapes " + shape_str(basis.shape()) + " and " +
                     shape_str(coeffs.shape()));
  }
  return ops::matmul(basis, ops::transpose(coeffs));
}

template <class T>
Var<T> blend_masked(const std::vector<Var<T>>& outputs, const std::vector<Var<T>>& masks) {
  if (outputs.empty() || outputs.size() != masks.size()) {
    throw ShapeError("blend_masked: need one mask per output (" + std::to_string(outputs.size()) + " outputs, " +
                     std::to_string(masks.size()) + " masks)");
  }
  Var<T> acc = ops::mul_col(outputs[0], masks[0]);
  for (std::size_t k = 1; k < outputs.size(); ++k) acc = ops::add(acc, ops::mul_col(outputs[k], masks[k]));
  return acc;
}

template <class T>
std::vector<Var<T>> chair_mask_compose(const Var<T>& m_pred, const Var<T>& n_pred, const Var<T>& n_gt) {
  if (n_pred.shape() != n_gt.shape() || n_pred.value().rank() != 2 || n_pred.dim(1) != 3 ||
      m_pred.shape() != Shape{n_pred.dim(0), 1}) {
    throw ShapeError("chair_mask_compose: incompatible shapes " + shape_str(m_pred.shape()) + ", " +
                     shape_str(n_pred.shape()) + " and " + shape_str(n_gt.shape()));
  }
  Var<T> mn = ops::sigmoid(ops::row_sum(ops::mul(n_pred, n_gt)));
  Var<T> mn_c = ops::one_minus(mn);
  Var<T> mp_c = ops::one_minus(m_pred);
  return {ops::mul(mn, m_pred), ops::mul(mn_c, m_pred), ops::mul(mn, mp_c), ops::mul(mn_c, mp_c)};
}

#define AUV_INSTANTIATE_NETWORKS(T)                                                                       \
  template class Mlp<T>;                                                                                  \
  template class BasisGenerator<T>;                                                                       \
  template class Encoder<T>;                                                                              \
  template class AuvModel<T>;                                                                             \
  template Var<T> combine_basis<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> blend_masked<T>(const std::vector<Var<T>>&, const std::vector<Var<T>>&);                \
  template std::vector<Var<T>> chair_mask_compose<T>(const Var<T>&, const Var<T>&, const Var<T>&);

AUV_INSTANTIATE_NETWORKS(float)
AUV_INSTANTIATE_NETWORKS(double)

}  // namespace auv
