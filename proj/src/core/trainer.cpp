#include "auv/trainer.hpp"

#include <cmath>
#include <numbers>
#include <cstring>
#include <sstream>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"

namespace auv {

int scaled_epochs(int epochs, double scale) {
  if (epochs < 1) throw ConfigError("stage epochs must be >= 1");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("epoch_scale must be positive");
  return std::max(1, static_cast<int>(std::lround(epochs * scale)));
}

std::vector<StageConfig> category_schedule(Category c) {
  auto w = [](double a, double b, double x, double s, double p) { return LossWeights{a, b, x, s, p}; };
  switch (c) {
    case Category::Head:
      return {{"stage1", 10, w(1, 0.5, 100, 100, 1)}, {"stage2", 2000, w(1, 0.5, 1, 1, 0)},
              {"stage3", 2000, w(1, 0.5, 100, 100, 0)}};
    case Category::Body:
      return {{"stage1", 10, w(1, 0.5, 1, 1, 1)}, {"stage2", 2000, w(1, 0.1, 1, 1, 0)},
              {"stage3", 2000, w(1, 0.5, 100, 100, 0)}};
    case Category::Animal:
      return {{"stage1", 10, w(0.1, 1, 100, 100, 100)}, {"stage2", 2000, w(0.1, 1, 100, 100, 0)},
              {"stage3", 2000, w(0.1, 1, 100, 10, 0)}};
    case Category::Car:
      return {{"stage1", 200, w(1, 0.1, 100, 10, 1), 10}, {"stage2", 1800, w(1, 0.1, 1, 10, 0)},
              {"stage3", 2000, w(1, 0.1, 1000, 100, 0)}};
    case Category::ShapenetCar:
      return {{"stage1", 20, w(1, 0.1, 10, 10, 1), 5}, {"stage2", 40, w(1, 0.1, 1, 10, 0)},
              {"stage3", 140, w(1, 1, 100, 100, 0)}};
    case Category::Chair:
      return {{"stage1", 50, w(1, 1, 10, 100, 100), 5}, {"stage2", 50, w(1, 1, 10, 10, 0)},
              {"stage3", 100, w(1, 1, 100, 100, 0)}};
    case Category::Toy: break;
  }
  throw ConfigError("category '" + to_string(c) + "' has no multi-stage schedule");
}

ModelConfig default_model_config(Category c) {
  ModelConfig m;
  m.category = to_string(c);
  switch (c) {
    case Category::Head:
    case Category::Car:
    case Category::ShapenetCar: m.generators = {{64, 1024}, {16, 128}}; break;
    case Category::Body:
    case Category::Animal: m.generators = {{64, 1024}, {64, 1024}}; break;
    case Category::Chair: m.generators = {{64, 512}, {64, 512}, {64, 512}, {64, 512}}; break;
    case Category::Toy:
      m.point_dim = 2;
      m.out_channels = 3;
      m.generators = {{128, 512}};
      m.encoder = "conv2d";
      m.input_channels = 3;
      m.input_resolution = 64;
      break;
  }
  return m;
}

std::string metrics_csv_header() { return "epoch,stage,L_c,L_n,L_x,L_s,L_p,total\n"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(9);
  auto f = [&](double v) {
    if (std::isnan(v)) os << ",";
    else os << "," << v;
  };
  os << m.epoch << "," << m.stage;
  f(m.color);
  f(m.normal);
  f(m.coord);
  f(m.smooth);
  f(m.prior);
  f(m.total);
  os << "\n";
  return os.str();
}

bool same_metrics(const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const EpochMetrics &x = a[i], &y = b[i];
    if (x.stage != y.stage || x.epoch != y.epoch || x.basis_hash != y.basis_hash) return false;
    for (auto [p, q] : {std::pair{x.color, y.color}, {x.normal, y.normal}, {x.coord, y.coord}, {x.smooth, y.smooth},
                        {x.prior, y.prior}, {x.total, y.total}}) {
      if (std::memcmp(&p, &q, sizeof(double)) != 0) return false;
    }
  }
  return true;
}

namespace {

std::uint64_t stream_id(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(a * 0x9E3779B97F4A7C15ULL + b) + c);
}

std::vector<int> permutation(int n, Rng& rng) { return choose_subset(n, n, rng); }

template <class T>
Tensor<T> take_rows(const Tensor<T>& src, const std::vector<int>& rows) {
  const int w = src.dim(1);
  Tensor<T> out({static_cast<int>(rows.size()), w});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.data() + i * static_cast<std::size_t>(w), src.data() + static_cast<std::size_t>(rows[i]) * w,
                sizeof(T) * static_cast<std::size_t>(w));
  return out;
}

struct StepSettings {
  Category category = Category::Head;
  int points_per_step = 0;
  int smooth_subset = 0;
  double sigma = 0.02;
  double clip_norm = 10.0;
};

struct TermSums {
  double sum[5] = {0, 0, 0, 0, 0};
  int count[5] = {0, 0, 0, 0, 0};
  double total = 0;
  int steps = 0;

  void add(int k, double v) {
    sum[k] += v;
    ++count[k];
  }
  double mean(int k) const { return count[k] ? sum[k] / count[k] : kAbsent; }
};

const char* kTermNames[5] = {"L_c", "L_n", "L_x", "L_s", "L_p"};

// One optimizer step on one shape.
void shape_step(AuvModel<float>& model, std::vector<Parameter<float>*>& params, AdamState<float>& adam,
                const ShapeData& shape, const LossWeights& weights, const StepSettings& st, Rng& rng,
                TermSums& sums, const std::string& where) {
  const int N = shape.size();
  Tensor<float> pts, nrm, tgt;
  const Tensor<float> full_target = shape.target();
  if (st.points_per_step > 0 && st.points_per_step < N) {
    const std::vector<int> rows = choose_subset(N, st.points_per_step, rng);
    pts = take_rows(shape.points, rows);
    nrm = take_rows(shape.normals, rows);
    tgt = take_rows(full_target, rows);
  } else {
    pts = shape.points;
    nrm = shape.normals;
    tgt = full_target;
  }
  const int n = pts.dim(0);

  Tape<float> tape;
  ModelOutput<float> out = model.forward(tape, shape.grid, pts, nrm);
  LossTerms<float> terms = recon_losses(out.prediction, tgt, shape.colorless);
  if (weights.smooth > 0.0) {
    const int m = st.smooth_subset > 0 ? std::min(st.smooth_subset, n) : n;
    terms.smooth = smoothness_loss(out.uv, find_neighbors(pts, choose_subset(n, m, rng), st.sigma));
  }
  if (weights.prior > 0.0) terms.prior = prior_loss(out.uv, out.masks, prior_targets(st.category, pts, nrm));
  Var<float> total = total_loss(tape, terms, weights);

  const std::optional<Var<float>>* list[5] = {&terms.color, &terms.normal, &terms.coord, &terms.smooth, &terms.prior};
  for (int k = 0; k < 5; ++k) {
    if (!*list[k]) continue;
    const double v = (*list[k])->value().item();
    if (!std::isfinite(v)) throw NumericalError(where + ": term " + kTermNames[k] + " is not finite");
    sums.add(k, v);
  }
  const double tv = total.value().item();
  if (!std::isfinite(tv)) throw NumericalError(where + ": total loss is not finite");
  sums.total += tv;
  ++sums.steps;

  tape.backward(total);
  std::span<Parameter<float>* const> span(params);
  if (st.clip_norm > 0.0) {
    const double gn = clip_grad_norm(span, st.clip_norm);
    if (!std::isfinite(gn)) throw NumericalError(where + ": gradient is not finite");
  }
  adam_step(span, adam);
}

EpochMetrics finish_epoch(int stage, int epoch, const TermSums& s, AuvModel<float>& model) {
  EpochMetrics m;
  m.stage = stage;
  m.epoch = epoch;
  m.color = s.mean(0);
  m.normal = s.mean(1);
  m.coord = s.mean(2);
  m.smooth = s.mean(3);
  m.prior = s.mean(4);
  m.total = s.steps ? s.total / s.steps : 0.0;
  m.basis_hash = model.basis_hash();
  return m;
}

void check_dataset(const AuvModel<float>& model, const std::vector<ShapeData>& shapes) {
  if (shapes.empty()) throw DataError("training set is empty");
  const ModelConfig& c = model.config();
  if (c.point_dim != 3 || c.out_channels != 9) throw ConfigError("3D training needs point_dim 3 and 9 output channels");
  for (const ShapeData& s : shapes) {
    s.validate();
    if (s.grid.dim(0) != c.input_channels || s.grid.dim(1) != c.input_resolution) {
      throw DataError("shape '" + s.name + "': voxel grid " + shape_str(s.grid.shape()) +
                      " does not match the encoder input resolution " + std::to_string(c.input_resolution));
    }
  }
}

}  // namespace

std::vector<EpochMetrics> train(AuvModel<float>& model, const std::vector<ShapeData>& shapes, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  check_dataset(model, shapes);
  if (cfg.stages.empty()) throw ConfigError("training needs at least one stage");
  for (const StageConfig& s : cfg.stages) {
    s.weights.validate();
    scaled_epochs(s.epochs, cfg.epoch_scale);
  }
  if ((model.config().generator_count() == 4) != (cfg.category == Category::Chair)) {
    throw ConfigError("the chair category requires exactly four basis generators");
  }
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  std::vector<Parameter<float>*> params = model.parameters();
  AdamState<float> adam{cfg.adam, {}, {}, 0};
  StepSettings st{cfg.category, cfg.points_per_step, cfg.smooth_subset, cfg.sigma, cfg.clip_norm};
  std::vector<EpochMetrics> log;
  std::string csv = metrics_csv_header();
  int global_epoch = 0;
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const StageConfig& stage = cfg.stages[si];
    const int E = scaled_epochs(stage.epochs, cfg.epoch_scale);
    const int P = stage.prior_epochs < 0 ? E : std::min(E, scaled_epochs(stage.prior_epochs, cfg.epoch_scale));
    model.set_basis_frozen(stage.freeze_basis);
    for (int e = 0; e < E; ++e) {
      LossWeights w = stage.weights;
      if (e >= P) w.prior = 0.0;
      Rng order_rng(cfg.seed, stream_id(1, si, static_cast<std::uint64_t>(e)));
      const std::vector<int> order = permutation(static_cast<int>(shapes.size()), order_rng);
      TermSums sums;
      for (std::size_t k = 0; k < order.size(); ++k) {
        Rng rng(cfg.seed, stream_id(2 + si, static_cast<std::uint64_t>(e), k));
        const std::string where = "stage " + stage.name + ", epoch " + std::to_string(e);
        shape_step(model, params, adam, shapes[static_cast<std::size_t>(order[k])], w, st, rng, sums, where);
      }
      EpochMetrics m = finish_epoch(static_cast<int>(si), global_epoch++, sums, model);
      log.push_back(m);
      if (!cfg.out_dir.empty()) {
        csv += metrics_csv_row(m);
        write_text_atomic(cfg.out_dir / "metrics.csv", csv);
      }
      if (on_epoch) on_epoch(m);
    }
    if (!cfg.out_dir.empty()) {
      Checkpoint ck = model.to_checkpoint();
      ck.put_text("train.stage", stage.name);
      ck.save(cfg.out_dir / ("stage" + std::to_string(si + 1) + ".auvn"));
    }
  }
  model.set_basis_frozen(false);
  if (!cfg.out_dir.empty()) model.to_checkpoint().save(cfg.out_dir / "model.auvn");
  return log;
}

FitResult fit_new_shape(AuvModel<float>& model, const ShapeData& new_shape, const std::vector<ShapeData>& training_set,
                        const FitConfig& cfg, const EpochCallback& on_epoch) {
  check_dataset(model, {new_shape});
  if (cfg.include_training_set && !training_set.empty()) check_dataset(model, training_set);
  if (cfg.duplicates < 1) throw ConfigError("fit: duplicates must be >= 1");
  const Category category = category_from_string(model.config().category);
  const LossWeights weights = cfg.weights ? *cfg.weights : category_schedule(category).back().weights;
  weights.validate();
  const int E = scaled_epochs(cfg.epochs, cfg.epoch_scale);

  std::vector<const ShapeData*> items;
  if (cfg.include_training_set)
    for (const ShapeData& s : training_set) items.push_back(&s);
  for (int d = 0; d < cfg.duplicates; ++d) items.push_back(&new_shape);

  model.set_basis_frozen(true);
  std::vector<Parameter<float>*> params = model.parameters();
  AdamState<float> adam{cfg.adam, {}, {}, 0};
  StepSettings st{category, cfg.points_per_step, cfg.smooth_subset, cfg.sigma, cfg.clip_norm};
  FitResult res;
  res.basis_hash_before = model.basis_hash();
  try {
    for (int e = 0; e < E; ++e) {
      Rng order_rng(cfg.seed, stream_id(101, 0, static_cast<std::uint64_t>(e)));
      const std::vector<int> order = permutation(static_cast<int>(items.size()), order_rng);
      TermSums sums;
      for (std::size_t k = 0; k < order.size(); ++k) {
        Rng rng(cfg.seed, stream_id(102, static_cast<std::uint64_t>(e), k));
        shape_step(model, params, adam, *items[static_cast<std::size_t>(order[k])], weights, st, rng, sums,
                   "fit, epoch " + std::to_string(e));
      }
      EpochMetrics m = finish_epoch(0, e, sums, model);
      if (m.basis_hash != res.basis_hash_before) res.basis_constant = false;
      res.metrics.push_back(m);
      if (on_epoch) on_epoch(m);
    }
  } catch (...) {
    model.set_basis_frozen(false);
    throw;
  }
  model.set_basis_frozen(false);
  res.basis_hash_after = model.basis_hash();
  return res;
}

// ------------------------------------------------------------------ toy

namespace {

void check_toy(const AuvModel<float>& model, const std::vector<ToyImage>& images) {
  const ModelConfig& c = model.config();
  if (c.point_dim != 2 || c.out_channels != 3 || c.generator_count() != 1) {
    throw ConfigError("toy training needs point_dim 2, 3 output channels and one generator");
  }
  if (images.empty()) throw DataError("toy training set is empty");
  for (const ToyImage& im : images) {
    if (im.image.channels != 3 || im.image.width != im.image.height || im.image.width != images[0].image.width) {
      throw DataError("toy images must be square RGB rasters of one size");
    }
  }
}

}  // namespace

std::vector<ToyEpochMetrics> train_toy(AuvModel<float>& model, const std::vector<ToyImage>& images,
                                       const ToyTrainConfig& cfg, const ToyEpochCallback& on_epoch) {
  check_toy(model, images);
  if (cfg.images_per_step < 1) throw ConfigError("images_per_step must be >= 1");
  if (!(cfg.prior_weight >= 0.0)) throw ConfigError("prior_weight must be >= 0");
  if (!(cfg.lr_end > 0.0 && cfg.lr_end <= 1.0)) throw ConfigError("lr_end must be in (0, 1]");
  const int S = images[0].image.width;
  const int P_all = S * S;
  const int E = scaled_epochs(cfg.epochs, cfg.epoch_scale);
  const int P_epochs = cfg.prior_epochs <= 0 ? 0 : std::min(E, scaled_epochs(cfg.prior_epochs, cfg.epoch_scale));
  const bool shared_basis = model.config().identity_uv && (cfg.pixels_per_step <= 0 || cfg.pixels_per_step >= P_all);

  std::vector<Tensor<float>> inputs, colors;
  for (const ToyImage& im : images) {
    inputs.push_back(toy_encoder_input(im));
    colors.push_back(toy_pixel_colors(im));
  }
  const Tensor<float> grid = toy_pixel_grid(S);
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  std::vector<Parameter<float>*> params = model.parameters();
  std::span<Parameter<float>* const> span(params);
  AdamState<float> adam{cfg.adam, {}, {}, 0};
  std::vector<ToyEpochMetrics> log;
  std::string csv = "epoch,mse,prior,total\n";
  const int B = cfg.images_per_step;
  for (int e = 0; e < E; ++e) {
    const double progress = E > 1 ? static_cast<double>(e) / (E - 1) : 0.0;
    adam.config.lr = cfg.adam.lr * (cfg.lr_end + (1.0 - cfg.lr_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    const bool prior_on = e < P_epochs && cfg.prior_weight > 0.0 && !model.config().identity_uv;
    Rng order_rng(cfg.seed, stream_id(201, 0, static_cast<std::uint64_t>(e)));
    const std::vector<int> order = permutation(static_cast<int>(images.size()), order_rng);
    double mse_sum = 0, prior_sum = 0, total_sum = 0;
    int steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(B)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(B));
      Rng rng(cfg.seed, stream_id(202, static_cast<std::uint64_t>(e), begin));
      Tape<float> tape;
      std::optional<Var<float>> shared;
      if (shared_basis) shared = model.basis(tape, 0, tape.constant(grid));
      std::optional<Var<float>> loss_mse, loss_prior;
      for (std::size_t k = begin; k < end; ++k) {
        const auto idx = static_cast<std::size_t>(order[k]);
        Tensor<float> pts = grid, col = colors[idx];
        if (!shared_basis && cfg.pixels_per_step > 0 && cfg.pixels_per_step < P_all) {
          const std::vector<int> rows = choose_subset(P_all, cfg.pixels_per_step, rng);
          pts = take_rows(grid, rows);
          col = take_rows(colors[idx], rows);
        }
        auto enc = model.encode(tape, inputs[idx]);
        Var<float> coeff = model.split_coefficients(enc.coeffs)[0];
        Var<float> p = tape.constant(pts);
        Var<float> uv = model.map_uv(tape, p, enc.code);
        Var<float> basis = shared ? *shared : model.basis(tape, 0, uv);
        Var<float> mse = ops::mse(combine_basis(basis, coeff), tape.constant(std::move(col)));
        loss_mse = loss_mse ? ops::add(*loss_mse, mse) : mse;
        if (prior_on) {
          Var<float> pr = ops::scale(ops::sum(ops::square(ops::sub(uv, p))), 1.0f / static_cast<float>(pts.dim(0)));
          loss_prior = loss_prior ? ops::add(*loss_prior, pr) : pr;
        }
      }
      const float inv = 1.0f / static_cast<float>(end - begin);
      Var<float> mse = ops::scale(*loss_mse, inv);
      Var<float> total = mse;
      std::optional<Var<float>> prior;
      if (loss_prior) {
        prior = ops::scale(*loss_prior, inv);
        total = ops::add(total, ops::scale(*prior, static_cast<float>(cfg.prior_weight)));
      }
      const double tv = total.value().item();
      if (!std::isfinite(tv)) {
        throw NumericalError("toy, epoch " + std::to_string(e) + ": term " +
                             (std::isfinite(mse.value().item()) ? "L_p" : "L_c") + " is not finite");
      }
      mse_sum += mse.value().item();
      if (prior) prior_sum += prior->value().item();
      total_sum += tv;
      ++steps;
      tape.backward(total);
      if (cfg.clip_norm > 0.0 && !std::isfinite(clip_grad_norm(span, cfg.clip_norm))) {
        throw NumericalError("toy, epoch " + std::to_string(e) + ": gradient is not finite");
      }
      adam_step(span, adam);
    }
    ToyEpochMetrics m{e, mse_sum / steps, prior_on ? prior_sum / steps : kAbsent, total_sum / steps};
    log.push_back(m);
    if (!cfg.out_dir.empty()) {
      std::ostringstream os;
      os.precision(9);
      os << m.epoch << "," << m.mse << ",";
      if (!std::isnan(m.prior)) os << m.prior;
      os << "," << m.total << "\n";
      csv += os.str();
      write_text_atomic(cfg.out_dir / "metrics.csv", csv);
    }
    if (on_epoch) on_epoch(m);
  }
  if (!cfg.out_dir.empty()) model.to_checkpoint().save(cfg.out_dir / "model.auvn");
  return log;
}

Tensor<float> toy_uv_map(AuvModel<float>& model, const ToyImage& image) {
  check_toy(model, {image});
  const int S = image.image.width;
  Tape<float> tape;
  auto enc = model.encode(tape, toy_encoder_input(image));
  return model.map_uv(tape, tape.constant(toy_pixel_grid(S)), enc.code).value();
}

double toy_reconstruction_mse(AuvModel<float>& model, const std::vector<ToyImage>& images) {
  check_toy(model, images);
  const int S = images[0].image.width;
  const Tensor<float> grid = toy_pixel_grid(S);
  double sum = 0;
  for (const ToyImage& im : images) {
    Tape<float> tape;
    auto enc = model.encode(tape, toy_encoder_input(im));
    Var<float> uv = model.map_uv(tape, tape.constant(grid), enc.code);
    Var<float> pred = combine_basis(model.basis(tape, 0, uv), model.split_coefficients(enc.coeffs)[0]);
    const Tensor<float> col = toy_pixel_colors(im);
    double s = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      const double d = static_cast<double>(pred.value()[i]) - col[i];
      s += d * d;
    }
    sum += s / static_cast<double>(col.size());
  }
  return sum / static_cast<double>(images.size());
}

}  // namespace auv
