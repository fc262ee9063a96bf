#include "auv/jobs.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <set>

#include "auv/baker.hpp"
#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"
#include "auv/eval.hpp"
#include "auv/trainer.hpp"

namespace auv {
namespace {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// JSON object reader that remembers which keys were consumed so leftovers
// can be rejected.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T need(const std::string& key) {
    used_.insert(key);
    if (!has(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return convert<T>(key);
  }

  // Null when absent.
  const Json& raw(const std::string& key) {
    static const Json null;
    used_.insert(key);
    return j_.contains(key) ? j_.at(key) : null;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  template <class T>
  T convert(const std::string& key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json metrics_json(const EpochMetrics& m) {
  return {{"stage", m.stage}, {"epoch", m.epoch},         {"L_c", num(m.color)},
          {"L_n", num(m.normal)}, {"L_x", num(m.coord)}, {"L_s", num(m.smooth)},
          {"L_p", num(m.prior)},  {"total", num(m.total)}, {"basis_hash", m.basis_hash}};
}

std::string hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw IoError(what + " '" + p.string() + "' not found");
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw IoError(what + " '" + p.string() + "' not found");
}

void check_range(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

ModelConfig model_config(Fields& f, Category category, std::uint64_t seed) {
  ModelConfig base = default_model_config(category);
  base.seed = seed;
  Json merged = Json::parse(base.to_json());
  if (f.has("model")) {
    const Json& user = f.raw("model");
    if (!user.is_object()) throw ConfigError("model: expected a JSON object");
    merged.merge_patch(user);
  } else {
    f.raw("model");  // marks the key as known
  }
  ModelConfig c = ModelConfig::from_json(merged.dump());
  c.validate();
  return c;
}

std::unique_ptr<AuvModel<float>> load_model(const fs::path& p) {
  require_file(p, "model checkpoint");
  return AuvModel<float>::from_checkpoint(Checkpoint::load(p));
}

std::vector<ShapeData> load_dataset(const fs::path& p) {
  require_file(p, "dataset");
  return load_shapes(p);
}

const ShapeData& pick_shape(const std::vector<ShapeData>& shapes, int index) {
  if (index < 0 || index >= static_cast<int>(shapes.size())) {
    throw ConfigError("shape index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(shapes.size()) + " shapes)");
  }
  return shapes[static_cast<std::size_t>(index)];
}

void check_dataset_fits(const AuvModel<float>& model, const std::vector<ShapeData>& shapes) {
  const ModelConfig& c = model.config();
  for (const ShapeData& s : shapes) {
    const int R = s.grid.dim(1);
    if (R != c.input_resolution || s.grid.dim(0) != c.input_channels) {
      throw DataError("shape '" + s.name + "' has a " + shape_str(s.grid.shape()) + " grid but the model expects " +
                      std::to_string(c.input_channels) + " channels at " + std::to_string(c.input_resolution) + "^3");
    }
  }
}

LossWeights weights_from(const Json& j, const LossWeights& base, const std::string& where) {
  Fields f(j, where);
  LossWeights w = base;
  w.color = f.get("color", w.color);
  w.normal = f.get("normal", w.normal);
  w.coord = f.get("coord", w.coord);
  w.smooth = f.get("smooth", w.smooth);
  w.prior = f.get("prior", w.prior);
  f.finish();
  w.validate();
  return w;
}

AdamConfig adam_from(Fields& f, double default_lr) {
  AdamConfig a;
  a.lr = f.get("lr", default_lr);
  check_range(a.lr > 0 && std::isfinite(a.lr), "lr must be positive");
  return a;
}

// ------------------------------------------------------------------ gen-data

Json gen_data(Fields& f, const LogFn& log) {
  const std::string kind = f.need<std::string>("kind");
  const int count = f.get("count", 100);
  const auto seed = f.get<std::uint64_t>("seed", 0);
  const fs::path out = f.need<std::string>("out");
  const int size = f.get("size", 64);
  const double shift = f.get("max_corner_shift", 0.15);
  const double jitter = f.get("layout_jitter", 0.0);
  f.finish();
  check_range(count >= 1, "count must be >= 1");
  if (kind != "toy" && kind != "heads") throw ConfigError("kind must be 'toy' or 'heads'");
  if (kind == "toy") {
    check_range(size >= 16 && size <= 512, "size must be in [16, 512]");
    check_range(shift >= 0 && shift <= 0.25, "max_corner_shift must be in [0, 0.25]");
    check_range(jitter >= 0 && jitter <= 1, "layout_jitter must be in [0, 1]");
  }
  for (int i = 0; i < count; ++i) {
    char name[32];
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    if (kind == "toy") {
      std::snprintf(name, sizeof name, "face_%04d", i);
      const ToyImage canon = make_face_image(s, size, jitter);
      save_toy_image(out, name, shift > 0 ? warp_image(canon, random_homography(s, shift, size)) : canon);
    } else {
      std::snprintf(name, sizeof name, "head_%04d", i);
      save_head(out, name, make_head_mesh(s));
    }
    if (log && (i + 1) % 10 == 0) log("generated " + std::to_string(i + 1) + "/" + std::to_string(count));
  }
  return {{"kind", kind}, {"count", count}, {"out", out.string()}};
}

// ---------------------------------------------------------------- preprocess

Json preprocess(Fields& f, const LogFn& log) {
  const fs::path input = f.need<std::string>("input");
  const fs::path out = f.need<std::string>("out");
  const int points = f.get("points", 16384);
  const int grid = f.get("grid_resolution", 64);
  const auto seed = f.get<std::uint64_t>("seed", 0);
  const int threads = f.get("threads", 0);
  f.finish();
  check_range(points >= 1, "points must be >= 1");
  check_range(grid >= 1, "grid_resolution must be >= 1");
  require_dir(input, "input directory");
  const MeshFolder folder = load_mesh_folder(input);
  if (log) log("preprocessing " + std::to_string(folder.meshes.size()) + " meshes");
  const auto shapes = preprocess_meshes(folder.meshes, folder.names, points, grid, seed, threads, folder.annotations);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_shapes(out, shapes);
  return {{"shapes", shapes.size()}, {"points", points}, {"grid_resolution", grid}, {"out", out.string()}};
}

// --------------------------------------------------------------------- train

std::vector<StageConfig> stages_from(Fields& f, Category category) {
  std::vector<StageConfig> stages = category_schedule(category);
  if (!f.has("stages")) {
    f.raw("stages");
    return stages;
  }
  const Json& arr = f.raw("stages");
  if (!arr.is_array() || arr.empty()) throw ConfigError("stages: expected a non-empty array");
  std::vector<StageConfig> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "stages[" + std::to_string(i) + "]";
    Fields s(arr[i], where);
    StageConfig st = i < stages.size() ? stages[i] : StageConfig{};
    st.name = s.get("name", st.name.empty() ? "stage" + std::to_string(i + 1) : st.name);
    st.epochs = s.get("epochs", st.epochs);
    if (s.has("weights")) st.weights = weights_from(s.raw("weights"), st.weights, where + ".weights");
    else s.raw("weights");
    st.prior_epochs = s.get("prior_epochs", st.prior_epochs);
    st.freeze_basis = s.get("freeze_basis", st.freeze_basis);
    s.finish();
    check_range(st.epochs >= 1, where + ": epochs must be >= 1");
    out.push_back(st);
  }
  return out;
}

Json train(Fields& f, const LogFn& log) {
  const Category category = category_from_string(f.need<std::string>("category"));
  if (category == Category::Toy) throw ConfigError("use train-toy for the toy category");
  const fs::path dataset = f.need<std::string>("dataset");
  const fs::path out = f.need<std::string>("out");
  TrainConfig tc;
  tc.category = category;
  tc.seed = f.get<std::uint64_t>("seed", 0);
  tc.epoch_scale = f.get("epoch_scale", tc.epoch_scale);
  tc.points_per_step = f.get("points_per_step", tc.points_per_step);
  tc.smooth_subset = f.get("smooth_subset", tc.smooth_subset);
  tc.sigma = f.get("sigma", tc.sigma);
  tc.clip_norm = f.get("clip_norm", tc.clip_norm);
  tc.adam = adam_from(f, tc.adam.lr);
  tc.stages = stages_from(f, category);
  const ModelConfig mc = model_config(f, category, tc.seed);
  const std::string init = f.get<std::string>("init", "");
  f.finish();
  check_range(tc.epoch_scale > 0, "epoch_scale must be positive");
  check_range(tc.points_per_step >= 0, "points_per_step must be >= 0");
  check_range(tc.smooth_subset >= 1, "smooth_subset must be >= 1");
  check_range(tc.sigma > 0, "sigma must be positive");
  if (!init.empty()) require_file(init, "initial checkpoint");
  const auto shapes = load_dataset(dataset);
  AuvModel<float> model(mc);
  if (!init.empty()) model.load_weights(Checkpoint::load(init));
  check_dataset_fits(model, shapes);
  tc.out_dir = out;
  const auto metrics = train(model, shapes, tc, [&](const EpochMetrics& m) {
    if (log) log(metrics_json(m).dump());
  });
  return {{"epochs", metrics.size()},
          {"final", metrics.empty() ? Json(nullptr) : metrics_json(metrics.back())},
          {"basis_hash", hex(model.basis_hash())},
          {"checkpoint", (out / "model.auvn").string()},
          {"metrics", (out / "metrics.csv").string()}};
}

// ----------------------------------------------------------------- train-toy

Json landmark_json(const LandmarkStats& s) {
  Json arr = Json::array();
  for (std::size_t l = 0; l < s.uv_std.size(); ++l) {
    arr.push_back({{"uv_mean", {s.uv_mean[l].x(), s.uv_mean[l].y()}},
                   {"uv_std", s.uv_std[l]},
                   {"input_std", s.input_std[l]},
                   {"ratio", num(s.ratio(static_cast<int>(l)))}});
  }
  return arr;
}

Json train_toy(Fields& f, const LogFn& log) {
  const fs::path data = f.need<std::string>("data");
  const fs::path out = f.need<std::string>("out");
  ToyTrainConfig tc;
  tc.seed = f.get<std::uint64_t>("seed", 0);
  tc.epochs = f.get("epochs", tc.epochs);
  tc.prior_epochs = f.get("prior_epochs", tc.prior_epochs);
  tc.prior_weight = f.get("prior_weight", tc.prior_weight);
  tc.epoch_scale = f.get("epoch_scale", tc.epoch_scale);
  tc.pixels_per_step = f.get("pixels_per_step", tc.pixels_per_step);
  tc.images_per_step = f.get("images_per_step", tc.images_per_step);
  tc.lr_end = f.get("lr_end", tc.lr_end);
  tc.clip_norm = f.get("clip_norm", tc.clip_norm);
  tc.adam = adam_from(f, 1e-3);
  ModelConfig mc = model_config(f, Category::Toy, tc.seed);
  f.finish();
  check_range(tc.epochs >= 1, "epochs must be >= 1");
  check_range(tc.epoch_scale > 0, "epoch_scale must be positive");
  require_dir(data, "toy data directory");
  const auto images = load_toy_images(data);
  if (images.empty()) throw DataError("no toy images in '" + data.string() + "'");
  mc.input_resolution = images.front().image.width;
  AuvModel<float> model(mc);
  tc.out_dir = out;
  const auto metrics = train_toy(model, images, tc, [&](const ToyEpochMetrics& m) {
    if (log) log(Json{{"epoch", m.epoch}, {"mse", m.mse}, {"prior", num(m.prior)}, {"total", m.total}}.dump());
  });
  return {{"epochs", metrics.size()},
          {"mse", toy_reconstruction_mse(model, images)},
          {"landmarks", landmark_json(toy_landmark_stats(model, images))},
          {"checkpoint", (out / "model.auvn").string()}};
}

// ---------------------------------------------------------------------- bake

Json bake(Fields& f, const LogFn& log) {
  const fs::path model_path = f.need<std::string>("model");
  const fs::path dataset = f.need<std::string>("dataset");
  const int index = f.get("shape", 0);
  const int R = f.get("resolution", 256);
  const double radius = f.get("radius", 5.0);
  const std::string mesh = f.get<std::string>("mesh", "");
  const fs::path out = f.need<std::string>("out");
  std::string name = f.get<std::string>("name", "");
  f.finish();
  check_range(R >= 1 && R <= 8192, "resolution must be in [1, 8192]");
  check_range(radius >= 1, "radius must be >= 1");
  if (!mesh.empty()) require_file(mesh, "mesh");
  auto model = load_model(model_path);
  const auto shapes = load_dataset(dataset);
  const ShapeData& shape = pick_shape(shapes, index);
  check_dataset_fits(*model, {shape});
  if (name.empty()) name = shape.name;
  const TexturedMesh geometry = mesh.empty() ? TexturedMesh{} : load_textured_mesh(mesh);

  const auto baked = bake_texture(*model, shape, R);
  std::vector<Image> filled;
  Json valid = Json::array();
  for (const TextureImage& t : baked) {
    valid.push_back(t.valid_count());
    filled.push_back(t.valid_count() ? inpaint_texture(t, radius) : t.color);
  }
  Json band = Json::array();
  for (std::size_t a = 0; a < baked.size(); ++a)
    for (std::size_t b = a + 1; b < baked.size(); ++b)
      band.push_back(num(boundary_disagreement(baked[a], filled[a], baked[b], filled[b])));
  fs::create_directories(out);
  Json report{{"name", name}, {"resolution", R}, {"valid_texels", valid}, {"boundary_disagreement", band}};
  if (!mesh.empty()) {
    const TexturedExport ex = make_export(*model, geometry, shape, filled);
    write_export(out, name, ex);
    report["seam_faces"] = ex.seam_faces;
    report["obj"] = (out / (name + ".obj")).string();
  } else {
    for (std::size_t k = 0; k < filled.size(); ++k) write_png(out / (name + "_tex" + std::to_string(k) + ".png"), filled[k]);
  }
  for (std::size_t k = 0; k < baked.size(); ++k) {
    const auto v = baked[k].validity();
    std::vector<unsigned char> bytes(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) bytes[i] = v[i] ? 255 : 0;
    write_png_raw(out / (name + "_valid" + std::to_string(k) + ".png"), R, R, 1, bytes);
  }
  if (log) log("baked '" + name + "' into " + out.string());
  return report;
}

// ------------------------------------------------------------------ transfer

std::pair<fs::path, std::string> split_prefix(const std::string& prefix, const std::string& what) {
  const fs::path p(prefix);
  require_file(fs::path(prefix + ".obj"), what);
  return {p.parent_path().empty() ? fs::path(".") : p.parent_path(), p.filename().string()};
}

Json transfer(Fields& f, const LogFn& log) {
  const auto [gdir, gname] = split_prefix(f.need<std::string>("geometry"), "geometry export");
  const auto [tdir, tname] = split_prefix(f.need<std::string>("textures"), "texture export");
  const fs::path out = f.need<std::string>("out");
  const std::string name = f.get<std::string>("name", gname + "_with_" + tname);
  f.finish();
  const TexturedExport a = load_export(gdir, gname);
  const TexturedExport b = load_export(tdir, tname);
  const TexturedExport t = transfer_texture(a, b.textures);
  write_export(out, name, t);
  if (log) log("wrote " + (out / (name + ".obj")).string());
  return {{"name", name},
          {"geometry_hash", hex(t.geometry_hash())},
          {"geometry_unchanged", t.geometry_hash() == a.geometry_hash()},
          {"textures", t.texture_count()}};
}

// ------------------------------------------------------------------- fit-new

Json fit_new(Fields& f, const LogFn& log) {
  const fs::path model_path = f.need<std::string>("model");
  const fs::path shape_file = f.need<std::string>("shape_dataset");
  const int index = f.get("shape", 0);
  const std::string training = f.get<std::string>("dataset", "");
  const fs::path out = f.need<std::string>("out");
  FitConfig fc;
  fc.seed = f.get<std::uint64_t>("seed", 0);
  fc.duplicates = f.get("duplicates", fc.duplicates);
  fc.epochs = f.get("epochs", fc.epochs);
  fc.epoch_scale = f.get("epoch_scale", fc.epoch_scale);
  fc.include_training_set = f.get("include_training_set", !training.empty());
  fc.points_per_step = f.get("points_per_step", fc.points_per_step);
  fc.smooth_subset = f.get("smooth_subset", fc.smooth_subset);
  fc.sigma = f.get("sigma", fc.sigma);
  fc.clip_norm = f.get("clip_norm", fc.clip_norm);
  fc.adam = adam_from(f, fc.adam.lr);
  const bool has_weights = f.has("weights");
  const Json weights = f.raw("weights");
  f.finish();
  check_range(fc.duplicates >= 1 && fc.epochs >= 1 && fc.epoch_scale > 0, "duplicates, epochs and epoch_scale must be positive");
  if (fc.include_training_set && training.empty()) throw ConfigError("include_training_set needs 'dataset'");
  auto model = load_model(model_path);
  const Category category = category_from_string(model->config().category);
  if (has_weights) fc.weights = weights_from(weights, category_schedule(category).back().weights, "weights");
  const auto new_shapes = load_dataset(shape_file);
  const ShapeData shape = pick_shape(new_shapes, index);
  const auto train_set = training.empty() ? std::vector<ShapeData>{} : load_dataset(training);
  check_dataset_fits(*model, {shape});
  check_dataset_fits(*model, train_set);
  std::string csv = metrics_csv_header();
  const FitResult r = fit_new_shape(*model, shape, train_set, fc, [&](const EpochMetrics& m) {
    csv += metrics_csv_row(m);
    if (log) log(metrics_json(m).dump());
  });
  fs::create_directories(out);
  write_text_atomic(out / "metrics.csv", csv);
  model->to_checkpoint().save(out / "model.auvn");
  return {{"shape", shape.name},
          {"epochs", r.metrics.size()},
          {"basis_hash_before", hex(r.basis_hash_before)},
          {"basis_hash_after", hex(r.basis_hash_after)},
          {"basis_constant", r.basis_constant},
          {"color_loss", !shape.colorless},
          {"final", r.metrics.empty() ? Json(nullptr) : metrics_json(r.metrics.back())},
          {"checkpoint", (out / "model.auvn").string()}};
}

// ------------------------------------------------------------------ eval-seg

Json eval_seg(Fields& f, const LogFn& log) {
  const fs::path model_path = f.need<std::string>("model");
  const fs::path dataset = f.need<std::string>("dataset");
  const int exemplar = f.get("exemplar", 0);
  const int R = f.get("resolution", 256);
  int label_count = f.get("label_count", 0);
  const std::string out = f.get<std::string>("out", "");
  f.finish();
  check_range(R >= 1 && R <= 8192, "resolution must be in [1, 8192]");
  auto model = load_model(model_path);
  const auto shapes = load_dataset(dataset);
  check_dataset_fits(*model, shapes);
  const ShapeData& ex = pick_shape(shapes, exemplar);
  for (const ShapeData& s : shapes)
    if (s.labels.empty()) throw DataError("shape '" + s.name + "' carries no ground-truth labels");
  if (label_count <= 0)
    for (const ShapeData& s : shapes)
      for (int l : s.labels) label_count = std::max(label_count, l + 1);
  const LabelMap map = label_map_from_points(map_points(*model, ex.grid, ex.points, ex.normals), ex.labels,
                                             label_count, R);
  Json per_shape = Json::array();
  double sum = 0;
  int n = 0;
  std::vector<double> class_sum(static_cast<std::size_t>(label_count), 0.0);
  std::vector<int> class_n(static_cast<std::size_t>(label_count), 0);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (static_cast<int>(i) == exemplar) continue;
    const ShapeData& s = shapes[i];
    const auto pred = segment_points(map_points(*model, s.grid, s.points, s.normals), map);
    const auto ious = iou(pred, s.labels, label_count);
    const double m = mean_iou(pred, s.labels, label_count);
    Json cls = Json::array();
    for (std::size_t c = 0; c < ious.size(); ++c) {
      cls.push_back(num(ious[c]));
      if (!std::isnan(ious[c])) {
        class_sum[c] += ious[c];
        ++class_n[c];
      }
    }
    per_shape.push_back({{"name", s.name}, {"miou", num(m)}, {"iou", cls}});
    sum += m;
    ++n;
    if (log) log(s.name + " mIoU " + std::to_string(m));
  }
  Json per_class = Json::array();
  for (std::size_t c = 0; c < class_sum.size(); ++c) per_class.push_back(class_n[c] ? num(class_sum[c] / class_n[c]) : Json(nullptr));
  Json report{{"exemplar", ex.name},
              {"label_count", label_count},
              {"mean_iou", n ? num(sum / n) : Json(nullptr)},
              {"class_iou", per_class},
              {"shapes", per_shape}};
  if (!out.empty()) write_text_atomic(out, report.dump(2) + "\n");
  return report;
}

// ------------------------------------------------------------ eval-landmarks

Json eval_landmarks(Fields& f, const LogFn&) {
  const fs::path model_path = f.need<std::string>("model");
  const std::string dataset = f.get<std::string>("dataset", "");
  const std::string toy = f.get<std::string>("toy_data", "");
  const std::string out = f.get<std::string>("out", "");
  f.finish();
  if (dataset.empty() == toy.empty()) throw ConfigError("give exactly one of 'dataset' and 'toy_data'");
  if (!toy.empty()) require_dir(toy, "toy data directory");
  auto model = load_model(model_path);
  LandmarkStats stats;
  if (!toy.empty()) {
    stats = toy_landmark_stats(*model, load_toy_images(toy));
  } else {
    const auto shapes = load_dataset(dataset);
    check_dataset_fits(*model, shapes);
    std::vector<std::vector<Vec3>> lms;
    for (const ShapeData& s : shapes) {
      if (s.landmarks.empty()) throw DataError("shape '" + s.name + "' carries no landmarks");
      lms.push_back(s.landmarks);
    }
    stats = shape_landmark_stats(*model, shapes, lms);
  }
  Json report{{"landmarks", landmark_json(stats)}};
  if (!out.empty()) write_text_atomic(out, report.dump(2) + "\n");
  return report;
}

// -------------------------------------------------------------- render-basis

Json render_basis(Fields& f, const LogFn& log) {
  const fs::path model_path = f.need<std::string>("model");
  const int R = f.get("grid", 256);
  const fs::path out = f.need<std::string>("out");
  f.finish();
  check_range(R >= 2 && R <= 4096, "grid must be in [2, 4096]");
  auto model = load_model(model_path);
  Tensor<float> uv({R * R, 2});
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < R; ++x) {
      uv.at(y * R + x, 0) = static_cast<float>(texel_to_uv(x, R));
      uv.at(y * R + x, 1) = static_cast<float>(texel_to_uv(y, R));
    }
  fs::create_directories(out);
  Json counts = Json::array();
  for (int k = 0; k < model->config().generator_count(); ++k) {
    const Tensor<float> b = model->eval_basis(k, uv);
    const int N = b.dim(1);
    for (int n = 0; n < N; ++n) {
      float lo = b.at(0, n), hi = lo;
      for (int i = 0; i < R * R; ++i) {
        lo = std::min(lo, b.at(i, n));
        hi = std::max(hi, b.at(i, n));
      }
      const float span = hi > lo ? hi - lo : 1.0f;
      std::vector<unsigned char> bytes(static_cast<std::size_t>(R) * R);
      for (int i = 0; i < R * R; ++i)
        bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround((b.at(i, n) - lo) / span * 255.0f));
      char name[48];
      std::snprintf(name, sizeof name, "basis_g%d_%03d.png", k, n);
      write_png_raw(out / name, R, R, 1, bytes);
    }
    counts.push_back(N);
    if (log) log("generator " + std::to_string(k) + ": " + std::to_string(N) + " basis images");
  }
  return {{"grid", R}, {"basis_images", counts}, {"out", out.string()}};
}

using Handler = Json (*)(Fields&, const LogFn&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h = {
      {"gen-data", gen_data},       {"preprocess", preprocess}, {"train", train},
      {"train-toy", train_toy},     {"bake", bake},             {"transfer", transfer},
      {"fit-new", fit_new},         {"eval-seg", eval_seg},     {"eval-landmarks", eval_landmarks},
      {"render-basis", render_basis}};
  return h;
}

}  // namespace

const std::vector<std::string>& job_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : handlers()) n.push_back(k);
    return n;
  }();
  return names;
}

std::string run_job(const std::string& command, const std::string& config_json, const LogFn& log) {
  Json config;
  try {
    config = config_json.empty() ? Json::object() : Json::parse(config_json);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& [name, fn] : handlers()) {
    if (name != command) continue;
    Fields f(config, command);
    return fn(f, log).dump(2);
  }
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace auv
