#include "auvnet/auvnet.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <string>

#include "auv/baker.hpp"
#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"
#include "auv/jobs.hpp"

struct auv_model {
  std::unique_ptr<auv::AuvModel<float>> impl;
};

struct auv_dataset {
  std::vector<auv::ShapeData> shapes;
};

namespace {

thread_local std::string last_error;

auv_status fail(auv_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
auv_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return AUV_OK;
  } catch (const auv::ShapeError& e) {
    return fail(AUV_ERR_SHAPE, e.what());
  } catch (const auv::Error& e) {
    switch (e.kind()) {
      case auv::ErrorKind::InvalidArgument: return fail(AUV_ERR_INVALID_ARGUMENT, e.what());
      case auv::ErrorKind::Config: return fail(AUV_ERR_CONFIG, e.what());
      case auv::ErrorKind::Data: return fail(AUV_ERR_DATA, e.what());
      case auv::ErrorKind::Numerical: return fail(AUV_ERR_NUMERICAL, e.what());
      case auv::ErrorKind::Io: return fail(AUV_ERR_IO, e.what());
    }
    return fail(AUV_ERR_INTERNAL, e.what());
  } catch (const std::exception& e) {
    return fail(AUV_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(AUV_ERR_INTERNAL, "unknown failure");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void need(const void* p, const char* what) {
  if (!p) throw auv::Error(auv::ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
}

const auv::ShapeData& shape_at(const auv_dataset* d, int index) {
  need(d, "dataset");
  if (index < 0 || index >= static_cast<int>(d->shapes.size())) {
    throw auv::Error(auv::ErrorKind::InvalidArgument, "shape index out of range");
  }
  return d->shapes[static_cast<std::size_t>(index)];
}

}  // namespace

extern "C" {

const char* auv_version(void) { return "1.0.0"; }

const char* auv_status_name(auv_status s) {
  switch (s) {
    case AUV_OK: return "ok";
    case AUV_ERR_INVALID_ARGUMENT: return "invalid argument";
    case AUV_ERR_CONFIG: return "config error";
    case AUV_ERR_DATA: return "data error";
    case AUV_ERR_NUMERICAL: return "numerical failure";
    case AUV_ERR_SHAPE: return "shape mismatch";
    case AUV_ERR_IO: return "i/o error";
    case AUV_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* auv_last_error(void) { return last_error.c_str(); }

void auv_string_free(char* s) { std::free(s); }

auv_status auv_model_create(const char* config_json, auv_model** out) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out, "out");
    *out = nullptr;
    const auto cfg = auv::ModelConfig::from_json(config_json);
    *out = new auv_model{std::make_unique<auv::AuvModel<float>>(cfg)};
  });
}

auv_status auv_model_load(const char* path, auv_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new auv_model{auv::AuvModel<float>::from_checkpoint(auv::Checkpoint::load(path))};
  });
}

auv_status auv_model_save(auv_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->impl->to_checkpoint().save(path);
  });
}

void auv_model_free(auv_model* model) { delete model; }

auv_status auv_model_config(const auv_model* model, char** config_json) {
  return guarded([&] {
    need(model, "model");
    need(config_json, "config_json");
    *config_json = dup(model->impl->config().to_json());
  });
}

auv_status auv_model_parameter_count(auv_model* model, size_t* count) {
  return guarded([&] {
    need(model, "model");
    need(count, "count");
    *count = model->impl->parameter_count();
  });
}

auv_status auv_model_basis_hash(auv_model* model, uint64_t* hash) {
  return guarded([&] {
    need(model, "model");
    need(hash, "hash");
    *hash = model->impl->basis_hash();
  });
}

auv_status auv_model_generator_count(const auv_model* model, int* count) {
  return guarded([&] {
    need(model, "model");
    need(count, "count");
    *count = model->impl->config().generator_count();
  });
}

auv_status auv_model_eval_basis(auv_model* model, int k, const float* uv, size_t n, float* values,
                                size_t values_capacity, int* channels) {
  return guarded([&] {
    need(model, "model");
    need(uv, "uv");
    need(values, "values");
    const auto& cfg = model->impl->config();
    if (k < 0 || k >= cfg.generator_count()) throw auv::Error(auv::ErrorKind::InvalidArgument, "generator index out of range");
    const int N = cfg.generators[static_cast<std::size_t>(k)].channels;
    if (values_capacity < n * static_cast<size_t>(N)) throw auv::Error(auv::ErrorKind::InvalidArgument, "values buffer too small");
    auv::Tensor<float> q({static_cast<int>(n), 2});
    std::memcpy(q.data(), uv, n * 2 * sizeof(float));
    const auv::Tensor<float> b = model->impl->eval_basis(k, q);
    std::memcpy(values, b.data(), b.size() * sizeof(float));
    if (channels) *channels = N;
  });
}

auv_status auv_dataset_load(const char* path, auv_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new auv_dataset{auv::load_shapes(path)};
  });
}

void auv_dataset_free(auv_dataset* dataset) { delete dataset; }

auv_status auv_dataset_size(const auv_dataset* dataset, int* count) {
  return guarded([&] {
    need(dataset, "dataset");
    need(count, "count");
    *count = static_cast<int>(dataset->shapes.size());
  });
}

auv_status auv_dataset_point_count(const auv_dataset* dataset, int index, int* count) {
  return guarded([&] {
    need(count, "count");
    *count = shape_at(dataset, index).size();
  });
}

auv_status auv_map_shape(auv_model* model, const auv_dataset* dataset, int index, float* uv, size_t uv_capacity,
                         float* masks, size_t masks_capacity) {
  return guarded([&] {
    need(model, "model");
    need(uv, "uv");
    const auv::ShapeData& s = shape_at(dataset, index);
    const auto n = static_cast<size_t>(s.size());
    const auto K = static_cast<size_t>(model->impl->config().generator_count());
    if (uv_capacity < n * 2 || (masks && masks_capacity < n * K)) {
      throw auv::Error(auv::ErrorKind::InvalidArgument, "output buffer too small");
    }
    const auv::PointMapping m = auv::map_points(*model->impl, s.grid, s.points, s.normals);
    std::memcpy(uv, m.uv.data(), n * 2 * sizeof(float));
    if (masks) std::memcpy(masks, m.masks.data(), n * K * sizeof(float));
  });
}

auv_status auv_run(const char* command, const char* config_json, auv_log_fn log, void* user, char** report) {
  return guarded([&] {
    need(command, "command");
    auv::LogFn fn;
    if (log) fn = [log, user](const std::string& line) { log(line.c_str(), user); };
    const std::string r = auv::run_job(command, config_json ? config_json : "", fn);
    if (report) *report = dup(r);
  });
}

const char* auv_commands(void) {
  static const std::string list = [] {
    std::string s;
    for (const auto& n : auv::job_names()) {
      s += n;
      s.push_back('\0');
    }
    return s;
  }();
  return list.c_str();
}

double auv_psnr(const float* a, const float* b, size_t n) {
  if (!a || !b || n == 0) return std::numeric_limits<double>::quiet_NaN();
  double se = 0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / se);
}

}  // extern "C"
