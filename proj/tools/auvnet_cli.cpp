#include <CLI11.hpp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "auvnet/auvnet.h"

namespace {

using Json = nlohmann::json;

enum class Kind { Text, Int, Real };

struct Flag {
  std::string name;  // without dashes
  std::string key;   // config key it overrides
  Kind kind;
  std::string help;
};

const std::map<std::string, std::vector<Flag>>& command_flags() {
  static const std::map<std::string, std::vector<Flag>> m = {
      {"gen-data",
       {{"kind", "kind", Kind::Text, "toy or heads"},
        {"count", "count", Kind::Int, "number of items"},
        {"size", "size", Kind::Int, "toy image size"}}},
      {"preprocess",
       {{"input", "input", Kind::Text, "directory of OBJ meshes"},
        {"points", "points", Kind::Int, "surface samples per shape"},
        {"resolution", "grid_resolution", Kind::Int, "voxel grid resolution"}}},
      {"train",
       {{"category", "category", Kind::Text, "shape category"},
        {"dataset", "dataset", Kind::Text, "preprocessed dataset"},
        {"epoch-scale", "epoch_scale", Kind::Real, "epoch multiplier"}}},
      {"train-toy",
       {{"data", "data", Kind::Text, "toy image directory"},
        {"epochs", "epochs", Kind::Int, "epochs before scaling"},
        {"epoch-scale", "epoch_scale", Kind::Real, "epoch multiplier"}}},
      {"bake",
       {{"model", "model", Kind::Text, "model checkpoint"},
        {"dataset", "dataset", Kind::Text, "preprocessed dataset"},
        {"shape", "shape", Kind::Int, "shape index"},
        {"mesh", "mesh", Kind::Text, "OBJ to export with the baked textures"},
        {"resolution", "resolution", Kind::Int, "texture resolution"}}},
      {"transfer",
       {{"geometry", "geometry", Kind::Text, "export prefix supplying geometry"},
        {"textures", "textures", Kind::Text, "export prefix supplying textures"},
        {"name", "name", Kind::Text, "output name"}}},
      {"fit-new",
       {{"model", "model", Kind::Text, "model checkpoint"},
        {"shape-dataset", "shape_dataset", Kind::Text, "dataset holding the new shape"},
        {"shape", "shape", Kind::Int, "index of the new shape"},
        {"dataset", "dataset", Kind::Text, "training set to mix in"},
        {"epoch-scale", "epoch_scale", Kind::Real, "epoch multiplier"}}},
      {"eval-seg",
       {{"model", "model", Kind::Text, "model checkpoint"},
        {"dataset", "dataset", Kind::Text, "labeled dataset"},
        {"exemplar", "exemplar", Kind::Int, "index of the labeled exemplar"},
        {"resolution", "resolution", Kind::Int, "label map resolution"}}},
      {"eval-landmarks",
       {{"model", "model", Kind::Text, "model checkpoint"},
        {"dataset", "dataset", Kind::Text, "dataset with landmarks"},
        {"toy-data", "toy_data", Kind::Text, "toy image directory"}}},
      {"render-basis",
       {{"model", "model", Kind::Text, "model checkpoint"},
        {"grid", "grid", Kind::Int, "raster size"},
        {"resolution", "grid", Kind::Int, "alias of --grid"}}},
  };
  return m;
}

const std::map<std::string, std::string>& command_help() {
  static const std::map<std::string, std::string> m = {
      {"gen-data", "write synthetic toy faces or heads"},
      {"preprocess", "sample and voxelize a mesh folder into a dataset"},
      {"train", "staged training on a 3D dataset"},
      {"train-toy", "train on 2D toy images"},
      {"bake", "bake (and optionally export) one shape's textures"},
      {"transfer", "put one export's textures on another's geometry"},
      {"fit-new", "fit an unseen shape with the basis frozen"},
      {"eval-seg", "one-shot segmentation IOU from a labeled exemplar"},
      {"eval-landmarks", "landmark UV spread against input spread"},
      {"render-basis", "write basis images as PNGs"},
  };
  return m;
}

// Commands that take a seed / an output path.
bool takes_seed(const std::string& c) {
  return c == "gen-data" || c == "preprocess" || c == "train" || c == "train-toy" || c == "fit-new";
}

int exit_code(auv_status s) {
  switch (s) {
    case AUV_OK: return 0;
    case AUV_ERR_CONFIG:
    case AUV_ERR_INVALID_ARGUMENT: return 2;
    case AUV_ERR_DATA:
    case AUV_ERR_SHAPE:
    case AUV_ERR_IO: return 3;
    case AUV_ERR_NUMERICAL: return 4;
    default: return 1;
  }
}

void log_line(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aligned UV texture networks: data generation, training, baking and evaluation."};
  app.require_subcommand(1);

  struct Parsed {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::map<std::string, std::string> values;
  };
  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;

  const char* list = auv_commands();
  for (const char* p = list; *p; p += std::strlen(p) + 1) {
    const std::string name = p;
    const auto help = command_help().find(name);
    CLI::App* sub = app.add_subcommand(name, help == command_help().end() ? "" : help->second);
    subs[name] = sub;
    Parsed& st = parsed[name];
    sub->add_option("--config", st.config, "JSON run config");
    sub->add_option("--out", st.out, "output path");
    if (takes_seed(name)) sub->add_option("--seed", st.seed, "random seed");
    auto it = command_flags().find(name);
    if (it != command_flags().end())
      for (const Flag& f : it->second) sub->add_option("--" + f.name, st.values[f.name], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    const Parsed& st = parsed[name];
    Json cfg = Json::object();
    if (!st.config.empty()) {
      std::ifstream in(st.config);
      if (!in) {
        std::cerr << "error: cannot open config '" << st.config << "'\n";
        return 2;
      }
      try {
        cfg = Json::parse(in);
      } catch (const Json::exception& e) {
        std::cerr << "error: config '" << st.config << "' is not valid JSON: " << e.what() << "\n";
        return 2;
      }
      if (!cfg.is_object()) {
        std::cerr << "error: config '" << st.config << "' must hold a JSON object\n";
        return 2;
      }
    }
    if (st.seed) cfg["seed"] = *st.seed;
    if (!st.out.empty()) cfg["out"] = st.out;
    auto it = command_flags().find(name);
    if (it != command_flags().end())
      for (const Flag& f : it->second) {
        const std::string& v = st.values.at(f.name);
        if (sub->count("--" + f.name) == 0) continue;
        try {
          if (f.kind == Kind::Int) cfg[f.key] = std::stoll(v);
          else if (f.kind == Kind::Real) cfg[f.key] = std::stod(v);
          else cfg[f.key] = v;
        } catch (const std::exception&) {
          std::cerr << "error: --" << f.name << " expects a number, got '" << v << "'\n";
          return 2;
        }
      }
    char* report = nullptr;
    const auv_status s = auv_run(name.c_str(), cfg.dump().c_str(), log_line, nullptr, &report);
    if (s != AUV_OK) {
      std::cerr << "error (" << auv_status_name(s) << "): " << auv_last_error() << "\n";
      return exit_code(s);
    }
    std::cout << report << "\n";
    auv_string_free(report);
    return 0;
  }
  return 2;
}
