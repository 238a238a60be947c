#include "ld/artifact.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ld/errors.hpp"

namespace ld {

using nlohmann::ordered_json;

namespace {

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["algo"] = to_string(c.algo);
  j["arch"] = to_string(c.arch);
  j["hidden"] = c.hidden;
  j["feature_dim"] = c.feature_dim;
  j["source_dataset"] = c.source_dataset;
  j["target_dataset"] = c.target_dataset;
  j["base_examples"] = c.base_examples;
  j["base_mode"] = c.base_mode ? ordered_json(to_string(*c.base_mode)) : ordered_json(nullptr);
  j["epochs"] = c.epochs;
  j["outer_batch"] = c.outer_batch;
  j["inner_batch"] = c.inner_batch;
  j["beta"] = c.beta;
  j["alpha"] = c.alpha;
  j["lambda"] = c.lambda;
  j["moving_window"] = c.moving_window;
  j["patience"] = c.patience;
  j["val_frac"] = c.val_frac;
  j["seed"] = c.seed;
  j["target_subsample"] = c.target_subsample ? ordered_json(*c.target_subsample) : ordered_json(nullptr);
  j["max_iterations"] = c.max_iterations ? ordered_json(*c.max_iterations) : ordered_json(nullptr);
  j["validate_each_epoch"] = c.validate_each_epoch;
  j["clip_norm"] = c.clip_norm ? ordered_json(*c.clip_norm) : ordered_json(nullptr);
  return j;
}

template <typename T>
std::optional<T> optional_field(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

RunConfig config_from(const ordered_json& j) {
  RunConfig c;
  c.algo = parse_algo(j.at("algo").get<std::string>());
  c.arch = parse_arch_kind(j.at("arch").get<std::string>());
  c.hidden = j.at("hidden").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.source_dataset = j.at("source_dataset").get<std::string>();
  c.target_dataset = j.at("target_dataset").get<std::string>();
  c.base_examples = j.at("base_examples").get<std::size_t>();
  if (auto m = optional_field<std::string>(j, "base_mode")) c.base_mode = parse_base_mode(*m);
  c.epochs = j.at("epochs").get<std::size_t>();
  c.outer_batch = j.at("outer_batch").get<std::size_t>();
  c.inner_batch = j.at("inner_batch").get<std::size_t>();
  c.beta = j.at("beta").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.moving_window = j.at("moving_window").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.val_frac = j.at("val_frac").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.target_subsample = optional_field<std::size_t>(j, "target_subsample");
  c.max_iterations = optional_field<std::size_t>(j, "max_iterations");
  c.validate_each_epoch = j.at("validate_each_epoch").get<bool>();
  c.clip_norm = optional_field<double>(j, "clip_norm");
  return c;
}

ordered_json parse_or_throw(const std::string& text, const char* what) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleArtifact(std::string(what) + ": not valid JSON (" + e.what() + ")");
  }
}

}  // namespace

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  const ordered_json j = parse_or_throw(text, "config");
  try {
    return config_from(j);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleArtifact(std::string("config: ") + e.what());
  }
}

std::string artifact_to_json(const DistillArtifact& a) {
  ordered_json j;
  j["format_version"] = a.format_version;
  j["source_dataset"] = a.source_dataset;
  j["target_dataset"] = a.target_dataset;
  j["base_indices"] = a.base_indices;
  j["labels"] = {{"shape", a.labels.shape()},
                 {"data", std::vector<double>(a.labels.data().begin(), a.labels.data().end())}};
  j["steps"] = a.steps;
  j["steps_median"] = a.steps_median;
  j["resets"] = a.resets;
  j["iterations"] = a.iterations;
  j["seed"] = a.seed;
  j["val_acc"] = a.val_acc;
  j["selected_epoch"] = a.selected_epoch;
  j["val_history"] = a.val_history;
  j["config"] = config_json(a.config);
  return j.dump(1) + "\n";
}

DistillArtifact artifact_from_json(const std::string& text) {
  const ordered_json j = parse_or_throw(text, "artifact");
  DistillArtifact a;
  try {
    a.format_version = j.at("format_version").get<int>();
    if (a.format_version != kArtifactFormatVersion)
      throw IncompatibleArtifact("artifact: format version " + std::to_string(a.format_version) +
                                 " is not supported (expected " + std::to_string(kArtifactFormatVersion) + ")");
    a.source_dataset = j.at("source_dataset").get<std::string>();
    a.target_dataset = j.at("target_dataset").get<std::string>();
    a.base_indices = j.at("base_indices").get<std::vector<std::size_t>>();
    const auto shape = j.at("labels").at("shape").get<Shape>();
    auto data = j.at("labels").at("data").get<std::vector<double>>();
    if (shape.size() != 2) throw IncompatibleArtifact("artifact: labels must be a matrix");
    a.labels = Tensor(shape, std::move(data));
    a.steps = j.at("steps").get<std::size_t>();
    a.steps_median = j.at("steps_median").get<std::size_t>();
    a.resets = j.at("resets").get<std::size_t>();
    a.iterations = j.at("iterations").get<std::size_t>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.val_acc = j.at("val_acc").get<double>();
    a.selected_epoch = j.at("selected_epoch").get<std::size_t>();
    a.val_history = j.at("val_history").get<std::vector<double>>();
    a.config = config_from(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleArtifact(std::string("artifact: ") + e.what());
  } catch (const DimensionError& e) {
    throw IncompatibleArtifact(std::string("artifact: ") + e.what());
  }
  if (a.labels.rows() != a.base_indices.size())
    throw IncompatibleArtifact("artifact: label rows do not match the base indices");
  if (a.steps == 0) throw IncompatibleArtifact("artifact: step budget must be positive");
  return a;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_artifact(const DistillArtifact& artifact, const std::filesystem::path& path) {
  write_text(path, artifact_to_json(artifact));
}

DistillArtifact load_artifact(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("artifact not found: " + path.string());
  return artifact_from_json(read_text(path));
}

}  // namespace ld
