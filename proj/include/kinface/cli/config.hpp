#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinface/caae/trainer.hpp"
#include "kinface/data/synthetic_world.hpp"
#include "kinface/dnanet/trainer.hpp"

namespace kinface::cli {

using nlohmann::json;

/// Bad configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

struct RunConfig {
  int config_version = kConfigVersion;

  // architecture
  std::size_t image_side = 32;
  std::size_t feature_dim = 100;
  std::size_t gene_dim = 100;
  bool allow_gene_dim_mismatch = false;
  std::vector<std::size_t> encoder_widths{32, 64, 128, 256};
  std::size_t kernel = 5;
  std::vector<std::size_t> dz_widths{64, 32};
  std::vector<std::size_t> dimg_widths{16, 32, 64};
  std::vector<std::size_t> dnanet_hidden{128, 128};
  std::vector<std::size_t> dh_widths{64, 32};

  // optimisation
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t caae_epochs = 20;
  std::size_t dnanet_epochs = 100;
  double weight_reconstruction = 1.0;
  double weight_dz = 1.0;
  double weight_dimg = 0.01;
  double weight_dh = 0.1;
  std::string norm = "L2";

  // seeds
  std::uint64_t world_seed = 1;
  std::uint64_t training_seed = 2;
  std::uint64_t sampling_seed = 3;

  // synthetic data
  std::size_t true_gene_dim = 8;
  double label_strength = 0.5;
  std::size_t train_families = 800;
  std::size_t test_families = 200;

  // paths
  std::string faces_dir;
  std::size_t max_images = 0;  // 0 = every image found
  std::string triplets;
  std::string caae_checkpoint;
  std::string dnanet_checkpoint;
  std::string output_dir;

  // generation
  std::string father_image;
  std::string mother_image;
  int child_age = 20;
  int child_gender = 0;
  std::string selection_mode = "max";
  std::size_t siblings = 1;
  std::vector<int> age_sweep;

  // heritability
  std::string father_landmarks;
  std::string mother_landmarks;
  std::string child_landmarks;
  std::string landmark_list;

  caae::CaaeConfig caae_config() const {
    caae::CaaeConfig c;
    c.image_side = image_side;
    c.feature_dim = feature_dim;
    c.encoder_widths = encoder_widths;
    c.kernel = kernel;
    c.dz_widths = dz_widths;
    c.dimg_widths = dimg_widths;
    return c;
  }

  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }

  caae::CaaeTrainConfig caae_train_config() const {
    caae::CaaeTrainConfig c;
    c.adam = adam();
    c.weights = {weight_reconstruction, weight_dz, weight_dimg};
    return c;
  }

  dnanet::DnaNetConfig dnanet_config() const {
    dnanet::DnaNetConfig c;
    c.feature_dim = feature_dim;
    c.gene_dim = gene_dim;
    c.hidden_widths = dnanet_hidden;
    c.dh_widths = dh_widths;
    return c;
  }

  dnanet::DnaNetTrainConfig dnanet_train_config() const {
    dnanet::DnaNetTrainConfig c;
    c.adam = adam();
    c.weights = {weight_reconstruction, weight_dh};
    c.norm = dnanet::parse_norm(norm);
    return c;
  }

  data::SyntheticWorldConfig world_config() const { return {true_gene_dim, image_side, world_seed, label_strength}; }
};

// ---------------------------------------------------------------------------
// Field registry: one entry per config key, used for JSON and for flags.

enum class FieldKind { Int, Size, Seed, Real, Bool, Text, SizeList, IntList };

struct FieldSpec {
  std::string name;
  FieldKind kind;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

namespace detail {

template <typename M>
FieldSpec field(const char* name, FieldKind kind, M RunConfig::*member) {
  return {name, kind, [member](const RunConfig& c) { return json(c.*member); },
          [member, name = std::string(name)](RunConfig& c, const json& v) {
            if constexpr (std::is_integral_v<M> && !std::is_same_v<M, bool>) {
              if (!v.is_number_integer()) throw ConfigError("config field '" + name + "': expected an integer");
              if (std::is_unsigned_v<M> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                throw ConfigError("config field '" + name + "': must be non-negative");
            }
            if constexpr (std::is_same_v<M, std::vector<std::size_t>>) {
              if (!v.is_array()) throw ConfigError("config field '" + name + "': expected a list");
              for (const auto& e : v)
                if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
                  throw ConfigError("config field '" + name + "': entries must be positive integers");
            }
            try {
              c.*member = v.get<M>();
            } catch (const json::exception&) {
              throw ConfigError("config field '" + name + "': wrong type (" + v.dump() + ")");
            }
          }};
}

}  // namespace detail

inline const std::vector<FieldSpec>& config_fields() {
  using detail::field;
  using K = FieldKind;
  static const std::vector<FieldSpec> fields{
      field("config_version", K::Int, &RunConfig::config_version),
      field("image_side", K::Size, &RunConfig::image_side),
      field("feature_dim", K::Size, &RunConfig::feature_dim),
      field("gene_dim", K::Size, &RunConfig::gene_dim),
      field("allow_gene_dim_mismatch", K::Bool, &RunConfig::allow_gene_dim_mismatch),
      field("encoder_widths", K::SizeList, &RunConfig::encoder_widths),
      field("kernel", K::Size, &RunConfig::kernel),
      field("dz_widths", K::SizeList, &RunConfig::dz_widths),
      field("dimg_widths", K::SizeList, &RunConfig::dimg_widths),
      field("dnanet_hidden", K::SizeList, &RunConfig::dnanet_hidden),
      field("dh_widths", K::SizeList, &RunConfig::dh_widths),
      field("learning_rate", K::Real, &RunConfig::learning_rate),
      field("beta1", K::Real, &RunConfig::beta1),
      field("beta2", K::Real, &RunConfig::beta2),
      field("adam_epsilon", K::Real, &RunConfig::adam_epsilon),
      field("batch_size", K::Size, &RunConfig::batch_size),
      field("caae_epochs", K::Size, &RunConfig::caae_epochs),
      field("dnanet_epochs", K::Size, &RunConfig::dnanet_epochs),
      field("weight_reconstruction", K::Real, &RunConfig::weight_reconstruction),
      field("weight_dz", K::Real, &RunConfig::weight_dz),
      field("weight_dimg", K::Real, &RunConfig::weight_dimg),
      field("weight_dh", K::Real, &RunConfig::weight_dh),
      field("norm", K::Text, &RunConfig::norm),
      field("world_seed", K::Seed, &RunConfig::world_seed),
      field("training_seed", K::Seed, &RunConfig::training_seed),
      field("sampling_seed", K::Seed, &RunConfig::sampling_seed),
      field("true_gene_dim", K::Size, &RunConfig::true_gene_dim),
      field("label_strength", K::Real, &RunConfig::label_strength),
      field("train_families", K::Size, &RunConfig::train_families),
      field("test_families", K::Size, &RunConfig::test_families),
      field("faces_dir", K::Text, &RunConfig::faces_dir),
      field("max_images", K::Size, &RunConfig::max_images),
      field("triplets", K::Text, &RunConfig::triplets),
      field("caae_checkpoint", K::Text, &RunConfig::caae_checkpoint),
      field("dnanet_checkpoint", K::Text, &RunConfig::dnanet_checkpoint),
      field("output_dir", K::Text, &RunConfig::output_dir),
      field("father_image", K::Text, &RunConfig::father_image),
      field("mother_image", K::Text, &RunConfig::mother_image),
      field("child_age", K::Int, &RunConfig::child_age),
      field("child_gender", K::Int, &RunConfig::child_gender),
      field("selection_mode", K::Text, &RunConfig::selection_mode),
      field("siblings", K::Size, &RunConfig::siblings),
      field("age_sweep", K::IntList, &RunConfig::age_sweep),
      field("father_landmarks", K::Text, &RunConfig::father_landmarks),
      field("mother_landmarks", K::Text, &RunConfig::mother_landmarks),
      field("child_landmarks", K::Text, &RunConfig::child_landmarks),
      field("landmark_list", K::Text, &RunConfig::landmark_list),
  };
  return fields;
}

inline json to_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& f : config_fields()) j[f.name] = f.get(c);
  return j;
}

/// Applies a flat JSON object on top of `base`. Unknown keys are errors.
inline RunConfig apply_json(RunConfig base, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto& fields = config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const FieldSpec& f) { return f.name == key; });
    if (it == fields.end()) throw ConfigError("config field '" + key + "': unknown field");
    it->set(base, value);
  }
  return base;
}

/// Command-line spelling of a field: dashes instead of underscores.
inline std::string flag_name(std::string field) {
  std::replace(field.begin(), field.end(), '_', '-');
  return field;
}

/// Converts a command-line string to the JSON value for a field.
inline json parse_flag_value(const FieldSpec& f, const std::string& text) {
  auto fail = [&](const char* what) {
    return ConfigError("flag --" + flag_name(f.name) + ": " + what + " (got '" + text + "')");
  };
  auto parse_number = [&](const std::string& s) -> json {
    try {
      std::size_t used = 0;
      if (f.kind == FieldKind::Real) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw fail("expected a number");
        return v;
      }
      if (!s.empty() && s[0] == '-') {
        if (f.kind != FieldKind::Int && f.kind != FieldKind::IntList) throw fail("expected a non-negative integer");
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw fail("expected an integer");
        return v;
      }
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size()) throw fail("expected an integer");
      return v;
    } catch (const std::logic_error&) {
      throw fail("expected a number");
    }
  };
  switch (f.kind) {
    case FieldKind::Text:
      return text;
    case FieldKind::Bool:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw fail("expected true or false");
    case FieldKind::SizeList:
    case FieldKind::IntList: {
      json arr = json::array();
      if (text.empty()) return arr;
      for (const auto& part : data::split(text, ',')) arr.push_back(parse_number(part));
      return arr;
    }
    default:
      return parse_number(text);
  }
}

/// Checks every field; messages name the offending field.
inline void validate(const RunConfig& c) {
  auto bad = [](const std::string& field, const std::string& why) {
    return ConfigError("config field '" + field + "': " + why);
  };
  if (c.config_version != kConfigVersion)
    throw bad("config_version", "unsupported version " + std::to_string(c.config_version) + ", expected " +
                                    std::to_string(kConfigVersion));
  auto positive = [&](const char* name, double v) {
    if (!(v > 0)) throw bad(name, "must be positive");
  };
  auto non_negative = [&](const char* name, double v) {
    if (!(v >= 0)) throw bad(name, "must be non-negative");
  };
  positive("feature_dim", static_cast<double>(c.feature_dim));
  positive("gene_dim", static_cast<double>(c.gene_dim));
  if (c.feature_dim != c.gene_dim && !c.allow_gene_dim_mismatch)
    throw bad("gene_dim", "must equal feature_dim unless allow_gene_dim_mismatch is set");
  positive("learning_rate", c.learning_rate);
  if (!(c.beta1 >= 0 && c.beta1 < 1)) throw bad("beta1", "must lie in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) throw bad("beta2", "must lie in [0, 1)");
  positive("adam_epsilon", c.adam_epsilon);
  if (c.batch_size < 2) throw bad("batch_size", "must be at least 2");
  non_negative("weight_reconstruction", c.weight_reconstruction);
  non_negative("weight_dz", c.weight_dz);
  non_negative("weight_dimg", c.weight_dimg);
  non_negative("weight_dh", c.weight_dh);
  if (c.norm != "L1" && c.norm != "L2") throw bad("norm", "must be L1 or L2");
  positive("true_gene_dim", static_cast<double>(c.true_gene_dim));
  non_negative("label_strength", c.label_strength);
  if (c.child_age < 0) throw bad("child_age", "must be non-negative");
  if (c.child_gender != 0 && c.child_gender != 1) throw bad("child_gender", "must be 0 or 1");
  for (int a : c.age_sweep)
    if (a < 0) throw bad("age_sweep", "ages must be non-negative");
  if (c.selection_mode != "max" && c.selection_mode != "mask") throw bad("selection_mode", "must be max or mask");
  positive("siblings", static_cast<double>(c.siblings));
  if (c.siblings > 1 && c.selection_mode != "mask") throw bad("siblings", "more than one sibling needs selection_mode mask");
  try {
    c.caae_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config (CAAE architecture): ") + e.what());
  }
  try {
    c.dnanet_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config (DNA-Net architecture): ") + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) { return apply_json(RunConfig{}, read_json_file(path)); }

}  // namespace kinface::cli
