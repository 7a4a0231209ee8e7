// kinface: synthetic data, CAAE and DNA-Net training, generation, evaluation
// and landmark heritability maps from one binary.
//
// Settings resolve as defaults < --config file < individual flags. Exit code
// 2 means the configuration was rejected before any work started, 1 means a
// runtime failure.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "kinface/cli/commands.hpp"

namespace {

using namespace kinface;

// Short spellings per subcommand, on top of the dashed field names.
const std::map<std::string, std::map<std::string, std::string>>& aliases() {
  static const std::map<std::string, std::map<std::string, std::string>> table{
      {"synth-data", {{"output_dir", "--out"}}},
      {"train-caae", {{"output_dir", "--out"}, {"faces_dir", "--faces"}}},
      {"train-dnanet", {{"output_dir", "--out"}, {"caae_checkpoint", "--caae"}}},
      {"generate",
       {{"output_dir", "--out"},
        {"sampling_seed", "--seed"},
        {"selection_mode", "--mode"},
        {"father_image", "--father"},
        {"mother_image", "--mother"},
        {"child_age", "--age"},
        {"child_gender", "--gender"},
        {"age_sweep", "--ages"},
        {"caae_checkpoint", "--caae"},
        {"dnanet_checkpoint", "--dnanet"}}},
      {"evaluate", {{"output_dir", "--out"}, {"caae_checkpoint", "--caae"}, {"dnanet_checkpoint", "--dnanet"}}},
      {"heritmap",
       {{"output_dir", "--out"},
        {"father_landmarks", "--father"},
        {"mother_landmarks", "--mother"},
        {"child_landmarks", "--child"},
        {"landmark_list", "--list"}}},
  };
  return table;
}

std::string type_name(cli::FieldKind kind) {
  switch (kind) {
    case cli::FieldKind::Int: return "INT";
    case cli::FieldKind::Size:
    case cli::FieldKind::Seed: return "UINT";
    case cli::FieldKind::Real: return "REAL";
    case cli::FieldKind::Bool: return "BOOL";
    case cli::FieldKind::Text: return "TEXT";
    case cli::FieldKind::SizeList:
    case cli::FieldKind::IntList: return "LIST";
  }
  return "TEXT";
}

struct SubcommandFlags {
  std::string config_path;
  std::map<std::string, std::string> values;  // field name -> raw flag text
  std::map<std::string, CLI::Option*> options;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinship face synthesis and evaluation"};
  app.require_subcommand(1);

  std::map<std::string, SubcommandFlags> flags;
  for (const auto& name : cli::command_names()) {
    auto* sub = app.add_subcommand(name);
    auto& f = flags[name];
    sub->add_option("--config", f.config_path, "JSON config file");
    const auto& extra = aliases().at(name);
    for (const auto& spec : cli::config_fields()) {
      std::string names = "--" + cli::flag_name(spec.name);
      if (auto it = extra.find(spec.name); it != extra.end()) names += "," + it->second;
      f.options[spec.name] = sub->add_option(names, f.values[spec.name])->type_name(type_name(spec.kind));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  auto& f = flags.at(command);
  cli::RunConfig cfg;
  try {
    if (!f.config_path.empty()) cfg = cli::load_config(f.config_path);
    cli::json overrides = cli::json::object();
    for (const auto& spec : cli::config_fields())
      if (f.options.at(spec.name)->count() > 0) overrides[spec.name] = cli::parse_flag_value(spec, f.values.at(spec.name));
    cfg = cli::apply_json(cfg, overrides);
    cli::validate(cfg);
  } catch (const cli::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  }

  try {
    return cli::run_command(command, cfg);
  } catch (const cli::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
