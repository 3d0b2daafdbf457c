#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aadam/config.hpp"
#include "aadam/error.hpp"
#include "aadam/pipeline.hpp"

namespace {

struct CommonArgs {
  std::optional<std::string> config_file;
  std::vector<std::string> assignments;
  bool force = false;
  std::string language;
  std::string run_root;
  std::string seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "INI configuration file");
  cmd->add_option("-s,--set", args.assignments, "Override a key: section.key=value (repeatable)");
  cmd->add_flag("-f,--force", args.force, "Rerun even if a completed run directory exists");
  cmd->add_option("-l,--language", args.language, "Shorthand for global.language");
  cmd->add_option("--run-root", args.run_root, "Shorthand for global.run_root");
  cmd->add_option("--seed", args.seed, "Shorthand for global.seed");
}

aadam::Config resolve(const CommonArgs& args, std::vector<std::string> extra) {
  std::vector<std::string> sets;
  if (!args.language.empty()) sets.push_back("global.language=" + args.language);
  if (!args.run_root.empty()) sets.push_back("global.run_root=" + args.run_root);
  if (!args.seed.empty()) sets.push_back("global.seed=" + args.seed);
  for (auto& e : extra) sets.push_back(std::move(e));
  sets.insert(sets.end(), args.assignments.begin(), args.assignments.end());
  std::optional<std::string> env;
  if (const char* p = std::getenv("AADAM_CONFIG")) env = p;
  return aadam::load_config(args.config_file, env, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic relatedness experiments with adapters, augmentation and cross-lingual transfer"};
  app.require_subcommand(1);

  std::map<std::string, CommonArgs> args;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, args[name]);
    return cmd;
  };

  sub("ingest", "Validate data files, write normalized copies and the vocabulary");
  sub("augment", "Translate English corpora into target languages");
  sub("tapt", "Masked-language-model training on unlabeled text");
  CLI::App* train = sub("train", "TAPT, warmup and final training with dev evaluation");
  bool technique_grid = false;
  train->add_flag("--technique-grid", technique_grid, "Run the TAPT x warmup{none,semrel,stsb} grid");
  sub("transfer", "Select a source, swap language adapters and evaluate zero-shot");
  sub("baseline", "Overlap, static-embedding and contextual baselines");
  CLI::App* evaluate = sub("evaluate", "Score a checkpoint on labeled data");
  std::string checkpoint, data, system;
  evaluate->add_option("--checkpoint", checkpoint, "Shorthand for evaluate.checkpoint");
  evaluate->add_option("--data", data, "Shorthand for evaluate.data");
  evaluate->add_option("--system", system, "Shorthand for evaluate.system");
  sub("report", "Summarize the run directories under the run root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const CommonArgs& common = args[name];
  std::vector<std::string> extra;
  if (!checkpoint.empty()) extra.push_back("evaluate.checkpoint=" + checkpoint);
  if (!data.empty()) extra.push_back("evaluate.data=" + data);
  if (!system.empty()) extra.push_back("evaluate.system=" + system);

  try {
    const aadam::Config config = resolve(common, std::move(extra));
    aadam::CommandOptions options;
    options.force = common.force;
    if (name == "ingest") return aadam::cmd_ingest(config, options, std::cout);
    if (name == "augment") return aadam::cmd_augment(config, options, std::cout);
    if (name == "tapt") return aadam::cmd_tapt(config, options, std::cout);
    if (name == "train") {
      return technique_grid ? aadam::cmd_train_grid(config, options, std::cout)
                            : aadam::cmd_train(config, options, std::cout);
    }
    if (name == "transfer") return aadam::cmd_transfer(config, options, std::cout);
    if (name == "baseline") return aadam::cmd_baseline(config, options, std::cout);
    if (name == "evaluate") return aadam::cmd_evaluate(config, options, std::cout);
    return aadam::cmd_report(config, options, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "aadam " << name << ": " << e.what() << "\n";
    return aadam::exit_code_for(e);
  }
}
