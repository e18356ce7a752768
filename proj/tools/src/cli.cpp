#include "biasforge/cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>
#include <string>

#include "biasforge/pipeline.hpp"

namespace biasforge {

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string checkpoint;
  std::string input;
  bool override_hash = false;
  int count = 64;
  int size = 16;
};

using Command = std::function<void(const RunContext&)>;

const std::map<std::string, std::pair<std::string, Command>>& commands() {
  static const std::map<std::string, std::pair<std::string, Command>> table{
      {"analyze", {"Detect underrepresented attributes and skin tones", cmd_analyze}},
      {"train-skin", {"Train the WGAN-GP skin-tone model", cmd_train_skin}},
      {"train-ergan", {"Train the eyeglasses-removal model", cmd_train_ergan}},
      {"train-enhance", {"Train the double-tail enhancement model", cmd_train_enhance}},
      {"generate", {"Run a trained model over a directory of images", cmd_generate}},
      {"enhance", {"Enhance a directory of frames with a trained enhancement model", cmd_enhance}},
      {"evaluate", {"Compute the PSNR/SSIM report for a pairs manifest", cmd_evaluate}},
      {"assemble", {"Add tagged synthetic images to balance flagged attributes", cmd_assemble}},
  };
  return table;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"biasforge: dataset bias detection, synthesis, enhancement and evaluation"};
  app.require_subcommand(1);
  Flags flags;
  std::map<CLI::App*, std::string> names;
  std::map<CLI::App*, CLI::Option*> seed_opts;

  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", flags.config, "Configuration file (key = value)")->required();
    seed_opts[sub] = sub->add_option("--seed", flags.seed, "Master seed (overrides run.seed)");
    sub->add_option("--out", flags.out, "Output directory")->required();
    sub->add_option("--checkpoint", flags.checkpoint, "Checkpoint to load or resume from");
    sub->add_option("--input", flags.input, "Input directory or pairs manifest");
    sub->add_flag("--override-hash", flags.override_hash, "Proceed despite a checkpoint config hash mismatch");
    names[sub] = name;
  }
  auto* synth = app.add_subcommand("synth", "Write a synthetic face fixture dataset");
  synth->add_option("--out", flags.out, "Output directory")->required();
  synth->add_option("--count", flags.count, "Number of faces")->check(CLI::PositiveNumber);
  synth->add_option("--size", flags.size, "Image side length in pixels")->check(CLI::Range(16, 4096));
  synth->add_option("--seed", flags.seed, "Fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  auto* chosen = app.get_subcommands().front();
  try {
    if (chosen == synth) {
      cmd_synth(flags.out, flags.count, flags.size, flags.seed);
      out << "wrote " << flags.count << " faces to " << flags.out << "\n";
      return 0;
    }
    RunContext ctx;
    ctx.config = load_config(flags.config);
    if (seed_opts[chosen]->count() > 0) ctx.config.seed = flags.seed;
    ctx.config.validate();
    ctx.config_text_hash = config_hash(ctx.config);
    ctx.out_dir = flags.out;
    ctx.checkpoint = flags.checkpoint;
    ctx.input = flags.input;
    ctx.override_hash = flags.override_hash;
    ctx.log = &out;
    commands().at(names.at(chosen)).second(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace biasforge
