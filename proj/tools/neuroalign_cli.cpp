#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "neuroalign/neuroalign.h"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<std::string> subject;
  bool overwrite = false;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& description, Flags& flags,
                      bool config_required) {
  CLI::App* sub = app.add_subcommand(name, description);
  auto* config = sub->add_option("--config", flags.config, "JSON run configuration");
  if (config_required) config->required();
  sub->add_option("--out", flags.out, "output directory")->required();
  sub->add_option("--seed", flags.seed, "override the run seed");
  sub->add_option("--beta", flags.beta, "override the alignment weight (replaces any sweep)");
  sub->add_option("--subject", flags.subject, "restrict to one subject id");
  sub->add_flag("--overwrite", flags.overwrite, "replace an existing output directory instead of suffixing");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-brain representational alignment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(na_version()));

  Flags flags;
  add_command(app, "train", "fine-tune backbones with the fMRI alignment loss", flags, true);
  add_command(app, "eval-fmri", "model-fMRI representational similarity", flags, true);
  add_command(app, "eval-eeg", "model-EEG temporal similarity", flags, true);
  add_command(app, "dims", "object-dimension partial correlation profile", flags, true);
  add_command(app, "report", "merge the runs found under --out into --out/report", flags, false);
  add_command(app, "synth", "write a synthetic dataset and a matching config", flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  na_run_options opts{};
  opts.command = command.c_str();
  opts.config_path = flags.config.empty() ? nullptr : flags.config.c_str();
  opts.out_dir = flags.out.c_str();
  opts.has_seed = flags.seed.has_value();
  opts.seed = flags.seed.value_or(0);
  opts.has_beta = flags.beta.has_value();
  opts.beta = flags.beta.value_or(0.0);
  opts.subject = flags.subject ? flags.subject->c_str() : nullptr;
  opts.overwrite = flags.overwrite ? 1 : 0;

  const char* run_dir = nullptr;
  const na_status status = na_run(&opts, &run_dir);
  if (status == NA_OK) {
    std::cout << run_dir << "\n";
    return 0;
  }
  std::cerr << "error: " << na_last_error() << "\n";
  return status == NA_ERR_INVALID_ARGUMENT ? 2 : static_cast<int>(status);
}
