#include <CLI11.hpp>

#include <iostream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <optional>
#include <string>
#include <vector>

#include "gtnet/checkpoint.hpp"
#include "gtnet/cli/commands.hpp"

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, numeric = 3 };

int fail(Exit code, std::string reason) {
  for (char& c : reason)
    if (c == '\n' || c == '\r') c = ' ';
  static constexpr const char* kind[] = {"ok", "usage", "data", "numeric"};
  std::cerr << "gtnet: error=" << kind[code] << " exit=" << int(code) << " reason=" << reason << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace gtnet;
#if defined(__GLIBC__)
  // Activations are large, short-lived buffers; keep them on the heap instead
  // of paying for fresh zeroed pages on every op.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Graph transformer for point clouds"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile, out_dir, checkpoint, axes;
  std::vector<std::string> overrides;
  bool deterministic = false;

  std::vector<CLI::App*> commands;
  for (const char* name : {"train", "eval", "ablate", "export"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed for weights, data and shuffling");
    sub->add_flag("--deterministic", deterministic, "serial, seed-fixed execution");
    sub->add_option("--profile", profile, "base defaults")
        ->check(CLI::IsMember({"modelnet40", "shapenet", "s3dis", "synth-cls", "synth-seg"}));
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--checkpoint", checkpoint, "checkpoint file");
    sub->add_option("--set", overrides, "extra key=value settings, applied last");
    if (std::string(name) == "ablate") sub->add_option("--axes", axes, "comma-separated ablation axes");
    commands.push_back(sub);
  }
  app.description(app.get_description() + "\nExit codes: 0 ok, 1 usage, 2 data, 3 numeric.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(usage, e.what());
  }

  try {
    auto config = cli::load_config(config_path, profile);
    if (seed) cli::apply_setting(config, "seed", std::to_string(*seed));
    if (out_dir) cli::apply_setting(config, "out", *out_dir);
    if (checkpoint) cli::apply_setting(config, "checkpoint", *checkpoint);
    if (axes) cli::apply_setting(config, "ablate_axes", *axes);
    if (deterministic) config.deterministic = true;
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw cli::UsageError("--set expects key=value, got '" + kv + "'");
      cli::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    try {
      config.model.validate();
    } catch (const std::invalid_argument& e) {
      throw cli::UsageError(e.what());
    }

    if (commands[0]->parsed()) cli::cmd_train(config, std::cout);
    else if (commands[1]->parsed()) cli::cmd_eval(config, std::cout);
    else if (commands[2]->parsed()) cli::cmd_ablate(config, std::cout);
    else cli::cmd_export(config, std::cout);
  } catch (const NumericError& e) {
    return fail(numeric, e.what());
  } catch (const cli::UsageError& e) {
    return fail(usage, e.what());
  } catch (const data::DataError& e) {
    return fail(data_error, e.what());
  } catch (const model::CheckpointError& e) {
    return fail(data_error, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(usage, e.what());
  } catch (const std::exception& e) {
    return fail(data_error, e.what());
  }
  return ok;
}
