// gapkit command-line front end.
//
//   gapkit <command> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]
//
// Exit status: 0 all validity checks pass, 1 a check failed or a module raised,
// 2 usage or configuration error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gapkit/config.hpp"
#include "gapkit/parallel.hpp"
#include "gapkit/pipeline.hpp"

namespace {

int emit_error(const std::string& command, const std::string& kind, const std::string& message, int code) {
  std::cout << gapkit::error_json(command, kind, message).dump(2) << "\n";
  std::cerr << "gapkit " << command << ": " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-operator toolkit for randomly perturbed recurrences"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string chosen;
  for (const auto& name : gapkit::command_names()) {
    auto* sub = app.add_subcommand(name, "run " + name);
    sub->add_option("--config", config_path, "TOML configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_option("--seed", seed, "seed (overrides [simulation] seed)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  gapkit::RunConfig cfg;
  try {
    cfg = gapkit::load_config(config_path);
  } catch (const gapkit::ConfigError& e) {
    return emit_error(chosen, "config", e.what(), 2);
  }
  auto* sub = app.get_subcommand(chosen);
  if (sub->count("--out")) cfg.out_dir = out_dir;
  if (sub->count("--seed")) cfg.seed = seed;
  gapkit::set_thread_count(threads);

  try {
    auto result = gapkit::run_command(chosen, cfg);
    std::cout << result.doc.dump(2) << "\n";
    return result.ok ? 0 : 1;
  } catch (const std::exception& e) {
    return emit_error(chosen, "runtime", e.what(), 1);
  }
}
