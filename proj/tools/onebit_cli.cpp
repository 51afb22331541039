// onebit: data generation, training, measurement, reconstruction, sweeps and
// theory checks from the command line.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "onebit/commands.hpp"

namespace {

struct Flags {
  std::string config, out, model, algorithms;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "master seed (overrides config)");
  cmd->add_option("--out", f.out, "output path (overrides config)");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--model", f.model, "model file (overrides config)");
  cmd->add_option("--algorithms", f.algorithms, "comma-separated: gen,gen_noise_aware,biht,yp,gen_pgd");
}

onebit::CommandArgs to_args(const CLI::App* cmd, const Flags& f) {
  onebit::CommandArgs a;
  if (cmd->count("--config")) a.config = f.config;
  if (cmd->count("--seed")) a.seed = f.seed;
  if (cmd->count("--out")) a.out = f.out;
  if (cmd->count("--threads")) a.threads = f.threads;
  if (cmd->count("--model")) a.model = f.model;
  if (cmd->count("--algorithms")) {
    std::vector<std::string> names;
    std::string cur;
    for (char c : f.algorithms + ",") {
      if (c == ',') {
        if (!cur.empty()) names.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur += c;
      }
    }
    a.algorithms = names;
  }
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-bit compressed sensing with generative priors"};
  app.require_subcommand(1);
  Flags flags;
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const onebit::CommandArgs&);
  };
  const std::vector<Entry> entries{
      {"gen-data", "sample a synthetic sparse dataset", onebit::cmd_gen_data},
      {"train", "train a VAE and export its decoder", onebit::cmd_train},
      {"export-decoder", "extract the decoder from a VAE file", onebit::cmd_export_decoder},
      {"measure", "simulate one-bit measurements of one signal", onebit::cmd_measure},
      {"reconstruct", "recover a signal from a measurement file", onebit::cmd_reconstruct},
      {"sweep", "run an experiment grid and write results CSV",
       [](const onebit::CommandArgs& a) { return onebit::cmd_sweep(a); }},
      {"theory-check", "Monte-Carlo and calculator checks", onebit::cmd_theory_check},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_flags(sub, flags);
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return onebit::kExitUsage;
  }
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) return entries[i].run(to_args(subs[i], flags));
  return onebit::kExitUsage;
}
