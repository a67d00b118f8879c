#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twistderiv/cli.hpp"

namespace cli = twistderiv::cli;

int main(int argc, char** argv) {
  CLI::App app{"Central derivatives of quadratic twists, identity verifiers and family scans"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::version));

  struct Command {
    CLI::App* sub;
    std::string config_file;
    std::vector<std::string> settings;
  };
  const std::map<std::string, std::string> about{
      {"lvalue", "L'(1/2) and L(1/2) of one twist, optionally against the oracle"},
      {"scan-moment", "first and second moments over the twist family on an X grid"},
      {"nonvanishing", "count of non-vanishing derivatives and the Cauchy-Schwarz bound"},
      {"gauss-verify", "closed-form Gauss sums against brute force"},
      {"poisson-verify", "twisted Poisson summation identity"},
      {"partition-verify", "dyadic partition of unity identities"},
      {"sieve-diagnostic", "quadratic large-sieve ratios on a grid"},
  };
  std::vector<Command> cmds;
  cmds.reserve(cli::commands().size());
  for (const auto& name : cli::commands()) {
    auto& c = cmds.emplace_back();
    c.sub = app.add_subcommand(name, about.at(name));
    c.sub->add_option("--config", c.config_file, "file of key=value lines");
    c.sub->add_option("settings", c.settings, "key=value overrides");
    c.sub->footer(cli::usage_keys(name));
  }
  std::string manifest;
  std::vector<std::string> rerun_settings;
  auto* rerun = app.add_subcommand("rerun", "repeat a run recorded in a manifest");
  rerun->add_option("manifest", manifest, "manifest_<command>.json")->required();
  rerun->add_option("settings", rerun_settings, "out_dir=... or threads=...");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rerun->parsed()) {
      std::vector<cli::Setting> over;
      for (const auto& s : rerun_settings) over.push_back(cli::parse_setting(s));
      return cli::rerun(manifest, over);
    }
    for (const auto& c : cmds) {
      if (!c.sub->parsed()) continue;
      std::vector<cli::Setting> file, line;
      if (!c.config_file.empty()) file = cli::load_settings(c.config_file);
      for (const auto& s : c.settings) line.push_back(cli::parse_setting(s));
      return cli::run(cli::resolve(c.sub->get_name(), cli::layer_settings(file, line)));
    }
  } catch (const cli::config_error& e) {
    std::cerr << "twistderiv: configuration error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
