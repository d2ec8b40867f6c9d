#include <iostream>

#include <CLI11.hpp>

#include "kubocone/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Conical band crossings and longitudinal conductivity of 2D tight-binding models"};
  app.require_subcommand(1);

  kubocone::cli::RunConfig config;
  std::string eta_text;

  auto add_common = [&](CLI::App* sub) {
    auto* model = sub->add_option("--model", config.model_path, "model file (JSON)");
    auto* preset = sub->add_option("--preset", config.preset, "haldane | qwz | square | onsite");
    model->excludes(preset);
    sub->add_option("--params", config.params, "preset parameters, k=v,...");
    sub->add_option("--out", config.out, "output path (default stdout)");
  };

  auto* validate = app.add_subcommand("validate", "check Hermiticity, covariance and derivatives");
  add_common(validate);

  auto* bands = app.add_subcommand("bands", "band structure along a k-path as CSV");
  add_common(bands);
  bands->add_option("--path", config.path, "waypoints in dual coordinates, b1,b2;b1,b2;...");
  bands->add_option("--samples", config.samples, "samples per segment");
  bands->add_option("--svg", config.svg, "SVG plot path");

  auto* fermi = app.add_subcommand("fermi-points", "locate and fit Fermi points");
  add_common(fermi);
  fermi->add_option("--coarse", config.coarse, "coarse scan grid size");

  auto* sigma = app.add_subcommand("sigma", "longitudinal conductivity");
  add_common(sigma);
  sigma->add_option("--method", config.method, "closed | kubo");
  sigma->add_option("--directions", config.directions, "e.g. 11,22,12");
  sigma->add_option("--grid", config.grid, "base grid size");
  sigma->add_option("--eta-seq", eta_text, "halving eta sequence a,b,c");
  sigma->add_option("--coarse", config.coarse, "coarse scan grid size");
  sigma->add_option("--csv", config.csv, "sigma-hat sequence CSV path");

  auto* verify = app.add_subcommand("verify", "run the identity cross-checks");
  add_common(verify);
  verify->add_option("--directions", config.directions, "e.g. 11,22");
  verify->add_option("--grid", config.grid, "base grid size");
  verify->add_option("--eta-seq", eta_text, "halving eta sequence a,b,c");
  verify->add_option("--eps", config.eps, "cone neighbourhood size");
  verify->add_option("--coarse", config.coarse, "coarse scan grid size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kubocone::cli::kConfigError;
  }

  config.command = app.get_subcommands().front()->get_name();
  try {
    if (!eta_text.empty()) config.eta_seq = kubocone::cli::parse_list(eta_text);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kubocone::cli::kConfigError;
  }
  return kubocone::cli::run(config, std::cout, std::cerr);
}
