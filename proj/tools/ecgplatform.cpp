// Platform server: lake + pipeline + feed connectors + HTTP API.

#include <spdlog/spdlog.h>

#include <iostream>

#include "CLI11.hpp"

#include "ecg/api/platform.hpp"
#include "ecg/infer/fixture.hpp"
#include "signals.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ECG platform"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "Run the platform");
  std::string config_path;
  std::string listen;
  serve->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", listen, "Override api.listen (host:port)");

  auto* gen = app.add_subcommand("gen-fixture", "Write fixture model weights + registry.json");
  std::string out_dir = "models";
  gen->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::cout << ecg::infer::write_fixture_registry(out_dir).string() << "\n";
      return 0;
    }
    auto config = ecg::api::load_platform_config(config_path);
    if (!listen.empty()) std::tie(config.listen_host, config.listen_port) = ecg::api::parse_listen(listen);
    if (config.pipeline.clock != ecg::pipeline::ClockMode::Real) {
      std::cerr << "ecgplatform: serve needs pipeline.clock = real\n";
      return 2;
    }
    const auto signals = block_shutdown_signals();
    ecg::pipeline::SystemClock clock;
    ecg::api::Platform platform(std::move(config), clock);
    platform.start();
    const int sig = wait_for_shutdown(signals);
    spdlog::info("signal {}, draining", sig);
    platform.stop();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "ecgplatform: " << e.what() << "\n";
    return 1;
  }
}
