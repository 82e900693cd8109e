// Turnaround time trials.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "ecg/sim/bench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ECG platform timing harness"};
  app.require_subcommand(1);
  auto* trials = app.add_subcommand("trials", "Run acquire-to-results time trials");

  std::string device = "kardia";
  std::string mode = "injected";
  std::string report_path;
  ecg::sim::TrialOptions opts;
  std::string workdir;
  std::string registry;
  double upload = -1, pickup = -1, inference = -1, publish = -1;

  trials->add_option("--device", device, "kardia | watch | fitbit")
      ->check(CLI::IsMember({"kardia", "watch", "fitbit"}));
  trials->add_option("--n", opts.n, "Number of trials")->check(CLI::PositiveNumber);
  trials->add_option("--mode", mode, "injected | wall")->check(CLI::IsMember({"injected", "wall"}));
  trials->add_option("--report", report_path, "Write the report (.json or .md)");
  trials->add_option("--interval", opts.poll_interval_s, "Poll interval in seconds");
  trials->add_option("--seed", opts.seed, "Seed for payloads and arrival times");
  trials->add_option("--workdir", workdir, "Keep the scratch lake here");
  trials->add_option("--registry", registry, "Model registry (default: fixture models)");
  trials->add_option("--upload", upload, "Injected upload_s");
  trials->add_option("--pickup", pickup, "Injected pickup_s");
  trials->add_option("--inference", inference, "Injected inference_s");
  trials->add_option("--publish", publish, "Injected publish_s");

  CLI11_PARSE(app, argc, argv);

  try {
    opts.device = device == "watch"    ? ecg::DeviceKind::AppleWatch
                  : device == "fitbit" ? ecg::DeviceKind::Fitbit
                                       : ecg::DeviceKind::Kardia;
    opts.mode = ecg::sim::parse_trial_mode(mode);
    opts.workdir = workdir;
    opts.registry = registry;
    auto d = ecg::sim::reference_delays(opts.device);
    if (upload >= 0) d.upload_s = upload;
    if (pickup >= 0) d.pickup_s = pickup;
    if (inference >= 0) d.inference_s = inference;
    if (publish >= 0) d.publish_s = publish;
    opts.delays = d;

    const auto report = ecg::sim::run_time_trials(opts);
    const auto md = ecg::sim::to_markdown(report);
    std::cout << md;
    if (!report_path.empty()) {
      std::ofstream out(report_path);
      const bool json_out = report_path.size() >= 5 &&
                            report_path.compare(report_path.size() - 5, 5, ".json") == 0;
      out << (json_out ? ecg::sim::to_json(report).dump(2) + "\n" : md);
      if (!out) {
        std::cerr << "ecgbench: cannot write " << report_path << "\n";
        return 1;
      }
    }
    return report.succeeded == static_cast<std::size_t>(report.requested) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ecgbench: " << e.what() << "\n";
    return 1;
  }
}
