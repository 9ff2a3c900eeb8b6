#include "cli.hpp"

#include "commands.hpp"

#include "gridcal/error.hpp"
#include "gridcal/parallel.hpp"
#include "gridcal/tensor_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace gridcal::cli {

namespace {

constexpr const char* kEchoFile = "config.ini";
constexpr const char* kStatusFile = "status.txt";

struct Common {
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct Command {
  CLI::App* app = nullptr;
  std::string* out = nullptr;
  std::function<void()> run;
};

void add_common(CLI::App* sub, Common& common, std::uint64_t* seed, std::string* out) {
  sub->add_option("--seed", seed ? *seed : common.seed, "random seed");
  sub->add_option("--threads", common.threads, "worker cap (0: GRIDCAL_THREADS, else 1)");
  sub->add_option("--out", *out, "output directory")->required();
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void write_status(const std::string& out, const std::string& command, const std::string& code,
                  const std::string& message) {
  if (out.empty() || !fs::is_directory(out)) return;
  std::string text = "command = " + command + "\nstatus = " + (code == "OK" ? "ok" : "error") + "\ncode = " + code +
                     "\n";
  if (!message.empty()) text += "message = " + one_line(message) + "\n";
  try {
    write_text_file(fs::path(out) / kStatusFile, text);
  } catch (const std::exception&) {
    // The error line on stderr still reports the failure.
  }
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"gridcal: uncertainty quantification for gridded traffic forecasts", "gridcal"};
  app.set_config("--config", "", "read options from a config file ([command] sections)");
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<CLI::ConfigINI>());

  Common common;
  std::vector<Command> commands;

  SynthOptions synth;
  {
    auto* sub = app.add_subcommand("synth", "generate a synthetic city");
    add_common(sub, common, &synth.seed, &synth.out);
    sub->add_option("--height", synth.height, "grid rows");
    sub->add_option("--width", synth.width, "grid columns");
    sub->add_option("--days", synth.days, "number of days");
    sub->add_option("--arterials", synth.arterials, "arterial roads");
    sub->add_option("--side-roads", synth.side_roads, "side roads");
    sub->add_option("--weekend-ratio", synth.weekend_ratio, "weekday over weekend volume");
    sub->add_option("--shift", synth.shifts, "kind,row,col,height,width,onset_day,magnitude (repeatable)");
    commands.push_back({sub, &synth.out, [&] { cmd_synth(synth); }});
  }

  TrainOptions train;
  {
    auto* sub = app.add_subcommand("train", "train an ensemble");
    add_common(sub, common, &train.seed, &train.out);
    sub->add_option("--data", train.data, "dataset directory")->required();
    sub->add_option("--model", train.model, "persistence|linear|conv-bn");
    sub->add_option("--members", train.members, "ensemble size M");
    sub->add_option("--epochs", train.epochs, "training epochs");
    sub->add_option("--batch-size", train.batch_size, "mini-batch size");
    sub->add_option("--hidden", train.hidden, "conv-bn hidden width");
    sub->add_option("--lr", train.learning_rate, "learning rate (0: model default)");
    sub->add_option("--horizon", train.horizon, "target horizon in minutes");
    sub->add_option("--split", train.split, "train,val,test day counts");
    sub->add_option("--every", train.every, "keep every n-th training window");
    commands.push_back({sub, &train.out, [&] { cmd_train(train); }});
  }

  EstimateOptions estimate;
  {
    auto* sub = app.add_subcommand("estimate", "estimate mu and sigma on the val and test windows");
    add_common(sub, common, &estimate.seed, &estimate.out);
    sub->add_option("--data", estimate.data, "dataset directory")->required();
    sub->add_option("--model", estimate.model, "trained ensemble directory")->required();
    sub->add_option("--method", estimate.method, "ens|mcbn|tta|patches|tta-ens|patches-ens|cub");
    sub->add_option("--parts", estimate.parts, "comma-separated split parts to estimate");
    sub->add_option("--every", estimate.every, "keep every n-th window");
    sub->add_option("--members", estimate.members, "use the first M members (0: all)");
    sub->add_option("--passes", estimate.passes, "MCBN passes");
    sub->add_option("--patch-size", estimate.patch_size, "patch size d");
    sub->add_option("--stride", estimate.stride, "patch stride s");
    commands.push_back({sub, &estimate.out, [&] { cmd_estimate(estimate); }});
  }

  CalibrateOptions calibrate;
  {
    auto* sub = app.add_subcommand("calibrate", "conformal calibration on val, intervals on test");
    add_common(sub, common, nullptr, &calibrate.out);
    sub->add_option("--estimates", calibrate.estimates, "estimate directory")->required();
    sub->add_option("--alpha", calibrate.alpha, "miscoverage level");
    sub->add_flag("--pooled", calibrate.pooled, "one qhat for all cells");
    sub->add_option("--mask", calibrate.mask, "zero|none for the coverage report");
    commands.push_back({sub, &calibrate.out, [&] { cmd_calibrate(calibrate); }});
  }

  EvaluateOptions evaluate;
  {
    auto* sub = app.add_subcommand("evaluate", "metric table for test estimates");
    add_common(sub, common, nullptr, &evaluate.out);
    sub->add_option("--estimates", evaluate.estimates, "estimate directory")->required();
    sub->add_option("--calibration", evaluate.calibration, "calibration directory (for MPIW)");
    sub->add_option("--mask", evaluate.mask, "zero|none|both");
    sub->add_option("--dataset", evaluate.dataset, "dataset label");
    commands.push_back({sub, &evaluate.out, [&] { cmd_evaluate(evaluate); }});
  }

  OutlierOptions outliers;
  {
    auto* sub = app.add_subcommand("outliers", "flag cells whose uncertainty left its training range");
    add_common(sub, common, &outliers.seed, &outliers.out);
    sub->add_option("--data", outliers.data, "dataset directory")->required();
    sub->add_option("--model", outliers.model, "trained ensemble directory")->required();
    sub->add_option("--method", outliers.method, "uncertainty method");
    sub->add_option("--epsilon", outliers.epsilon, "outlier level");
    sub->add_option("--rule", outliers.rule, "at-most|at-least");
    sub->add_option("--tau", outliers.tau, "target frame of day");
    sub->add_option("--tau-window", outliers.tau_window, "also use targets within this many frames of tau");
    sub->add_option("--members", outliers.members, "use the first M members (0: all)");
    sub->add_option("--passes", outliers.passes, "MCBN passes");
    sub->add_option("--patch-size", outliers.patch_size, "patch size d");
    sub->add_option("--stride", outliers.stride, "patch stride s");
    commands.push_back({sub, &outliers.out, [&] { cmd_outliers(outliers); }});
  }

  ReportOptions report;
  {
    auto* sub = app.add_subcommand("report", "CSV and SVG figures");
    add_common(sub, common, nullptr, &report.out);
    sub->add_option("kind", report.kind, "coverage|metrics")->required();
    sub->add_option("--input", report.input, "calibration directory or metrics file")->required();
    sub->add_option("--bins", report.bins, "histogram bins");
    commands.push_back({sub, &report.out, [&] { cmd_report(report); }});
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: E_USAGE: " << one_line(e.what()) << "\n";
    return 2;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) chosen = &c;
  }
  const std::string name = chosen->app->get_name();
  const std::string& out = *chosen->out;
  std::string code = "OK", message;
  try {
    if (common.threads > 0) set_max_threads(common.threads);
    fs::create_directories(out);
    const std::string echo =
        "# gridcal " + name + "\n[" + name + "]\n" + chosen->app->config_to_str(true, false);
    write_text_file(fs::path(out) / kEchoFile, echo);
    chosen->run();
  } catch (const Error& e) {
    code = std::string(e.code());
    message = e.what();
  } catch (const fs::filesystem_error& e) {
    code = "E_IO";
    message = e.what();
  } catch (const std::exception& e) {
    code = "E_INTERNAL";
    message = e.what();
  }
  write_status(out, name, code, message);
  if (code != "OK") {
    std::cerr << "error: " << code << ": " << one_line(message) << "\n";
    return 1;
  }
  return 0;
}

} // namespace gridcal::cli
