#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gridcal::cli {

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t days = 10;
  std::size_t arterials = 2;
  std::size_t side_roads = 6;
  double weekend_ratio = 1.5;
  // "kind,row,col,height,width,onset_day,magnitude"
  std::vector<std::string> shifts;
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::string model = "conv-bn";
  std::size_t members = 5;
  std::size_t epochs = 10;
  std::size_t batch_size = 12;
  std::size_t hidden = 16;
  // 0 selects the model's default rate.
  double learning_rate = 0.0;
  std::size_t horizon = 60;  // minutes
  std::string split = "6,2,2";
  // Keep every n-th training window.
  std::size_t every = 1;
};

struct EstimateOptions {
  std::string data;
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
  std::string method = "tta-ens";
  std::string parts = "val,test";
  std::size_t every = 4;
  std::size_t members = 0;  // 0 keeps every member
  std::size_t passes = 10;
  std::size_t patch_size = 16;
  std::size_t stride = 4;
};

struct CalibrateOptions {
  std::string estimates;
  std::string out;
  double alpha = 0.1;
  bool pooled = false;
  std::string mask = "none";
};

struct EvaluateOptions {
  std::string estimates;
  std::string calibration;
  std::string out;
  std::string mask = "both";
  std::string dataset = "synthetic";
};

struct OutlierOptions {
  std::string data;
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
  std::string method = "ens";
  double epsilon = 0.001;
  std::string rule = "at-most";
  std::size_t tau = 96;  // frame of the 60-minute target (08:00)
  std::size_t tau_window = 0;
  std::size_t members = 0;
  std::size_t passes = 10;
  std::size_t patch_size = 16;
  std::size_t stride = 4;
};

struct ReportOptions {
  std::string kind;  // coverage or metrics
  std::string input;
  std::string out;
  std::size_t bins = 20;
};

void cmd_synth(const SynthOptions& o);
void cmd_train(const TrainOptions& o);
void cmd_estimate(const EstimateOptions& o);
void cmd_calibrate(const CalibrateOptions& o);
void cmd_evaluate(const EvaluateOptions& o);
void cmd_outliers(const OutlierOptions& o);
void cmd_report(const ReportOptions& o);

} // namespace gridcal::cli
