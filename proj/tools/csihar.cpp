#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "csihar/bayes.hpp"
#include "csihar/causal.hpp"
#include "csihar/harness.hpp"
#include "csihar/pose.hpp"

namespace {

using namespace csihar;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path);
  }
  out << text;
}

std::string format_value(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void metric(std::string& out, const std::string& name, double value) {
  out += name;
  out += ',';
  out += format_value(value);
  out += '\n';
}

void metric(std::string& out, const std::string& name, long long value) {
  out += name;
  out += ',';
  out += std::to_string(value);
  out += '\n';
}

const CLI::Validator kActivityName(
    [](std::string& name) {
      try {
        activity_from_string(name);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "ACTIVITY");

const CLI::Validator kDownsampleModeName(
    [](std::string& name) {
      try {
        downsample_mode_from_string(name);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "MODE");

// Training options shared by the train-* and eval subcommands. Flags that
// were actually passed override the config file, which overrides defaults.
struct TrainFlags {
  std::string config_path;
  double lr = 0.0;
  std::size_t epochs = 0;
  std::size_t step = 0;
  std::size_t hidden_dim = 0;
  std::size_t epoch_annealing = 0;
  std::string reset;
  std::size_t last_channel = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;

  CLI::Option* lr_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* step_opt = nullptr;
  CLI::Option* hidden_opt = nullptr;
  CLI::Option* annealing_opt = nullptr;
  CLI::Option* reset_opt = nullptr;
  CLI::Option* channel_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file of key = value lines");
    lr_opt = cmd->add_option("--lr", lr, "learning rate");
    epochs_opt = cmd->add_option("--epochs", epochs, "training epochs");
    step_opt = cmd->add_option("--step", step, "interval presentation repeats");
    hidden_opt = cmd->add_option("--hidden-dim", hidden_dim,
                                 "spiking hidden layer width");
    annealing_opt = cmd->add_option("--epoch-annealing", epoch_annealing,
                                    "epochs until the KL weight reaches 1");
    reset_opt = cmd->add_option("--reset", reset, "membrane reset mechanism")
                    ->check(CLI::IsMember({"zero", "subtract"}));
    channel_opt = cmd->add_option("--last-channel", last_channel,
                                  "channels of the last convolution layer");
    batch_opt = cmd->add_option("--batch-size", batch_size, "minibatch size");
    seed_opt = cmd->add_option("--seed", seed, "rng seed");
  }

  TrainConfig resolve() const {
    TrainConfig config;
    if (!config_path.empty()) {
      config = parse_train_config(slurp(config_path));
    }
    if (lr_opt->count()) config.lr = lr;
    if (epochs_opt->count()) config.epochs = epochs;
    if (step_opt->count()) config.step = step;
    if (hidden_opt->count()) config.hidden_dim = hidden_dim;
    if (annealing_opt->count()) config.epoch_annealing = epoch_annealing;
    if (reset_opt->count()) {
      config.reset_mechanism =
          reset == "zero" ? LifReset::Zero : LifReset::Subtract;
    }
    if (channel_opt->count()) config.last_channel = last_channel;
    if (batch_opt->count()) config.batch_size = batch_size;
    if (seed_opt->count()) config.seed = seed;
    validate(config);
    return config;
  }
};

struct DatasetFlags {
  std::vector<std::string> inputs;
  std::size_t window = 90;
  std::size_t stride = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--inputs", inputs, "recording files")
        ->required()
        ->expected(-1);
    cmd->add_option("--window", window, "window length in frames");
    cmd->add_option("--stride", stride,
                    "window stride in frames (0 = window length)");
  }

  std::vector<CsiRecording> load() const {
    std::vector<CsiRecording> recordings;
    recordings.reserve(inputs.size());
    for (const auto& path : inputs) {
      recordings.push_back(load_recording(path));
    }
    return recordings;
  }

  std::size_t effective_stride() const {
    return stride == 0 ? window : stride;
  }
};

int cmd_synth(const std::string& activity, double seconds, double rate,
              std::size_t subcarriers, std::size_t antennas, double noise,
              std::uint64_t seed, const std::string& out_path,
              const std::string& pose_path) {
  SynthConfig config;
  config.duration_s = seconds;
  config.sample_rate = rate;
  config.subcarriers = subcarriers;
  config.antennas = antennas;
  config.noise_sigma = noise;
  auto [recording, pose] =
      synth_recording(activity_from_string(activity), config, seed);
  save_recording(recording, out_path);
  std::string report;
  metric(report, "frames", static_cast<long long>(recording.frames));
  if (!pose_path.empty()) {
    save_pose(pose, pose_path);
    metric(report, "pose_frames", static_cast<long long>(pose.frames));
  }
  std::cout << report;
  return 0;
}

int cmd_downsample(const std::string& in_path, const std::string& out_path,
                   std::size_t factor, const std::string& mode) {
  const CsiRecording recording = load_recording(in_path);
  const CsiRecording reduced =
      downsample(recording, factor, downsample_mode_from_string(mode));
  save_recording(reduced, out_path);
  std::string report;
  metric(report, "frames", static_cast<long long>(reduced.frames));
  std::cout << report;
  return 0;
}

int cmd_downsample_eval(const std::string& in_path, std::size_t factor,
                        std::size_t window, const std::string& mode) {
  const CsiRecording recording = load_recording(in_path);
  std::optional<std::size_t> window_len;
  if (window > 0) window_len = window;
  std::string report;
  const auto add = [&](DownsampleMode m, const std::string& prefix) {
    const FidelityReport fidelity =
        fidelity_metrics(recording, downsample(recording, factor, m),
                         window_len);
    metric(report, prefix + "mse_mean", fidelity.mse_mean);
    metric(report, prefix + "mse_std", fidelity.mse_std);
    metric(report, prefix + "mse_norm1_diff", fidelity.mse_norm1_diff);
  };
  if (!mode.empty()) {
    add(downsample_mode_from_string(mode), "");
  } else {
    for (DownsampleMode m : {DownsampleMode::Mean, DownsampleMode::Median,
                             DownsampleMode::Min, DownsampleMode::Max}) {
      add(m, to_string(m) + "_");
    }
  }
  std::cout << report;
  return 0;
}

struct TrialOutcome {
  std::vector<double> loss_history;
  EvalReport report;
  ModelParams params;
  std::exception_ptr error;
};

// Runs `trials` seeded training runs in parallel and merges their reports
// in trial order, so the output does not depend on thread scheduling.
template <typename TrainFn>
int run_training(const WindowDataset& dataset, const TrainConfig& config,
                 std::size_t trials, const TrainFn& train_fn,
                 const std::string& out_params,
                 const std::string& out_confusion,
                 const std::string& out_metrics) {
  if (trials < 1) {
    throw std::invalid_argument("--trials must be at least 1");
  }
  std::vector<TrialOutcome> outcomes(trials);
  std::vector<std::thread> workers;
  workers.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    workers.emplace_back([&, i] {
      try {
        TrainConfig trial_config = config;
        trial_config.seed = config.seed + i;
        outcomes[i] = train_fn(trial_config);
      } catch (...) {
        outcomes[i].error = std::current_exception();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (const auto& outcome : outcomes) {
    if (outcome.error) std::rethrow_exception(outcome.error);
  }

  std::string report;
  metric(report, "trials", static_cast<long long>(trials));
  std::vector<std::vector<long long>> merged;
  double accuracy_sum = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    const std::string prefix =
        trials == 1 ? "" : "trial" + std::to_string(i) + "_";
    metric(report, prefix + "seed",
           static_cast<long long>(config.seed + i));
    for (std::size_t e = 0; e < outcomes[i].loss_history.size(); ++e) {
      metric(report, prefix + "loss_" + std::to_string(e),
             outcomes[i].loss_history[e]);
    }
    metric(report, prefix + "accuracy", outcomes[i].report.accuracy);
    accuracy_sum += outcomes[i].report.accuracy;
    if (merged.empty()) {
      merged = outcomes[i].report.confusion;
    } else {
      for (std::size_t r = 0; r < merged.size(); ++r) {
        for (std::size_t c = 0; c < merged[r].size(); ++c) {
          merged[r][c] += outcomes[i].report.confusion[r][c];
        }
      }
    }
  }
  if (trials > 1) {
    metric(report, "mean_accuracy",
           accuracy_sum / static_cast<double>(trials));
  }

  if (!out_params.empty()) {
    for (std::size_t i = 0; i < trials; ++i) {
      const std::string path =
          trials == 1 ? out_params : out_params + "." + std::to_string(i);
      save_params(outcomes[i].params, path);
    }
  }
  if (!out_confusion.empty()) {
    save_confusion_csv(merged, dataset.class_names, out_confusion);
  }
  if (!out_metrics.empty()) {
    write_text(out_metrics, report);
  }
  std::cout << report;
  return 0;
}

int cmd_train_neural(bool spiking, const DatasetFlags& data,
                     const TrainFlags& flags, std::size_t trials,
                     const std::string& out_params,
                     const std::string& out_confusion,
                     const std::string& out_metrics) {
  const WindowDataset dataset = dataset_from_recordings(
      data.load(), data.window, data.effective_stride());
  const TrainConfig config = flags.resolve();
  return run_training(
      dataset, config, trials,
      [&](const TrainConfig& trial_config) {
        TrialOutcome outcome;
        if (spiking) {
          TrainResult result = train_snn(dataset, trial_config);
          SnnModelSpec spec = snn_spec_from_config(trial_config);
          spec.frames_per_interval = dataset.windows.front().frames /
                                     spec.intervals;
          outcome.report = evaluate_snn(dataset, result.split.test, spec,
                                        result.params);
          outcome.loss_history = std::move(result.loss_history);
          outcome.params = std::move(result.params);
        } else {
          TrainResult result = train_cnn(dataset, trial_config);
          outcome.report =
              evaluate_cnn(dataset, result.split.test,
                           cnn_spec_from_config(trial_config), result.params);
          outcome.loss_history = std::move(result.loss_history);
          outcome.params = std::move(result.params);
        }
        return outcome;
      },
      out_params, out_confusion, out_metrics);
}

int cmd_train_neurosym(const DatasetFlags& data, const TrainFlags& flags,
                       const std::string& rules_path,
                       const std::vector<std::string>& class_names,
                       const std::vector<std::string>& queries,
                       std::size_t intervals, std::size_t trials,
                       const std::string& out_params,
                       const std::string& out_confusion,
                       const std::string& out_metrics) {
  if (class_names.size() != queries.size()) {
    throw std::invalid_argument(
        "got " + std::to_string(class_names.size()) + " --class names for " +
        std::to_string(queries.size()) + " --query atoms");
  }
  std::vector<Activity> activities;
  activities.reserve(class_names.size());
  for (const auto& name : class_names) {
    activities.push_back(activity_from_string(name));
  }
  const WindowDataset dataset = dataset_for_activities(
      data.load(), data.window, data.effective_stride(), activities);

  NeurosymSpec spec;
  spec.program = parse_program(slurp(rules_path));
  spec.intervals = intervals;
  for (const auto& text : queries) {
    spec.queries.push_back(parse_atom(text));
  }
  const TrainConfig config = flags.resolve();
  return run_training(
      dataset, config, trials,
      [&](const TrainConfig& trial_config) {
        TrialOutcome outcome;
        NeurosymTrainResult result =
            train_neurosym(dataset, spec, trial_config);
        outcome.report = evaluate_neurosym(dataset, result.split.test,
                                           result.classifier);
        outcome.loss_history = std::move(result.loss_history);
        if (!out_params.empty()) {
          for (std::size_t h = 0; h < result.classifier.networks.size();
               ++h) {
            const std::string path =
                out_params + "." + result.classifier.networks[h] +
                (trials == 1 ? ""
                             : "." + std::to_string(trial_config.seed -
                                                    config.seed));
            save_params(result.classifier.head_params[h], path);
          }
        }
        return outcome;
      },
      "", out_confusion, out_metrics);
}

int cmd_eval(const std::string& arch, const std::string& params_path,
             const DatasetFlags& data, const TrainFlags& flags,
             const std::string& out_confusion) {
  // The classifiers score all activities, so keep label indices aligned
  // with the full list even when the inputs cover only a few of them.
  std::vector<Activity> all_activities(kActivityCount);
  for (std::size_t i = 0; i < kActivityCount; ++i) {
    all_activities[i] = static_cast<Activity>(i);
  }
  const WindowDataset dataset = dataset_for_activities(
      data.load(), data.window, data.effective_stride(), all_activities);
  const TrainConfig config = flags.resolve();
  std::vector<std::size_t> all(dataset.windows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  EvalReport report;
  const CsiWindow& first = dataset.windows.front();
  if (arch == "snn") {
    SnnModelSpec spec = snn_spec_from_config(config);
    if (first.frames % spec.intervals != 0) {
      throw std::invalid_argument(
          "window length " + std::to_string(first.frames) +
          " is not divisible into " + std::to_string(spec.intervals) +
          " intervals");
    }
    spec.frames_per_interval = first.frames / spec.intervals;
    ModelParams params =
        init_snn_params(spec, first.subcarriers, first.antennas, config.seed);
    apply_checkpoint(params, params_path);
    report = evaluate_snn(dataset, all, spec, params);
  } else {
    const CnnSpec spec = cnn_spec_from_config(config);
    ModelParams params = init_cnn_params(spec, first.frames, first.subcarriers,
                                         first.antennas, config.seed);
    apply_checkpoint(params, params_path);
    report = evaluate_cnn(dataset, all, spec, params);
  }

  std::string text;
  metric(text, "windows", static_cast<long long>(dataset.windows.size()));
  metric(text, "accuracy", report.accuracy);
  for (std::size_t c = 0; c < report.per_class_recall.size(); ++c) {
    metric(text, "recall_" + dataset.class_names[c],
           report.per_class_recall[c]);
  }
  if (!out_confusion.empty()) {
    save_confusion_csv(report.confusion, dataset.class_names, out_confusion);
  }
  std::cout << text;
  return 0;
}

int cmd_bayes_compare(const std::string& a_path, const std::string& b_path,
                      double u_correct, double u_error) {
  const auto [a_matrix, a_names] = load_confusion_csv(a_path);
  const auto [b_matrix, b_names] = load_confusion_csv(b_path);
  if (a_names.size() != b_names.size()) {
    throw std::invalid_argument(
        "confusion matrices disagree: " + std::to_string(a_names.size()) +
        " vs " + std::to_string(b_names.size()) + " classes");
  }
  DirichletPrior prior;
  prior.u_correct = u_correct;
  prior.u_error = u_error;
  prior.classes = a_names.size();
  const double log_bf = log_bayes_factor(counts_from_confusion(a_matrix),
                                         counts_from_confusion(b_matrix), prior);
  std::string report;
  metric(report, "log_bf", log_bf);
  report += "verdict,";
  report += log_bf > 0.0 ? "different" : "identical";
  report += '\n';
  std::cout << report;
  return 0;
}

int cmd_causal(const std::string& panel_path, const std::string& pose_path,
               std::size_t feature_window, const std::string& thresholds_path,
               std::size_t max_lag, double alpha, std::size_t permutations,
               std::uint64_t seed, const std::string& out_graph,
               const std::string& out_rules, const std::string& activity) {
  if (panel_path.empty() == pose_path.empty()) {
    throw std::invalid_argument("pass exactly one of --panel or --pose");
  }
  BinaryEventPanel panel;
  if (!panel_path.empty()) {
    panel = load_panel(panel_path);
  } else {
    const PoseSequence pose = load_pose(pose_path);
    EventThresholds thresholds;
    if (!thresholds_path.empty()) {
      thresholds = parse_thresholds(slurp(thresholds_path));
    }
    panel = panel_from_events(
        binarize_events(movement_features(limb_angles(pose), feature_window),
                        thresholds));
  }
  const CausalGraph graph =
      discover_lagged_parents(panel, max_lag, alpha, permutations, seed);
  const std::string csv = graph_to_csv(graph);
  if (!out_graph.empty()) {
    write_text(out_graph, csv);
  }
  if (!out_rules.empty()) {
    if (activity.empty()) {
      throw std::invalid_argument("--out-rules needs --activity");
    }
    write_text(out_rules, graph_to_temporal_rules(graph, activity));
  }
  std::cout << csv;
  return 0;
}

int cmd_rules_check(const std::string& rules_path, const std::string& query,
                    std::size_t intervals) {
  const RuleProgram program = parse_program(slurp(rules_path));
  std::cout << program.prob_facts.size() << " probabilistic facts\n"
            << program.neural_decls.size() << " neural declarations\n"
            << program.clauses.size() << " clauses\n";
  if (!query.empty()) {
    const TemporalBinding binding = derive_bindings(program, intervals);
    const ArithmeticCircuit circuit =
        ground_and_compile(program, parse_atom(query), binding);
    std::cout << "query compiles to a circuit with " << circuit.leaves.size()
              << " neural leaves\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wi-Fi CSI activity recognition toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  int exit_code = 0;

  // synth
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic labeled recording and pose stream");
  std::string synth_activity;
  double synth_seconds = 80.0;
  double synth_rate = 150.0;
  std::size_t synth_subcarriers = 64;
  std::size_t synth_antennas = 4;
  double synth_noise = 0.05;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  std::string synth_pose;
  synth->add_option("--activity", synth_activity, "activity label")
      ->required()
      ->check(kActivityName);
  synth->add_option("--seconds", synth_seconds, "recording length");
  synth->add_option("--rate", synth_rate, "sample rate in Hz");
  synth->add_option("--subcarriers", synth_subcarriers, "subcarrier count");
  synth->add_option("--antennas", synth_antennas, "antenna count");
  synth->add_option("--noise", synth_noise, "noise sigma");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "output recording file")->required();
  synth->add_option("--pose", synth_pose, "optional output pose file");
  synth->callback([&] {
    exit_code = cmd_synth(synth_activity, synth_seconds, synth_rate,
                          synth_subcarriers, synth_antennas, synth_noise,
                          synth_seed, synth_out, synth_pose);
  });

  // downsample
  auto* down = app.add_subcommand("downsample",
                                  "reduce a recording's frame rate");
  std::string down_in;
  std::string down_out;
  std::size_t down_factor = 0;
  std::string down_mode = "mean";
  down->add_option("--in", down_in, "input recording")->required();
  down->add_option("--out", down_out, "output recording")->required();
  down->add_option("--factor", down_factor, "downsampling factor")
      ->required()
      ->check(CLI::PositiveNumber);
  down->add_option("--mode", down_mode, "mean, median, min or max")
      ->check(kDownsampleModeName);
  down->callback(
      [&] { exit_code = cmd_downsample(down_in, down_out, down_factor,
                                       down_mode); });

  // downsample-eval
  auto* deval = app.add_subcommand(
      "downsample-eval", "report downsampling fidelity metrics");
  std::string deval_in;
  std::size_t deval_factor = 0;
  std::size_t deval_window = 0;
  std::string deval_mode;
  deval->add_option("--in", deval_in, "input recording")->required();
  deval->add_option("--factor", deval_factor, "downsampling factor")
      ->required()
      ->check(CLI::PositiveNumber);
  deval->add_option("--window", deval_window,
                    "windowed scope length in frames (0 = whole recording)");
  deval->add_option("--mode", deval_mode,
                    "restrict the report to one mode")
      ->check(kDownsampleModeName);
  deval->callback([&] {
    exit_code = cmd_downsample_eval(deval_in, deval_factor, deval_window,
                                    deval_mode);
  });

  // train-snn / train-cnn
  DatasetFlags snn_data;
  TrainFlags snn_flags;
  std::size_t snn_trials = 1;
  std::string snn_out_params;
  std::string snn_out_confusion;
  std::string snn_out_metrics;
  auto* tsnn = app.add_subcommand("train-snn",
                                  "train the spiking activity classifier");
  snn_data.attach(tsnn);
  snn_flags.attach(tsnn);
  tsnn->add_option("--trials", snn_trials, "parallel seeded trials");
  tsnn->add_option("--out-params", snn_out_params, "checkpoint file");
  tsnn->add_option("--out-confusion", snn_out_confusion,
                   "held-out confusion CSV");
  tsnn->add_option("--out-metrics", snn_out_metrics, "metrics CSV");
  tsnn->callback([&] {
    exit_code = cmd_train_neural(true, snn_data, snn_flags, snn_trials,
                                 snn_out_params, snn_out_confusion,
                                 snn_out_metrics);
  });

  DatasetFlags cnn_data;
  TrainFlags cnn_flags;
  std::size_t cnn_trials = 1;
  std::string cnn_out_params;
  std::string cnn_out_confusion;
  std::string cnn_out_metrics;
  auto* tcnn = app.add_subcommand("train-cnn",
                                  "train the convolutional baseline");
  cnn_data.attach(tcnn);
  cnn_flags.attach(tcnn);
  tcnn->add_option("--trials", cnn_trials, "parallel seeded trials");
  tcnn->add_option("--out-params", cnn_out_params, "checkpoint file");
  tcnn->add_option("--out-confusion", cnn_out_confusion,
                   "held-out confusion CSV");
  tcnn->add_option("--out-metrics", cnn_out_metrics, "metrics CSV");
  tcnn->callback([&] {
    exit_code = cmd_train_neural(false, cnn_data, cnn_flags, cnn_trials,
                                 cnn_out_params, cnn_out_confusion,
                                 cnn_out_metrics);
  });

  // train-neurosym
  DatasetFlags ns_data;
  TrainFlags ns_flags;
  std::string ns_rules;
  std::vector<std::string> ns_classes;
  std::vector<std::string> ns_queries;
  std::size_t ns_intervals = 10;
  std::size_t ns_trials = 1;
  std::string ns_out_params;
  std::string ns_out_confusion;
  std::string ns_out_metrics;
  auto* tns = app.add_subcommand(
      "train-neurosym", "train spiking feature heads under a rule program");
  ns_data.attach(tns);
  ns_flags.attach(tns);
  tns->add_option("--rules", ns_rules, "rule program file")->required();
  tns->add_option("--class", ns_classes, "activity name, one per class")
      ->required()
      ->check(kActivityName);
  tns->add_option("--query", ns_queries, "ground query atom, one per class")
      ->required();
  tns->add_option("--intervals", ns_intervals, "sub-intervals per window");
  tns->add_option("--trials", ns_trials, "parallel seeded trials");
  tns->add_option("--out-params", ns_out_params,
                  "checkpoint file prefix, one file per head");
  tns->add_option("--out-confusion", ns_out_confusion,
                  "held-out confusion CSV");
  tns->add_option("--out-metrics", ns_out_metrics, "metrics CSV");
  tns->callback([&] {
    exit_code = cmd_train_neurosym(ns_data, ns_flags, ns_rules, ns_classes,
                                   ns_queries, ns_intervals, ns_trials,
                                   ns_out_params, ns_out_confusion,
                                   ns_out_metrics);
  });

  // eval
  DatasetFlags eval_data;
  TrainFlags eval_flags;
  std::string eval_arch;
  std::string eval_params;
  std::string eval_out_confusion;
  auto* eval = app.add_subcommand("eval",
                                  "evaluate a checkpoint on recordings");
  eval->add_option("--arch", eval_arch, "snn or cnn")
      ->required()
      ->check(CLI::IsMember({"snn", "cnn"}));
  eval->add_option("--params", eval_params, "checkpoint file")->required();
  eval_data.attach(eval);
  eval_flags.attach(eval);
  eval->add_option("--out-confusion", eval_out_confusion, "confusion CSV");
  eval->callback([&] {
    exit_code = cmd_eval(eval_arch, eval_params, eval_data, eval_flags,
                         eval_out_confusion);
  });

  // bayes-compare
  std::string bayes_a;
  std::string bayes_b;
  double bayes_u_correct = 1.0;
  double bayes_u_error = 0.01;
  auto* bayes = app.add_subcommand(
      "bayes-compare", "Bayes factor between two confusion matrices");
  bayes->add_option("--a", bayes_a, "first confusion CSV")->required();
  bayes->add_option("--b", bayes_b, "second confusion CSV")->required();
  bayes->add_option("--u-correct", bayes_u_correct,
                    "prior pseudo-count per diagonal cell");
  bayes->add_option("--u-error", bayes_u_error,
                    "prior pseudo-count per error cell");
  bayes->callback([&] {
    exit_code = cmd_bayes_compare(bayes_a, bayes_b, bayes_u_correct,
                                  bayes_u_error);
  });

  // causal
  std::string causal_panel;
  std::string causal_pose;
  std::size_t causal_feature_window = 30;
  std::string causal_thresholds;
  std::size_t causal_max_lag = 2;
  double causal_alpha = 0.01;
  std::size_t causal_permutations = 199;
  std::uint64_t causal_seed = 1;
  std::string causal_out_graph;
  std::string causal_out_rules;
  std::string causal_activity;
  auto* causal = app.add_subcommand(
      "causal", "discover lagged parents of binary movement events");
  causal->add_option("--panel", causal_panel, "binary event panel CSV");
  causal->add_option("--pose", causal_pose,
                     "pose file to binarize into a panel");
  causal->add_option("--feature-window", causal_feature_window,
                     "pose frames per movement-feature interval");
  causal->add_option("--thresholds", causal_thresholds,
                     "event threshold config file");
  causal->add_option("--max-lag", causal_max_lag, "largest lag tested");
  causal->add_option("--alpha", causal_alpha, "significance level");
  causal->add_option("--permutations", causal_permutations,
                     "shuffle-test permutations");
  causal->add_option("--seed", causal_seed, "rng seed");
  causal->add_option("--out-graph", causal_out_graph, "graph CSV file");
  causal->add_option("--out-rules", causal_out_rules,
                     "temporal rule sketch file");
  causal->add_option("--activity", causal_activity,
                     "activity name for the rule sketch");
  causal->callback([&] {
    exit_code = cmd_causal(causal_panel, causal_pose, causal_feature_window,
                           causal_thresholds, causal_max_lag, causal_alpha,
                           causal_permutations, causal_seed, causal_out_graph,
                           causal_out_rules, causal_activity);
  });

  // rules-check
  std::string rules_path;
  std::string rules_query;
  std::size_t rules_intervals = 10;
  auto* rules = app.add_subcommand("rules-check",
                                   "parse and summarize a rule program");
  rules->add_option("file", rules_path, "rule program file")->required();
  rules->add_option("--query", rules_query,
                    "also compile this ground query against the program");
  rules->add_option("--intervals", rules_intervals,
                    "sub-intervals for temporal bindings");
  rules->callback([&] {
    exit_code = cmd_rules_check(rules_path, rules_query, rules_intervals);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
