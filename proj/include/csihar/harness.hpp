#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csihar/csi.hpp"
#include "csihar/lif.hpp"
#include "csihar/models.hpp"
#include "csihar/rules.hpp"
#include "csihar/tensor.hpp"

namespace csihar {

// Training hyperparameters. The defaults are the spiking classifier's
// published settings; CNN runs override lr, epoch_annealing and
// last_channel.
struct TrainConfig {
  double lr = 0.006540;
  std::size_t epochs = 35;
  std::size_t step = 5;
  std::size_t hidden_dim = 50;
  std::size_t epoch_annealing = 30;
  LifReset reset_mechanism = LifReset::Zero;
  std::size_t last_channel = 65;
  std::uint64_t seed = 1;
  std::size_t batch_size = 16;
};

void validate(const TrainConfig& config);

// Parses `key = value` lines into a copy of `base`. Blank lines and lines
// starting with '#' are skipped; unknown keys and unreadable values are
// rejected. The merged config is validated before it is returned.
TrainConfig parse_train_config(const std::string& text,
                               const TrainConfig& base = {});

SnnModelSpec snn_spec_from_config(const TrainConfig& config);
CnnSpec cnn_spec_from_config(const TrainConfig& config);

// Labeled classifier inputs. Windows share one geometry; labels index into
// class_names.
struct WindowDataset {
  std::vector<CsiWindow> windows;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
};

void validate(const WindowDataset& dataset);

// Slices labeled recordings into windows. Classes are the activities
// present, in activity-code order; every recording must be labeled and all
// must share subcarrier and antenna counts.
WindowDataset dataset_from_recordings(
    const std::vector<CsiRecording>& recordings, std::size_t window_frames,
    std::size_t stride);

// Same, but restricted to the listed activities; windows are labeled by
// list position. Recordings of other activities are ignored.
WindowDataset dataset_for_activities(
    const std::vector<CsiRecording>& recordings, std::size_t window_frames,
    std::size_t stride, const std::vector<Activity>& classes);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class, the first 80 percent of that class's windows (in dataset
// order) train and the rest test. Every class needs at least two windows.
SplitIndices train_test_split(const WindowDataset& dataset);

// One-hot row of length `classes`.
Tensor one_hot(std::size_t classes, std::size_t index);

// Squared error plus annealed KL divergence:
//   sum((pred - target)^2) + lambda * KL(target || pred)
// with lambda = min(1, epoch / epoch_annealing) (1 when epoch_annealing is
// 0) and the prediction clamped to 1e-9 inside the log. Both tensors are
// rank-1 distributions of equal length.
Tensor loss_annealed(Tape& tape, const Tensor& pred, const Tensor& target,
                     long long epoch, const TrainConfig& config);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // per-epoch mean loss over train split
  SplitIndices split;
};

// Seeded SGD with batch gradient accumulation on the 80 percent train
// split. Per-epoch losses are averaged in dataset-index order, so a zero
// learning rate reproduces the identical value every epoch.
TrainResult train_snn(const WindowDataset& dataset, const TrainConfig& config);
TrainResult train_cnn(const WindowDataset& dataset, const TrainConfig& config);

// Rules plus one ground query per dataset class, in class order.
struct NeurosymSpec {
  RuleProgram program;
  std::vector<Atom> queries;
  std::size_t intervals = 10;
};

// Feature heads (one per declared network, in declaration order) wired to
// the compiled query circuits.
struct NeurosymClassifier {
  NeurosymSpec spec;
  TemporalBinding binding;
  std::vector<std::string> networks;
  std::vector<SnnModelSpec> head_specs;
  std::vector<ModelParams> head_params;
  std::vector<ArithmeticCircuit> circuits;
};

NeurosymClassifier make_neurosym_classifier(const NeurosymSpec& spec,
                                            std::size_t window_frames,
                                            std::size_t subcarriers,
                                            std::size_t antennas,
                                            const TrainConfig& config);

struct NeurosymTrainResult {
  NeurosymClassifier classifier;
  std::vector<double> loss_history;
  SplitIndices split;
};

// Minimizes -log P(query of the window's class) through the compiled
// circuits, updating every head. The dataset's class count must match the
// query count.
NeurosymTrainResult train_neurosym(const WindowDataset& dataset,
                                   const NeurosymSpec& spec,
                                   const TrainConfig& config);

struct EvalReport {
  std::vector<std::vector<long long>> confusion;  // [true class][predicted]
  double accuracy = 0.0;
  std::vector<double> per_class_recall;
};

// Index of the largest value; the lowest index wins ties.
std::size_t argmax_index(const std::vector<double>& values);

EvalReport report_from_predictions(const std::vector<std::size_t>& truth,
                                   const std::vector<std::size_t>& predicted,
                                   std::size_t classes);

// Evaluate the listed dataset indices (e.g. a test split).
EvalReport evaluate_snn(const WindowDataset& dataset,
                        const std::vector<std::size_t>& indices,
                        const SnnModelSpec& spec, const ModelParams& params);
EvalReport evaluate_cnn(const WindowDataset& dataset,
                        const std::vector<std::size_t>& indices,
                        const CnnSpec& spec, const ModelParams& params);
EvalReport evaluate_neurosym(const WindowDataset& dataset,
                             const std::vector<std::size_t>& indices,
                             const NeurosymClassifier& classifier);

// Per-class query probabilities for one window, in class order.
std::vector<double> neurosym_probabilities(const NeurosymClassifier& classifier,
                                           const CsiWindow& window);

// Confusion CSV: one header row of class names, then K rows of K counts.
void save_confusion_csv(const std::vector<std::vector<long long>>& confusion,
                        const std::vector<std::string>& class_names,
                        const std::string& path);
std::pair<std::vector<std::vector<long long>>, std::vector<std::string>>
load_confusion_csv(const std::string& path);

}  // namespace csihar
