#include "csihar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace csihar {
namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw std::invalid_argument("config value for '" + key +
                                "' is not a number: '" + value + "'");
  }
  return parsed;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t parsed = 0;
  try {
    parsed = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || value[0] == '-') {
    throw std::invalid_argument("config value for '" + key +
                                "' is not a non-negative integer: '" + value +
                                "'");
  }
  return parsed;
}

// rng() % i matches the draw scheme used elsewhere, keeping shuffles
// identical across standard libraries.
void fisher_yates(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng() % i]);
  }
}

using ForwardFn =
    std::function<Tensor(Tape&, const Tensor&, const ModelParams&)>;

TrainResult train_neural(const WindowDataset& dataset,
                         const TrainConfig& config, ModelParams params,
                         const ForwardFn& forward) {
  validate(config);
  validate(dataset);
  TrainResult result;
  result.split = train_test_split(dataset);

  std::vector<Tensor> leaves;
  leaves.reserve(dataset.windows.size());
  for (const auto& window : dataset.windows) {
    leaves.push_back(window_tensor(window));
  }
  std::vector<Tensor> targets;
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
    targets.push_back(one_hot(dataset.class_names.size(), c));
  }

  std::vector<std::size_t> ordered_train = result.split.train;
  std::sort(ordered_train.begin(), ordered_train.end());
  std::vector<double> sample_loss(dataset.windows.size(), 0.0);
  std::mt19937_64 shuffle_rng(config.seed);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = result.split.train;
    fisher_yates(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t count =
          std::min(config.batch_size, order.size() - start);
      Tape tape;
      Tensor total;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        const Tensor pred = forward(tape, leaves[idx], params);
        const Tensor loss =
            loss_annealed(tape, pred, targets[dataset.labels[idx]],
                          static_cast<long long>(epoch), config);
        sample_loss[idx] = loss.item();
        total = (k == 0) ? loss : tape.add(total, loss);
      }
      const Tensor batch_mean =
          tape.scalar_mul(total, 1.0 / static_cast<double>(count));
      tape.backward(batch_mean);
      std::vector<Tensor> updated;
      updated.reserve(params.tensors.size());
      for (const Tensor& t : params.tensors) {
        updated.push_back(sgd_step(t, tape.grad(t), config.lr));
      }
      params = with_tensors(params, std::move(updated));
    }
    // Averaging in dataset-index order keeps the reported loss independent
    // of the shuffle, so frozen parameters repeat the same number exactly.
    double total_loss = 0.0;
    for (std::size_t idx : ordered_train) total_loss += sample_loss[idx];
    result.loss_history.push_back(total_loss /
                                  static_cast<double>(ordered_train.size()));
  }
  result.params = std::move(params);
  return result;
}

void check_activity_classes(const WindowDataset& dataset) {
  if (dataset.class_names.size() != kActivityCount) {
    throw std::invalid_argument(
        "the activity classifiers score all " +
        std::to_string(kActivityCount) + " activities; the dataset declares " +
        std::to_string(dataset.class_names.size()) + " classes");
  }
}

std::size_t frames_per_interval_for(std::size_t window_frames,
                                    std::size_t intervals) {
  if (intervals == 0 || window_frames % intervals != 0) {
    throw std::invalid_argument(
        "window length " + std::to_string(window_frames) +
        " is not divisible into " + std::to_string(intervals) + " intervals");
  }
  return window_frames / intervals;
}

}  // namespace

void validate(const TrainConfig& config) {
  if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) {
    throw std::invalid_argument("lr must be finite and non-negative");
  }
  if (config.epochs < 1) {
    throw std::invalid_argument("epochs must be at least 1");
  }
  if (config.epoch_annealing > config.epochs) {
    throw std::invalid_argument("epoch_annealing must not exceed epochs");
  }
  if (config.step < 1) throw std::invalid_argument("step must be at least 1");
  if (config.hidden_dim < 1) {
    throw std::invalid_argument("hidden_dim must be at least 1");
  }
  if (config.last_channel < 1) {
    throw std::invalid_argument("last_channel must be at least 1");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("batch_size must be at least 1");
  }
}

TrainConfig parse_train_config(const std::string& text,
                               const TrainConfig& base) {
  TrainConfig config = base;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_number) +
                                  " is not 'key = value': '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key == "lr") {
      config.lr = parse_double(key, value);
    } else if (key == "epochs") {
      config.epochs = parse_unsigned(key, value);
    } else if (key == "step") {
      config.step = parse_unsigned(key, value);
    } else if (key == "hidden_dim") {
      config.hidden_dim = parse_unsigned(key, value);
    } else if (key == "epoch_annealing") {
      config.epoch_annealing = parse_unsigned(key, value);
    } else if (key == "reset_mechanism") {
      if (value == "zero") {
        config.reset_mechanism = LifReset::Zero;
      } else if (value == "subtract") {
        config.reset_mechanism = LifReset::Subtract;
      } else {
        throw std::invalid_argument(
            "reset_mechanism must be 'zero' or 'subtract', got '" + value +
            "'");
      }
    } else if (key == "last_channel") {
      config.last_channel = parse_unsigned(key, value);
    } else if (key == "seed") {
      config.seed = parse_unsigned(key, value);
    } else if (key == "batch_size") {
      config.batch_size = parse_unsigned(key, value);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  validate(config);
  return config;
}

SnnModelSpec snn_spec_from_config(const TrainConfig& config) {
  SnnModelSpec spec;
  spec.variant = SnnVariant::ModelII;
  spec.hidden_dim = config.hidden_dim;
  spec.step = config.step;
  spec.lif.reset = config.reset_mechanism;
  return spec;
}

CnnSpec cnn_spec_from_config(const TrainConfig& config) {
  CnnSpec spec;
  spec.last_channel = config.last_channel;
  return spec;
}

void validate(const WindowDataset& dataset) {
  if (dataset.windows.size() != dataset.labels.size()) {
    throw std::invalid_argument("dataset has " +
                                std::to_string(dataset.windows.size()) +
                                " windows but " +
                                std::to_string(dataset.labels.size()) +
                                " labels");
  }
  for (std::size_t label : dataset.labels) {
    if (label >= dataset.class_names.size()) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " is outside the " +
                                  std::to_string(dataset.class_names.size()) +
                                  " declared classes");
    }
  }
  for (const auto& window : dataset.windows) {
    if (window.frames != dataset.windows.front().frames ||
        window.subcarriers != dataset.windows.front().subcarriers ||
        window.antennas != dataset.windows.front().antennas) {
      throw std::invalid_argument("dataset windows mix geometries");
    }
  }
}

WindowDataset dataset_from_recordings(
    const std::vector<CsiRecording>& recordings, std::size_t window_frames,
    std::size_t stride) {
  std::vector<Activity> present;
  for (const auto& rec : recordings) {
    if (!rec.label.has_value()) {
      throw std::invalid_argument("every recording must be labeled");
    }
    if (std::find(present.begin(), present.end(), *rec.label) ==
        present.end()) {
      present.push_back(*rec.label);
    }
  }
  std::sort(present.begin(), present.end(),
            [](Activity a, Activity b) {
              return static_cast<int>(a) < static_cast<int>(b);
            });
  return dataset_for_activities(recordings, window_frames, stride, present);
}

WindowDataset dataset_for_activities(
    const std::vector<CsiRecording>& recordings, std::size_t window_frames,
    std::size_t stride, const std::vector<Activity>& classes) {
  if (classes.empty()) {
    throw std::invalid_argument("the class list is empty");
  }
  WindowDataset dataset;
  for (Activity a : classes) {
    const std::string name = to_string(a);
    if (std::find(dataset.class_names.begin(), dataset.class_names.end(),
                  name) != dataset.class_names.end()) {
      throw std::invalid_argument("activity '" + name +
                                  "' is listed more than once");
    }
    dataset.class_names.push_back(name);
  }
  for (const auto& rec : recordings) {
    if (!rec.label.has_value()) continue;
    const auto pos = std::find(classes.begin(), classes.end(), *rec.label);
    if (pos == classes.end()) continue;
    const std::size_t label =
        static_cast<std::size_t>(pos - classes.begin());
    for (auto& window : make_windows(rec, window_frames, stride)) {
      dataset.windows.push_back(std::move(window));
      dataset.labels.push_back(label);
    }
  }
  validate(dataset);
  return dataset;
}

SplitIndices train_test_split(const WindowDataset& dataset) {
  validate(dataset);
  SplitIndices split;
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
      if (dataset.labels[i] == c) members.push_back(i);
    }
    if (members.size() < 2) {
      throw std::invalid_argument(
          "class '" + dataset.class_names[c] + "' has " +
          std::to_string(members.size()) +
          " window(s); at least 2 are needed to split");
    }
    const std::size_t train_count = members.size() * 4 / 5;
    for (std::size_t k = 0; k < members.size(); ++k) {
      (k < train_count ? split.train : split.test).push_back(members[k]);
    }
  }
  return split;
}

Tensor one_hot(std::size_t classes, std::size_t index) {
  if (index >= classes) {
    throw std::invalid_argument("one_hot index out of range");
  }
  std::vector<double> values(classes, 0.0);
  values[index] = 1.0;
  return Tensor({classes}, std::move(values));
}

Tensor loss_annealed(Tape& tape, const Tensor& pred, const Tensor& target,
                     long long epoch, const TrainConfig& config) {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  if (pred.shape() != target.shape() || pred.shape().size() != 1) {
    throw std::invalid_argument(
        "prediction and target must be rank-1 tensors of one shape");
  }
  double pred_sum = 0.0;
  for (double p : pred.values()) {
    if (p < -1e-9) {
      throw std::invalid_argument("prediction has a negative entry");
    }
    pred_sum += p;
  }
  if (std::abs(pred_sum - 1.0) > 1e-6) {
    throw std::invalid_argument("prediction does not sum to 1");
  }
  double target_entropy = 0.0;
  for (double t : target.values()) {
    if (t < 0.0) throw std::invalid_argument("target has a negative entry");
    if (t > 0.0) target_entropy += t * std::log(t);
  }
  const double lambda =
      config.epoch_annealing == 0
          ? 1.0
          : std::min(1.0, static_cast<double>(epoch) /
                              static_cast<double>(config.epoch_annealing));
  const Tensor diff = tape.sub(pred, target);
  const Tensor squared = tape.sum(tape.mul(diff, diff));
  const Tensor cross = tape.sum(tape.mul(target, tape.log_clamped(pred)));
  const Tensor kl = tape.sub(Tensor::scalar(target_entropy), cross);
  return tape.add(squared, tape.scalar_mul(kl, lambda));
}

TrainResult train_snn(const WindowDataset& dataset,
                      const TrainConfig& config) {
  validate(dataset);
  if (dataset.windows.empty()) {
    throw std::invalid_argument("the dataset holds no windows");
  }
  check_activity_classes(dataset);
  SnnModelSpec spec = snn_spec_from_config(config);
  spec.frames_per_interval =
      frames_per_interval_for(dataset.windows.front().frames, spec.intervals);
  validate(spec);
  ModelParams params =
      init_snn_params(spec, dataset.windows.front().subcarriers,
                      dataset.windows.front().antennas, config.seed);
  return train_neural(dataset, config, std::move(params),
                      [spec](Tape& tape, const Tensor& window,
                             const ModelParams& p) {
                        return snn_forward(tape, window, spec, p);
                      });
}

TrainResult train_cnn(const WindowDataset& dataset,
                      const TrainConfig& config) {
  validate(dataset);
  if (dataset.windows.empty()) {
    throw std::invalid_argument("the dataset holds no windows");
  }
  check_activity_classes(dataset);
  const CnnSpec spec = cnn_spec_from_config(config);
  validate(spec);
  ModelParams params = init_cnn_params(
      spec, dataset.windows.front().frames,
      dataset.windows.front().subcarriers, dataset.windows.front().antennas,
      config.seed);
  return train_neural(dataset, config, std::move(params),
                      [spec](Tape& tape, const Tensor& window,
                             const ModelParams& p) {
                        return cnn_forward(tape, window, spec, p);
                      });
}

NeurosymClassifier make_neurosym_classifier(const NeurosymSpec& spec,
                                            std::size_t window_frames,
                                            std::size_t subcarriers,
                                            std::size_t antennas,
                                            const TrainConfig& config) {
  validate(config);
  if (spec.queries.empty()) {
    throw std::invalid_argument("the query list is empty");
  }
  if (spec.program.neural_decls.empty()) {
    throw std::invalid_argument(
        "the rule program declares no neural predicates");
  }
  NeurosymClassifier classifier;
  classifier.spec = spec;
  classifier.binding = derive_bindings(spec.program, spec.intervals);
  const std::size_t frames_per_interval =
      frames_per_interval_for(window_frames, spec.intervals);
  for (std::size_t i = 0; i < spec.program.neural_decls.size(); ++i) {
    const NeuralDecl& decl = spec.program.neural_decls[i];
    SnnModelSpec head;
    head.variant = SnnVariant::FeatureHead;
    head.hidden_dim = config.hidden_dim;
    head.intervals = spec.intervals;
    head.frames_per_interval = frames_per_interval;
    head.lif.reset = config.reset_mechanism;
    head.step = config.step;
    head.feature_arity = decl.values.size();
    validate(head);
    classifier.networks.push_back(decl.network);
    classifier.head_specs.push_back(head);
    classifier.head_params.push_back(init_snn_params(
        head, subcarriers, antennas,
        config.seed + static_cast<std::uint64_t>(i)));
  }
  for (const Atom& query : spec.queries) {
    classifier.circuits.push_back(
        ground_and_compile(spec.program, query, classifier.binding));
  }
  return classifier;
}

namespace {

std::map<std::pair<std::string, std::size_t>, std::vector<double>>
head_distribution_values(const NeurosymClassifier& classifier,
                         const Tensor& leaf) {
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> result;
  Tape tape;
  for (std::size_t i = 0; i < classifier.networks.size(); ++i) {
    const SnnOutputs outs = snn_outputs(tape, leaf, classifier.head_specs[i],
                                        classifier.head_params[i]);
    result[{classifier.networks[i], 0}] = outs.distribution.values();
    for (std::size_t k = 0; k < outs.interval_distributions.size(); ++k) {
      result[{classifier.networks[i], k + 1}] =
          outs.interval_distributions[k].values();
    }
  }
  return result;
}

}  // namespace

NeurosymTrainResult train_neurosym(const WindowDataset& dataset,
                                   const NeurosymSpec& spec,
                                   const TrainConfig& config) {
  validate(config);
  validate(dataset);
  if (dataset.windows.empty()) {
    throw std::invalid_argument("the dataset holds no windows");
  }
  if (spec.queries.size() != dataset.class_names.size()) {
    throw std::invalid_argument(
        "the spec has " + std::to_string(spec.queries.size()) +
        " queries for " + std::to_string(dataset.class_names.size()) +
        " classes");
  }
  NeurosymTrainResult result;
  result.classifier = make_neurosym_classifier(
      spec, dataset.windows.front().frames,
      dataset.windows.front().subcarriers, dataset.windows.front().antennas,
      config);
  result.split = train_test_split(dataset);
  NeurosymClassifier& classifier = result.classifier;

  std::vector<Tensor> leaves;
  leaves.reserve(dataset.windows.size());
  for (const auto& window : dataset.windows) {
    leaves.push_back(window_tensor(window));
  }

  std::vector<std::size_t> ordered_train = result.split.train;
  std::sort(ordered_train.begin(), ordered_train.end());
  std::vector<double> sample_loss(dataset.windows.size(), 0.0);
  std::mt19937_64 shuffle_rng(config.seed);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = result.split.train;
    fisher_yates(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t count =
          std::min(config.batch_size, order.size() - start);
      Tape tape;
      Tensor total;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        HeadOutputs outputs;
        for (std::size_t h = 0; h < classifier.networks.size(); ++h) {
          const SnnOutputs outs =
              snn_outputs(tape, leaves[idx], classifier.head_specs[h],
                          classifier.head_params[h]);
          outputs.emplace(std::make_pair(classifier.networks[h],
                                         std::size_t{0}),
                          outs.distribution);
          for (std::size_t j = 0; j < outs.interval_distributions.size();
               ++j) {
            outputs.emplace(
                std::make_pair(classifier.networks[h], j + 1),
                outs.interval_distributions[j]);
          }
        }
        const Tensor p = circuit_probability(
            tape, classifier.circuits[dataset.labels[idx]], outputs);
        const Tensor loss = tape.scalar_mul(tape.log_clamped(p), -1.0);
        sample_loss[idx] = loss.item();
        total = (k == 0) ? loss : tape.add(total, loss);
      }
      const Tensor batch_mean =
          tape.scalar_mul(total, 1.0 / static_cast<double>(count));
      tape.backward(batch_mean);
      for (auto& params : classifier.head_params) {
        std::vector<Tensor> updated;
        updated.reserve(params.tensors.size());
        for (const Tensor& t : params.tensors) {
          updated.push_back(sgd_step(t, tape.grad(t), config.lr));
        }
        params = with_tensors(params, std::move(updated));
      }
    }
    double total_loss = 0.0;
    for (std::size_t idx : ordered_train) total_loss += sample_loss[idx];
    result.loss_history.push_back(total_loss /
                                  static_cast<double>(ordered_train.size()));
  }
  return result;
}

std::size_t argmax_index(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("argmax of an empty vector");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

EvalReport report_from_predictions(const std::vector<std::size_t>& truth,
                                   const std::vector<std::size_t>& predicted,
                                   std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("truth and prediction counts differ");
  }
  if (classes == 0) throw std::invalid_argument("no classes");
  EvalReport report;
  report.confusion.assign(classes, std::vector<long long>(classes, 0));
  long long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes) {
      throw std::invalid_argument("class index out of range");
    }
    ++report.confusion[truth[i]][predicted[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  report.accuracy = truth.empty() ? 0.0
                                  : static_cast<double>(correct) /
                                        static_cast<double>(truth.size());
  report.per_class_recall.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    long long support = 0;
    for (long long n : report.confusion[c]) support += n;
    if (support > 0) {
      report.per_class_recall[c] =
          static_cast<double>(report.confusion[c][c]) /
          static_cast<double>(support);
    }
  }
  return report;
}

namespace {

EvalReport evaluate_with(const WindowDataset& dataset,
                         const std::vector<std::size_t>& indices,
                         const std::function<std::vector<double>(
                             const CsiWindow&)>& probabilities) {
  validate(dataset);
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predicted;
  for (std::size_t idx : indices) {
    if (idx >= dataset.windows.size()) {
      throw std::invalid_argument("window index " + std::to_string(idx) +
                                  " is out of range");
    }
    truth.push_back(dataset.labels[idx]);
    predicted.push_back(argmax_index(probabilities(dataset.windows[idx])));
  }
  return report_from_predictions(truth, predicted,
                                 dataset.class_names.size());
}

}  // namespace

EvalReport evaluate_snn(const WindowDataset& dataset,
                        const std::vector<std::size_t>& indices,
                        const SnnModelSpec& spec, const ModelParams& params) {
  check_activity_classes(dataset);
  return evaluate_with(dataset, indices, [&](const CsiWindow& window) {
    Tape tape;
    return snn_forward(tape, window_tensor(window), spec, params).values();
  });
}

EvalReport evaluate_cnn(const WindowDataset& dataset,
                        const std::vector<std::size_t>& indices,
                        const CnnSpec& spec, const ModelParams& params) {
  check_activity_classes(dataset);
  return evaluate_with(dataset, indices, [&](const CsiWindow& window) {
    Tape tape;
    return cnn_forward(tape, window_tensor(window), spec, params).values();
  });
}

EvalReport evaluate_neurosym(const WindowDataset& dataset,
                             const std::vector<std::size_t>& indices,
                             const NeurosymClassifier& classifier) {
  return evaluate_with(dataset, indices, [&](const CsiWindow& window) {
    return neurosym_probabilities(classifier, window);
  });
}

std::vector<double> neurosym_probabilities(
    const NeurosymClassifier& classifier, const CsiWindow& window) {
  const auto by_head =
      head_distribution_values(classifier, window_tensor(window));
  std::vector<double> probabilities;
  for (const auto& circuit : classifier.circuits) {
    std::vector<double> leaf_probs;
    leaf_probs.reserve(circuit.leaves.size());
    for (const NeuralLeaf& leaf : circuit.leaves) {
      const auto it = by_head.find({leaf.head, leaf.interval});
      if (it == by_head.end()) {
        throw std::invalid_argument("no head output for '" + leaf.head +
                                    "' on interval " +
                                    std::to_string(leaf.interval));
      }
      leaf_probs.push_back(it->second.at(leaf.value_index));
    }
    probabilities.push_back(eval_circuit(circuit, leaf_probs).probability);
  }
  return probabilities;
}

void save_confusion_csv(const std::vector<std::vector<long long>>& confusion,
                        const std::vector<std::string>& class_names,
                        const std::string& path) {
  if (confusion.size() != class_names.size()) {
    throw std::invalid_argument("confusion size does not match class names");
  }
  for (const auto& name : class_names) {
    if (name.empty() || name.find_first_of(",\r\n") != std::string::npos) {
      throw std::invalid_argument("class name '" + name +
                                  "' cannot be written to CSV");
    }
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_confusion_csv: cannot open " + path);
  }
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (i > 0) out << ',';
    out << class_names[i];
  }
  out << '\n';
  for (const auto& row : confusion) {
    if (row.size() != class_names.size()) {
      throw std::invalid_argument("confusion matrix is not square");
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  out.flush();
  if (!out) {
    throw std::runtime_error("save_confusion_csv: write failed for " + path);
  }
}

std::pair<std::vector<std::vector<long long>>, std::vector<std::string>>
load_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_confusion_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  {
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) names.push_back(field);
  }
  if (names.empty()) throw std::runtime_error(path + ": no class names");
  std::vector<std::vector<long long>> matrix;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++row_number;
    std::vector<long long> row;
    std::stringstream cells(line);
    std::string field;
    while (std::getline(cells, field, ',')) {
      std::size_t used = 0;
      long long parsed = 0;
      try {
        parsed = std::stoll(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || field.empty() || parsed < 0) {
        throw std::runtime_error(path + ": row " + std::to_string(row_number) +
                                 " holds '" + field +
                                 "', expected a non-negative count");
      }
      row.push_back(parsed);
    }
    if (row.size() != names.size()) {
      throw std::runtime_error(path + ": row " + std::to_string(row_number) +
                               " has " + std::to_string(row.size()) +
                               " fields, expected " +
                               std::to_string(names.size()));
    }
    matrix.push_back(std::move(row));
  }
  if (matrix.size() != names.size()) {
    throw std::runtime_error(path + ": " + std::to_string(matrix.size()) +
                             " rows for " + std::to_string(names.size()) +
                             " classes");
  }
  return {std::move(matrix), std::move(names)};
}

}  // namespace csihar
