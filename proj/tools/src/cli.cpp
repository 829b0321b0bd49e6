#include "facechannel/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "facechannel/checkpoint.hpp"
#include "facechannel/error.hpp"
#include "facechannel/gradcam.hpp"
#include "facechannel/netpbm.hpp"
#include "facechannel/synth.hpp"
#include "facechannel/trainer.hpp"

namespace facechannel {

namespace {

namespace fs = std::filesystem;
using Real = float;

struct SynthArgs {
  std::string spec = "n=64,task=categorical:4,size=48";
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string data;
  std::string val_data;
  std::string config = "tiny";
  std::string head;
  std::string routine = "scratch";
  std::size_t epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::string out_checkpoint;
  std::string history_csv;
};

struct FinetuneArgs {
  std::string from_checkpoint;
  std::string data;
  std::string val_data;
  std::string new_head;
  std::size_t epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::string out_checkpoint;
  std::string history_csv;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string report_json;
};

struct ParamsArgs {
  std::string config;
  std::string checkpoint;
  std::string head;
  bool trainable_only = false;
  bool freeze = false;
};

struct GradcamArgs {
  std::string checkpoint;
  std::string image;
  std::size_t target = 0;
  std::string out;
  std::string layer;
};

// Spec strings may also name a JSON file.
std::string read_spec_text(const std::string& spec) {
  if (spec.find('=') == std::string::npos && fs::is_regular_file(spec)) {
    std::ifstream in(spec);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  return spec;
}

Dataset<Real> load_data(const std::string& manifest_path, const ModelConfig& config) {
  const auto manifest = load_manifest(manifest_path);
  if (manifest.empty()) throw DataError("manifest '" + manifest_path + "' has no records");
  return load_dataset<Real>(manifest, config.input_channels, config.input_size);
}

void print_epoch(std::ostream& out, const EpochRecord& r) {
  out << "epoch " << r.epoch << "  loss " << r.train_loss << "  metric " << r.train_metric;
  if (r.val_loss) out << "  val_loss " << *r.val_loss << "  val_metric " << *r.val_metric;
  out << "  lr " << r.learning_rate << '\n';
}

TrainSpec make_spec(std::size_t epochs, std::size_t batch, double lr, double momentum, std::uint64_t seed,
                    Routine routine) {
  TrainSpec spec;
  spec.epochs = epochs;
  spec.batch_size = batch;
  spec.learning_rate = lr;
  spec.momentum = momentum;
  spec.seed = seed;
  spec.routine = routine;
  spec.validate();
  return spec;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  auto spec = SynthSpec::parse(read_spec_text(a.spec));
  if (a.seed) spec.seed = *a.seed;
  const auto manifest = synth_generate(spec, a.out);
  out << (fs::path(a.out) / "manifest.csv").string() << ' ' << manifest.size() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const Routine routine = parse_routine(a.routine);
  if (routine == Routine::kPretrainThenFinetune) throw ParameterError("use the finetune command for fine-tuning");
  auto spec = make_spec(a.epochs, a.batch, a.lr, a.momentum, a.seed, routine);

  auto config = ModelConfig::load(a.config);
  const bool preset = a.config == "canonical" || a.config == "tiny";
  const auto data = load_data(a.data, config);
  if (!a.head.empty()) {
    config.head = HeadSpec::parse(a.head);
  } else if (preset) {
    config.head = data.head();
  }
  config.seed = a.seed;
  config.validate();
  check_head_matches(config, data);
  std::optional<Dataset<Real>> val;
  if (!a.val_data.empty()) val = load_data(a.val_data, config);

  auto model = build_facechannel<Real>(config);
  SgdMomentum<Real> opt(spec.learning_rate, spec.momentum);
  const auto history =
      train(model, data, spec, val ? &*val : nullptr, &opt, [&out](const EpochRecord& r) { print_epoch(out, r); });
  if (!a.history_csv.empty()) history.write_csv(a.history_csv);
  if (!a.out_checkpoint.empty()) {
    save_checkpoint(model, a.out_checkpoint, &opt.state(), std::string(routine_name(routine)));
    out << "checkpoint " << a.out_checkpoint << ' ' << tensor_hash(model) << '\n';
  }
  return kExitOk;
}

int cmd_finetune(const FinetuneArgs& a, std::ostream& out) {
  auto spec = make_spec(a.epochs, a.batch, a.lr, a.momentum, a.seed, Routine::kPretrainThenFinetune);
  auto model = load_checkpoint<Real>(a.from_checkpoint);
  const auto data = load_data(a.data, model.config());
  const HeadSpec head = a.new_head.empty() ? data.head() : HeadSpec::parse(a.new_head);
  check_head_matches([&] {
    auto c = model.config();
    c.head = head;
    return c;
  }(), data);
  std::optional<Dataset<Real>> val;
  if (!a.val_data.empty()) val = load_data(a.val_data, model.config());

  Rng head_rng(a.seed);
  replace_head(model, head, head_rng);
  freeze_convolutional_stack(model);
  const auto before = tensor_hash(model, TensorGroup::kConvStack);
  SgdMomentum<Real> opt(spec.learning_rate, spec.momentum);
  const auto history = fine_tune(model, data, spec, val ? &*val : nullptr, &opt,
                                 [&out](const EpochRecord& r) { print_epoch(out, r); });
  const auto after = tensor_hash(model, TensorGroup::kConvStack);
  if (before != after) throw Error("conv stack changed during fine-tuning");
  out << "conv_stack_sha256 " << after << '\n';
  if (!a.history_csv.empty()) history.write_csv(a.history_csv);
  if (!a.out_checkpoint.empty()) {
    save_checkpoint(model, a.out_checkpoint, &opt.state(), std::string(routine_name(spec.routine)));
    out << "checkpoint " << a.out_checkpoint << ' ' << tensor_hash(model) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto model = load_checkpoint<Real>(a.checkpoint);
  const auto data = load_data(a.data, model.config());
  const auto report = evaluate(model, data);
  const auto json = report.to_json();
  if (!a.report_json.empty()) {
    std::ofstream f(a.report_json, std::ios::trunc);
    if (!(f << json << '\n')) throw IoError("cannot write report '" + a.report_json + "'");
  }
  out << json << '\n';
  return kExitOk;
}

int cmd_params(const ParamsArgs& a, std::ostream& out) {
  std::optional<Model<Real>> model;
  if (!a.checkpoint.empty()) {
    model = load_checkpoint<Real>(a.checkpoint);
  } else {
    auto config = ModelConfig::load(a.config.empty() ? "canonical" : a.config);
    if (!a.head.empty()) config.head = HeadSpec::parse(a.head);
    config.validate();
    model = build_facechannel<Real>(config);
  }
  if (a.freeze) freeze_convolutional_stack(*model);
  out << count_params(*model, a.trainable_only) << '\n';
  return kExitOk;
}

int cmd_gradcam(const GradcamArgs& a, std::ostream& out) {
  auto model = load_checkpoint<Real>(a.checkpoint);
  const auto& cfg = model.config();
  if (a.target >= cfg.head.outputs()) {
    throw ParameterError("target " + std::to_string(a.target) + " out of range for head '" + cfg.head.to_string() +
                         "'");
  }
  const auto image = preprocess(decode_image(a.image), cfg.input_channels, cfg.input_size);
  const auto map = gradcam(model, image, a.target, a.layer.empty() ? std::nullopt : std::optional(a.layer));
  render_heatmap(map, image, a.out);
  out << a.out << ' ' << map.layer_name << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"FaceChannel: a compact CNN with shunting inhibition for facial expression recognition",
               "facechannel"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic face dataset");
  s->add_option("--spec", synth.spec, "key=value list (n,task,size,noise,seed,grid) or a JSON file")
      ->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Overrides the seed in --spec");

  TrainArgs train_a;
  auto* t = app.add_subcommand("train", "Train from scratch or produce a pretraining checkpoint");
  t->add_option("--data", train_a.data, "Manifest CSV")->required();
  t->add_option("--val-data", train_a.val_data, "Validation manifest CSV");
  t->add_option("--config", train_a.config, "canonical, tiny, or a JSON config file")->capture_default_str();
  t->add_option("--head", train_a.head, "K or av; presets default to the dataset's head");
  t->add_option("--routine", train_a.routine, "scratch or pretrain")
      ->check(CLI::IsMember({"scratch", "pretrain"}))
      ->capture_default_str();
  t->add_option("--epochs", train_a.epochs)->capture_default_str();
  t->add_option("--lr", train_a.lr)->capture_default_str();
  t->add_option("--momentum", train_a.momentum)->capture_default_str();
  t->add_option("--batch", train_a.batch)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--seed", train_a.seed)->capture_default_str();
  t->add_option("--out-checkpoint", train_a.out_checkpoint);
  t->add_option("--history-csv", train_a.history_csv);

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Replace the head, freeze the conv stack and train the dense layers");
  f->add_option("--from-checkpoint", ft.from_checkpoint)->required();
  f->add_option("--data", ft.data, "Manifest CSV")->required();
  f->add_option("--val-data", ft.val_data, "Validation manifest CSV");
  f->add_option("--new-head", ft.new_head, "K or av; defaults to the dataset's head");
  f->add_option("--epochs", ft.epochs)->capture_default_str();
  f->add_option("--lr", ft.lr)->capture_default_str();
  f->add_option("--momentum", ft.momentum)->capture_default_str();
  f->add_option("--batch", ft.batch)->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--seed", ft.seed)->capture_default_str();
  f->add_option("--out-checkpoint", ft.out_checkpoint);
  f->add_option("--history-csv", ft.history_csv);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Accuracy or CCC of a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--report-json", ev.report_json);

  ParamsArgs pa;
  auto* p = app.add_subcommand("params", "Print the parameter count");
  auto* p_config = p->add_option("--config", pa.config, "canonical, tiny, or a JSON config file");
  auto* p_ckpt = p->add_option("--checkpoint", pa.checkpoint);
  p_config->excludes(p_ckpt);
  p->add_option("--head", pa.head, "K or av (with --config)")->excludes(p_ckpt);
  p->add_flag("--trainable-only", pa.trainable_only);
  p->add_flag("--freeze", pa.freeze, "Freeze the conv stack before counting");

  GradcamArgs gc;
  auto* g = app.add_subcommand("gradcam", "Export a GradCam overlay as PPM");
  g->add_option("--checkpoint", gc.checkpoint)->required();
  g->add_option("--image", gc.image, "PGM or PPM image")->required();
  g->add_option("--target", gc.target, "Class index or dimension (0 arousal, 1 valence)")->required();
  g->add_option("--out", gc.out, "Output PPM path")->required();
  g->add_option("--layer", gc.layer, "Layer to explain (default: the shunting layer)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train_a, out);
    if (*f) return cmd_finetune(ft, out);
    if (*e) return cmd_eval(ev, out);
    if (*p) return cmd_params(pa, out);
    if (*g) return cmd_gradcam(gc, out);
  } catch (const IoError& x) {
    err << "error: " << x.what() << '\n';
    return kExitRuntime;
  } catch (const CorruptCheckpointError& x) {
    err << "error: " << x.what() << '\n';
    return kExitRuntime;
  } catch (const DecodeError& x) {
    err << "error: " << x.what() << '\n';
    return kExitRuntime;
  } catch (const ConfigError& x) {
    err << "error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const DataError& x) {
    err << "error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& x) {
    err << "error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace facechannel
