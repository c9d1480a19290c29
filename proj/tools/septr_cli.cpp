#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "septr/dsp.hpp"
#include "septr/model.hpp"
#include "septr/synth.hpp"
#include "septr/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace septr;

namespace {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string data_dir;             // directory-per-class WAV tree
  std::string dataset_layout = "class-dirs";
  std::size_t synth_train = 800;
  std::size_t synth_val = 200;

  std::string variant = "vh";
  std::size_t depth = 2;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t patch = 1;
  std::size_t mlp_ratio = 4;
  std::size_t vit_patch = 8;
  std::size_t vit_stride = 2;

  std::size_t fft_length = 1024;
  std::size_t hop = 499;
  std::size_t window = 512;
  std::size_t mel_bins = 32;
  double pad_seconds = 0.0;

  std::size_t epochs = 50;
  std::size_t batch = 4;
  double lr = 1e-4;
  double decay = 0.5;
  std::size_t decay_period = 10;
  double target_val_acc = 0.0;
  bool augment = false;

  // provenance per field: default < config file < command-line flag
  std::map<std::string, std::string> sources;
};

template <typename T>
void from_config(const json& j, const char* key, T& field,
                 std::map<std::string, std::string>& sources) {
  if (j.contains(key)) {
    field = j.at(key).get<T>();
    sources[key] = "config";
  }
}

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j = json::parse(in);
  from_config(j, "seed", c.seed, c.sources);
  from_config(j, "out", c.out_dir, c.sources);
  from_config(j, "data", c.data_dir, c.sources);
  from_config(j, "dataset_layout", c.dataset_layout, c.sources);
  from_config(j, "synth_train", c.synth_train, c.sources);
  from_config(j, "synth_val", c.synth_val, c.sources);
  from_config(j, "variant", c.variant, c.sources);
  from_config(j, "depth", c.depth, c.sources);
  from_config(j, "dim", c.dim, c.sources);
  from_config(j, "heads", c.heads, c.sources);
  from_config(j, "patch", c.patch, c.sources);
  from_config(j, "mlp_ratio", c.mlp_ratio, c.sources);
  from_config(j, "vit_patch", c.vit_patch, c.sources);
  from_config(j, "vit_stride", c.vit_stride, c.sources);
  from_config(j, "fft_length", c.fft_length, c.sources);
  from_config(j, "hop", c.hop, c.sources);
  from_config(j, "window", c.window, c.sources);
  from_config(j, "mel_bins", c.mel_bins, c.sources);
  from_config(j, "pad_seconds", c.pad_seconds, c.sources);
  from_config(j, "epochs", c.epochs, c.sources);
  from_config(j, "batch", c.batch, c.sources);
  from_config(j, "lr", c.lr, c.sources);
  from_config(j, "decay", c.decay, c.sources);
  from_config(j, "decay_period", c.decay_period, c.sources);
  from_config(j, "target_val_acc", c.target_val_acc, c.sources);
  from_config(j, "augment", c.augment, c.sources);
}

SpectroConfig spectro_config(const RunConfig& c) {
  SpectroConfig s;
  s.fft_length = c.fft_length;
  s.hop = c.hop;
  s.window_length = c.window;
  s.mel_bins = c.mel_bins;
  return s;
}

ModelConfig model_config(const RunConfig& c, std::size_t freq_bins,
                         std::size_t time_slots, std::size_t num_classes) {
  ModelConfig m;
  m.variant = variant_from_string(c.variant);
  m.depth = c.depth;
  m.token_dim = c.dim;
  m.heads = c.heads;
  m.patch_size = c.patch;
  m.mlp_ratio = c.mlp_ratio;
  m.vit_patch = c.vit_patch;
  m.vit_stride = c.vit_stride;
  m.num_classes = num_classes;
  m.freq_bins = freq_bins;
  m.time_slots = time_slots;
  return m;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch;
  t.schedule.initial_lr = c.lr;
  t.schedule.decay_factor = c.decay;
  t.schedule.decay_period_epochs = c.decay_period;
  t.seed = c.seed;
  t.spectro = spectro_config(c);
  t.pad_seconds = c.pad_seconds;
  t.target_val_acc = c.target_val_acc;
  if (c.augment) t.augment = AugmentConfig{};  // literature defaults
  return t;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out_dir;
  j["data"] = c.data_dir;
  j["dataset_layout"] = c.dataset_layout;
  j["synth_train"] = c.synth_train;
  j["synth_val"] = c.synth_val;
  j["variant"] = c.variant;
  j["depth"] = c.depth;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["patch"] = c.patch;
  j["mlp_ratio"] = c.mlp_ratio;
  j["vit_patch"] = c.vit_patch;
  j["vit_stride"] = c.vit_stride;
  j["fft_length"] = c.fft_length;
  j["hop"] = c.hop;
  j["window"] = c.window;
  j["mel_bins"] = c.mel_bins;
  j["pad_seconds"] = c.pad_seconds;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["decay"] = c.decay;
  j["decay_period"] = c.decay_period;
  j["target_val_acc"] = c.target_val_acc;
  j["augment"] = c.augment;
  return j;
}

struct Dataset {
  std::vector<LabeledWaveform> train;
  std::vector<LabeledWaveform> val;
  std::size_t num_classes = 0;
};

Dataset load_class_dir_dataset(const std::string& root, double val_fraction) {
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw std::runtime_error("no class directories found under " + root);
  Dataset ds;
  ds.num_classes = class_dirs.size();
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dirs[label]))
      if (e.path().extension() == ".wav") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    const std::size_t stride = val_fraction > 0.0
                                   ? std::max<std::size_t>(
                                         2, std::size_t(1.0 / val_fraction))
                                   : files.size() + 1;
    for (std::size_t i = 0; i < files.size(); ++i) {
      LabeledWaveform s{read_wav(files[i]), int(label)};
      if (i % stride == stride - 1)
        ds.val.push_back(std::move(s));
      else
        ds.train.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset make_dataset(const RunConfig& c) {
  if (!c.data_dir.empty()) {
    if (c.dataset_layout != "class-dirs")
      throw std::runtime_error("unsupported dataset layout '" +
                               c.dataset_layout + "'");
    return load_class_dir_dataset(c.data_dir, 0.15);
  }
  Dataset ds;
  ds.num_classes = 4;
  ds.train = make_synth_dataset(c.synth_train, c.seed);
  ds.val = make_synth_dataset(c.synth_val, c.seed + 1000003);
  return ds;
}

void write_manifest(const fs::path& path, const std::string& command,
                    const RunConfig& c, const ModelConfig& m) {
  json j;
  j["command"] = command;
  j["config"] = config_to_json(c);
  j["model"] = {{"variant", variant_to_string(m.variant)},
                {"depth", m.depth},
                {"dim", m.token_dim},
                {"heads", m.heads},
                {"patch", m.patch_size},
                {"mlp_ratio", m.mlp_ratio},
                {"num_classes", m.num_classes},
                {"freq_bins", m.freq_bins},
                {"time_slots", m.time_slots},
                {"vit_patch", m.vit_patch},
                {"vit_stride", m.vit_stride}};
  json src = json::object();
  for (const auto& [k, v] : c.sources) src[k] = v;
  j["field_sources"] = src;  // anything absent came from a built-in default
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::size_t infer_time_slots(const RunConfig& c, const Dataset& ds) {
  const auto& w = ds.train.front().audio;
  const Waveform clip =
      c.pad_seconds > 0.0 ? pad_or_clip(w, c.pad_seconds) : w;
  return stft_frame_count(clip.samples.size(), spectro_config(c));
}

int cmd_spectrogram(const RunConfig& c, const std::string& wav_path,
                    bool text) {
  Waveform w = read_wav(wav_path);
  MelSpectrogram spec = preprocess(w, spectro_config(c), c.pad_seconds);
  fs::create_directories(c.out_dir);
  fs::path out = fs::path(c.out_dir) /
                 (fs::path(wav_path).stem().string() + ".sptr");
  write_spectrogram(out.string(), spec);
  double lo = 1e300, hi = -1e300;
  for (double v : spec.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::cout << "wrote " << out.string() << "\n"
            << "shape: " << spec.freq_bins << " x " << spec.time_slots << "\n"
            << "range: [" << lo << ", " << hi << "]\n";
  if (text) {
    fs::path txt = fs::path(c.out_dir) /
                   (fs::path(wav_path).stem().string() + ".txt");
    std::ofstream tout(txt);
    tout << spectrogram_to_text(spec);
    std::cout << "wrote " << txt.string() << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& c) {
  Dataset ds = make_dataset(c);
  const std::size_t time_slots = infer_time_slots(c, ds);
  ModelConfig mc = model_config(c, c.mel_bins, time_slots, ds.num_classes);
  TrainConfig tc = train_config(c);
  std::cout << "training " << mc.describe() << "\n"
            << "train/val: " << ds.train.size() << "/" << ds.val.size()
            << " samples, params: " << param_count(mc) << "\n";
  TrainResult r = train(mc, ds.train, ds.val, tc);

  fs::create_directories(c.out_dir);
  const fs::path out(c.out_dir);
  {
    std::ofstream csv(out / "metrics.csv");
    csv << metrics_to_csv(r.metrics);
  }
  save_checkpoint((out / "model.spck").string(), r.best_params, mc);
  write_manifest(out / "manifest.json", "train", c, mc);
  std::cout << "best val acc " << r.best_val_acc << " at epoch "
            << r.best_epoch << " (" << r.optimizer_steps
            << " optimizer steps)\n"
            << "wrote " << (out / "metrics.csv").string() << ", "
            << (out / "model.spck").string() << ", "
            << (out / "manifest.json").string() << "\n";
  return 0;
}

ModelConfig model_config_from_manifest(const fs::path& manifest_path,
                                       RunConfig& run_out) {
  std::ifstream in(manifest_path);
  if (!in)
    throw std::runtime_error("cannot open manifest " +
                             manifest_path.string() +
                             " (expected next to the checkpoint)");
  json j = json::parse(in);
  RunConfig c;
  c.sources.clear();
  json cfg = j.at("config");
  from_config(cfg, "seed", c.seed, c.sources);
  from_config(cfg, "data", c.data_dir, c.sources);
  from_config(cfg, "synth_train", c.synth_train, c.sources);
  from_config(cfg, "synth_val", c.synth_val, c.sources);
  from_config(cfg, "fft_length", c.fft_length, c.sources);
  from_config(cfg, "hop", c.hop, c.sources);
  from_config(cfg, "window", c.window, c.sources);
  from_config(cfg, "mel_bins", c.mel_bins, c.sources);
  from_config(cfg, "pad_seconds", c.pad_seconds, c.sources);
  json m = j.at("model");
  ModelConfig mc;
  mc.variant = variant_from_string(m.at("variant").get<std::string>());
  mc.depth = m.at("depth").get<std::size_t>();
  mc.token_dim = m.at("dim").get<std::size_t>();
  mc.heads = m.at("heads").get<std::size_t>();
  mc.patch_size = m.at("patch").get<std::size_t>();
  mc.mlp_ratio = m.at("mlp_ratio").get<std::size_t>();
  mc.num_classes = m.at("num_classes").get<std::size_t>();
  mc.freq_bins = m.at("freq_bins").get<std::size_t>();
  mc.time_slots = m.at("time_slots").get<std::size_t>();
  mc.vit_patch = m.at("vit_patch").get<std::size_t>();
  mc.vit_stride = m.at("vit_stride").get<std::size_t>();
  run_out = c;
  return mc;
}

EvalResult eval_checkpoint(const std::string& ckpt_path) {
  const fs::path manifest = fs::path(ckpt_path).parent_path() / "manifest.json";
  RunConfig c;
  ModelConfig mc = model_config_from_manifest(manifest, c);
  ModelParams params = load_checkpoint(ckpt_path, mc);
  Dataset ds = make_dataset(c);
  return evaluate(params, mc, ds.val, spectro_config(c), c.pad_seconds);
}

int cmd_eval(const std::string& ckpt_path) {
  EvalResult r = eval_checkpoint(ckpt_path);
  std::cout << "samples: " << r.correct.size() << "\n"
            << "accuracy: " << r.accuracy << "\n";
  return 0;
}

int cmd_compare(const std::string& ckpt_a, const std::string& ckpt_b) {
  EvalResult a = eval_checkpoint(ckpt_a);
  EvalResult b = eval_checkpoint(ckpt_b);
  McNemarResult r = mcnemar(a.correct, b.correct);
  std::cout << "accuracy A: " << a.accuracy << "\n"
            << "accuracy B: " << b.accuracy << "\n"
            << "contingency (n00 n01 / n10 n11): " << r.table.n00 << " "
            << r.table.n01 << " / " << r.table.n10 << " " << r.table.n11
            << "\n"
            << "statistic: " << r.statistic << "\n"
            << "p-value: " << r.p_value << "\n"
            << "verdict at 0.01: "
            << (r.significant_at(0.01) ? "significant" : "not significant")
            << "\n";
  return 0;
}

int cmd_analyze_params(const RunConfig& c, std::vector<std::size_t> sizes) {
  if (sizes.empty()) sizes = {64, 128, 256, 512};
  ModelConfig septr_cfg = model_config(c, sizes[0], sizes[0], 4);
  if (septr_cfg.variant == Variant::kViT) septr_cfg.variant = Variant::kVH;
  ModelConfig vit_cfg = septr_cfg;
  vit_cfg.variant = Variant::kViT;
  vit_cfg.depth = 2 * septr_cfg.depth;  // equal attention-layer depth

  auto rows = param_scan(septr_cfg, vit_cfg, sizes);
  std::cout << "size,septr_params,vit_params,ratio\n";
  for (const auto& r : rows)
    std::cout << r.input_size << "," << r.septr_count << "," << r.vit_count
              << "," << r.ratio << "\n";

  if (rows.size() >= 3) {
    // growth exponent from consecutive increments under size doubling
    auto exponent = [](double d_small, double d_large) {
      return std::log2(d_large / d_small);
    };
    const auto& r = rows;
    const std::size_t last = r.size() - 1;
    double septr_exp = exponent(
        double(r[last - 1].septr_count) - double(r[last - 2].septr_count),
        double(r[last].septr_count) - double(r[last - 1].septr_count));
    double vit_exp = exponent(
        double(r[last - 1].vit_count) - double(r[last - 2].vit_count),
        double(r[last].vit_count) - double(r[last - 1].vit_count));
    std::cout << "growth-law fit (increment doubling exponent): septr ~ S^"
              << septr_exp << ", vit ~ S^" << vit_exp << "\n";
  }
  return 0;
}

int cmd_gradcheck() {
  // Finite-difference sweep over every parameter of a tiny SepTr and ViT.
  auto run = [](const ModelConfig& mc, const char* name) {
    // This seed keeps every gradient large enough for central differences
    // to resolve; the training init (0.02 std) would leave most of them
    // below the ~1e-11 finite-difference noise floor.
    Rng rng(4);
    ModelParams params = init_params(mc, rng);
    for (auto& [pname, t] : params.tensors)
      for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);
    MelSpectrogram spec;
    spec.freq_bins = mc.freq_bins;
    spec.time_slots = mc.time_slots;
    spec.values.resize(mc.freq_bins * mc.time_slots);
    for (double& v : spec.values) v = rng.uniform();
    const std::vector<int> label = {1};

    auto forward = [&] {
      Tensor logits = model_forward(spec, params, mc);
      return cross_entropy(reshape(logits, {1, mc.num_classes}), label);
    };
    params.zero_grad();
    {
      Tape tape;
      tape.backward(forward());
    }
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& [pname, t] : params.tensors) {
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double orig = t.values()[i];
        t.values()[i] = orig + h;
        const double fp = forward().item();
        t.values()[i] = orig - h;
        const double fm = forward().item();
        t.values()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = t.grad()[i];
        const double denom =
            std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
      }
    }
    std::cout << name << ": max relative error " << worst << " over "
              << params.census() << " parameters\n";
    return worst;
  };

  ModelConfig septr_cfg;
  septr_cfg.variant = Variant::kVH;
  septr_cfg.depth = 1;
  septr_cfg.token_dim = 8;
  septr_cfg.heads = 2;
  septr_cfg.patch_size = 1;
  septr_cfg.num_classes = 3;
  septr_cfg.freq_bins = 4;
  septr_cfg.time_slots = 4;

  ModelConfig vit_cfg;
  vit_cfg.variant = Variant::kViT;
  vit_cfg.depth = 1;
  vit_cfg.token_dim = 8;
  vit_cfg.heads = 2;
  vit_cfg.num_classes = 3;
  vit_cfg.freq_bins = 8;
  vit_cfg.time_slots = 8;
  vit_cfg.vit_patch = 4;
  vit_cfg.vit_stride = 4;

  const double a = run(septr_cfg, "septr");
  const double b = run(vit_cfg, "vit");
  const bool ok = a <= 1e-5 && b <= 1e-5;
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-5)\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Separable transformer for audio spectrogram classification"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--out", cfg.out_dir, "output directory");
  };
  auto add_model_opts = [&](CLI::App* sub) {
    sub->add_option("--variant", cfg.variant, "vh, hv, v, h, or vit");
    sub->add_option("--depth", cfg.depth, "separable blocks L");
    sub->add_option("--dim", cfg.dim, "token dimension d");
    sub->add_option("--heads", cfg.heads, "attention heads");
    sub->add_option("--patch", cfg.patch, "token patch size p");
    sub->add_option("--mlp-ratio", cfg.mlp_ratio, "MLP hidden ratio");
    sub->add_option("--vit-patch", cfg.vit_patch, "ViT patch size");
    sub->add_option("--vit-stride", cfg.vit_stride, "ViT patch stride");
  };
  auto add_dsp_opts = [&](CLI::App* sub) {
    sub->add_option("--fft-length", cfg.fft_length, "STFT length N_x");
    sub->add_option("--hop", cfg.hop, "hop size R");
    sub->add_option("--window", cfg.window, "Hamming window length");
    sub->add_option("--mel-bins", cfg.mel_bins, "mel filterbank size");
    sub->add_option("--pad-seconds", cfg.pad_seconds,
                    "pad/clip clips to this length (0 keeps natural length)");
  };
  auto add_data_opts = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_dir,
                    "dataset root (directory-per-class WAV tree); omit to "
                    "use the bundled synthetic task");
    sub->add_option("--dataset-layout", cfg.dataset_layout,
                    "dataset directory layout (class-dirs)");
    sub->add_option("--synth-train", cfg.synth_train,
                    "synthetic training samples");
    sub->add_option("--synth-val", cfg.synth_val,
                    "synthetic validation samples");
  };

  // spectrogram
  std::string wav_path;
  bool text_dump = false;
  auto* sp = app.add_subcommand("spectrogram",
                                "convert a WAV file to a spectrogram file");
  sp->add_option("wav", wav_path, "input WAV file")->required();
  sp->add_flag("--text", text_dump, "also write a plain-text grid");
  add_common(sp);
  add_dsp_opts(sp);

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr);
  add_model_opts(tr);
  add_dsp_opts(tr);
  add_data_opts(tr);
  tr->add_option("--epochs", cfg.epochs, "training epochs");
  tr->add_option("--batch", cfg.batch, "mini-batch size");
  tr->add_option("--lr", cfg.lr, "initial learning rate");
  tr->add_option("--decay", cfg.decay, "lr decay factor");
  tr->add_option("--decay-period", cfg.decay_period, "epochs per decay");
  tr->add_option("--target-val-acc", cfg.target_val_acc,
                 "stop early at this validation accuracy (0 disables)");
  tr->add_flag("--augment", cfg.augment, "enable training augmentations");

  // eval
  std::string ckpt_path, ckpt_b_path;
  auto* ev = app.add_subcommand("eval", "evaluate a saved checkpoint");
  ev->add_option("checkpoint", ckpt_path, "checkpoint file")->required();

  // compare
  auto* cp = app.add_subcommand(
      "compare", "McNemar significance test between two checkpoints");
  cp->add_option("checkpoint_a", ckpt_path, "first checkpoint")->required();
  cp->add_option("checkpoint_b", ckpt_b_path, "second checkpoint")
      ->required();

  // analyze-params
  std::vector<std::size_t> sizes;
  auto* ap = app.add_subcommand(
      "analyze-params", "parameter counts vs input size, SepTr vs ViT");
  ap->add_option("--sizes", sizes, "square input sizes");
  add_common(ap);
  add_model_opts(ap);

  // gradcheck
  auto* gc = app.add_subcommand(
      "gradcheck", "finite-difference gradient check on tiny models");

  CLI11_PARSE(app, argc, argv);

  try {
    // precedence: built-in defaults, then config file, then explicit flags
    if (!config_path.empty()) {
      RunConfig flag_values = cfg;
      CLI::App* sub = app.get_subcommands().front();
      RunConfig base;
      base.sources = {};
      apply_config_file(base, config_path);
      auto keep_flag = [&](const char* flag, auto member) {
        if (sub->count(flag)) {
          base.*member = flag_values.*member;
          base.sources[std::string(flag).substr(2)] = "flag";
        }
      };
      keep_flag("--seed", &RunConfig::seed);
      keep_flag("--out", &RunConfig::out_dir);
      keep_flag("--variant", &RunConfig::variant);
      keep_flag("--depth", &RunConfig::depth);
      keep_flag("--dim", &RunConfig::dim);
      keep_flag("--heads", &RunConfig::heads);
      keep_flag("--patch", &RunConfig::patch);
      keep_flag("--mlp-ratio", &RunConfig::mlp_ratio);
      keep_flag("--vit-patch", &RunConfig::vit_patch);
      keep_flag("--vit-stride", &RunConfig::vit_stride);
      keep_flag("--fft-length", &RunConfig::fft_length);
      keep_flag("--hop", &RunConfig::hop);
      keep_flag("--window", &RunConfig::window);
      keep_flag("--mel-bins", &RunConfig::mel_bins);
      keep_flag("--pad-seconds", &RunConfig::pad_seconds);
      keep_flag("--data", &RunConfig::data_dir);
      keep_flag("--dataset-layout", &RunConfig::dataset_layout);
      keep_flag("--synth-train", &RunConfig::synth_train);
      keep_flag("--synth-val", &RunConfig::synth_val);
      keep_flag("--epochs", &RunConfig::epochs);
      keep_flag("--batch", &RunConfig::batch);
      keep_flag("--lr", &RunConfig::lr);
      keep_flag("--decay", &RunConfig::decay);
      keep_flag("--decay-period", &RunConfig::decay_period);
      keep_flag("--target-val-acc", &RunConfig::target_val_acc);
      cfg = base;
    }

    if (sp->parsed()) return cmd_spectrogram(cfg, wav_path, text_dump);
    if (tr->parsed()) return cmd_train(cfg);
    if (ev->parsed()) return cmd_eval(ckpt_path);
    if (cp->parsed()) return cmd_compare(ckpt_path, ckpt_b_path);
    if (ap->parsed()) return cmd_analyze_params(cfg, sizes);
    if (gc->parsed()) return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
