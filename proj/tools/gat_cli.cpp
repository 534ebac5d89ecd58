// gat: dataset, training, sampling, and analysis commands.
//
// Every subcommand prints one {"kind":"config",...} line with its effective
// settings before acting, then {"kind":"result",...} on success, so stdout
// is always a stream of single-line JSON records. Exit codes: 0 success,
// 2 configuration or usage error, 3 I/O error, 4 divergence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gat/autograd.hpp"
#include "gat/config.hpp"
#include "gat/data.hpp"
#include "gat/errors.hpp"
#include "gat/generator.hpp"
#include "gat/metrics.hpp"
#include "gat/mng.hpp"
#include "gat/optim.hpp"
#include "gat/rng.hpp"
#include "gat/tensor.hpp"
#include "gat/trainer.hpp"

namespace {

using nlohmann::json;
using namespace gat;

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

json doubles_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

// [B, C, h, w] batch row i -> standalone [C, h, w] tensor.
Tensor batch_row(const Tensor& batch, int i) {
  int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor t = Tensor::uninit({c, h, w});
  const double* src = batch.data() + static_cast<int64_t>(i) * c * h * w;
  std::copy(src, src + static_cast<int64_t>(c) * h * w, t.data());
  return t;
}

std::vector<int> cycle_classes(int count, int num_classes, int fixed) {
  std::vector<int> cls(count);
  for (int i = 0; i < count; ++i) cls[i] = fixed < 0 ? i % num_classes : fixed;
  return cls;
}

// ---------------------------------------------------------------- data synth

struct SynthArgs {
  std::string out;
  int classes = 10, per_class = 2000, channels = 4, hw = 8;
  uint64_t seed = 1;
};

void run_synth(const SynthArgs& a) {
  emit({{"kind", "config"},
        {"command", "data synth"},
        {"out", a.out},
        {"classes", a.classes},
        {"per_class", a.per_class},
        {"channels", a.channels},
        {"hw", a.hw},
        {"seed", a.seed}});
  data::LatentDataset ds =
      data::gen_synthetic(a.classes, a.per_class, a.channels, a.hw, a.seed);
  data::save_latents(ds, a.out);
  emit({{"kind", "result"}, {"path", a.out}, {"count", ds.count()}});
}

// -------------------------------------------------------------- data inspect

void run_inspect(const std::string& path) {
  emit({{"kind", "config"}, {"command", "data inspect"}, {"in", path}});
  data::LatentDataset ds = data::load_latents(path);
  std::vector<int64_t> per_class(ds.num_classes, 0);
  for (int l : ds.labels)
    if (l >= 0 && l < ds.num_classes) ++per_class[l];
  int c = ds.channels(), h = ds.hw();
  int64_t plane = static_cast<int64_t>(h) * h;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (const Tensor& s : ds.samples)
    for (int ch = 0; ch < c; ++ch) {
      const double* p = s.data() + ch * plane;
      for (int64_t i = 0; i < plane; ++i) mean[ch] += p[i];
    }
  double n = static_cast<double>(ds.count()) * static_cast<double>(plane);
  for (double& m : mean) m /= n;
  for (const Tensor& s : ds.samples)
    for (int ch = 0; ch < c; ++ch) {
      const double* p = s.data() + ch * plane;
      for (int64_t i = 0; i < plane; ++i) {
        double d = p[i] - mean[ch];
        var[ch] += d * d;
      }
    }
  std::vector<double> stdev(c);
  for (int ch = 0; ch < c; ++ch) stdev[ch] = std::sqrt(var[ch] / n);
  json counts = json::array();
  for (int64_t k : per_class) counts.push_back(k);
  emit({{"kind", "result"},
        {"count", ds.count()},
        {"channels", c},
        {"hw", h},
        {"num_classes", ds.num_classes},
        {"class_counts", counts},
        {"channel_mean", doubles_json(mean)},
        {"channel_std", doubles_json(stdev)}});
}

// --------------------------------------------------------------------- train

void run_train(const std::string& config_path, const std::string& resume) {
  std::unique_ptr<train::Trainer> tr;
  if (!resume.empty()) {
    tr = train::Trainer::load_checkpoint(resume);
    if (!config_path.empty()) {
      RunConfig rc = load_run_config(config_path);
      if (!(rc == tr->config()))
        throw ConfigError("train: --config disagrees with the configuration "
                          "embedded in " + resume);
    }
  } else {
    if (config_path.empty()) throw ConfigError("train: --config or --resume required");
    tr = std::make_unique<train::Trainer>(load_run_config(config_path));
  }
  json cfg_echo = {{"kind", "config"},
                   {"command", "train"},
                   {"run", to_json(tr->config())}};
  if (!resume.empty()) cfg_echo["resume"] = resume;
  emit(cfg_echo);
  tr->train();
  emit({{"kind", "result"},
        {"steps", tr->step_count()},
        {"out_dir", tr->config().out_dir}});
}

// -------------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint, out, order = "trunc-first";
  int class_id = -1, count = 16, stats_samples = 64;
  double psi = 1.0, guidance = 1.0, fraction = 0.5;
  uint64_t seed = 1;
};

void run_sample(const SampleArgs& a) {
  if (!std::isfinite(a.psi) || !std::isfinite(a.guidance))
    throw ConfigError("sample: psi and guidance must be finite");
  if (a.fraction < 0.0 || a.fraction > 1.0)
    throw ConfigError("sample: guide-fraction must lie in [0, 1]");
  if (a.count < 1) throw ConfigError("sample: count must be positive");
  auto tr = train::Trainer::load_checkpoint(a.checkpoint);
  gen::Generator& g = tr->generator();
  const ModelConfig& mc = g.config();
  if (a.class_id >= mc.num_classes)
    throw ConfigError("sample: class out of range");
  emit({{"kind", "config"},
        {"command", "sample"},
        {"checkpoint", a.checkpoint},
        {"out", a.out},
        {"class", a.class_id},
        {"count", a.count},
        {"psi", a.psi},
        {"guidance", a.guidance},
        {"guide_fraction", a.fraction},
        {"order", a.order},
        {"seed", a.seed},
        {"stats_samples", a.stats_samples}});

  ag::NoGradGuard ng;
  train::EmaScope ema(g.params().all(), tr->ema());
  RngStream zs(derive_seed(a.seed, "cli-sample-z"));
  Tensor z = zs.normal_tensor({a.count, mc.latent_dz});
  std::vector<int> cls = cycle_classes(a.count, mc.num_classes, a.class_id);
  Tensor w = g.map_style(ag::constant(z), cls)->value;

  bool want_trunc = a.psi != 1.0;
  bool want_guide = a.guidance != 1.0;
  gen::StyleStats stats;
  if (want_trunc || want_guide)
    stats = gen::collect_style_stats(g, a.stats_samples,
                                     derive_seed(a.seed, "cli-sample-stats"));
  Tensor wt = w;
  std::vector<Tensor> styles;
  if (a.order == "guide-first") {
    if (want_guide)
      styles = gen::latent_guidance(w, stats, cls, a.guidance, a.fraction, mc.depth);
    if (want_trunc) {
      wt = gen::truncate_style(w, stats, cls, a.psi);
      for (Tensor& s : styles) s = gen::truncate_style(s, stats, cls, a.psi);
    }
  } else {
    if (want_trunc) wt = gen::truncate_style(w, stats, cls, a.psi);
    if (want_guide)
      styles = gen::latent_guidance(wt, stats, cls, a.guidance, a.fraction, mc.depth);
  }

  gen::GenerateOptions go;
  std::vector<ag::NodePtr> style_nodes;
  if (!styles.empty()) {
    style_nodes.reserve(styles.size());
    for (Tensor& s : styles) style_nodes.push_back(ag::constant(s));
    go.block_styles = &style_nodes;
  }
  gen::GeneratorOutput out = g.run_from_style(ag::constant(wt), go);
  Tensor imgs = out.images.back()->value;

  data::LatentDataset ds;
  ds.num_classes = mc.num_classes;
  ds.labels = cls;
  ds.samples.reserve(a.count);
  for (int i = 0; i < a.count; ++i) ds.samples.push_back(batch_row(imgs, i));
  data::save_latents(ds, a.out);
  emit({{"kind", "result"},
        {"path", a.out},
        {"count", a.count},
        {"levels", static_cast<int>(out.images.size())}});
}

// ------------------------------------------------------------------ probe-lr

struct ProbeArgs {
  std::string widths_csv = "64,128,256", rule = "adapted";
  double eta = 4e-4, c_base = 384.0;
  int seeds = 5, steps = 10, batch = 16, depth = 4;
  bool cross_check = false;
};

std::vector<int> parse_widths(const std::string& csv) {
  std::vector<int> widths;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    std::string tok = csv.substr(pos, comma - pos);
    try {
      widths.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("probe-lr: bad width '" + tok + "'");
    }
    pos = comma + 1;
  }
  if (widths.empty()) throw ConfigError("probe-lr: --widths is empty");
  for (int w : widths)
    if (w < 16 || w % 16 != 0)
      throw ConfigError("probe-lr: widths must be positive multiples of 16");
  return widths;
}

ModelConfig probe_model(int width, int depth) {
  ModelConfig mc;
  mc.width_c = width;
  mc.depth = depth;
  mc.heads = width / 16;  // pins head_dim to 16 across widths
  mc.stages_k = 1;        // largest divisor of depth up to the default 4
  for (int k = std::min(4, depth); k > 1; --k)
    if (depth % k == 0) {
      mc.stages_k = k;
      break;
    }
  return mc;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs `seeds` probes of one width at a literal learning rate; returns the
// probe values, the median over non-diverged seeds, and the diverged count.
json probe_series(const ModelConfig& mc, double eta, const ProbeArgs& a,
                  double* median_out) {
  std::vector<double> values;
  int diverged = 0;
  json per_seed = json::array();
  for (int s = 0; s < a.seeds; ++s) {
    train::ProbeResult r =
        train::update_probe(mc, eta, a.batch, a.steps, 1000 + s);
    per_seed.push_back({{"seed", 1000 + s},
                        {"value", r.value},
                        {"diverged", r.diverged}});
    if (!r.diverged) values.push_back(r.value);
    else ++diverged;
  }
  double med = values.empty() ? 0.0 : median(values);
  if (median_out) *median_out = med;
  return {{"width", mc.width_c}, {"eta", eta},      {"probes", per_seed},
          {"median", med},       {"diverged", diverged}};
}

void run_probe(const ProbeArgs& a) {
  std::vector<int> widths = parse_widths(a.widths_csv);
  if (a.rule != "adapted" && a.rule != "fixed")
    throw ConfigError("probe-lr: --rule must be adapted or fixed");
  emit({{"kind", "config"},
        {"command", "probe-lr"},
        {"widths", a.widths_csv},
        {"rule", a.rule},
        {"eta", a.eta},
        {"c_base", a.c_base},
        {"seeds", a.seeds},
        {"steps", a.steps},
        {"batch", a.batch},
        {"depth", a.depth},
        {"cross_check", a.cross_check}});

  json results = json::array();
  std::vector<double> medians(widths.size());
  for (size_t i = 0; i < widths.size(); ++i) {
    ModelConfig mc = probe_model(widths[i], a.depth);
    double eta = a.rule == "adapted" ? opt::adapt_lr(a.eta, a.c_base, widths[i])
                                     : a.eta;
    results.push_back(probe_series(mc, eta, a, &medians[i]));
  }
  json ratios = json::array();
  for (size_t i = 0; i + 1 < widths.size(); ++i)
    ratios.push_back({{"narrow", widths[i]},
                      {"wide", widths[i + 1]},
                      {"ratio", medians[i] > 0.0 ? medians[i + 1] / medians[i]
                                                 : 0.0}});
  json out = {{"kind", "result"}, {"results", results}, {"ratios", ratios}};

  if (a.cross_check) {
    // Swap adapted rates between adjacent widths: the narrow width's larger
    // rate applied to the wide model probes instability, the wide width's
    // smaller rate applied to the narrow model probes slow convergence.
    json cross = json::array();
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
      int pair[2][2] = {{widths[i + 1], widths[i]},   // wide model, narrow eta
                        {widths[i], widths[i + 1]}};  // narrow model, wide eta
      for (auto& [model_w, eta_w] : pair) {
        ModelConfig mc = probe_model(model_w, a.depth);
        double eta = opt::adapt_lr(a.eta, a.c_base, eta_w);
        double med = 0.0;
        json row = probe_series(mc, eta, a, &med);
        size_t self = model_w == widths[i + 1] ? i + 1 : i;
        row["eta_from_width"] = eta_w;
        row["matched_median"] = medians[self];
        row["slow_convergence"] =
            row["diverged"].get<int>() == 0 && med < 0.5 * medians[self];
        cross.push_back(row);
      }
    }
    out["cross_check"] = cross;
  }
  emit(out);
}

// ------------------------------------------------------------ analyze blocks

struct BlocksArgs {
  std::string checkpoint, out;
  int count = 32;
  uint64_t seed = 1;
  bool teacher_space = false;
};

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(IoCode::open_failed, "cannot write " + path);
  f << j.dump(2) << "\n";
}

void run_blocks(const BlocksArgs& a) {
  auto tr = train::Trainer::load_checkpoint(a.checkpoint);
  emit({{"kind", "config"},
        {"command", "analyze blocks"},
        {"checkpoint", a.checkpoint},
        {"count", a.count},
        {"seed", a.seed},
        {"teacher_space", a.teacher_space},
        {"out", a.out}});
  gen::Generator& g = tr->generator();
  ag::NoGradGuard ng;
  train::EmaScope ema(g.params().all(), tr->ema());
  RngStream zs(derive_seed(a.seed, "cli-analyze-z"));
  Tensor z = zs.normal_tensor({a.count, g.config().latent_dz});
  std::vector<int> cls = cycle_classes(a.count, g.config().num_classes, -1);
  metrics::BlockContributionReport rep = metrics::block_contribution(
      g, z, cls, a.teacher_space ? &tr->teacher() : nullptr);
  json result = {{"kind", "result"},
                 {"distance_kind", rep.distance_kind},
                 {"sample_count", rep.sample_count},
                 {"distances", doubles_json(rep.distances)}};
  if (!a.out.empty()) write_json_file(a.out, result);
  emit(result);
}

// --------------------------------------------------------------- analyze pca

struct PcaArgs {
  std::string checkpoint, out;
  int count = 16;
  uint64_t seed = 1;
};

void run_pca(const PcaArgs& a) {
  auto tr = train::Trainer::load_checkpoint(a.checkpoint);
  emit({{"kind", "config"},
        {"command", "analyze pca"},
        {"checkpoint", a.checkpoint},
        {"count", a.count},
        {"seed", a.seed},
        {"out", a.out}});
  gen::Generator& g = tr->generator();
  const ModelConfig& mc = g.config();
  ag::NoGradGuard ng;
  train::EmaScope ema(g.params().all(), tr->ema());
  RngStream zs(derive_seed(a.seed, "cli-analyze-z"));
  Tensor z = zs.normal_tensor({a.count, mc.latent_dz});
  std::vector<int> cls = cycle_classes(a.count, mc.num_classes, -1);
  gen::GenerateOptions go;
  std::vector<Tensor> caps;
  go.capture = &caps;
  g.generate(ag::constant(z), cls, go);
  std::vector<metrics::PcaBlock> blocks =
      metrics::pca_features(caps, mc.grid_hw());

  json arr = json::array();
  for (size_t b = 0; b < blocks.size(); ++b) {
    const metrics::PcaBlock& pb = blocks[b];
    int c = pb.components.dim(1);
    json comps = json::array();
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int j = 0; j < c; ++j) row.push_back(pb.components.data()[r * c + j]);
      comps.push_back(row);
    }
    int rows = pb.grid.dim(0), cols = pb.grid.dim(1);
    json grid = json::array();
    for (int r = 0; r < rows; ++r) {
      json row = json::array();
      for (int ccol = 0; ccol < cols; ++ccol) {
        const double* p = pb.grid.data() + (r * cols + ccol) * 3;
        row.push_back({p[0], p[1], p[2]});
      }
      grid.push_back(row);
    }
    arr.push_back({{"block", static_cast<int>(b)},
                   {"rank", pb.rank},
                   {"rank_deficient", pb.rank_deficient},
                   {"explained", doubles_json(pb.explained)},
                   {"components", comps},
                   {"grid", grid}});
  }
  json result = {{"kind", "result"}, {"blocks", arr}};
  if (!a.out.empty()) write_json_file(a.out, result);
  emit(result);
}

// --------------------------------------------------------------- analyze fid

struct FidArgs {
  std::string a_path, b_path, checkpoint, data_path;
  int count = 256, teacher_dim = 64;
  uint64_t teacher_seed = 7777, seed = 1;
};

Tensor head_batch(const data::LatentDataset& ds, int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  return ds.batch(idx);
}

void run_fid(const FidArgs& a) {
  bool pair_mode = !a.a_path.empty() || !a.b_path.empty();
  if (pair_mode && (a.a_path.empty() || a.b_path.empty()))
    throw ConfigError("fid: --a and --b must be given together");
  if (pair_mode == !a.checkpoint.empty())
    throw ConfigError("fid: give either --a/--b or --checkpoint");
  emit({{"kind", "config"},
        {"command", "analyze fid"},
        {"a", a.a_path},
        {"b", a.b_path},
        {"checkpoint", a.checkpoint},
        {"data", a.data_path},
        {"count", a.count},
        {"teacher_dim", a.teacher_dim},
        {"teacher_seed", a.teacher_seed},
        {"seed", a.seed}});

  double fid = 0.0;
  int n_a = 0, n_b = 0;
  if (pair_mode) {
    data::LatentDataset da = data::load_latents(a.a_path);
    data::LatentDataset db = data::load_latents(a.b_path);
    if (da.channels() != db.channels() || da.hw() != db.hw())
      throw IoError(IoCode::geometry_mismatch,
                    "fid: datasets disagree on channels or grid size");
    ModelConfig mc;
    mc.image_channels = da.channels();
    mc.image_hw = da.hw();
    if (mc.image_hw % mc.patch_p != 0) mc.patch_p = 1;
    metrics::TeacherEncoder teacher(mc, a.teacher_dim, a.teacher_seed);
    n_a = std::min(a.count, da.count());
    n_b = std::min(a.count, db.count());
    Tensor fa = teacher.cls_features(head_batch(da, n_a));
    Tensor fb = teacher.cls_features(head_batch(db, n_b));
    fid = metrics::frechet_proxy(fa, fb);
  } else {
    auto tr = train::Trainer::load_checkpoint(a.checkpoint);
    gen::Generator& g = tr->generator();
    const ModelConfig& mc = g.config();
    const data::LatentDataset* real = &tr->dataset();
    data::LatentDataset loaded;
    if (!a.data_path.empty()) {
      loaded = data::load_latents(a.data_path);
      if (loaded.channels() != mc.image_channels || loaded.hw() != mc.image_hw)
        throw IoError(IoCode::geometry_mismatch,
                      "fid: --data geometry does not match the model");
      real = &loaded;
    }
    ag::NoGradGuard ng;
    train::EmaScope ema(g.params().all(), tr->ema());
    n_a = std::min(a.count, real->count());
    n_b = a.count;
    // Real side: the dataset tail (the held-out region of the train split).
    std::vector<int> idx(n_a);
    for (int i = 0; i < n_a; ++i) idx[i] = real->count() - n_a + i;
    Tensor real_feats = tr->teacher().cls_features(real->batch(idx));
    // Fake side: EMA samples in fixed-size chunks to bound graph memory.
    RngStream zs(derive_seed(a.seed, "cli-fid-z"));
    Tensor gen_feats = Tensor::uninit({n_b, tr->teacher().dim()});
    const int chunk = 64;
    for (int at = 0; at < n_b; at += chunk) {
      int m = std::min(chunk, n_b - at);
      Tensor z = zs.normal_tensor({m, mc.latent_dz});
      std::vector<int> cls(m);
      for (int i = 0; i < m; ++i) cls[i] = (at + i) % mc.num_classes;
      gen::GeneratorOutput out = g.generate(ag::constant(z), cls);
      Tensor f = tr->teacher().cls_features(out.images.back()->value);
      std::copy(f.data(), f.data() + f.size(),
                gen_feats.data() + static_cast<int64_t>(at) * f.dim(1));
    }
    fid = metrics::frechet_proxy(real_feats, gen_feats);
  }
  emit({{"kind", "result"}, {"frechet", fid}, {"n_a", n_a}, {"n_b", n_b}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-space GAN transformer workbench"};
  app.require_subcommand(1);

  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);

  SynthArgs sa;
  auto* synth = data_cmd->add_subcommand("synth", "write a synthetic latent dataset");
  synth->add_option("--out", sa.out, "output GLT1 path")->required();
  synth->add_option("--classes", sa.classes, "number of classes");
  synth->add_option("--per-class", sa.per_class, "samples per class");
  synth->add_option("--channels", sa.channels, "latent channels");
  synth->add_option("--hw", sa.hw, "latent grid side");
  synth->add_option("--seed", sa.seed, "generation seed");
  synth->callback([&] { run_synth(sa); });

  std::string inspect_in;
  auto* inspect = data_cmd->add_subcommand("inspect", "summarize a GLT1 file");
  inspect->add_option("--in", inspect_in, "input GLT1 path")->required();
  inspect->callback([&] { run_inspect(inspect_in); });

  std::string train_config, train_resume;
  auto* train_cmd = app.add_subcommand("train", "run or resume training");
  train_cmd->add_option("--config", train_config, "run config JSON path");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->callback([&] { run_train(train_config, train_resume); });

  SampleArgs smp;
  auto* sample = app.add_subcommand("sample", "draw EMA samples from a checkpoint");
  sample->add_option("--checkpoint", smp.checkpoint, "checkpoint path")->required();
  sample->add_option("--out", smp.out, "output GLT1 path")->required();
  sample->add_option("--class", smp.class_id, "class id; -1 cycles all classes");
  sample->add_option("--count", smp.count, "number of samples");
  sample->add_option("--psi", smp.psi, "truncation factor; 1 disables");
  sample->add_option("--guidance", smp.guidance, "guidance strength; 1 disables");
  sample->add_option("--guide-fraction", smp.fraction, "fraction of early blocks guided");
  sample->add_option("--order", smp.order, "trunc-first | guide-first")
      ->check(CLI::IsMember({"trunc-first", "guide-first"}));
  sample->add_option("--seed", smp.seed, "sampling seed");
  sample->add_option("--stats-samples", smp.stats_samples,
                     "per-class draws for style statistics");
  sample->callback([&] { run_sample(smp); });

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe-lr", "update-magnitude probe across widths");
  probe->add_option("--widths", pa.widths_csv, "comma-separated widths");
  probe->add_option("--rule", pa.rule, "adapted | fixed")
      ->check(CLI::IsMember({"adapted", "fixed"}));
  probe->add_option("--eta", pa.eta, "base learning rate");
  probe->add_option("--c-base", pa.c_base, "reference width for the adapted rule");
  probe->add_option("--seeds", pa.seeds, "seeds per width");
  probe->add_option("--steps", pa.steps, "optimizer steps per probe");
  probe->add_option("--batch", pa.batch, "probe batch size");
  probe->add_option("--depth", pa.depth, "probe model depth");
  probe->add_flag("--cross-check", pa.cross_check,
                  "swap adapted rates between adjacent widths");
  probe->callback([&] { run_probe(pa); });

  auto* analyze = app.add_subcommand("analyze", "model analysis");
  analyze->require_subcommand(1);

  BlocksArgs ba;
  auto* blocks = analyze->add_subcommand("blocks", "per-block output contribution");
  blocks->add_option("--checkpoint", ba.checkpoint, "checkpoint path")->required();
  blocks->add_option("--count", ba.count, "sample count");
  blocks->add_option("--seed", ba.seed, "latent seed");
  blocks->add_flag("--teacher-space", ba.teacher_space,
                   "measure distances in teacher feature space");
  blocks->add_option("--out", ba.out, "also write the report to this file");
  blocks->callback([&] { run_blocks(ba); });

  PcaArgs pca;
  auto* pca_cmd = analyze->add_subcommand("pca", "token PCA per block");
  pca_cmd->add_option("--checkpoint", pca.checkpoint, "checkpoint path")->required();
  pca_cmd->add_option("--count", pca.count, "sample count");
  pca_cmd->add_option("--seed", pca.seed, "latent seed");
  pca_cmd->add_option("--out", pca.out, "also write the report to this file");
  pca_cmd->callback([&] { run_pca(pca); });

  FidArgs fa;
  auto* fid = analyze->add_subcommand("fid", "Frechet proxy between feature sets");
  fid->add_option("--a", fa.a_path, "first GLT1 dataset");
  fid->add_option("--b", fa.b_path, "second GLT1 dataset");
  fid->add_option("--checkpoint", fa.checkpoint, "score EMA samples against the train data");
  fid->add_option("--data", fa.data_path, "override the real dataset (checkpoint mode)");
  fid->add_option("--count", fa.count, "samples per side");
  fid->add_option("--teacher-dim", fa.teacher_dim, "teacher feature width (pair mode)");
  fid->add_option("--teacher-seed", fa.teacher_seed, "teacher seed (pair mode)");
  fid->add_option("--seed", fa.seed, "latent seed (checkpoint mode)");
  fid->callback([&] { run_fid(fa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
