#include "gat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <unordered_map>

#include <json.hpp>

#include "gat/errors.hpp"

namespace gat::train {

using ag::NodePtr;
using nlohmann::json;

EmaScope::EmaScope(std::vector<nn::Param>& params, std::vector<Tensor>& ema)
    : params_(params), ema_(ema) {
  if (params_.size() != ema_.size()) throw ConfigError("ema scope: tree mismatch");
  for (size_t i = 0; i < params_.size(); ++i) std::swap(params_[i].node->value, ema_[i]);
}

EmaScope::~EmaScope() {
  for (size_t i = 0; i < params_.size(); ++i) std::swap(params_[i].node->value, ema_[i]);
}

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  sched_ = mng::make_schedule(cfg_.model.stages_k, cfg_.schedule);

  if (cfg_.data_source == "synthetic") {
    ds_ = data::gen_synthetic(cfg_.model.num_classes, cfg_.per_class,
                              cfg_.model.image_channels, cfg_.model.image_hw,
                              derive_seed(cfg_.seed, "dataset"));
  } else {
    ds_ = data::load_latents(cfg_.data_path);
    if (ds_.channels() != cfg_.model.image_channels || ds_.hw() != cfg_.model.image_hw ||
        ds_.num_classes != cfg_.model.num_classes) {
      throw IoError(IoCode::geometry_mismatch,
                    "dataset " + cfg_.data_path + " does not match the model geometry");
    }
  }
  train_idx_ = ds_.train_indices(cfg_.eval_fraction);
  if (train_idx_.empty()) throw ConfigError("trainer: eval split consumed every sample");

  RngStream init_rng(derive_seed(cfg_.seed, "init"));
  gen_ = std::make_unique<gen::Generator>(cfg_.model, init_rng, cfg_.optim.mapping_lr_mult);
  dis_ = std::make_unique<dis::Discriminator>(cfg_.model, cfg_.d_ingest, cfg_.teacher_dim,
                                              cfg_.repa_hidden, init_rng);
  teacher_ = std::make_unique<metrics::TeacherEncoder>(cfg_.model, cfg_.teacher_dim,
                                                       cfg_.teacher_seed);
  ema_ = opt::ema_init(gen_->params().all());
  g_opt_ = opt::build_optimizer(gen_->params(), cfg_.optim, cfg_.model.width_c);
  d_opt_ = opt::build_optimizer(dis_->params(), cfg_.optim, cfg_.model.width_c);

  rs_data_ = RngStream(derive_seed(cfg_.seed, "data"));
  rs_mng_ = RngStream(derive_seed(cfg_.seed, "mng"));
  rs_gp_ = RngStream(derive_seed(cfg_.seed, "gp"));
  rs_aug_ = RngStream(derive_seed(cfg_.seed, "aug"));
  rs_z_ = RngStream(derive_seed(cfg_.seed, "z"));
}

void Trainer::emit(const std::string& tag) {
  if (trace_) trace_->push_back(tag);
}

std::vector<int> Trainer::batch_labels(const std::vector<int>& idx) const {
  std::vector<int> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = ds_.labels[idx[i]];
  return out;
}

StepDraws Trainer::draw_step() {
  StepDraws dr;
  int b = cfg_.batch_size;
  int ch = cfg_.model.image_channels, hw = cfg_.model.image_hw;
  std::vector<int> img_shape = {b, ch, hw, hw};
  bool gp = cfg_.lambda_agp != 0.0;

  dr.batch_idx.resize(b);
  for (int i = 0; i < b; ++i) {
    dr.batch_idx[i] = train_idx_[rs_data_.below(static_cast<int>(train_idx_.size()))];
  }
  dr.z_d = rs_z_.normal_tensor({b, cfg_.model.latent_dz});
  if (gp) {
    dr.eps_r1 = rs_gp_.normal_tensor(img_shape, 0.0, cfg_.sigma_gp);
    dr.eps_r2 = rs_gp_.normal_tensor(img_shape, 0.0, cfg_.sigma_gp);
  }
  dr.aug_real_adv = data::draw_augment(rs_aug_, b, ch, hw);
  dr.aug_fake_adv = data::draw_augment(rs_aug_, b, ch, hw);
  if (cfg_.mng) {
    dr.noise_real_adv = mng::sample_noise_stack(img_shape, sched_, rs_mng_);
    dr.noise_fake_adv = mng::sample_noise_stack(img_shape, sched_, rs_mng_);
  }

  dr.z_g = rs_z_.normal_tensor({b, cfg_.model.latent_dz});
  dr.aug_real_g = data::draw_augment(rs_aug_, b, ch, hw);
  dr.aug_fake_g = data::draw_augment(rs_aug_, b, ch, hw);
  if (cfg_.mng) {
    dr.noise_real_g = mng::sample_noise_stack(img_shape, sched_, rs_mng_);
    dr.noise_fake_g = mng::sample_noise_stack(img_shape, sched_, rs_mng_);
  }
  return dr;
}

std::vector<NodePtr> Trainer::real_stack(const NodePtr& x, const data::AugmentParams& aug,
                                         const std::vector<Tensor>& noise,
                                         const std::string& tag) {
  emit(tag + ":augment");
  NodePtr a = data::apply_augment(x, aug);
  std::vector<NodePtr> rep = mng::replicate_real(a, sched_.levels());
  if (!cfg_.mng) return rep;
  emit(tag + ":mng_perturb");
  return mng::perturb(rep, sched_, noise);
}

std::vector<NodePtr> Trainer::level_stack(const std::vector<NodePtr>& levels,
                                          const data::AugmentParams& aug,
                                          const std::vector<Tensor>& noise,
                                          const std::string& tag) {
  int k = sched_.levels();
  if (static_cast<int>(levels.size()) != k) throw ConfigError("trainer: stack level mismatch");
  if (!cfg_.mng) {
    // Without MNG the discriminator sees only the final image: K copies,
    // no intermediate supervision, no noise.
    emit(tag + ":augment");
    return std::vector<NodePtr>(k, data::apply_augment(levels.back(), aug));
  }
  emit(tag + ":augment");
  std::vector<NodePtr> out;
  out.reserve(levels.size());
  for (const auto& lv : levels) out.push_back(data::apply_augment(lv, aug));
  emit(tag + ":mng_perturb");
  return mng::perturb(out, sched_, noise);
}

void Trainer::d_losses(const StepDraws& dr, bool do_backward, obj::LossBreakdown& bd) {
  std::optional<ag::NoGradGuard> tape_off;
  if (!do_backward) tape_off.emplace();
  int k = sched_.levels();
  Tensor real = ds_.batch(dr.batch_idx);
  std::vector<int> classes = batch_labels(dr.batch_idx);

  // Fakes are constants for the discriminator update.
  std::vector<NodePtr> fake_nodes;
  std::vector<Tensor> fake_vals(k);
  {
    ag::NoGradGuard ng;
    gen::GeneratorOutput gout = gen_->generate(ag::constant(dr.z_d), classes);
    fake_nodes = gout.images;
    for (int i = 0; i < k; ++i) fake_vals[i] = gout.images[i]->value;
  }

  // Graph 1: relativistic pair plus alignment.
  auto real_levels = real_stack(ag::constant(real), dr.aug_real_adv, dr.noise_real_adv,
                                "adv_real");
  dis::DisOutput dreal = dis_->discriminate(real_levels, classes);
  auto fake_levels = level_stack(fake_nodes, dr.aug_fake_adv, dr.noise_fake_adv, "adv_fake");
  dis::DisOutput dfake = dis_->discriminate(fake_levels, classes);
  obj::AdvLosses adv = obj::adv_losses(dreal.logits, dfake.logits);
  bd.l_d_adv = adv.l_d_adv->value.item();
  NodePtr root = adv.l_d_adv;
  if (cfg_.lambda_repa != 0.0) {
    // Teacher sees the clean real image: level K of the stack, which the
    // alpha = 1 short-circuit keeps bit-equal to the augmented batch.
    last_teacher_input_ = real_levels.back()->value;
    Tensor teach = teacher_->encode(last_teacher_input_);
    NodePtr projected = dis_->repa_project(dreal.tokens);
    NodePtr repa = obj::repa_loss(projected, teach);
    bd.l_repa = repa->value.item();
    root = ag::add(root, ag::scale(repa, cfg_.lambda_repa));
  } else {
    bd.l_repa = 0.0;
  }

  // Penalty branches rerun the two adversarial pipelines (same augment and
  // noise draws) on noised bases; the adversarial logits are the unperturbed
  // side of each difference.
  if (cfg_.lambda_agp != 0.0) {
    emit("r1:gp_noise");
    obj::LogitFn fn_r1 = [this, &dr](const std::vector<NodePtr>& st,
                                     const std::vector<int>& cls) {
      return dis_->discriminate(
          real_stack(st[0], dr.aug_real_adv, dr.noise_real_adv, "r1"), cls).logits;
    };
    NodePtr ar1 = obj::approx_gp_with_noise(fn_r1, dreal.logits, {real}, classes,
                                            cfg_.sigma_gp, dr.eps_r1);
    bd.l_ar1 = ar1->value.item();
    root = ag::add(root, ag::scale(ar1, cfg_.lambda_agp));

    emit("r2:gp_noise");
    obj::LogitFn fn_r2 = [this, &dr](const std::vector<NodePtr>& st,
                                     const std::vector<int>& cls) {
      return dis_->discriminate(
          level_stack(st, dr.aug_fake_adv, dr.noise_fake_adv, "r2"), cls).logits;
    };
    NodePtr ar2 = obj::approx_gp_with_noise(fn_r2, dfake.logits, fake_vals, classes,
                                            cfg_.sigma_gp, dr.eps_r2);
    bd.l_ar2 = ar2->value.item();
    root = ag::add(root, ag::scale(ar2, cfg_.lambda_agp));
  } else {
    bd.l_ar1 = 0.0;
    bd.l_ar2 = 0.0;
  }
  if (do_backward) ag::backward(root);
}

void Trainer::g_loss(const StepDraws& dr, bool do_backward, obj::LossBreakdown& bd) {
  std::optional<ag::NoGradGuard> tape_off;
  if (!do_backward) tape_off.emplace();
  Tensor real = ds_.batch(dr.batch_idx);
  std::vector<int> classes = batch_labels(dr.batch_idx);

  Tensor real_logits;
  {
    ag::NoGradGuard ng;
    auto rl = real_stack(ag::constant(real), dr.aug_real_g, dr.noise_real_g, "g_real");
    real_logits = dis_->discriminate(rl, classes).logits->value;
  }

  struct Freeze {  // discriminator takes no gradient during the G update
    nn::ParamStore& s;
    explicit Freeze(nn::ParamStore& st) : s(st) { s.set_trainable(false); }
    ~Freeze() { s.set_trainable(true); }
  } freeze(dis_->params());

  gen::GeneratorOutput gout = gen_->generate(ag::constant(dr.z_g), classes);
  auto fl = level_stack(gout.images, dr.aug_fake_g, dr.noise_fake_g, "g_fake");
  NodePtr fake_logits = dis_->discriminate(fl, classes).logits;
  obj::AdvLosses adv = obj::adv_losses(ag::constant(real_logits), fake_logits);
  bd.l_g_adv = adv.l_g_adv->value.item();
  if (do_backward) ag::backward(adv.l_g_adv);
}

obj::LossBreakdown Trainer::step() {
  StepDraws dr = draw_step();
  obj::LossBreakdown bd;
  dis_->params().zero_grad();
  gen_->params().zero_grad();
  d_losses(dr, true, bd);
  d_opt_.step(dis_->params().all());
  dis_->params().zero_grad();
  g_loss(dr, true, bd);
  g_opt_.step(gen_->params().all());
  gen_->params().zero_grad();
  opt::ema_update(ema_, gen_->params().all(), cfg_.optim.ema_decay);
  ++step_;

  bd = obj::combine(bd.l_g_adv, bd.l_d_adv, bd.l_ar1, bd.l_ar2, bd.l_repa, cfg_.lambda_agp,
                    cfg_.lambda_repa);
  recent_.push_back(bd);
  if (recent_.size() > 10) recent_.pop_front();
  if (!std::isfinite(bd.l_d_total) || !std::isfinite(bd.l_g_total)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step_));
  }
  return bd;
}

namespace {
constexpr int kEvalChunk = 64;

json breakdown_json(const obj::LossBreakdown& bd) {
  return json{{"l_d_adv", bd.l_d_adv},     {"l_g_adv", bd.l_g_adv}, {"l_ar1", bd.l_ar1},
              {"l_ar2", bd.l_ar2},         {"l_repa", bd.l_repa},
              {"l_d_total", bd.l_d_total}, {"l_g_total", bd.l_g_total}};
}
}  // namespace

double Trainer::evaluate() {
  int dim = teacher_->dim();
  int dz = cfg_.model.latent_dz;

  Tensor gen_feats({cfg_.n_eval, dim});
  {
    // Eval stream is derived per (seed, step) so evaluation never advances
    // the training streams, resumed or not.
    RngStream er(derive_seed(cfg_.seed, "eval-" + std::to_string(step_)));
    EmaScope ema_weights(gen_->params().all(), ema_);
    ag::NoGradGuard ng;
    for (int start = 0; start < cfg_.n_eval; start += kEvalChunk) {
      int b = std::min(kEvalChunk, cfg_.n_eval - start);
      Tensor z = er.normal_tensor({b, dz});
      std::vector<int> cls(b);
      for (auto& c : cls) c = er.below(cfg_.model.num_classes);
      auto gout = gen_->generate(ag::constant(z), cls);
      Tensor f = teacher_->cls_features(gout.images.back()->value);
      std::memcpy(gen_feats.data() + static_cast<int64_t>(start) * dim, f.data(),
                  sizeof(double) * f.size());
    }
  }

  std::vector<int> eval_idx = ds_.eval_indices(cfg_.eval_fraction);
  Tensor real_feats({static_cast<int>(eval_idx.size()), dim});
  for (size_t start = 0; start < eval_idx.size(); start += kEvalChunk) {
    size_t b = std::min<size_t>(kEvalChunk, eval_idx.size() - start);
    std::vector<int> chunk(eval_idx.begin() + start, eval_idx.begin() + start + b);
    Tensor f = teacher_->cls_features(ds_.batch(chunk));
    std::memcpy(real_feats.data() + static_cast<int64_t>(start) * dim, f.data(),
                sizeof(double) * f.size());
  }
  return metrics::frechet_proxy(real_feats, gen_feats);
}

void Trainer::write_divergence_report(const std::string& reason) const {
  std::filesystem::create_directories(cfg_.out_dir);
  json rep{{"reason", reason}, {"step", step_}, {"recent", json::array()}};
  for (const auto& bd : recent_) rep["recent"].push_back(breakdown_json(bd));
  std::ofstream out(cfg_.out_dir + "/divergence.json");
  out << rep.dump(2) << "\n";
}

void Trainer::train() {
  std::filesystem::create_directories(cfg_.out_dir);
  std::ofstream log(cfg_.out_dir + "/metrics.jsonl", std::ios::app);
  if (!log) {
    throw IoError(IoCode::open_failed, "cannot open metric log in " + cfg_.out_dir);
  }
  auto log_line = [&log](const json& j) {
    log << j.dump() << "\n";
    log.flush();
  };
  auto log_eval = [&] {
    json j{{"kind", "eval"}, {"step", step_}, {"frechet", evaluate()},
           {"n_gen", cfg_.n_eval},
           {"n_real", static_cast<int>(ds_.eval_indices(cfg_.eval_fraction).size())}};
    log_line(j);
  };

  try {
    if (step_ == 0) log_eval();
    while (step_ < cfg_.steps) {
      obj::LossBreakdown bd = step();
      json rec = breakdown_json(bd);
      rec["kind"] = "step";
      rec["step"] = step_;
      log_line(rec);
      if (cfg_.eval_interval > 0 &&
          (step_ % cfg_.eval_interval == 0 || step_ == cfg_.steps)) {
        log_eval();
      }
      if (cfg_.checkpoint_interval > 0 && step_ % cfg_.checkpoint_interval == 0 &&
          step_ < cfg_.steps) {
        std::string p = cfg_.out_dir + "/ckpt_" + std::to_string(step_) + ".gatc";
        save_checkpoint(p);
        log_line(json{{"kind", "checkpoint"}, {"step", step_}, {"path", p}});
      }
    }
    std::string fin = cfg_.out_dir + "/ckpt_final.gatc";
    save_checkpoint(fin);
    log_line(json{{"kind", "checkpoint"}, {"step", step_}, {"path", fin}});
  } catch (const DivergenceError& e) {
    write_divergence_report(e.what());
    throw;
  }
}

// ---- checkpoint container ("GATC", version 1, little-endian) ----

namespace {

void put_u32(std::string& s, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

void put_u64(std::string& s, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

void put_str(std::string& s, const std::string& v) {
  put_u32(s, static_cast<uint32_t>(v.size()));
  s += v;
}

void put_tensor(std::string& s, const std::string& name, const Tensor& t) {
  if (!t.defined()) throw ConfigError("checkpoint: undefined tensor " + name);
  put_str(s, name);
  put_u32(s, static_cast<uint32_t>(t.ndim()));
  for (int d : t.shape()) put_u32(s, static_cast<uint32_t>(d));
  size_t off = s.size();
  s.resize(off + sizeof(double) * t.size());
  std::memcpy(s.data() + off, t.data(), sizeof(double) * t.size());
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError(IoCode::truncated, "checkpoint: truncated record");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  Tensor tensor() {
    uint32_t nd = u32();
    std::vector<int> shape(nd);
    for (auto& d : shape) d = static_cast<int>(u32());
    int64_t numel = shape_numel(shape);
    need(sizeof(double) * numel);
    Tensor t(shape);
    std::memcpy(t.data(), buf.data() + pos, sizeof(double) * numel);
    pos += sizeof(double) * numel;
    return t;
  }
};

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  std::string payload;
  put_str(payload, to_json(cfg_).dump());
  put_u64(payload, static_cast<uint64_t>(step_));
  put_str(payload, rs_data_.state());
  put_str(payload, rs_mng_.state());
  put_str(payload, rs_gp_.state());
  put_str(payload, rs_aug_.state());
  put_str(payload, rs_z_.state());
  put_u64(payload, static_cast<uint64_t>(g_opt_.t));
  put_u64(payload, static_cast<uint64_t>(d_opt_.t));

  const auto& gp = gen_->params().all();
  const auto& dp = dis_->params().all();
  put_u32(payload, static_cast<uint32_t>(4 * gp.size() + 3 * dp.size()));
  for (size_t i = 0; i < gp.size(); ++i) {
    put_tensor(payload, "g:" + gp[i].name, gp[i].node->value);
    put_tensor(payload, "ema:" + gp[i].name, ema_[i]);
    put_tensor(payload, "gm:" + gp[i].name, g_opt_.m[i]);
    put_tensor(payload, "gv:" + gp[i].name, g_opt_.v[i]);
  }
  for (size_t i = 0; i < dp.size(); ++i) {
    put_tensor(payload, "d:" + dp[i].name, dp[i].node->value);
    put_tensor(payload, "dm:" + dp[i].name, d_opt_.m[i]);
    put_tensor(payload, "dv:" + dp[i].name, d_opt_.v[i]);
  }

  std::string head;
  head += "GATC";
  put_u32(head, 1);
  put_u64(head, payload.size());
  put_u64(head, fnv1a64(payload));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoCode::open_failed, "cannot write checkpoint " + path);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError(IoCode::open_failed, "short write on checkpoint " + path);
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoCode::open_failed, "cannot open checkpoint " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 24) throw IoError(IoCode::truncated, "checkpoint header incomplete");
  if (blob.compare(0, 4, "GATC") != 0) {
    throw IoError(IoCode::bad_magic, "not a GATC checkpoint: " + path);
  }
  Reader head(blob);
  head.pos = 4;
  uint32_t version = head.u32();
  if (version != 1) {
    throw IoError(IoCode::version_mismatch,
                  "checkpoint version " + std::to_string(version) + ", expected 1");
  }
  uint64_t payload_len = head.u64();
  uint64_t checksum = head.u64();
  if (blob.size() - head.pos != payload_len) {
    throw IoError(IoCode::truncated, "checkpoint body length mismatch");
  }
  std::string payload = blob.substr(head.pos);
  if (fnv1a64(payload) != checksum) {
    throw IoError(IoCode::checksum_mismatch, "checkpoint checksum mismatch: " + path);
  }

  Reader r(payload);
  RunConfig rc = run_from_json(json::parse(r.str()));
  auto t = std::make_unique<Trainer>(rc);
  t->step_ = static_cast<int64_t>(r.u64());
  t->rs_data_.set_state(r.str());
  t->rs_mng_.set_state(r.str());
  t->rs_gp_.set_state(r.str());
  t->rs_aug_.set_state(r.str());
  t->rs_z_.set_state(r.str());
  t->g_opt_.t = static_cast<int64_t>(r.u64());
  t->d_opt_.t = static_cast<int64_t>(r.u64());

  auto& gp = t->gen_->params().all();
  auto& dp = t->dis_->params().all();
  std::unordered_map<std::string, size_t> gidx, didx;
  for (size_t i = 0; i < gp.size(); ++i) gidx[gp[i].name] = i;
  for (size_t i = 0; i < dp.size(); ++i) didx[dp[i].name] = i;

  uint32_t count = r.u32();
  if (count != 4 * gp.size() + 3 * dp.size()) {
    throw IoError(IoCode::geometry_mismatch, "checkpoint parameter set does not match model");
  }
  auto assign = [](Tensor& dst, Tensor&& src, const std::string& name) {
    if (!dst.same_shape(src)) {
      throw IoError(IoCode::geometry_mismatch, "checkpoint tensor shape mismatch: " + name);
    }
    dst = std::move(src);
  };
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Tensor val = r.tensor();
    auto rest = [&name](size_t skip) { return name.substr(skip); };
    try {
      if (name.rfind("g:", 0) == 0) {
        assign(gp[gidx.at(rest(2))].node->value, std::move(val), name);
      } else if (name.rfind("ema:", 0) == 0) {
        assign(t->ema_[gidx.at(rest(4))], std::move(val), name);
      } else if (name.rfind("gm:", 0) == 0) {
        assign(t->g_opt_.m[gidx.at(rest(3))], std::move(val), name);
      } else if (name.rfind("gv:", 0) == 0) {
        assign(t->g_opt_.v[gidx.at(rest(3))], std::move(val), name);
      } else if (name.rfind("d:", 0) == 0) {
        assign(dp[didx.at(rest(2))].node->value, std::move(val), name);
      } else if (name.rfind("dm:", 0) == 0) {
        assign(t->d_opt_.m[didx.at(rest(3))], std::move(val), name);
      } else if (name.rfind("dv:", 0) == 0) {
        assign(t->d_opt_.v[didx.at(rest(3))], std::move(val), name);
      } else {
        throw std::out_of_range(name);
      }
    } catch (const std::out_of_range&) {
      throw IoError(IoCode::geometry_mismatch, "unknown checkpoint tensor: " + name);
    }
  }
  return t;
}

ProbeResult update_probe(const ModelConfig& mc, double eta, int batch, int steps,
                         uint64_t seed) {
  RunConfig rc;
  rc.model = mc;
  // The probe uses the literal eta: pinning c_base to the model width makes
  // adapt_lr the identity, and the override below admits eta = 0.
  rc.optim.c_base = mc.width_c;
  rc.optim.eta_base = eta > 0.0 ? eta : rc.optim.eta_base;
  rc.batch_size = batch;
  rc.steps = steps;
  rc.seed = seed;
  rc.per_class = 40;

  ProbeResult res;
  res.per_stage.assign(mc.stages_k, 0.0);
  Trainer t(rc);
  t.g_optimizer().lr = eta;
  t.d_optimizer().lr = eta;

  RngStream pr(derive_seed(seed, "probe"));
  const int probe_batch = 16;
  Tensor z = pr.normal_tensor({probe_batch, mc.latent_dz});
  std::vector<int> cls(probe_batch);
  for (auto& c : cls) c = pr.below(mc.num_classes);

  auto snapshot = [&]() {
    ag::NoGradGuard ng;
    auto gout = t.generator().generate(ag::constant(z), cls);
    std::vector<Tensor> out;
    for (const auto& im : gout.images) out.push_back(im->value.clone());
    return out;
  };

  std::vector<Tensor> before = snapshot();
  try {
    for (int s = 0; s < steps; ++s) t.step();
  } catch (const DivergenceError&) {
    res.diverged = true;
    return res;
  }
  std::vector<Tensor> after = snapshot();
  for (int k = 0; k < mc.stages_k; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < before[k].size(); ++i) {
      double d = after[k][i] - before[k][i];
      acc += d * d;
    }
    res.per_stage[k] = std::sqrt(acc / static_cast<double>(before[k].size()));
  }
  res.value = res.per_stage.back();
  if (!std::isfinite(res.value)) res.diverged = true;
  return res;
}

}  // namespace gat::train
