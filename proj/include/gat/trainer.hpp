#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "gat/config.hpp"
#include "gat/data.hpp"
#include "gat/discriminator.hpp"
#include "gat/generator.hpp"
#include "gat/metrics.hpp"
#include "gat/mng.hpp"
#include "gat/objectives.hpp"
#include "gat/optim.hpp"

namespace gat::train {

// Every random draw of one step, taken in a fixed documented order (see
// Trainer::draw_step) so the losses are pure functions of (params, draws).
// Branch toggles skip their draws entirely; nothing is drawn and thrown away.
struct StepDraws {
  std::vector<int> batch_idx;  // data: real-batch indices (shared by both phases)
  Tensor z_d, z_g;             // z: latents for the D-phase and G-phase fakes
  Tensor eps_r1, eps_r2;       // gp: one eps' per sample, N(0, sigma^2)
  data::AugmentParams aug_real_adv, aug_fake_adv;  // aug: D phase; the penalty
                                                   // branches reuse these
  data::AugmentParams aug_real_g, aug_fake_g;      // aug: G phase
  std::vector<Tensor> noise_real_adv, noise_fake_adv;  // mng: empty when off
  std::vector<Tensor> noise_real_g, noise_fake_g;
};

struct ProbeResult {
  double value = 0.0;             // RMS change of the final image after stepping
  bool diverged = false;          // distinguished outcome, never an exception
  std::vector<double> per_stage;  // same measure per output level
};

// RAII: swap the EMA tensors into the parameter nodes; restore on scope exit.
class EmaScope {
 public:
  EmaScope(std::vector<nn::Param>& params, std::vector<Tensor>& ema);
  ~EmaScope();
  EmaScope(const EmaScope&) = delete;
  EmaScope& operator=(const EmaScope&) = delete;

 private:
  std::vector<nn::Param>& params_;
  std::vector<Tensor>& ema_;
};

class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  // Advances the named streams. Order per step: data batch indices; z_d;
  // gp eps_r1, eps_r2 (when lambda_agp != 0); aug real-adv, fake-adv; mng
  // stacks real-adv, fake-adv (when mng on); z_g; aug real-g, fake-g; mng
  // stacks real-g, fake-g (when mng on). The r1/r2 penalty branches share
  // the adversarial augment and noise draws so the logit difference isolates
  // eps'.
  StepDraws draw_step();

  // Loss evaluation for one phase. Pure in (params, draws): consumes no
  // stream. do_backward accumulates gradients into the phase's params
  // (caller zeroes grads); without it the forward runs tape-free.
  void d_losses(const StepDraws& dr, bool do_backward, obj::LossBreakdown& bd);
  void g_loss(const StepDraws& dr, bool do_backward, obj::LossBreakdown& bd);

  obj::LossBreakdown step();  // one D update, one G update, EMA
  void train();               // full run: metric log, evals, checkpoints
  double evaluate();          // frechet proxy, EMA samples vs held-out reals

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Trainer> load_checkpoint(const std::string& path);

  const RunConfig& config() const { return cfg_; }
  const mng::NoiseSchedule& schedule() const { return sched_; }
  gen::Generator& generator() { return *gen_; }
  dis::Discriminator& discriminator() { return *dis_; }
  const metrics::TeacherEncoder& teacher() const { return *teacher_; }
  const data::LatentDataset& dataset() const { return ds_; }
  std::vector<Tensor>& ema() { return ema_; }
  opt::AdamW& g_optimizer() { return g_opt_; }
  opt::AdamW& d_optimizer() { return d_opt_; }
  int64_t step_count() const { return step_; }
  const std::deque<obj::LossBreakdown>& recent_losses() const { return recent_; }
  // The exact tensor the teacher encoded in the last d_losses call.
  const Tensor& last_teacher_input() const { return last_teacher_input_; }
  // Pipeline-order instrumentation: appends "<branch>:gp_noise" /
  // ":augment" / ":mng_perturb" tags in execution order.
  void set_trace(std::vector<std::string>* sink) { trace_ = sink; }

 private:
  void emit(const std::string& tag);
  std::vector<int> batch_labels(const std::vector<int>& idx) const;
  // x -> augment -> replicate -> perturb (the real-data pipeline).
  std::vector<ag::NodePtr> real_stack(const ag::NodePtr& x,
                                      const data::AugmentParams& aug,
                                      const std::vector<Tensor>& noise,
                                      const std::string& tag);
  // levels -> augment each (shared params) -> perturb. With mng off the
  // stack collapses to K copies of the augmented final level.
  std::vector<ag::NodePtr> level_stack(const std::vector<ag::NodePtr>& levels,
                                       const data::AugmentParams& aug,
                                       const std::vector<Tensor>& noise,
                                       const std::string& tag);
  void write_divergence_report(const std::string& reason) const;

  RunConfig cfg_;
  mng::NoiseSchedule sched_;
  data::LatentDataset ds_;
  std::vector<int> train_idx_;
  std::unique_ptr<gen::Generator> gen_;
  std::unique_ptr<dis::Discriminator> dis_;
  std::unique_ptr<metrics::TeacherEncoder> teacher_;
  std::vector<Tensor> ema_;
  opt::AdamW g_opt_, d_opt_;
  RngStream rs_data_, rs_mng_, rs_gp_, rs_aug_, rs_z_;
  int64_t step_ = 0;
  std::deque<obj::LossBreakdown> recent_;
  Tensor last_teacher_input_;
  std::vector<std::string>* trace_ = nullptr;
};

// Builds a fresh model at the given width from `seed`, takes `steps` full
// optimizer steps at literal learning rate `eta` (no width adaptation), and
// returns the RMS change of the generator's final image on a fixed probe
// batch. The width-scaling claim is measured by comparing probe values
// across widths.
ProbeResult update_probe(const ModelConfig& mc, double eta, int batch, int steps,
                         uint64_t seed);

}  // namespace gat::train
