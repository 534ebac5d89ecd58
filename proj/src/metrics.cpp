#include "gat/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "gat/errors.hpp"
#include "gat/rng.hpp"

namespace gat::metrics {

using ag::NodePtr;
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

TeacherEncoder::TeacherEncoder(const ModelConfig& cfg, int dim, uint64_t seed)
    : cfg_(cfg), dim_(dim) {
  cfg_.validate();
  if (dim < 1) throw ConfigError("teacher: dim must be positive");
  heads_ = dim % 4 == 0 && (dim / 4) % 2 == 0 ? 4 : (dim % 2 == 0 ? 2 : 1);
  if (dim % heads_ != 0 || (dim / heads_) % 2 != 0) {
    throw ConfigError("teacher: dim must give an even per-head size");
  }
  RngStream rng(derive_seed(seed, "teacher"));
  patchify_ = nn::make_linear(store_, "patchify", cfg_.patch_dim(), dim, rng);
  cls_token_ = store_.add("cls", nn::trunc_normal(rng, {dim}, 0.02));
  for (int b = 0; b < 2; ++b) {
    blocks_.push_back(nn::make_dis_block(store_, "block" + std::to_string(b), dim, rng));
  }
  tables_ = nn::make_rope_tables(cfg_.grid_hw(), dim / heads_, true);
  store_.set_trainable(false);  // frozen by construction
}

Tensor TeacherEncoder::encode(const Tensor& images) const {
  if (images.ndim() != 4 || images.dim(1) != cfg_.image_channels ||
      images.dim(2) != cfg_.image_hw || images.dim(3) != cfg_.image_hw) {
    throw ConfigError("teacher: image geometry mismatch");
  }
  ag::NoGradGuard ng;
  int b = images.dim(0);
  NodePtr tok = nn::apply_linear(patchify_, ag::patches_from_image(ag::constant(images),
                                                                   cfg_.patch_p));
  NodePtr cls = ag::reshape(ag::repeat_rows(cls_token_, b), {b, 1, dim_});
  NodePtr x = ag::concat_dim1({cls, tok});
  for (const auto& blk : blocks_) x = nn::dis_block(blk, x, heads_, tables_);
  return ag::rms_norm_last(x, nn::kRmsEps)->value;
}

Tensor TeacherEncoder::cls_features(const Tensor& images) const {
  Tensor tokens = encode(images);
  int b = tokens.dim(0), t = tokens.dim(1), d = tokens.dim(2);
  Tensor out({b, d});
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < d; ++j) out[static_cast<int64_t>(i) * d + j] =
        tokens[(static_cast<int64_t>(i) * t) * d + j];
  }
  return out;
}

namespace {

// Symmetric PSD square root via eigendecomposition, negative ripple clamped.
EMat sym_sqrt(const EMat& m) {
  Eigen::SelfAdjointEigenSolver<EMat> es(m);
  Eigen::VectorXd d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) d[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

void fit_gaussian(const Tensor& feats, Eigen::VectorXd& mu, EMat& cov) {
  int m = feats.dim(0), d = feats.dim(1);
  Eigen::Map<const EMat> x(feats.data(), m, d);
  mu = x.colwise().mean();
  EMat centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(m - 1);
}

}  // namespace

double frechet_proxy(const Tensor& feats_a, const Tensor& feats_b, double eps) {
  if (feats_a.ndim() != 2 || feats_b.ndim() != 2 || feats_a.dim(1) != feats_b.dim(1)) {
    throw ConfigError("frechet: expected [M, D] feature sets of equal D");
  }
  int d = feats_a.dim(1);
  if (feats_a.dim(0) < d + 1 || feats_b.dim(0) < d + 1) {
    throw ConfigError("frechet: need at least D+1 = " + std::to_string(d + 1) +
                      " samples per side for a full-rank covariance");
  }
  Eigen::VectorXd mu_a, mu_b;
  EMat cov_a, cov_b;
  fit_gaussian(feats_a, mu_a, cov_a);
  fit_gaussian(feats_b, mu_b, cov_b);
  cov_a.diagonal().array() += eps;
  cov_b.diagonal().array() += eps;

  EMat root_a = sym_sqrt(cov_a);
  EMat inner = root_a * cov_b * root_a;
  inner = ((inner + inner.transpose()) / 2.0).eval();  // symmetrize rounding
  EMat cross = sym_sqrt(inner);

  double mean_term = (mu_a - mu_b).squaredNorm();
  double trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return mean_term + trace_term;
}

BlockContributionReport block_contribution(gen::Generator& g, const Tensor& z,
                                           const std::vector<int>& classes,
                                           const TeacherEncoder* teacher, int batch) {
  ag::NoGradGuard ng;
  const ModelConfig& cfg = g.config();
  int s = z.dim(0);
  if (static_cast<int>(classes.size()) != s) throw ConfigError("block_contribution: batch mismatch");

  BlockContributionReport rep;
  rep.sample_count = s;
  rep.distance_kind = teacher ? "teacher-feature" : "latent-l2";
  rep.distances.assign(static_cast<size_t>(cfg.depth), 0.0);

  int dz = cfg.latent_dz;
  for (int start = 0; start < s; start += batch) {
    int b = std::min(batch, s - start);
    Tensor zb({b, dz});
    for (int64_t i = 0; i < zb.size(); ++i) zb[i] = z[static_cast<int64_t>(start) * dz + i];
    std::vector<int> cb(classes.begin() + start, classes.begin() + start + b);
    NodePtr zn = ag::constant(zb);

    Tensor base = g.generate(zn, cb).images.back()->value;
    Tensor base_feat;
    if (teacher) base_feat = teacher->cls_features(base);
    for (int blk = 0; blk < cfg.depth; ++blk) {
      gen::GenerateOptions opts;
      opts.skip_block = blk;
      Tensor ablated = g.generate(zn, cb, opts).images.back()->value;
      double acc = 0.0;
      if (teacher) {
        Tensor feat = teacher->cls_features(ablated);
        int d = feat.dim(1);
        for (int i = 0; i < b; ++i) {
          double sq = 0.0;
          for (int j = 0; j < d; ++j) {
            double diff = feat[static_cast<int64_t>(i) * d + j] -
                          base_feat[static_cast<int64_t>(i) * d + j];
            sq += diff * diff;
          }
          acc += std::sqrt(sq);
        }
      } else {
        int64_t per = ablated.size() / b;
        for (int i = 0; i < b; ++i) {
          double sq = 0.0;
          for (int64_t j = 0; j < per; ++j) {
            double diff = ablated[i * per + j] - base[i * per + j];
            sq += diff * diff;
          }
          acc += std::sqrt(sq);
        }
      }
      rep.distances[static_cast<size_t>(blk)] += acc;
    }
  }
  for (auto& d : rep.distances) d /= s;
  return rep;
}

std::vector<PcaBlock> pca_features(const std::vector<Tensor>& block_tokens, int grid_hw) {
  std::vector<PcaBlock> out;
  for (const auto& tok : block_tokens) {
    if (tok.ndim() != 3) throw ConfigError("pca: expected [S, N, C] token snapshots");
    int s = tok.dim(0), n = tok.dim(1), c = tok.dim(2);
    if (n != grid_hw * grid_hw) throw ConfigError("pca: token count does not match grid");
    int64_t rows = static_cast<int64_t>(s) * n;
    Eigen::Map<const EMat> x(tok.data(), rows, c);
    Eigen::VectorXd mu = x.colwise().mean();
    EMat centered = x.rowwise() - mu.transpose();
    EMat cov = centered.transpose() * centered / static_cast<double>(rows > 1 ? rows - 1 : 1);
    Eigen::SelfAdjointEigenSolver<EMat> es(cov);

    PcaBlock blk;
    blk.components = Tensor::zeros({3, c});
    double total = std::max(es.eigenvalues().sum(), 0.0);
    double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    // eigenvalues ascend; take the top three that are numerically nonzero
    for (int comp = 0; comp < 3; ++comp) {
      int idx = c - 1 - comp;
      if (idx < 0 || es.eigenvalues()[idx] <= tol) break;
      for (int j = 0; j < c; ++j) {
        blk.components[static_cast<int64_t>(comp) * c + j] = es.eigenvectors()(j, idx);
      }
      blk.explained.push_back(total > 0.0 ? es.eigenvalues()[idx] / total : 0.0);
      blk.rank = comp + 1;
    }
    blk.rank_deficient = blk.rank < 3;

    blk.grid = Tensor::zeros({grid_hw, grid_hw, 3});
    for (int i = 0; i < n && s > 0; ++i) {
      for (int comp = 0; comp < blk.rank; ++comp) {
        double proj = 0.0;
        for (int j = 0; j < c; ++j) {
          proj += (tok[static_cast<int64_t>(i) * c + j] - mu[j]) *
                  blk.components[static_cast<int64_t>(comp) * c + j];
        }
        blk.grid[static_cast<int64_t>(i) * 3 + comp] = proj;
      }
    }
    out.push_back(std::move(blk));
  }
  return out;
}

}  // namespace gat::metrics
