#include "eqface/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "eqface/errors.hpp"

namespace eqface {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6d6f64u};
  return std::mt19937_64(seq);
}

Mat scaled_gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

Vec relu(const Vec& v) { return v.cwiseMax(0.0); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void init_backbone_and_classifier(Model& m, std::uint64_t seed) {
  const auto& d = m.dims;
  auto rng = make_rng(seed, 1);
  m.backbone.w1 = scaled_gaussian(rng, d.hidden, d.d_in);
  m.backbone.b1 = Vec::Zero(d.hidden);
  m.backbone.w2 = scaled_gaussian(rng, d.d, d.hidden);
  m.backbone.b2 = Vec::Zero(d.d);

  auto cls_rng = make_rng(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  m.classifier.w.resize(d.d, d.n_classes);
  for (int c = 0; c < d.n_classes; ++c) {
    Vec col(d.d);
    for (int r = 0; r < d.d; ++r) col(r) = normal(cls_rng);
    m.classifier.w.col(c) = linalg::l2_normalize(col);
  }
}

}  // namespace

std::string_view to_string(Component c) {
  switch (c) {
    case Component::backbone: return "backbone";
    case Component::quality: return "quality";
    case Component::classifier: return "classifier";
  }
  return "unknown";
}

void ModelDims::validate() const {
  if (d_in < 1 || hidden < 1 || d < 2 || q < 1 || n_classes < 2) {
    throw InvalidConfig("model: dims must be positive (d >= 2, n_classes >= 2)");
  }
}

bool& FreezeMask::operator[](Component c) {
  switch (c) {
    case Component::backbone: return backbone;
    case Component::quality: return quality;
    case Component::classifier: return classifier;
  }
  throw InvalidConfig("unknown component");
}

bool FreezeMask::operator[](Component c) const {
  return const_cast<FreezeMask&>(*this)[c];
}

Mat Model::normalized_classifier() const {
  Mat out(classifier.w.rows(), classifier.w.cols());
  for (Eigen::Index c = 0; c < classifier.w.cols(); ++c) {
    out.col(c) = linalg::l2_normalize(classifier.w.col(c));
  }
  return out;
}

Model init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Model m;
  m.dims = dims;
  init_backbone_and_classifier(m, seed);

  auto rng = make_rng(seed, 2);
  m.quality.w1 = scaled_gaussian(rng, dims.q, dims.d);
  m.quality.b1 = Vec::Zero(dims.q);
  m.quality.gamma = Vec::Ones(dims.q);
  m.quality.beta = Vec::Zero(dims.q);
  m.quality.w2 = scaled_gaussian(rng, 1, dims.q);
  m.quality.b2 = Vec::Zero(1);
  m.bn.running_mean = Vec::Zero(dims.q);
  m.bn.running_var = Vec::Ones(dims.q);
  return m;
}

void reinit_backbone_and_classifier(Model& model, std::uint64_t seed) {
  init_backbone_and_classifier(model, seed);
}

BatchForward forward_batch(const Model& model, std::span<const Vec> xs, Mode mode) {
  if (xs.empty()) throw EmptyInput("forward_batch: empty batch");
  const auto& bb = model.backbone;
  const auto& qb = model.quality;

  BatchForward out;
  out.samples.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto& r = out.samples[i];
    if (xs[i].size() != model.dims.d_in) {
      throw DimensionMismatch("forward: input dim " + std::to_string(xs[i].size()) +
                              ", model expects " + std::to_string(model.dims.d_in));
    }
    r.x = xs[i];
    r.hidden_pre = linalg::matvec(bb.w1, r.x) + bb.b1;
    r.hidden = relu(r.hidden_pre);
    r.f_raw = linalg::matvec(bb.w2, r.hidden) + bb.b2;
    r.f = linalg::l2_normalize(r.f_raw);
    r.branch_pre = linalg::matvec(qb.w1, r.f_raw) + qb.b1;
  }

  const int q = model.dims.q;
  out.bn.mode = mode;
  if (mode == Mode::train) {
    const double n = static_cast<double>(xs.size());
    out.bn.mean = Vec::Zero(q);
    for (const auto& r : out.samples) out.bn.mean += r.branch_pre;
    out.bn.mean /= n;
    out.bn.var = Vec::Zero(q);
    for (const auto& r : out.samples) {
      out.bn.var += (r.branch_pre - out.bn.mean).cwiseAbs2();
    }
    out.bn.var /= n;
  } else {
    out.bn.mean = model.bn.running_mean;
    out.bn.var = model.bn.running_var;
  }

  const Vec inv_std = (out.bn.var.array() + kBnEpsilon).sqrt().inverse().matrix();
  for (auto& r : out.samples) {
    r.branch_hat = (r.branch_pre - out.bn.mean).cwiseProduct(inv_std);
    r.branch_bn = qb.gamma.cwiseProduct(r.branch_hat) + qb.beta;
    r.branch_act = relu(r.branch_bn);
    const double t = linalg::dot(qb.w2.row(0), r.branch_act) + qb.b2(0);
    r.logit_clamped = std::abs(t) > kQualityLogitClamp;
    r.quality_logit = std::clamp(t, -kQualityLogitClamp, kQualityLogitClamp);
    r.s = sigmoid(r.quality_logit);
  }
  return out;
}

ForwardResult forward(const Model& model, const Vec& x) {
  return std::move(forward_batch(model, std::span<const Vec>(&x, 1), Mode::eval).samples[0]);
}

void update_running_stats(Model& model, const BatchStats& stats) {
  if (stats.mode != Mode::train) return;
  model.bn.running_mean = kBnMomentum * model.bn.running_mean + (1.0 - kBnMomentum) * stats.mean;
  model.bn.running_var = kBnMomentum * model.bn.running_var + (1.0 - kBnMomentum) * stats.var;
}

BackboneParams zeros_like(const BackboneParams& p) {
  return {Mat::Zero(p.w1.rows(), p.w1.cols()), Vec::Zero(p.b1.size()),
          Mat::Zero(p.w2.rows(), p.w2.cols()), Vec::Zero(p.b2.size())};
}

QualityParams zeros_like(const QualityParams& p) {
  return {Mat::Zero(p.w1.rows(), p.w1.cols()), Vec::Zero(p.b1.size()),
          Vec::Zero(p.gamma.size()),           Vec::Zero(p.beta.size()),
          Mat::Zero(p.w2.rows(), p.w2.cols()), Vec::Zero(p.b2.size())};
}

ClassifierParams zeros_like(const ClassifierParams& p) {
  return {Mat::Zero(p.w.rows(), p.w.cols())};
}

}  // namespace eqface
