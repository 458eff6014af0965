// Copyright 2026 The adagg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adagg/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"

namespace adagg {

namespace {
constexpr std::uint32_t kModelVersion = 1;
}

const char* to_string(FeatureScaling s) {
  switch (s) {
    case FeatureScaling::kNone:
      return "none";
    case FeatureScaling::kZScore:
      return "zscore";
    case FeatureScaling::kMaxNorm:
      return "max_norm";
  }
  return "none";
}

FeatureScaling feature_scaling_from_string(const std::string& name) {
  if (name == "none") return FeatureScaling::kNone;
  if (name == "zscore") return FeatureScaling::kZScore;
  if (name == "max_norm") return FeatureScaling::kMaxNorm;
  throw UsageError("unknown feature scaling '" + name + "'");
}

void scale_features(Eigen::MatrixXd& feats, FeatureScaling scaling) {
  switch (scaling) {
    case FeatureScaling::kNone:
      return;
    case FeatureScaling::kZScore: {
      const double n = static_cast<double>(feats.rows());
      for (Eigen::Index j = 0; j < feats.cols(); ++j) {
        const double mean = feats.col(j).sum() / n;
        feats.col(j).array() -= mean;
        const double sd = std::sqrt(feats.col(j).squaredNorm() / n);
        if (sd > 0.0) feats.col(j) /= sd;
      }
      return;
    }
    case FeatureScaling::kMaxNorm: {
      const double top = feats.rowwise().norm().maxCoeff();
      if (top > 0.0) feats /= top;
      return;
    }
  }
}

AttentionModel AttentionModel::random(std::size_t feature_width, std::size_t hidden, std::size_t latent,
                                      std::mt19937_64& rng) {
  if (feature_width == 0 || hidden == 0 || latent == 0) throw UsageError("encoder widths must be positive");
  const std::vector<std::size_t> dims{feature_width, hidden, latent};
  AttentionModel m;
  m.query = nn::Mlp::random(dims, rng);
  m.key = nn::Mlp::random(dims, rng);
  return m;
}

void AttentionModel::validate() const {
  if (query.layers().empty() || key.layers().empty()) throw StructuralError("attention model has empty encoders");
  if (query.input_dim() != key.input_dim() || query.output_dim() != key.output_dim()) {
    throw StructuralError("query and key encoders disagree on input or output width");
  }
  if (!(c >= 0.0) || !std::isfinite(c)) throw UsageError("c must be finite and >= 0");
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("eps must be in [0, 1]");
  if (passes < 1) throw UsageError("passes must be >= 1");
  if (k_pc < 1) throw UsageError("k_pc must be >= 1");
  if (key.input_dim() % k_pc != 0) throw StructuralError("encoder width is not a multiple of k_pc");
}

Eigen::VectorXd alignment_scores(const AttentionModel& model, const Eigen::VectorXd& q_feat,
                                 const Eigen::MatrixXd& feats) {
  const auto width = static_cast<Eigen::Index>(model.feature_width());
  if (q_feat.size() != width || feats.cols() != width) {
    throw StructuralError("alignment_scores: feature width " + std::to_string(feats.cols()) + " vs encoder " +
                          std::to_string(width));
  }
  const Eigen::VectorXd qe = model.query.forward(q_feat);
  const Eigen::MatrixXd ke = model.key.forward_batch(feats.transpose());
  const double qn = qe.norm();
  Eigen::VectorXd s(feats.rows());
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    const double kn = ke.col(i).norm();
    s(i) = (qn == 0.0 || kn == 0.0) ? 0.0 : std::clamp(qe.dot(ke.col(i)) / (qn * kn), -1.0, 1.0);
  }
  return s;
}

Reweighting reweight_from_scores(std::span<const double> scores, double c, double eps) {
  if (scores.empty()) throw UsageError("reweight_from_scores: no scores");
  if (!(c >= 0.0) || !std::isfinite(c)) throw UsageError("c must be finite and >= 0");
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("eps must be in [0, 1]");
  Reweighting out;
  out.weights = nn::scaled_softmax(scores, c);
  const double cut = eps / static_cast<double>(scores.size());
  std::vector<double> truncated = out.weights;
  bool any = false;
  for (auto& w : truncated) {
    if (w < cut) {
      w = 0.0;
    } else {
      any = true;
    }
  }
  if (any) {
    out.weights = std::move(truncated);
  } else {
    out.fallback = true;
  }
  return out;
}

FeatureRun run_on_features(const AttentionModel& model, const Eigen::MatrixXd& feats, int passes) {
  if (feats.rows() < 1) throw UsageError("run_on_features: empty feature matrix");
  if (passes < 1) throw UsageError("run_on_features: passes must be >= 1");
  FeatureRun out;
  out.q0 = baselines::coord_median_rows(feats).transpose();
  Eigen::VectorXd q = out.q0;
  for (int t = 0; t < passes; ++t) {
    const Eigen::VectorXd s = alignment_scores(model, q, feats);
    out.scores.assign(s.data(), s.data() + s.size());
    Reweighting rw = reweight_from_scores(out.scores, model.c, model.eps);
    out.fallback = out.fallback || rw.fallback;
    const Eigen::Map<const Eigen::VectorXd> w(rw.weights.data(), static_cast<Eigen::Index>(rw.weights.size()));
    q = feats.transpose() * w;
    out.pass_weights.push_back(rw.weights);
    out.weights = std::move(rw.weights);
  }
  out.q_final = q;
  return out;
}

Eigen::MatrixXd prepare_features(const RoundBatch& batch, std::size_t k_pc, FeatureScaling scaling) {
  const std::size_t k = std::min(k_pc, batch.size());
  ProjectedBatch pb = project(batch, k);
  Eigen::MatrixXd feats = std::move(pb.features);
  if (k < k_pc) {
    // fewer clients than the trained width: zero-pad each layer's slots
    const auto layers = static_cast<Eigen::Index>(batch.schema().size());
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(feats.rows(), layers * static_cast<Eigen::Index>(k_pc));
    for (Eigen::Index l = 0; l < layers; ++l) {
      padded.middleCols(l * static_cast<Eigen::Index>(k_pc), static_cast<Eigen::Index>(k)) =
          feats.middleCols(l * static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    }
    feats = std::move(padded);
  }
  scale_features(feats, scaling);
  return feats;
}

AggregationResult aggregate_adaptive(const AttentionModel& model, const RoundBatch& batch, int passes) {
  model.validate();
  if (batch.size() < 2) throw PreconditionError("aggregate_adaptive needs at least 2 clients");
  const std::size_t n = batch.size();
  AggregationResult out;
  bool all_zero = true;
  for (const auto& u : batch.updates) all_zero = all_zero && u.l1_norm() == 0.0;
  if (all_zero) {
    out.weights.assign(n, 1.0 / static_cast<double>(n));
    out.scores.assign(n, 0.0);
    out.q_T = LayeredVector::zeros(batch.schema());
    return out;
  }
  const Eigen::MatrixXd feats = prepare_features(batch, model.k_pc, model.scaling);
  if (static_cast<std::size_t>(feats.cols()) != model.feature_width()) {
    throw StructuralError("batch projects to width " + std::to_string(feats.cols()) + " but the model expects " +
                          std::to_string(model.feature_width()));
  }
  FeatureRun run = run_on_features(model, feats, passes > 0 ? passes : model.passes);
  out.q_T = weighted_sum(batch, run.weights);
  out.weights = std::move(run.weights);
  out.scores = std::move(run.scores);
  out.pass_trace = std::move(run.pass_weights);
  out.fallback = run.fallback;
  return out;
}

std::vector<double> feature_importance(const AttentionModel& model) {
  if (model.key.layers().empty()) throw StructuralError("key encoder has no layers");
  const Eigen::MatrixXd& w = model.key.layers().front().weight;
  const Eigen::VectorXd imp = w.cwiseAbs().colwise().sum().transpose();
  return {imp.data(), imp.data() + imp.size()};
}

std::vector<std::pair<std::string, double>> layer_importance(const AttentionModel& model, const Schema& schema) {
  const std::vector<double> imp = feature_importance(model);
  if (imp.size() != model.k_pc * schema.size()) {
    throw StructuralError("feature width " + std::to_string(imp.size()) + " is not k_pc * " +
                          std::to_string(schema.size()) + " layers");
  }
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t l = 0; l < schema.size(); ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < model.k_pc; ++k) s += imp[l * model.k_pc + k];
    out.emplace_back(schema[l].name, s);
  }
  return out;
}

void save_model(std::ostream& out, const AttentionModel& model) {
  model.validate();
  io::Writer w(out);
  w.magic("ATTN");
  w.u32(kModelVersion);
  w.f64(model.c);
  w.f64(model.eps);
  w.u32(static_cast<std::uint32_t>(model.passes));
  w.u32(static_cast<std::uint32_t>(model.k_pc));
  w.u8(static_cast<std::uint8_t>(model.scaling));
  nn::write_mlp(w, model.query);
  nn::write_mlp(w, model.key);
}

AttentionModel load_model(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("ATTN");
  if (r.u32() != kModelVersion) throw FormatError("unsupported ATTN version");
  AttentionModel m;
  m.c = r.f64();
  m.eps = r.f64();
  m.passes = static_cast<int>(r.u32());
  m.k_pc = r.u32();
  const auto scaling = r.u8();
  if (scaling > 2) throw FormatError("unknown feature scaling code");
  m.scaling = static_cast<FeatureScaling>(scaling);
  m.query = nn::read_mlp(r);
  m.key = nn::read_mlp(r);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint fails validation: ") + e.what());
  }
  return m;
}

void save_model_file(const std::filesystem::path& path, const AttentionModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  save_model(out, model);
}

AttentionModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  return load_model(in);
}

namespace {

class AdaptiveAgg final : public Aggregator {
 public:
  AdaptiveAgg(AttentionModel m, int passes) : model_(std::move(m)), passes_(passes) { model_.validate(); }
  std::string name() const override { return "adaptive"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    AggregationResult r = aggregate_adaptive(model_, batch, passes_);
    return {std::move(r.q_T), std::move(r.weights), r.fallback};
  }

 private:
  AttentionModel model_;
  int passes_;
};

}  // namespace

std::unique_ptr<Aggregator> make_adaptive(AttentionModel model, int passes) {
  return std::make_unique<AdaptiveAgg>(std::move(model), passes);
}

}  // namespace adagg
