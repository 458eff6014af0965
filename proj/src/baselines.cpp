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

#include "adagg/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "adagg/error.hpp"

namespace adagg {

Eigen::MatrixXd stack_updates(const RoundBatch& batch) {
  if (batch.updates.empty()) throw UsageError("empty batch");
  const auto d = static_cast<Eigen::Index>(batch.updates.front().total_dim());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.updates[i].same_schema(batch.updates.front())) throw StructuralError("batch schema mismatch");
    Eigen::Index off = 0;
    for (const auto& b : batch.updates[i].blocks()) {
      for (double v : b.values) x(static_cast<Eigen::Index>(i), off++) = v;
    }
  }
  return x;
}

LayeredVector from_row(const Schema& schema, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::vector<double> flat(row.data(), row.data() + row.size());
  if (row.innerStride() != 1) {
    for (Eigen::Index j = 0; j < row.size(); ++j) flat[static_cast<std::size_t>(j)] = row(j);
  }
  return LayeredVector::unflatten(schema, flat);
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw UsageError("median of empty set");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace baselines {

namespace {

LayeredVector weighted_rows(const RoundBatch& batch, const Eigen::MatrixXd& x, const std::vector<double>& w) {
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) acc += w[static_cast<std::size_t>(i)] * x.row(i);
  return from_row(batch.schema(), acc);
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

LayeredVector fedavg(const RoundBatch& batch) {
  const std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return weighted_sum(batch, w);
}

LayeredVector fedavg_weighted(const RoundBatch& batch, const std::vector<double>& sample_counts) {
  if (sample_counts.size() != batch.size()) throw StructuralError("sample count length mismatch");
  double total = 0.0;
  for (double c : sample_counts) {
    if (!(c > 0.0)) throw UsageError("sample counts must be positive");
    total += c;
  }
  std::vector<double> w(sample_counts);
  for (auto& v : w) v /= total;
  return weighted_sum(batch, w);
}

Eigen::RowVectorXd coord_median_rows(const Eigen::MatrixXd& x) {
  Eigen::RowVectorXd out(x.cols());
  std::vector<double> col(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    out(j) = median_of(col);
  }
  return out;
}

LayeredVector coord_median(const RoundBatch& batch) {
  return from_row(batch.schema(), coord_median_rows(stack_updates(batch)));
}

GeoMedianResult geo_median(const RoundBatch& batch, const GeoMedianOptions& options) {
  const Eigen::MatrixXd x = stack_updates(batch);
  const Eigen::Index n = x.rows();
  auto objective = [&](const Eigen::RowVectorXd& z) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += (x.row(i) - z).norm();
    return s;
  };
  Eigen::RowVectorXd z = x.colwise().mean();
  Eigen::RowVectorXd best = z;
  double best_obj = objective(z);
  GeoMedianResult out{LayeredVector{}, false, 0};
  for (int it = 0; it < options.max_iter; ++it) {
    Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(x.cols());
    double den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = 1.0 / std::max(options.nu, (x.row(i) - z).norm());
      num += w * x.row(i);
      den += w;
    }
    const Eigen::RowVectorXd next = num / den;
    const double step = (next - z).norm();
    z = next;
    out.iterations = it + 1;
    const double obj = objective(z);
    if (obj < best_obj) {
      best_obj = obj;
      best = z;
    }
    if (step < options.tol) {
      out.converged = true;
      break;
    }
  }
  out.point = from_row(batch.schema(), best);
  return out;
}

int default_krum_m(std::size_t n) { return std::max(1, static_cast<int>(n / 2) - 2); }

KrumResult multi_krum(const RoundBatch& batch, int m) {
  const std::size_t n = batch.size();
  if (n < 4) throw UsageError("multi_krum needs at least 4 clients, got " + std::to_string(n));
  if (m < 1 || m > static_cast<int>(n) - 2) {
    throw UsageError("multi_krum m=" + std::to_string(m) + " outside [1, n-2]");
  }
  const Eigen::MatrixXd x = stack_updates(batch);
  const auto neighbours = static_cast<std::size_t>(std::max(1, static_cast<int>(n) - m - 2));
  KrumResult out;
  out.scores.resize(n);
  std::vector<double> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist.push_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm());
    }
    std::sort(dist.begin(), dist.end());
    out.scores[i] = std::accumulate(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] < out.scores[b];
    return batch.client_ids[a] < batch.client_ids[b];
  });
  out.selected.assign(order.begin(), order.begin() + m);
  // sum in client-id order so the output does not depend on batch order
  std::vector<std::size_t> sum_order = out.selected;
  std::sort(sum_order.begin(), sum_order.end(),
            [&](std::size_t a, std::size_t b) { return batch.client_ids[a] < batch.client_ids[b]; });
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
  for (std::size_t i : sum_order) acc += x.row(static_cast<Eigen::Index>(i));
  out.aggregate = from_row(batch.schema(), acc / static_cast<double>(m));
  return out;
}

void FoolsGoldHistory::add(int client_id, const std::vector<double>& update) {
  auto [it, inserted] = sums_.try_emplace(client_id, update);
  if (inserted) return;
  if (it->second.size() != update.size()) throw StructuralError("FoolsGold history dimension changed");
  for (std::size_t k = 0; k < update.size(); ++k) it->second[k] += update[k];
}

const std::vector<double>* FoolsGoldHistory::find(int client_id) const {
  const auto it = sums_.find(client_id);
  return it == sums_.end() ? nullptr : &it->second;
}

std::vector<double> foolsgold_weights(const Eigen::MatrixXd& history, double kappa, bool* fallback) {
  if (!(kappa > 0.0)) throw UsageError("FoolsGold kappa must be positive");
  const Eigen::Index n = history.rows();
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> uniform(un, 1.0 / static_cast<double>(n));
  if (fallback) *fallback = false;
  if (history.cwiseAbs().maxCoeff() == 0.0) {
    if (fallback) *fallback = true;
    return uniform;
  }
  Eigen::MatrixXd cs = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) cs(i, j) = cosine(history.row(i).transpose(), history.row(j).transpose());
  // the diagonal stays 0 and takes part in the row max, as in the
  // reference implementation
  Eigen::VectorXd maxcs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) m = std::max(m, cs(i, j));
    maxcs(i) = m;
  }
  // pardoning: honest clients that merely resemble a sybil get their
  // similarity scaled down
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && maxcs(i) < maxcs(j)) cs(i, j) *= maxcs(i) / maxcs(j);

  std::vector<double> wv(un);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) m = std::max(m, cs(i, j));
    wv[static_cast<std::size_t>(i)] = std::clamp(1.0 - m, 0.0, 1.0);
  }
  const double top = *std::max_element(wv.begin(), wv.end());
  if (top == 0.0) {
    if (fallback) *fallback = true;
    return uniform;
  }
  for (auto& v : wv) {
    v /= top;
    if (v == 1.0) v = 0.99;
    v = v <= 0.0 ? 0.0 : kappa * (std::log(v / (1.0 - v)) + 0.5);
    v = std::clamp(v, 0.0, 1.0);
  }
  const double total = std::accumulate(wv.begin(), wv.end(), 0.0);
  if (!(total > 0.0)) {
    if (fallback) *fallback = true;
    return uniform;
  }
  for (auto& v : wv) v /= total;
  return wv;
}

WeightedOutput foolsgold(const RoundBatch& batch, FoolsGoldHistory& history, double kappa) {
  const Eigen::MatrixXd x = stack_updates(batch);
  Eigen::MatrixXd h(x.rows(), x.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    history.add(batch.client_ids[i], batch.updates[i].flatten());
    const auto* sum = history.find(batch.client_ids[i]);
    h.row(row) = Eigen::Map<const Eigen::RowVectorXd>(sum->data(), x.cols());
  }
  WeightedOutput out;
  out.weights = foolsgold_weights(h, kappa, &out.fallback);
  out.aggregate = weighted_rows(batch, x, out.weights);
  return out;
}

std::vector<double> residual_confidence(const Eigen::MatrixXd& x, double lambda) {
  if (!(lambda > 0.0)) throw UsageError("residual reweighing lambda must be positive");
  const Eigen::Index n = x.rows();
  if (n < 3) throw UsageError("residual reweighing needs at least 3 clients");
  const auto un = static_cast<std::size_t>(n);
  const double nd = static_cast<double>(n);
  const double xbar = (nd - 1.0) / 2.0;
  const double sxx = nd * (nd * nd - 1.0) / 12.0;  // sum of (rank - mean)^2
  std::vector<double> lever(un);
  for (std::size_t r = 0; r < un; ++r) {
    const double dx = static_cast<double>(r) - xbar;
    lever[r] = std::sqrt(std::max(0.0, 1.0 - (1.0 / nd + dx * dx / sxx)));
  }
  const double tau_scale = 1.4826 * (1.0 + 5.0 / (nd - 1.0));

  std::vector<double> conf_sum(un, 0.0);
  std::vector<std::size_t> order(un);
  std::vector<double> y(un), inner, resid(un), absres(un);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), j) < x(static_cast<Eigen::Index>(b), j);
    });
    for (std::size_t r = 0; r < un; ++r) y[r] = x(static_cast<Eigen::Index>(order[r]), j);
    // repeated-median slope on (rank, sorted value)
    std::vector<double> outer(un);
    for (std::size_t a = 0; a < un; ++a) {
      inner.clear();
      for (std::size_t b = 0; b < un; ++b) {
        if (b != a) inner.push_back((y[b] - y[a]) / (static_cast<double>(b) - static_cast<double>(a)));
      }
      outer[a] = median_of(inner);
    }
    const double slope = median_of(outer);
    const double intercept = median_of(y) - slope * xbar;
    for (std::size_t r = 0; r < un; ++r) {
      resid[r] = y[r] - (intercept + slope * static_cast<double>(r));
      absres[r] = std::abs(resid[r]);
    }
    const double tau = tau_scale * median_of(absres) + 1e-7;
    for (std::size_t r = 0; r < un; ++r) {
      const double z = resid[r] / (tau * std::max(lever[r], 1e-12));
      conf_sum[order[r]] += std::erfc(std::abs(z) / (lambda * std::sqrt(2.0)));
    }
  }
  for (auto& c : conf_sum) c /= static_cast<double>(x.cols());
  return conf_sum;
}

WeightedOutput residual_reweigh(const RoundBatch& batch, const ResidualOptions& options) {
  if (!(options.delta > 0.0 && options.delta < 1.0)) throw UsageError("residual reweighing delta must be in (0, 1)");
  const Eigen::MatrixXd x = stack_updates(batch);
  std::vector<double> w = residual_confidence(x, options.lambda);
  for (auto& v : w)
    if (v < options.delta) v = 0.0;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  WeightedOutput out;
  if (!(total > 0.0)) {
    out.fallback = true;
    w.assign(w.size(), 1.0 / static_cast<double>(w.size()));
  } else {
    for (auto& v : w) v /= total;
  }
  out.weights = w;
  out.aggregate = weighted_rows(batch, x, w);
  return out;
}

namespace {

class FedAvgAgg final : public Aggregator {
 public:
  std::string name() const override { return "fedavg"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    return {fedavg(batch), std::vector<double>(batch.size(), 1.0 / static_cast<double>(batch.size())), false};
  }
};

class CoordMedianAgg final : public Aggregator {
 public:
  std::string name() const override { return "coord_median"; }
  AggregateOutput aggregate(const RoundBatch& batch) override { return {coord_median(batch), {}, false}; }
};

class GeoMedianAgg final : public Aggregator {
 public:
  explicit GeoMedianAgg(GeoMedianOptions o) : opts_(o) {}
  std::string name() const override { return "geo_median"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    auto r = geo_median(batch, opts_);
    return {std::move(r.point), {}, !r.converged};
  }

 private:
  GeoMedianOptions opts_;
};

class KrumAgg final : public Aggregator {
 public:
  explicit KrumAgg(int m) : m_(m) {}
  std::string name() const override { return "multi_krum"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    const int m = m_ > 0 ? m_ : default_krum_m(batch.size());
    auto r = multi_krum(batch, m);
    std::vector<double> w(batch.size(), 0.0);
    for (auto i : r.selected) w[i] = 1.0 / static_cast<double>(m);
    return {std::move(r.aggregate), std::move(w), false};
  }

 private:
  int m_;
};

class FoolsGoldAgg final : public Aggregator {
 public:
  explicit FoolsGoldAgg(double kappa) : kappa_(kappa) {}
  std::string name() const override { return "foolsgold"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    auto r = foolsgold(batch, history_, kappa_);
    return {std::move(r.aggregate), std::move(r.weights), r.fallback};
  }
  void reset() override { history_.clear(); }

 private:
  double kappa_;
  FoolsGoldHistory history_;
};

class ResidualAgg final : public Aggregator {
 public:
  explicit ResidualAgg(ResidualOptions o) : opts_(o) {}
  std::string name() const override { return "residual"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    auto r = residual_reweigh(batch, opts_);
    return {std::move(r.aggregate), std::move(r.weights), r.fallback};
  }

 private:
  ResidualOptions opts_;
};

class RobustMeanAgg final : public Aggregator {
 public:
  std::string name() const override { return "robust_mean"; }
  AggregateOutput aggregate(const RoundBatch& batch) override {
    if (!batch.truth_labels) throw UsageError("robust_mean aggregator needs truth labels");
    return {robust_mean(batch), robust_weights(*batch.truth_labels), false};
  }
};

}  // namespace

std::unique_ptr<Aggregator> make_fedavg() { return std::make_unique<FedAvgAgg>(); }
std::unique_ptr<Aggregator> make_coord_median() { return std::make_unique<CoordMedianAgg>(); }
std::unique_ptr<Aggregator> make_geo_median(GeoMedianOptions options) {
  return std::make_unique<GeoMedianAgg>(options);
}
std::unique_ptr<Aggregator> make_multi_krum(int m) { return std::make_unique<KrumAgg>(m); }
std::unique_ptr<Aggregator> make_foolsgold(double kappa) {
  if (!(kappa > 0.0)) throw UsageError("FoolsGold kappa must be positive");
  return std::make_unique<FoolsGoldAgg>(kappa);
}
std::unique_ptr<Aggregator> make_residual(ResidualOptions options) {
  if (!(options.lambda > 0.0)) throw UsageError("residual lambda must be positive");
  if (!(options.delta > 0.0 && options.delta < 1.0)) throw UsageError("residual delta must be in (0, 1)");
  return std::make_unique<ResidualAgg>(options);
}
std::unique_ptr<Aggregator> make_robust_mean() { return std::make_unique<RobustMeanAgg>(); }

}  // namespace baselines
}  // namespace adagg
