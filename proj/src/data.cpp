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

#include "adagg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"

namespace adagg::data {

namespace {

// Segment bits a..g (bit 0 = a).
constexpr std::array<std::uint8_t, kClasses> kSegments = {
    0b0111111,  // 0: abcdef
    0b0000110,  // 1: bc
    0b1011011,  // 2: abdeg
    0b1001111,  // 3: abcdg
    0b1100110,  // 4: bcfg
    0b1101101,  // 5: acdfg
    0b1111101,  // 6: acdefg
    0b0000111,  // 7: abc
    0b1111111,  // 8
    0b1101111,  // 9: abcdfg
};

void draw_glyph(Sample& s, int digit, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jx(-1, 1);
  std::uniform_int_distribution<int> jy(0, 1);
  std::uniform_real_distribution<double> stroke(0.6, 1.0);
  const int dx = jx(rng);
  const int dy = jy(rng);
  const int x0 = 2 + dx, x1 = 6 + dx;
  const int y0 = 1 + dy, ym = 3 + dy, y1 = 6 + dy;
  auto put = [&](int y, int x, double v) {
    if (y >= 0 && y < kSide && x >= 0 && x < kSide) {
      double& p = s.pixels[static_cast<std::size_t>(y * kSide + x)];
      p = std::max(p, v);
    }
  };
  auto hline = [&](int y, double v) {
    for (int x = x0; x <= x1; ++x) put(y, x, v);
  };
  auto vline = [&](int x, int ya, int yb, double v) {
    for (int y = ya; y <= yb; ++y) put(y, x, v);
  };
  const auto seg = kSegments[static_cast<std::size_t>(digit)];
  // one intensity draw per segment, in a fixed order
  std::array<double, 7> level{};
  for (auto& l : level) l = stroke(rng);
  if (seg & 0x01) hline(y0, level[0]);
  if (seg & 0x02) vline(x1, y0, ym, level[1]);
  if (seg & 0x04) vline(x1, ym, y1, level[2]);
  if (seg & 0x08) hline(y1, level[3]);
  if (seg & 0x10) vline(x0, ym, y1, level[4]);
  if (seg & 0x20) vline(x0, y0, ym, level[5]);
  if (seg & 0x40) hline(ym, level[6]);
}

}  // namespace

std::array<std::size_t, kClasses> Dataset::label_counts() const {
  std::array<std::size_t, kClasses> c{};
  for (const auto& s : samples) ++c[static_cast<std::size_t>(s.label)];
  return c;
}

Dataset make_surrogate_digits(const SurrogateOptions& options) {
  if (options.samples == 0) throw UsageError("surrogate dataset needs at least one sample");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.noise);
  Dataset ds;
  ds.samples.resize(options.samples);
  for (std::size_t i = 0; i < options.samples; ++i) {
    Sample& s = ds.samples[i];
    s.label = static_cast<int>(i % kClasses);
    s.id = static_cast<std::uint32_t>(i);
    draw_glyph(s, s.label, rng);
    for (auto& p : s.pixels) p = std::clamp(p + noise(rng), 0.0, 1.0);
  }
  return ds;
}

Dataset load_digits_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open digits csv '" + path.string() + "'");
  Dataset ds;
  std::string line;
  double max_pixel = 0.0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        row.clear();
        break;  // header line
      }
    }
    if (row.empty()) continue;
    if (row.size() != static_cast<std::size_t>(kPixels + 1)) {
      throw FormatError("digits csv row has " + std::to_string(row.size()) + " columns, expected 65");
    }
    Sample s;
    for (int p = 0; p < kPixels; ++p) {
      s.pixels[static_cast<std::size_t>(p)] = row[static_cast<std::size_t>(p)];
      max_pixel = std::max(max_pixel, row[static_cast<std::size_t>(p)]);
    }
    s.label = static_cast<int>(row.back());
    if (s.label < 0 || s.label >= kClasses) throw FormatError("digits csv label out of range");
    s.id = static_cast<std::uint32_t>(ds.samples.size());
    ds.samples.push_back(s);
  }
  if (ds.samples.empty()) throw UsageError("digits csv '" + path.string() + "' is empty");
  if (max_pixel > 1.0) {
    for (auto& s : ds.samples)
      for (auto& p : s.pixels) p /= max_pixel;
  }
  return ds;
}

TrainTestSplit split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw UsageError("test fraction must be in [0, 1)");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));
  TrainTestSplit out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_test ? out.test : out.train).samples.push_back(all.samples[order[k]]);
  }
  return out;
}

std::vector<ClientShard> dirichlet_partition(const Dataset& dataset, int n_clients, double alpha, int batch,
                                             std::uint64_t seed) {
  if (dataset.samples.empty()) throw UsageError("dirichlet_partition: empty dataset");
  if (n_clients < 2) throw UsageError("dirichlet_partition: need at least 2 clients");
  if (!(alpha > 0.0)) throw UsageError("dirichlet_partition: alpha must be positive");
  if (batch < 1) throw UsageError("dirichlet_partition: batch must be >= 1");
  if (dataset.size() < static_cast<std::size_t>(n_clients) * static_cast<std::size_t>(batch)) {
    throw UsageError("dirichlet_partition: dataset smaller than n_clients * batch");
  }
  const auto n = static_cast<std::size_t>(n_clients);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::array<std::vector<std::size_t>, kClasses> by_label;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_label[static_cast<std::size_t>(dataset.samples[i].label)].push_back(i);
  }

  std::vector<ClientShard> shards(n);
  for (std::size_t c = 0; c < n; ++c) shards[c].client_id = static_cast<int>(c);

  for (auto& idx : by_label) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> frac(n);
    double total = 0.0;
    for (auto& f : frac) {
      f = gamma(rng);
      total += f;
    }
    if (!(total > 0.0)) {  // all draws underflowed; happens only for tiny alpha
      std::fill(frac.begin(), frac.end(), 0.0);
      frac[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const double count = static_cast<double>(idx.size());
    std::vector<std::size_t> take(n);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double exact = frac[c] / total * count;
      take[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += take[c];
      remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < idx.size(); ++k, ++assigned) ++take[remainders[k % n].second];

    std::size_t cursor = 0;
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t k = 0; k < take[c]; ++k) shards[c].samples.push_back(dataset.samples[idx[cursor++]]);
    }
  }

  std::vector<ClientShard> kept;
  for (auto& s : shards) {
    std::shuffle(s.samples.begin(), s.samples.end(), rng);
    const std::size_t keep = s.samples.size() / static_cast<std::size_t>(batch) * static_cast<std::size_t>(batch);
    s.samples.resize(keep);
    if (keep > 0) kept.push_back(std::move(s));
  }
  return kept;
}

std::vector<std::array<std::size_t, kClasses>> shard_label_counts(const std::vector<ClientShard>& shards) {
  std::vector<std::array<std::size_t, kClasses>> table;
  for (const auto& s : shards) {
    std::array<std::size_t, kClasses> row{};
    for (const auto& x : s.samples) ++row[static_cast<std::size_t>(x.label)];
    table.push_back(row);
  }
  return table;
}

Eigen::VectorXd synthetic_inlier_mean(std::uint64_t seed, const SyntheticOptions& options) {
  // separate stream from the instance draws
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(options.cols);
  const int noise_from = options.cols - options.cols / 3;
  for (int j = 0; j < noise_from; ++j) mean(j) = n01(rng);
  return mean;
}

std::vector<SyntheticInstance> gen_synthetic_instances(std::size_t count, std::uint64_t seed,
                                                       const SyntheticOptions& options) {
  if (count < 1) throw UsageError("gen_synthetic_instances: count must be >= 1");
  if (options.outliers_min < 0 || options.outliers_max < options.outliers_min ||
      options.outliers_max >= options.rows) {
    throw UsageError("gen_synthetic_instances: outlier count range invalid");
  }
  const Eigen::VectorXd mean = synthetic_inlier_mean(seed, options);
  const int shifted = options.cols / 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> n_out(options.outliers_min, options.outliers_max);

  std::vector<SyntheticInstance> out(count);
  for (auto& inst : out) {
    inst.points.resize(options.rows, options.cols);
    for (int i = 0; i < options.rows; ++i)
      for (int j = 0; j < options.cols; ++j) inst.points(i, j) = mean(j) + n01(rng);
    std::vector<int> rows(static_cast<std::size_t>(options.rows));
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    inst.outlier_mask.assign(static_cast<std::size_t>(options.rows), false);
    const int k = n_out(rng);
    for (int r = 0; r < k; ++r) {
      const int row = rows[static_cast<std::size_t>(r)];
      inst.outlier_mask[static_cast<std::size_t>(row)] = true;
      for (int j = 0; j < shifted; ++j) inst.points(row, j) += options.offset;
    }
  }
  return out;
}

void save_shards(std::ostream& out, const std::vector<ClientShard>& shards) {
  io::Writer w(out);
  w.magic("SHRD");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(shards.size()));
  for (const auto& s : shards) {
    w.u32(static_cast<std::uint32_t>(s.client_id));
    w.u64(s.samples.size());
    for (const auto& x : s.samples) {
      w.u32(x.id);
      w.u8(static_cast<std::uint8_t>(x.label));
      w.f64s(x.pixels);
    }
  }
}

std::vector<ClientShard> load_shards(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("SHRD");
  if (r.u32() != 1) throw FormatError("unsupported SHRD version");
  std::vector<ClientShard> shards(r.u32());
  for (auto& s : shards) {
    s.client_id = static_cast<int>(r.u32());
    s.samples.resize(r.u64());
    for (auto& x : s.samples) {
      x.id = r.u32();
      x.label = r.u8();
      r.f64s(x.pixels);
    }
  }
  return shards;
}

void save_synthetic(std::ostream& out, const std::vector<SyntheticInstance>& instances) {
  io::Writer w(out);
  w.magic("SYNI");
  w.u32(1);
  w.u64(instances.size());
  const auto rows = instances.empty() ? 0 : instances.front().points.rows();
  const auto cols = instances.empty() ? 0 : instances.front().points.cols();
  w.u32(static_cast<std::uint32_t>(rows));
  w.u32(static_cast<std::uint32_t>(cols));
  for (const auto& inst : instances) {
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w.f64(inst.points(i, j));
    for (bool b : inst.outlier_mask) w.u8(b ? 1 : 0);
  }
}

std::vector<SyntheticInstance> load_synthetic(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("SYNI");
  if (r.u32() != 1) throw FormatError("unsupported SYNI version");
  std::vector<SyntheticInstance> out(r.u64());
  const auto rows = static_cast<Eigen::Index>(r.u32());
  const auto cols = static_cast<Eigen::Index>(r.u32());
  for (auto& inst : out) {
    inst.points.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) inst.points(i, j) = r.f64();
    inst.outlier_mask.resize(static_cast<std::size_t>(rows));
    for (Eigen::Index i = 0; i < rows; ++i) inst.outlier_mask[static_cast<std::size_t>(i)] = r.u8() != 0;
  }
  return out;
}

}  // namespace adagg::data
