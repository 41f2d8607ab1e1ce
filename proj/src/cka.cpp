#include "frz/cka.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frz/errors.hpp"

namespace frz {

namespace {

// Gram matrix G = M M^T in double, n x n for an n x d input.
std::vector<double> gram(const Tensor& m) {
  const int n = m.shape[0];
  const std::int64_t d = std::int64_t(m.size()) / n;
  std::vector<double> g(std::size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const float* ri = m.data() + std::size_t(i) * d;
    for (int j = i; j < n; ++j) {
      const float* rj = m.data() + std::size_t(j) * d;
      double acc = 0.0;
      for (std::int64_t k = 0; k < d; ++k) acc += double(ri[k]) * double(rj[k]);
      g[std::size_t(i) * n + j] = acc;
      g[std::size_t(j) * n + i] = acc;
    }
  }
  return g;
}

// Column-centering the features is equivalent to double-centering the Gram
// matrix: G <- H G H with H = I - 11^T/n.
void double_center(std::vector<double>& g, int n) {
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += g[std::size_t(i) * n + j];
    row_mean[i] = s / n;
    grand += s;
  }
  grand /= double(n) * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g[std::size_t(i) * n + j] += grand - row_mean[i] - row_mean[j];
}

}  // namespace

double cka(const Tensor& x, const Tensor& y, bool center) {
  if (x.shape.empty() || y.shape.empty() || x.shape.size() != 2 || y.shape.size() != 2)
    throw contract_error("cka: inputs must be (samples x features) matrices");
  const int n = x.shape[0];
  if (n != y.shape[0]) throw contract_error("cka: row counts differ");
  if (n < 2) throw run_error("cka: need at least 2 probe samples");
  if (!all_finite(x.data(), x.size()) || !all_finite(y.data(), y.size()))
    throw run_error("cka: non-finite activations");

  std::vector<double> kx = gram(x);
  std::vector<double> ky = gram(y);
  if (center) {
    double_center(kx, n);
    double_center(ky, n);
  }
  // <Kx, Ky> = ||Y^T X||_F^2; ||Kx||_F = ||X^T X||_F (shared singular values)
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < kx.size(); ++i) {
    dot += kx[i] * ky[i];
    nx += kx[i] * kx[i];
    ny += ky[i] * ky[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  if (nx <= 0.0 || ny <= 0.0)
    throw run_error("cka: degenerate input (constant activations leave the score undefined)");
  return dot / (nx * ny);
}

bool stabilized(const std::vector<double>& scores, const StabilizationConfig& cfg) {
  if (cfg.window < 2) throw config_error("stabilization window must be >= 2");
  if (cfg.eps <= 0.0) throw config_error("stabilization eps must be positive");
  if (int(scores.size()) < cfg.window) return false;
  double lo = scores.back(), hi = scores.back();
  for (int i = 0; i < cfg.window; ++i) {
    double s = scores[scores.size() - 1 - std::size_t(i)];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return (hi - lo) <= cfg.eps && scores.back() >= cfg.min_score;
}

std::vector<double> CkaTrace::scores_for(int unit) const {
  std::vector<double> out;
  for (const Row& r : rows)
    if (r.unit_id == unit) out.push_back(r.score);
  return out;
}

std::string CkaTrace::to_csv() const {
  std::string out = "layer_id,checkpoint_index,epoch,score\n";
  char buf[128];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g\n", r.unit_id, r.checkpoint, r.epoch, r.score);
    out += buf;
  }
  return out;
}

void CkaTrace::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw run_error("cannot write cka trace: " + path);
  f << to_csv();
}

CkaTrace CkaTrace::from_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw run_error("cannot read cka trace: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("layer_id,", 0) != 0)
    throw format_error("cka trace: bad header in " + path);
  CkaTrace t;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Row r;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lg", &r.unit_id, &r.checkpoint, &r.epoch, &r.score) != 4)
      throw format_error("cka trace: bad row '" + line + "'");
    t.rows.push_back(r);
  }
  return t;
}

std::map<int, std::vector<std::uint8_t>> label_history(const CkaTrace& trace, const StabilizationConfig& cfg) {
  std::map<int, std::vector<double>> per_unit;
  for (const auto& r : trace.rows) per_unit[r.unit_id].push_back(r.score);
  std::map<int, std::vector<std::uint8_t>> labels;
  for (auto& [unit, scores] : per_unit) {
    std::vector<std::uint8_t> lab(scores.size(), 0);
    bool on = false;
    std::vector<double> prefix;
    prefix.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      prefix.push_back(scores[i]);
      if (!on && stabilized(prefix, cfg)) on = true;
      lab[i] = on ? 1 : 0;
    }
    labels.emplace(unit, std::move(lab));
  }
  return labels;
}

}  // namespace frz
