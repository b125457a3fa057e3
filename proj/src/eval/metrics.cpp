#include "mfrpinp/eval/metrics.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "mfrpinp/ad/losses.hpp"
#include "mfrpinp/error.hpp"
#include "mfrpinp/io/csv.hpp"

namespace mfrpinp::eval {

namespace {

using physics::kStateDim;
using physics::wrap_angle;

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " rows vs " +
                     std::to_string(b));
  if (a == 0) throw InvalidArgument(std::string(what) + ": no rows");
}

StateVector error(const StateVector& y, const StateVector& mu) {
  StateVector e{};
  for (std::size_t j = 0; j < kStateDim; ++j) e[j] = y[j] - mu[j];
  e[2] = wrap_angle(e[2]);
  return e;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double json_number(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

double rmse(std::span<const StateVector> y, std::span<const StateVector> y_hat) {
  check_aligned(y.size(), y_hat.size(), "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (double e : error(y[i], y_hat[i])) s += e * e;
  return std::sqrt(s / static_cast<double>(y.size()));
}

double nll(std::span<const StateVector> y, std::span<const StateVector> mu,
           std::span<const StateVector> var) {
  check_aligned(y.size(), mu.size(), "nll");
  check_aligned(y.size(), var.size(), "nll");
  std::vector<double> yf, mf, vf;
  yf.reserve(y.size() * kStateDim);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const StateVector e = error(y[i], mu[i]);
    for (std::size_t j = 0; j < kStateDim; ++j) {
      yf.push_back(mu[i][j] + e[j]);
      mf.push_back(mu[i][j]);
      vf.push_back(var[i][j]);
    }
  }
  return ad::gaussian_nll_value(yf, mf, vf, y.size());
}

StateVector coverage(std::span<const StateVector> y, std::span<const StateVector> mu,
                     std::span<const StateVector> sigma) {
  check_aligned(y.size(), mu.size(), "coverage");
  check_aligned(y.size(), sigma.size(), "coverage");
  StateVector c{};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const StateVector e = error(y[i], mu[i]);
    for (std::size_t j = 0; j < kStateDim; ++j)
      if (std::abs(e[j]) <= sigma[i][j]) c[j] += 1.0;
  }
  for (double& v : c) v /= static_cast<double>(y.size());
  return c;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of no values");
  if (!(p > 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in (0, 100]");
  const auto rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(values.size()) - 1e-9));
  const std::size_t k = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

Latency latency_summary(const std::vector<double>& ms) {
  return {percentile(ms, 50), percentile(ms, 95), percentile(ms, 99), percentile(ms, 100)};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["skipped"] = skipped;
  j["rmse"] = rmse;
  j["nll"] = std::isnan(nll) ? nlohmann::ordered_json() : nlohmann::ordered_json(nll);
  j["nll_raw"] = std::isnan(nll_raw) ? nlohmann::ordered_json() : nlohmann::ordered_json(nll_raw);
  j["coverage"] = coverage;
  if (has_latency)
    j["latency_ms"] = {{"p50", latency.p50}, {"p95", latency.p95}, {"p99", latency.p99},
                       {"max", latency.max}};
  j["dataset_hash"] = dataset_hash;
  j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.samples = j.at("samples").get<std::size_t>();
    r.skipped = j.at("skipped").get<std::size_t>();
    r.rmse = j.at("rmse").get<double>();
    r.nll = json_number(j.at("nll"));
    r.nll_raw = json_number(j.at("nll_raw"));
    const auto c = j.at("coverage");
    if (c.size() != kStateDim) throw ParseError("coverage needs six entries");
    for (std::size_t i = 0; i < kStateDim; ++i) r.coverage[i] = json_number(c[i]);
    if (j.contains("latency_ms")) {
      const auto& l = j["latency_ms"];
      r.has_latency = true;
      r.latency = {l.at("p50").get<double>(), l.at("p95").get<double>(),
                   l.at("p99").get<double>(), l.at("max").get<double>()};
    }
    r.dataset_hash = j.at("dataset_hash").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
  return r;
}

MetricsReport evaluate(const learn::PredictionLog& predictions, std::span<const double> label_t,
                       std::span<const physics::RobotState> labels, double tail) {
  if (!(tail > 0.0 && tail <= 1.0)) throw InvalidArgument("tail must lie in (0, 1]");
  if (label_t.size() != labels.size()) throw ShapeError("label times and states differ in length");
  const std::size_t n = predictions.t.size();
  if (n == 0) throw InvalidArgument("no predictions to evaluate");

  std::unordered_map<double, std::size_t> by_time;
  for (std::size_t i = 0; i < label_t.size(); ++i) by_time.emplace(label_t[i], i);

  MetricsReport r;
  r.skipped = n - static_cast<std::size_t>(std::ceil(tail * static_cast<double>(n) - 1e-9));
  std::vector<StateVector> y, mu, sig, var, var_raw;
  for (std::size_t i = r.skipped; i < n; ++i) {
    const auto it = by_time.find(predictions.t[i]);
    if (it == by_time.end())
      throw ParseError("no label at prediction time " + io::format_double(predictions.t[i]));
    y.push_back(labels[it->second].to_array());
    mu.push_back(predictions.mu[i]);
    if (predictions.has_sigma) {
      sig.push_back(predictions.sigma[i]);
      StateVector v{};
      for (std::size_t j = 0; j < kStateDim; ++j) v[j] = sig.back()[j] * sig.back()[j];
      var.push_back(v);
    }
    if (!predictions.sigma_raw.empty()) {
      StateVector v{};
      for (std::size_t j = 0; j < kStateDim; ++j)
        v[j] = predictions.sigma_raw[i][j] * predictions.sigma_raw[i][j];
      var_raw.push_back(v);
    }
  }
  r.samples = y.size();
  r.rmse = rmse(y, mu);
  r.nll = predictions.has_sigma ? nll(y, mu, var) : kNaN;
  r.nll_raw = var_raw.empty() ? kNaN : nll(y, mu, var_raw);
  if (predictions.has_sigma) r.coverage = coverage(y, mu, sig);
  else r.coverage.fill(kNaN);
  return r;
}

Comparison compare(const MetricsReport& a, const MetricsReport& b) {
  if (a.dataset_hash != b.dataset_hash)
    throw InvalidArgument("reports come from different datasets (" + a.dataset_hash + " vs " +
                          b.dataset_hash + ")");
  Comparison c;
  auto add = [&](std::string name, double x, double y) {
    c.metric.push_back(std::move(name));
    c.a.push_back(x);
    c.b.push_back(y);
  };
  add("samples", static_cast<double>(a.samples), static_cast<double>(b.samples));
  add("rmse", a.rmse, b.rmse);
  add("nll", a.nll, b.nll);
  add("nll_raw", a.nll_raw, b.nll_raw);
  for (std::size_t j = 0; j < kStateDim; ++j)
    add(std::string("coverage_") + learn::kStateColumns[j], a.coverage[j], b.coverage[j]);
  if (a.has_latency && b.has_latency) {
    add("latency_p50_ms", a.latency.p50, b.latency.p50);
    add("latency_p95_ms", a.latency.p95, b.latency.p95);
    add("latency_p99_ms", a.latency.p99, b.latency.p99);
  }
  return c;
}

void write_comparison_csv(const Comparison& c, std::ostream& out) {
  out << "metric,a,b,delta\n";
  for (std::size_t i = 0; i < c.metric.size(); ++i)
    io::write_row(out, {c.metric[i], io::format_double(c.a[i]), io::format_double(c.b[i]),
                        io::format_double(c.delta(i))});
}

void write_comparison_text(const Comparison& c, std::ostream& out) {
  out << std::left << std::setw(18) << "metric" << std::right << std::setw(14) << "a"
      << std::setw(14) << "b" << std::setw(14) << "b - a" << '\n';
  for (std::size_t i = 0; i < c.metric.size(); ++i)
    out << std::left << std::setw(18) << c.metric[i] << std::right << std::setprecision(6)
        << std::setw(14) << c.a[i] << std::setw(14) << c.b[i] << std::setw(14) << c.delta(i)
        << '\n';
}

}  // namespace mfrpinp::eval
