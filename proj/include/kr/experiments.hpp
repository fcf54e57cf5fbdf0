#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "kr/analysis.hpp"
#include "kr/bicausal.hpp"
#include "kr/kr_metric.hpp"
#include "kr/measure_io.hpp"
#include "kr/multidim.hpp"

namespace kr {

struct Assertion {
  std::string claim;
  double expected = 0.0;
  double got = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json rows = nlohmann::json::array();
  std::vector<Assertion> assertions;

  // |got - expected| <= tol
  void check_eq(std::string claim, double expected, double got, double tol) {
    assertions.push_back({std::move(claim), expected, got, tol, std::abs(got - expected) <= tol});
  }
  // got <= bound + tol
  void check_le(std::string claim, double bound, double got, double tol) {
    assertions.push_back({std::move(claim), bound, got, tol, got <= bound + tol});
  }
  // got < bound
  void check_lt(std::string claim, double bound, double got) {
    assertions.push_back({std::move(claim), bound, got, 0.0, got < bound});
  }
  // got >= bound - tol
  void check_ge(std::string claim, double bound, double got, double tol) {
    assertions.push_back({std::move(claim), bound, got, tol, got >= bound - tol});
  }
  void check_true(std::string claim, bool ok) {
    assertions.push_back({std::move(claim), 1.0, ok ? 1.0 : 0.0, 0.0, ok});
  }

  bool passed() const {
    for (const auto& a : assertions) {
      if (!a.pass) return false;
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json out;
    out["experiment"] = experiment;
    out["params"] = params;
    out["rows"] = rows;
    out["assertions"] = nlohmann::json::array();
    for (const auto& a : assertions) {
      out["assertions"].push_back(
          {{"claim", a.claim}, {"expected", a.expected}, {"got", a.got}, {"tol", a.tol}, {"pass", a.pass}});
    }
    return out;
  }

  // Rows as CSV; columns are the keys of the first row.
  std::string rows_csv() const {
    if (rows.empty()) return "";
    std::vector<std::string> keys;
    for (auto it = rows.front().begin(); it != rows.front().end(); ++it) keys.push_back(it.key());
    std::string out;
    for (std::size_t k = 0; k < keys.size(); ++k) out += (k ? "," : "") + keys[k];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < keys.size(); ++k) {
        if (k) out += ',';
        const auto& v = r.contains(keys[k]) ? r.at(keys[k]) : nlohmann::json();
        if (v.is_number_float()) out += format_double(v.get<double>());
        else if (v.is_string()) out += v.get<std::string>();
        else if (!v.is_null()) out += v.dump();
      }
      out += '\n';
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Digit sequence: first coordinate uniform on the dyadic grid of depth K,
// second coordinate the n-th binary digit of the first.

inline int binary_digit(double u, int n) {
  return static_cast<int>(std::floor(std::ldexp(u, n))) % 2;
}

inline PathMeasure digit_measure(int n, int K) {
  if (n < 1 || K < n || K > 20) throw InvalidArgument("digit_measure: need 1 <= n <= K <= 20");
  const std::size_t cells = std::size_t{1} << K;
  std::vector<double> coords, weights(cells, std::ldexp(1.0, -K));
  for (std::size_t i = 1; i <= cells; ++i) {
    const double u = std::ldexp(static_cast<double>(2 * i - 1), -(K + 1));
    coords.push_back(u);
    coords.push_back(binary_digit(u, n));
  }
  return PathMeasure::from_flat(1, 2, std::move(coords), std::move(weights));
}

inline ExperimentReport experiment_compare1(int K = 6, int n_max = 4, double p = 1.0) {
  if (n_max < 2 || n_max > K || K > 16) throw InvalidArgument("compare1: need 2 <= n_max <= K <= 16");
  if (!(p >= 1.0)) throw InvalidArgument("compare1: p must be >= 1");
  ExperimentReport rep;
  rep.experiment = "compare1";
  rep.params = {{"K", K}, {"n_max", n_max}, {"p", p}};
  std::vector<PathMeasure> mus;
  for (int n = 1; n <= n_max; ++n) mus.push_back(digit_measure(n, K));
  const double target = std::pow(0.5, 1.0 / p);
  std::vector<std::vector<double>> aw(static_cast<std::size_t>(n_max), std::vector<double>(static_cast<std::size_t>(n_max)));
  for (int n = 1; n <= n_max; ++n) {
    for (int m = 1; m <= n_max; ++m) {
      const auto& a = mus[static_cast<std::size_t>(n - 1)];
      const auto& b = mus[static_cast<std::size_t>(m - 1)];
      const double kr = kr_distance(a, b, p);
      const double adw = aw_distance(a, b, p).value;
      aw[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(m - 1)] = adw;
      rep.rows.push_back({{"n", n}, {"m", m}, {"kr", kr}, {"aw", adw}});
      const std::string tag = "(" + std::to_string(n) + "," + std::to_string(m) + ")";
      if (n == m) {
        rep.check_eq("KR(mu_n, mu_n) = 0 at " + tag, 0.0, kr, 1e-12);
      } else {
        rep.check_eq("KR(mu_n, mu_m) = (1/2)^(1/p) at " + tag, target, kr, 1e-12);
        if (n < m) rep.check_lt("AW(mu_n, mu_m) < KR value at " + tag, target, adw);
      }
    }
  }
  // Largest AW distance to a later element, as a function of min(n, m).
  for (int n = 1; n + 1 < n_max; ++n) {
    double cur = 0.0, next = 0.0;
    for (int m = n + 1; m <= n_max; ++m) cur = std::max(cur, aw[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(m - 1)]);
    for (int m = n + 2; m <= n_max; ++m) next = std::max(next, aw[static_cast<std::size_t>(n)][static_cast<std::size_t>(m - 1)]);
    rep.check_lt("max_{m>n} AW(mu_n, mu_m) strictly decreases from n=" + std::to_string(n), cur, next);
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline PathMeasure sign_measure(int n) {
  if (n < 1) throw InvalidArgument("sign_measure: n must be >= 1");
  const double s = n % 2 == 0 ? 1.0 : -1.0;
  return PathMeasure(1, 2, {{1.0 / n, s}, {-1.0 / n, -s}}, {0.5, 0.5});
}

inline ExperimentReport experiment_compare2(int n_max = 8, double p = 1.0) {
  if (n_max < 4) throw InvalidArgument("compare2: n_max must be >= 4");
  if (!(p >= 1.0)) throw InvalidArgument("compare2: p must be >= 1");
  ExperimentReport rep;
  rep.experiment = "compare2";
  rep.params = {{"n_max", n_max}, {"p", p}};
  for (int n = 1; n <= n_max; ++n) {
    for (int m = n + 1; m <= n_max; ++m) {
      const PathMeasure a = sign_measure(n), b = sign_measure(m);
      const double kr = kr_distance(a, b, p), adw = aw_distance(a, b, p).value;
      const double gap = std::abs(1.0 / n - 1.0 / m);
      rep.rows.push_back({{"n", n}, {"m", m}, {"kr", kr}, {"aw", adw}});
      const std::string tag = "(" + std::to_string(n) + "," + std::to_string(m) + ")";
      if ((n - m) % 2 == 0) {
        rep.check_eq("same parity: KR = |1/n - 1/m| at " + tag, gap, kr, 1e-9);
      } else {
        rep.check_eq("opposite parity: KR = (|1/n - 1/m|^p + 2^p)^(1/p) at " + tag,
                     std::pow(std::pow(gap, p) + std::pow(2.0, p), 1.0 / p), kr, 1e-9);
        rep.check_ge("opposite parity: KR >= 2^(1/p) at " + tag, std::pow(2.0, 1.0 / p), kr, 1e-9);
      }
      rep.check_le("AW <= 1/n + 1/m at " + tag, 1.0 / n + 1.0 / m, adw, 1e-9);
      if (m == n + 1) rep.check_eq("AW(mu_n, mu_n+1) = 1/n + 1/(n+1) at " + tag, 1.0 / n + 1.0 / m, adw, 1e-9);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline ExperimentReport experiment_markov(double p = 2.0) {
  if (!(p >= 1.0)) throw InvalidArgument("markov: p must be >= 1");
  ExperimentReport rep;
  rep.experiment = "markov";
  rep.params = {{"p", p}};
  const PathMeasure mu0(1, 3, {{1, 1, 0}, {0, 0, 1}}, {0.5, 0.5});
  const PathMeasure mu1(1, 3, {{1, 0, 0}, {0, 1, 1}}, {0.5, 0.5});
  const PathMeasure expected_mid(1, 3, {{0, 0.5, 1}, {1, 0.5, 0}}, {0.5, 0.5});
  const PathMeasure mid = geodesic_point(mu0, mu1, 0.5, p);
  rep.check_true("midpoint equals 1/2 (delta(0,1/2,1) + delta(1,1/2,0)) exactly", mid == expected_mid);
  rep.check_true("midpoint is not Markov", !is_markov(mid));
  rep.check_true("endpoint mu0 is reproduced at t = 0", geodesic_point(mu0, mu1, 0.0, p) == mu0);
  rep.check_true("endpoint mu1 is reproduced at t = 1", geodesic_point(mu0, mu1, 1.0, p) == mu1);
  const double total = kr_distance(mu0, mu1, p);
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const PathMeasure pt = geodesic_point(mu0, mu1, t, p);
    const double d0 = kr_distance(mu0, pt, p), d1 = kr_distance(pt, mu1, p);
    rep.rows.push_back({{"t", t}, {"kr_from_start", d0}, {"kr_to_end", d1}, {"markov", is_markov(pt)}});
    rep.check_eq("KR(mu0, mu_t) = t KR(mu0, mu1) at t=" + format_short(t), t * total, d0, 1e-9);
    rep.check_eq("KR(mu_t, mu1) = (1-t) KR(mu0, mu1) at t=" + format_short(t), (1.0 - t) * total, d1, 1e-9);
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline ExperimentReport experiment_triangle(const std::vector<double>& eps_list, double p = 1.0) {
  if (!(p >= 1.0)) throw InvalidArgument("triangle: p must be >= 1");
  ExperimentReport rep;
  rep.experiment = "triangle";
  rep.params = {{"eps", eps_list}, {"p", p}};
  for (double eps : eps_list) {
    if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("triangle: eps must lie in (0, 1]");
    const auto [mu, nu, eta] = counterexample_measures(eps);
    const TildeKrResult mn = tilde_kr(mu, nu, p), ne = tilde_kr(nu, eta, p), me = tilde_kr(mu, eta, p);
    const TildeKrResult nm = tilde_kr(nu, mu, p);
    const std::string tag = " at eps=" + format_short(eps);
    rep.rows.push_back({{"eps", eps},
                        {"mu_nu", mn.value},
                        {"nu_eta", ne.value},
                        {"mu_eta", me.value},
                        {"margin", me.value - mn.value - ne.value},
                        {"nu_eta_unique", ne.unique},
                        {"nu_eta_inf", ne.min_value}});
    rep.check_eq("tildeKR(mu,nu) = (|1-eps|^p + 1)^(1/p)" + tag,
                 std::pow(std::pow(std::abs(1.0 - eps), p) + 1.0, 1.0 / p), mn.value, 1e-9);
    rep.check_eq("tildeKR(nu,eta) = 2 eps" + tag, 2.0 * eps, ne.value, 1e-9);
    rep.check_eq("tildeKR(mu,eta) = (|1-eps|^p + 1 + 4^p)^(1/p)" + tag,
                 std::pow(std::pow(std::abs(1.0 - eps), p) + 1.0 + std::pow(4.0, p), 1.0 / p), me.value, 1e-9);
    rep.check_lt("triangle violated: tildeKR(mu,nu) + tildeKR(nu,eta) < tildeKR(mu,eta)" + tag, me.value,
                 mn.value + ne.value);
    rep.check_eq("symmetry tildeKR(mu,nu) = tildeKR(nu,mu)" + tag, mn.value, nm.value, 1e-12);
  }
  return rep;
}

// ---------------------------------------------------------------------------

// Reference measure on {0,1}^N with weights proportional to 1, 2, ..., 2^N
// (in canonical atom order).
inline PathMeasure binary_reference(int N) {
  if (N < 1 || N > 12) throw InvalidArgument("binary_reference: N must lie in [1, 12]");
  const std::size_t n = std::size_t{1} << N;
  std::vector<double> coords, weights;
  const double total = static_cast<double>(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = N - 1; t >= 0; --t) coords.push_back(static_cast<double>((i >> t) & 1u));
    weights.push_back(static_cast<double>(i + 1) / total);
  }
  return PathMeasure::from_flat(1, N, std::move(coords), std::move(weights));
}

// (1 - s) mu + s * uniform, on the support of mu.
inline PathMeasure smooth_toward_uniform(const PathMeasure& mu, double s) {
  std::vector<double> coords(mu.coords().begin(), mu.coords().end()), weights;
  const double u = 1.0 / static_cast<double>(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) weights.push_back((1.0 - s) * mu.weight(i) + s * u);
  return PathMeasure::from_flat(mu.dim(), mu.steps(), std::move(coords), std::move(weights));
}

inline ExperimentReport experiment_bogachev(const std::vector<double>& levels, int N = 2, double p = 1.0) {
  if (!(p >= 1.0)) throw InvalidArgument("bogachev: p must be >= 1");
  ExperimentReport rep;
  rep.experiment = "bogachev";
  rep.params = {{"levels", levels}, {"N", N}, {"p", p}};
  const PathMeasure mu = binary_reference(N);
  const double constant = std::ldexp(1.0, N - 1) - 1.0;
  double prev_kr = std::numeric_limits<double>::infinity(), prev_tv = prev_kr;
  rep.check_eq("identical measures: KR = 0", 0.0, kr_distance(mu, mu, p), 0.0);
  rep.check_eq("identical measures: AV = 0", 0.0, adapted_variation(mu, mu), 0.0);
  for (double s : levels) {
    if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("bogachev: levels must lie in (0, 1]");
    const PathMeasure mn = smooth_toward_uniform(mu, s);
    const double tv = tv_distance(mn, mu), av = adapted_variation(mn, mu), kr = kr_distance(mn, mu, p);
    rep.rows.push_back({{"level", s}, {"tv", tv}, {"av", av}, {"kr", kr}, {"av_over_tv", tv > 0 ? av / tv : 0.0}});
    const std::string tag = " at level " + format_short(s);
    rep.check_le("TV <= AV" + tag, av, tv, 1e-9);
    rep.check_le("AV <= (2^(N-1) - 1) TV" + tag, constant * tv, av, 1e-9);
    rep.check_lt("TV decreases" + tag, prev_tv, tv);
    rep.check_lt("KR decreases" + tag, prev_kr, kr);
    prev_kr = kr;
    prev_tv = tv;
  }
  return rep;
}

}  // namespace kr
