#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kr/kr.hpp"

namespace {

using nlohmann::json;

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw kr::InvalidArgument("cannot write " + path);
  out << text;
}

std::vector<kr::PathMeasure> load_all(const std::vector<std::string>& files) {
  std::vector<kr::PathMeasure> out;
  for (const auto& f : files) out.push_back(kr::load_measure(f));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knothe-Rosenblatt and adapted Wasserstein distances between discrete path measures"};
  app.require_subcommand(1);

  double p = 1.0;
  std::string a_file, b_file;

  auto* dist = app.add_subcommand("dist", "KR_p distance");
  dist->add_option("-p,--p", p, "exponent, 0 or >= 1")->capture_default_str();
  dist->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  dist->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  std::string csv_out;
  auto* coupling = app.add_subcommand("coupling", "KR coupling as CSV (w,x_1..x_N,y_1..y_N)");
  coupling->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  coupling->add_option("B", b_file)->required()->check(CLI::ExistingFile);
  coupling->add_option("-o,--out", csv_out, "write CSV here instead of stdout");

  std::vector<std::string> files;
  std::vector<double> coeffs;
  std::string measure_out;
  auto* bary = app.add_subcommand("barycenter", "KR_p barycenter of several measures");
  bary->add_option("--coeffs", coeffs, "convex weights, one per measure")->required();
  bary->add_option("-p,--p", p)->capture_default_str();
  bary->add_option("-o,--out", measure_out, "write the measure here instead of stdout");
  bary->add_option("measures", files)->required()->check(CLI::ExistingFile);

  double t = 0.5;
  auto* geo = app.add_subcommand("geodesic", "point on the KR geodesic");
  geo->add_option("-t,--t", t, "time in [0,1]")->capture_default_str();
  geo->add_option("-p,--p", p)->capture_default_str();
  geo->add_option("-o,--out", measure_out);
  geo->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  geo->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  bool brute = false;
  auto* aw = app.add_subcommand("aw", "adapted Wasserstein distance");
  aw->add_option("-p,--p", p)->capture_default_str();
  aw->add_option("--coupling", csv_out, "write the optimal bicausal coupling as CSV");
  aw->add_flag("--bruteforce", brute, "enumerate compositions of stage vertices instead of the DP");
  aw->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  aw->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  auto* wass = app.add_subcommand("wass", "Wasserstein distance between path laws");
  wass->add_option("-p,--p", p)->capture_default_str();
  wass->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  wass->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  auto* av = app.add_subcommand("av", "adapted variation");
  av->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  av->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  int split = 1;
  double delta = 0.0;
  auto* mod = app.add_subcommand("modulus", "modulus of continuity of a measure on A x B");
  mod->add_option("--split", split, "number of leading coordinates in A")->required();
  mod->add_option("--delta", delta)->required();
  mod->add_option("-p,--p", p)->capture_default_str();
  mod->add_option("M", a_file)->required()->check(CLI::ExistingFile);

  auto* bound = app.add_subcommand("bound", "AW_p, KR_p and the modulus bound on KR_p");
  bound->add_option("-p,--p", p)->capture_default_str();
  bound->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  bound->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  int grid = 8;
  auto* multi = app.add_subcommand("multi-dist", "grid KR_p for d >= 1");
  multi->add_option("-p,--p", p)->capture_default_str();
  multi->add_option("--grid", grid, "points per axis")->capture_default_str();
  multi->add_option("A", a_file)->required()->check(CLI::ExistingFile);
  multi->add_option("B", b_file)->required()->check(CLI::ExistingFile);

  double eps = 0.5;
  auto* tilde = app.add_subcommand("tilde", "tilde-KR_p; without measures runs the triangle counterexample");
  tilde->add_option("-p,--p", p)->capture_default_str();
  tilde->add_option("--eps", eps, "counterexample parameter")->capture_default_str();
  tilde->add_option("measures", files, "two measure files")->expected(0, 2)->check(CLI::ExistingFile);

  std::string which, json_out, rows_out;
  int K = 6, n_max = 4, steps = 2;
  std::vector<double> eps_list{0.1, 0.5, 0.9};
  std::vector<double> levels{0.5, 0.25, 0.125, 0.0625, 0.03125};
  auto* exp = app.add_subcommand("experiment", "scripted reproductions; exit 1 if an assertion fails");
  exp->add_option("name", which)->required()->check(CLI::IsMember({"compare1", "compare2", "markov", "triangle", "bogachev"}));
  exp->add_option("-p,--p", p)->capture_default_str();
  exp->add_option("--json", json_out, "write the report as JSON");
  exp->add_option("--csv", rows_out, "write the report rows as CSV");
  exp->add_option("--K", K, "compare1: dyadic grid depth")->capture_default_str();
  exp->add_option("--n-max", n_max, "compare1/compare2: sequence length")->capture_default_str();
  exp->add_option("--eps", eps_list, "triangle: eps values")->capture_default_str();
  exp->add_option("--levels", levels, "bogachev: smoothing levels")->capture_default_str();
  exp->add_option("--N", steps, "bogachev: number of time steps")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dist) {
      const auto a = kr::load_measure(a_file), b = kr::load_measure(b_file);
      emit({{"value", kr::kr_distance(a, b, p)}, {"p", p}});
    } else if (*coupling) {
      const std::string csv = kr::coupling_csv(kr::kr_coupling(kr::load_measure(a_file), kr::load_measure(b_file)));
      if (csv_out.empty()) std::cout << csv;
      else write_file(csv_out, csv);
    } else if (*bary) {
      const auto ms = load_all(files);
      const std::string text = kr::serialize_measure(kr::barycenter(ms, coeffs, p));
      if (measure_out.empty()) std::cout << text << '\n';
      else write_file(measure_out, text + "\n");
    } else if (*geo) {
      const std::string text =
          kr::serialize_measure(kr::geodesic_point(kr::load_measure(a_file), kr::load_measure(b_file), t, p));
      if (measure_out.empty()) std::cout << text << '\n';
      else write_file(measure_out, text + "\n");
    } else if (*aw) {
      const auto a = kr::load_measure(a_file), b = kr::load_measure(b_file);
      if (brute) {
        if (!csv_out.empty()) throw kr::InvalidArgument("--coupling is only available with the DP");
        emit({{"value", kr::aw_bruteforce(a, b, p)}, {"p", p}, {"method", "bruteforce"}, {"surrogate_p0", p == 0.0}});
      } else {
        const kr::AwResult r = kr::aw_distance(a, b, p);
        if (!csv_out.empty()) write_file(csv_out, kr::coupling_csv(r.coupling));
        emit({{"value", r.value}, {"p", p}, {"method", "dp"}, {"surrogate_p0", r.surrogate_p0}});
      }
    } else if (*wass) {
      emit({{"value", kr::w_distance(kr::load_measure(a_file), kr::load_measure(b_file), p)}, {"p", p}});
    } else if (*av) {
      emit({{"value", kr::adapted_variation(kr::load_measure(a_file), kr::load_measure(b_file))}});
    } else if (*mod) {
      emit({{"value", kr::modulus({kr::load_measure(a_file), split, delta, p})}, {"split", split}, {"delta", delta}, {"p", p}});
    } else if (*bound) {
      const auto a = kr::load_measure(a_file), b = kr::load_measure(b_file);
      const double adw = kr::aw_distance(a, b, p).value;
      emit({{"aw", adw}, {"kr", kr::kr_distance(a, b, p)}, {"bound", kr::equivalence_bound(a, adw, p)}, {"p", p}});
    } else if (*multi) {
      const auto a = kr::load_measure(a_file), b = kr::load_measure(b_file);
      emit({{"value", kr::kr_distance_multi(a, b, kr::GridReference(a.dim(), grid), p)}, {"grid", grid}, {"p", p}});
    } else if (*tilde) {
      auto one = [&](const kr::PathMeasure& a, const kr::PathMeasure& b) {
        const kr::TildeKrResult r = kr::tilde_kr(a, b, p);
        return json{{"value", r.value}, {"inf", r.min_value}, {"unique", r.unique}, {"max_optima", r.max_optima}};
      };
      if (files.size() == 2) {
        json j = one(kr::load_measure(files[0]), kr::load_measure(files[1]));
        j["p"] = p;
        emit(j);
      } else if (files.empty()) {
        const auto [mu, nu, eta] = kr::counterexample_measures(eps);
        json j{{"eps", eps}, {"p", p}, {"mu_nu", one(mu, nu)}, {"nu_eta", one(nu, eta)}, {"mu_eta", one(mu, eta)}};
        j["triangle_violated"] = j["mu_nu"]["value"].get<double>() + j["nu_eta"]["value"].get<double>() <
                                 j["mu_eta"]["value"].get<double>();
        emit(j);
      } else {
        throw kr::InvalidArgument("tilde expects zero or two measure files");
      }
    } else if (*exp) {
      kr::ExperimentReport rep;
      if (which == "compare1") rep = kr::experiment_compare1(K, n_max, p);
      else if (which == "compare2") rep = kr::experiment_compare2(std::max(n_max, 4), p);
      else if (which == "markov") rep = kr::experiment_markov(p);
      else if (which == "triangle") rep = kr::experiment_triangle(eps_list, p);
      else rep = kr::experiment_bogachev(levels, steps, p);
      const json j = rep.to_json();
      if (!json_out.empty()) write_file(json_out, j.dump(2) + "\n");
      if (!rows_out.empty()) write_file(rows_out, rep.rows_csv());
      for (const auto& a : rep.assertions) {
        std::cout << (a.pass ? "PASS " : "FAIL ") << a.claim << " (expected " << kr::format_short(a.expected)
                  << ", got " << kr::format_short(a.got) << ", tol " << kr::format_short(a.tol) << ")\n";
      }
      return rep.passed() ? 0 : 1;
    }
  } catch (const kr::ParseError& e) {
    std::cerr << "kr: parse error at " << e.where() << ": " << e.reason() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "kr: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
