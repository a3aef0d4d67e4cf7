// compkern: reproducible reports for compositional kernels.
//
//   compkern moments   [--activations relu,gelu] [--spec-file f.json] ...
//   compkern limits   --activation gelu --centered --mode rescaled ...
//   compkern depth    --activation gelu --uniform 200,400 --kappa 0.2
//   compkern spectrum --activation relu --depth 3 --d 10 --kmax 20
//   compkern features --activation gelu --uniform 20,6 --depth 2 --algorithm 1
//   compkern dataset  --uniform 100,10 --points points.csv
//
// All randomness derives from --seed; identical arguments give identical bytes.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <compkern/compkern.hpp>

using namespace compkern;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kValidation = 2, kNumerical = 3 };

struct Common {
  std::uint64_t seed = 42;
  std::string out = "-";
  std::string format = "csv";
  int trunc_level = 20;
  int degree_cap = 512;
  int base_degree = 40;
  std::uint64_t mc_samples = 1000000;
  std::string coefficients = "quadrature";
};

struct BaseInput {
  std::string activation;
  std::string spec_file;
  std::string pgf;
  std::string pgf_file;
  bool centered = false;
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

json jnum(double v) { return json_number(v); }

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), "cannot parse " + what + " '" + s + "' as a number");
  return v;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& x : split(s)) v.push_back(parse_double(x, what));
  return v;
}

std::vector<int> parse_ints(const std::string& s, const std::string& what) {
  std::vector<int> v;
  for (double x : parse_doubles(s, what)) {
    require(x == std::floor(x), what + " must be integers");
    v.push_back(static_cast<int>(x));
  }
  return v;
}

// poisson(2), binomial(3,0.5), geometric(0.4), monomial(2), or an explicit
// probability list [p0,p1,...].
Pgf parse_pgf(const std::string& text, int degree_cap) {
  static const std::regex call(R"(\s*([a-z]+)\s*\(([^)]*)\)\s*)");
  static const std::regex list(R"(\s*\[([^\]]*)\]\s*)");
  std::smatch m;
  if (std::regex_match(text, m, list)) return make_pgf(parse_doubles(m[1], "probability"));
  require(std::regex_match(text, m, call), "cannot parse generating function '" + text + "'");
  const std::string fam = m[1];
  const auto args = parse_doubles(m[2], fam + " parameter");
  auto want = [&](std::size_t n) {
    require(args.size() == n, fmt::format("{} takes {} parameter(s), got {}", fam, n, args.size()));
  };
  if (fam == "poisson") return want(1), poisson(args[0], degree_cap);
  if (fam == "geometric") return want(1), geometric(args[0], degree_cap);
  if (fam == "binomial") return want(2), binomial(static_cast<int>(args[0]), args[1]);
  if (fam == "monomial") return want(1), monomial_pgf(static_cast<int>(args[0]));
  throw ValidationError("unknown generating-function family '" + fam + "'");
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

ActivationSpec read_spec(const std::string& path) {
  try {
    auto s = read_json(path).get<ActivationSpec>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

// Raw Hermite coefficients of a built-in, plus E[sigma^2] when it is known
// exactly; Monte-Carlo runs also carry their covariance.
struct RawCoefficients {
  ActivationSpec spec;
  std::optional<double> second_moment;
  std::optional<Eigen::MatrixXd> covariance;
};

RawCoefficients builtin_coefficients(const std::string& name, const Common& c, int degree) {
  const auto fn = activations::builtin(name);
  RawCoefficients r;
  if (c.coefficients == "mc") {
    auto est = estimate_hermite_coefficients(fn, degree, c.mc_samples, c.seed, true);
    r.spec = std::move(est.spec);
    r.covariance = std::move(est.covariance);
  } else {
    r.spec = quadrature_coefficients(fn, degree);
    r.second_moment = quadrature_second_moment(fn);
  }
  return r;
}

Pgf base_pgf(const BaseInput& b, const Common& c) {
  const int given = !b.activation.empty() + !b.spec_file.empty() + !b.pgf.empty() + !b.pgf_file.empty();
  require(given == 1, "give exactly one of --activation, --spec-file, --pgf, --pgf-file");
  if (!b.pgf.empty() || !b.pgf_file.empty()) {
    require(!b.centered, "--centered applies to activations; a generating function is used as given");
    if (!b.pgf.empty()) return parse_pgf(b.pgf, c.degree_cap);
    try {
      auto g = read_json(b.pgf_file).get<Pgf>();
      g.validate();
      return g;
    } catch (const json::exception& e) {
      throw ValidationError("'" + b.pgf_file + "': " + e.what());
    }
  }
  if (!b.spec_file.empty()) return dual_law(read_spec(b.spec_file), b.centered);
  const auto raw = builtin_coefficients(b.activation, c, c.base_degree);
  return dual_law(raw.spec, b.centered, raw.second_moment);
}

std::string base_label(const BaseInput& b) {
  std::string s = !b.activation.empty() ? b.activation
                  : !b.spec_file.empty() ? "spec:" + b.spec_file
                  : !b.pgf.empty()       ? b.pgf
                                         : "pgf:" + b.pgf_file;
  return b.centered ? s + " (centered)" : s;
}

SphereDataset dataset_from(const std::string& file, const std::string& uniform, const std::string& packing,
                           std::uint64_t seed, std::uint64_t max_rejections) {
  const int given = !file.empty() + !uniform.empty() + !packing.empty();
  require(given == 1, "give exactly one of --dataset, --uniform, --packing");
  if (!file.empty()) return load_dataset(file);
  if (!uniform.empty()) {
    const auto nd = parse_ints(uniform, "--uniform n,d");
    require(nd.size() == 2, "--uniform takes n,d");
    return sample_uniform_sphere(nd[0], nd[1], seed);
  }
  const auto dr = parse_doubles(packing, "--packing d,r");
  require(dr.size() == 2 && dr[0] == std::floor(dr[0]), "--packing takes d,r");
  return greedy_polarized_packing(static_cast<Eigen::Index>(dr[0]), dr[1], seed, max_rejections);
}

// ---- Output -----------------------------------------------------------------

struct Table {
  std::string name;
  std::string paper_ref;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  json extra = json::object();
};

const std::vector<std::string> kProvenance = {"seed", "mc_samples", "trunc_level", "degree_cap", "base_degree", "version"};

std::vector<std::string> provenance_cells(const Common& c) {
  return {std::to_string(c.seed), std::to_string(c.mc_samples), std::to_string(c.trunc_level),
          std::to_string(c.degree_cap), std::to_string(c.base_degree), kVersion};
}

json cell_json(const std::string& s) {
  if (s.empty()) return nullptr;
  static const std::regex integer(R"(-?[0-9]{1,18})");
  if (std::regex_match(s, integer)) return std::stoll(s);
  // Exact integers too wide for int64 (harmonic dimensions) stay strings.
  if (std::regex_match(s, std::regex(R"(-?[0-9]+)"))) return s;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used == s.size()) return jnum(v);
  } catch (const std::exception&) {
  }
  return s;
}

void emit(const std::vector<Table>& tables, const Common& c, const std::string& command, const json& inputs) {
  std::ostringstream os;
  if (c.format == "json") {
    json doc;
    doc["command"] = command;
    doc["inputs"] = inputs;
    doc["provenance"] = {{"seed", c.seed},
                         {"mc_samples", c.mc_samples},
                         {"trunc_level", c.trunc_level},
                         {"degree_cap", c.degree_cap},
                         {"base_degree", c.base_degree},
                         {"coefficients", c.coefficients},
                         {"version", kVersion}};
    doc["tables"] = json::array();
    for (const auto& t : tables) {
      json rows = json::array();
      for (const auto& r : t.rows) {
        json row = json::object();
        for (std::size_t i = 0; i < t.columns.size(); ++i) row[t.columns[i]] = cell_json(r[i]);
        rows.push_back(row);
      }
      json jt{{"name", t.name}, {"paper_ref", t.paper_ref}, {"rows", rows}};
      if (!t.extra.empty()) jt["details"] = t.extra;
      doc["tables"].push_back(jt);
    }
    os << doc.dump(2) << '\n';
  } else {
    const auto prov = provenance_cells(c);
    bool first = true;
    for (const auto& t : tables) {
      if (!first) os << '\n';
      first = false;
      if (tables.size() > 1) os << "# " << t.name << '\n';
      for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
      for (const auto& p : kProvenance) os << ',' << p;
      os << '\n';
      for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        for (const auto& p : prov) os << ',' << p;
        os << '\n';
      }
    }
  }
  if (c.out == "-") {
    std::cout << os.str();
    std::cout.flush();
  } else {
    std::ofstream f(c.out, std::ios::binary);
    require(static_cast<bool>(f), "cannot open '" + c.out + "' for writing");
    f << os.str();
  }
}

// ---- moments -------------------------------------------------------------------

void cmd_moments(const Common& c, const std::vector<std::string>& names, const std::vector<std::string>& spec_files) {
  Table t;
  t.name = "dual_moments";
  t.paper_ref = "dual offspring law moments (mu, mu_star, a_1^2, xi), un-centered and centered";
  t.columns = {"activation", "mu", "mu_centered", "mu_star", "mu_star_centered", "a1_sq", "a1_sq_centered",
               "xi", "xi_centered", "mu_se", "mu_centered_se", "mu_star_se", "mu_star_centered_se", "a1_sq_se",
               "a1_sq_centered_se", "xi_se", "xi_centered_se", "phase", "phase_centered", "coefficients"};
  auto add = [&](const std::string& label, const RawCoefficients& raw) {
    const Eigen::MatrixXd* cov = raw.covariance ? &*raw.covariance : nullptr;
    const auto u = activation_moments(raw.spec, false, cov, raw.second_moment);
    const auto z = activation_moments(raw.spec, true, cov, raw.second_moment);
    const bool mc = cov != nullptr;
    auto se = [mc](double v) { return mc ? num(v) : std::string("0"); };
    t.rows.push_back({label, num(u.mu), num(z.mu), num(u.mu_star), num(z.mu_star), num(u.a1_sq), num(z.a1_sq),
                      num(u.xi), num(z.xi), se(u.mu_se), se(z.mu_se), se(u.mu_star_se), se(z.mu_star_se),
                      se(u.a1_sq_se), se(z.a1_sq_se), se(u.xi_se), se(z.xi_se), to_string(u.phase),
                      to_string(z.phase), mc ? "mc" : (raw.second_moment ? "quadrature" : "spec-file")});
  };
  for (const auto& n : names) add(n, builtin_coefficients(n, c, c.trunc_level));
  for (const auto& f : spec_files) {
    RawCoefficients raw;
    raw.spec = read_spec(f);
    add(raw.spec.name.empty() ? f : raw.spec.name, raw);
  }
  require(!t.rows.empty(), "moments: no activations given");
  emit({t}, c, "moments", {{"activations", names}, {"spec_files", spec_files}});
}

// ---- limits -------------------------------------------------------------------

struct LimitsArgs {
  std::string mode = "unscaled";
  std::string depths = "1,2,3,5,10,30";
  int grid = 201;
  double t_max = 5.0;
  std::uint64_t trials = 0;
  int ks_depth = 12;
};

void cmd_limits(const Common& c, const BaseInput& b, const LimitsArgs& a) {
  const Pgf g = base_pgf(b, c);
  const auto depths = parse_ints(a.depths, "--depths");
  require(!depths.empty(), "limits: no depths");
  for (int L : depths) require(L >= 0, "limits: depths must be >= 0");
  require(a.grid >= 2, "limits: --grid must be >= 2");
  Table t;
  t.columns = {"L", a.mode == "unscaled" ? "rho" : "t", "value", "prediction"};
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string{}; };
  if (a.mode == "unscaled") {
    const auto curve = unscaled_limit_curve(g, depths, linspace(-1.0, 1.0, a.grid));
    t.name = "unscaled_curves";
    t.paper_ref = "unscaled compositional kernel K^(L)(rho) and its depth limit (L = -1 rows)";
    for (const auto& r : curve.rows) t.rows.push_back({std::to_string(r.depth), num(r.x), num(r.value), ""});
    for (const auto& r : curve.limit) t.rows.push_back({"-1", num(r.x), "", opt(r.prediction)});
    t.extra = {{"mu", curve.mu}, {"xi", curve.xi}, {"negative_condition", curve.negative_condition}};
  } else if (a.mode == "rescaled") {
    std::optional<WEstimate> w;
    if (a.trials > 0 && pgf_mean(g) > 1.0) w = kesten_stigum_estimate(g, a.ks_depth, a.trials, c.seed, linspace(0.0, a.t_max, a.grid));
    const auto curve = rescaled_limit_curve(g, linspace(0.0, a.t_max, a.grid), depths, w ? &*w : nullptr);
    t.name = "rescaled_curves";
    t.paper_ref = "rescaled compositional kernel K^(L)(exp(-t/mu^L)) with the Laplace-transform limit";
    for (const auto& r : curve.rows)
      t.rows.push_back({std::to_string(r.depth), num(r.x), num(r.value), opt(r.prediction)});
    t.extra = {{"mu", curve.mu}, {"xi", curve.xi}};
    if (w) t.extra["kesten_stigum"] = *w;
  } else {
    throw ValidationError("limits: --mode must be unscaled or rescaled");
  }
  emit({t}, c, "limits", {{"base", base_label(b)}, {"mode", a.mode}, {"depths", depths}, {"grid", a.grid},
                          {"t_max", a.t_max}, {"trials", a.trials}, {"ks_depth", a.ks_depth}});
}

// ---- depth --------------------------------------------------------------------

struct DepthArgs {
  std::string dataset, uniform, packing;
  std::optional<double> rho, n, d, kappa, epsilon;
  std::uint64_t max_rejections = 100000;
};

void cmd_depth(const Common& c, BaseInput b, const DepthArgs& a) {
  // Depth statements concern centered duals; activations are centered here.
  if (!b.activation.empty() || !b.spec_file.empty()) b.centered = true;
  const Pgf g = base_pgf(b, c);
  require(a.kappa.has_value() != a.epsilon.has_value(), "depth: give exactly one of --kappa, --epsilon");
  DepthReport r;
  json stats;
  if (a.rho) {
    require(a.dataset.empty() && a.uniform.empty() && a.packing.empty(), "depth: --rho excludes dataset options");
    std::optional<RegimeInfo> nd;
    if (a.n && a.d) nd = RegimeInfo{*a.n, *a.d};
    if (a.kappa) {
      require(a.n.has_value(), "depth: --kappa with --rho needs --n");
      r = memorization_depth_bounds(g, *a.rho, *a.kappa, *a.n, a.d);
    } else if (*a.epsilon >= *a.rho) {
      r.kind = "epsilon-closeness";
      r.inputs = {{"rho", *a.rho}, {"epsilon", *a.epsilon}};
      r.exact = 0;
      r.lower = r.upper = 0;
    } else {
      r = epsilon_closeness_depth(g, *a.rho, *a.epsilon, nd);
    }
  } else {
    const auto ds = dataset_from(a.dataset, a.uniform, a.packing, c.seed, a.max_rejections);
    stats = correlation_stats(ds);
    if (a.kappa) {
      r = memorization_depth(g, ds, *a.kappa);
    } else if (*a.epsilon >= ds.rho_max()) {
      r.kind = "epsilon-closeness";
      r.inputs = {{"rho", ds.rho_max()}, {"epsilon", *a.epsilon}, {"n", ds.n()}, {"d", ds.d()}};
      r.exact = 0;
      r.lower = r.upper = 0;
    } else {
      r = epsilon_closeness_depth(g, ds, *a.epsilon);
    }
  }
  Table t;
  t.name = "depth_report";
  t.paper_ref = "depth for epsilon-closeness / kappa-memorization with every bound component itemized";
  t.columns = {"item", "value"};
  t.rows.push_back({"kind", r.kind});
  t.rows.push_back({"exact", r.exact ? std::to_string(*r.exact) : "not-computed"});
  t.rows.push_back({"exact_claimed", r.exact_claimed ? "true" : "false"});
  t.rows.push_back({"lower", num(r.lower)});
  t.rows.push_back({"upper", num(r.upper)});
  t.rows.push_back({"regime", r.regime});
  for (const auto& it : r.items) t.rows.push_back({it.name, num(it.value)});
  for (const auto& w : r.warnings) t.rows.push_back({"warning", "\"" + w + "\""});
  t.extra = {{"report", r}};
  if (!stats.is_null()) t.extra["correlation_stats"] = stats;
  json inputs{{"base", base_label(b)}};
  if (a.kappa) inputs["kappa"] = *a.kappa;
  if (a.epsilon) inputs["epsilon"] = *a.epsilon;
  emit({t}, c, "depth", inputs);
}

// ---- spectrum -----------------------------------------------------------------

void cmd_spectrum(const Common& c, const BaseInput& b, int L, int d, int kmax, bool check) {
  require(L >= 0, "spectrum: --depth must be >= 0");
  const Pgf g = base_pgf(b, c);
  const Pgf gen = exact_generation_distribution(g, L, c.degree_cap);
  auto rep = eigenvalues(kmax, d, gen);
  if (check) {
    const CompositionalKernel k{g, L};
    rep.quadrature = eigenvalues_by_quadrature([&](double t) { return kernel_eval(k, t); }, d, kmax);
  }
  Table t;
  t.name = "spectrum";
  t.paper_ref = "spherical-harmonic eigenvalues of K^(L) on S^(d-1) with multiplicities";
  t.columns = {"k", "lambda_k", "N_k_d", "lambda_times_mult", "cumulative_sum", "lambda_quadrature", "abs_diff"};
  double cum = 0.0, worst = 0.0;
  for (int kk = 0; kk <= kmax; ++kk) {
    cum += rep.lambda_times_mult(kk);
    std::string q, diff;
    if (check) {
      q = num(rep.quadrature[kk]);
      const double e = std::abs(rep.quadrature[kk] - rep.lambda[kk]);
      worst = std::max(worst, e);
      diff = num(e);
    }
    t.rows.push_back({std::to_string(kk), num(rep.lambda[kk]), rep.multiplicity[kk], num(rep.lambda_times_mult(kk)),
                      num(cum), q, diff});
  }
  t.extra = {{"sum_rule", rep.trace_check}, {"generation_tail_mass", rep.tail_residual}};
  if (check) t.extra["max_quadrature_diff"] = worst;
  emit({t}, c, "spectrum", {{"base", base_label(b)}, {"depth", L}, {"d", d}, {"kmax", kmax}, {"check", check}});
}

// ---- features -----------------------------------------------------------------

struct FeaturesArgs {
  std::string dataset, uniform;
  int depth = 2;
  std::string algorithm = "1";
  std::string m = "1000,10000";
  int kmax = 60;
  std::string matrix_out;
  std::string condition_depths;
  std::uint64_t condition_m = 4000;
};

void cmd_features(const Common& c, const BaseInput& b, const FeaturesArgs& a) {
  const Pgf g = base_pgf(b, c);
  const auto ds = dataset_from(a.dataset, a.uniform, "", c.seed, 0);
  const auto ms = parse_ints(a.m, "--m");
  require(!ms.empty(), "features: no feature counts");
  const CompositionalKernel k{g, a.depth};
  const auto K = build_kernel_matrix(g, ds, a.depth).entries();
  const auto dec = truncation_decomposition(ds, k, c.trunc_level, c.degree_cap);

  // What each generator's Gram matrix converges to.
  Eigen::MatrixXd target;
  std::optional<DualActivation> sigma_f;
  std::optional<CompressedActivation> comp;
  if (a.algorithm == "1") {
    sigma_f = activation_from_kernel(
        legendre_expand([&](double t) { return kernel_eval(k, t); }, static_cast<int>(ds.d()), a.kmax));
    target = K;
  } else if (a.algorithm == "2" || a.algorithm == "2-noised") {
    comp = compressed_activation(g, a.depth, c.trunc_level, c.degree_cap);
    target = dec.truncated_gram;
    if (a.algorithm == "2-noised") target.diagonal().array() += dec.regularization_mass;
  } else {
    throw ValidationError("features: --algorithm must be 1, 2 or 2-noised");
  }

  Table gram;
  gram.name = "gram_error";
  gram.paper_ref = "random-feature Gram estimate (1/m) Phi Phi^T against its limit";
  gram.columns = {"m", "max_abs_error", "mean_abs_error", "max_z", "max_abs_error_vs_kernel", "scaled_error"};
  FeatureMatrix last;
  for (int m : ms) {
    require(m >= 1, "features: --m values must be >= 1");
    FeatureMatrix F = sigma_f ? legendre_features(ds, *sigma_f, m, c.seed)
                              : hermite_features(ds, comp->spec, m, c.seed,
                                                 a.algorithm == "2-noised" ? std::optional<double>(comp->tail_mass)
                                                                           : std::nullopt);
    const Eigen::MatrixXd G = F.gram();
    const Eigen::MatrixXd se = F.gram_stderr();
    const Eigen::MatrixXd err = (G - target).cwiseAbs();
    double maxz = 0.0;
    for (Eigen::Index i = 0; i < err.rows(); ++i)
      for (Eigen::Index l = 0; l < err.cols(); ++l)
        if (se(i, l) > 0) maxz = std::max(maxz, err(i, l) / se(i, l));
    gram.rows.push_back({std::to_string(m), num(err.maxCoeff()), num(err.mean()), num(maxz),
                         num((G - K).cwiseAbs().maxCoeff()), num(err.maxCoeff() * std::sqrt(double(m)))});
    last = std::move(F);
  }
  if (!a.matrix_out.empty()) last.write_binary(a.matrix_out);

  Table trunc;
  trunc.name = "truncation";
  trunc.paper_ref = "kernel = regularization mass * I + truncated Gram + remainder";
  trunc.columns = {"item", "value"};
  trunc.rows = {{"iota", std::to_string(dec.iota)},
                {"regularization_mass", num(dec.regularization_mass)},
                {"beyond_degree_cap", num(dec.beyond_cap)},
                {"remainder_op_norm", num(dec.remainder_op_norm)},
                {"rho_max", num(dec.rho_max)},
                {"remainder_bound", num(dec.remainder_bound)},
                {"bound_holds", dec.remainder_op_norm <= dec.remainder_bound ? "true" : "false"}};
  std::vector<Table> tables{gram, trunc};

  if (!a.condition_depths.empty()) {
    Table cond;
    cond.name = "condition_vs_depth";
    cond.paper_ref = "condition number of noised truncated features against depth";
    cond.columns = {"L", "lambda_max", "lambda_min", "ratio", "regularization_mass"};
    const auto rows = condition_number_vs_depth(ds, g, parse_ints(a.condition_depths, "--condition-depths"),
                                                c.trunc_level, static_cast<Eigen::Index>(a.condition_m), c.seed,
                                                c.degree_cap);
    for (const auto& r : rows)
      cond.rows.push_back({std::to_string(r.depth), num(r.lambda_max), num(r.lambda_min), num(r.ratio),
                           num(r.regularization_mass)});
    tables.push_back(cond);
  }
  emit(tables, c, "features",
       {{"base", base_label(b)}, {"depth", a.depth}, {"algorithm", a.algorithm}, {"m", ms}, {"n", ds.n()},
        {"d", ds.d()}, {"kmax", a.kmax}, {"condition_depths", a.condition_depths}, {"condition_m", a.condition_m}});
}

// ---- dataset ------------------------------------------------------------------

void cmd_dataset(const Common& c, const std::string& uniform, const std::string& packing, std::uint64_t max_rejections,
                 const std::string& points_out) {
  const auto ds = dataset_from("", uniform, packing, c.seed, max_rejections);
  if (points_out.size() >= 4 && points_out.substr(points_out.size() - 4) == ".csv") save_dataset_csv(ds, points_out);
  else save_dataset_binary(ds, points_out);
  const auto s = correlation_stats(ds);
  Table t;
  t.name = "correlation_stats";
  t.paper_ref = "pairwise correlation summary of the generated points";
  t.columns = {"item", "value"};
  t.rows = {{"n", std::to_string(s.n)}, {"d", std::to_string(s.d)}, {"rho_max", num(s.rho_max)},
            {"mean", num(s.mean)}, {"sd", num(s.sd)}};
  if (s.packing_band) {
    const auto& p = *s.packing_band;
    t.rows.push_back({"packing_band_lower", num(p.lower)});
    t.rows.push_back({"packing_band_upper", num(p.upper)});
    t.rows.push_back({"packing_lower_ok", p.lower_ok ? "true" : "false"});
    t.rows.push_back({"packing_upper_ok", p.upper_ok ? "true" : "false"});
    t.rows.push_back({"rejection_streak", std::to_string(p.rejection_streak)});
  } else if (!uniform.empty()) {
    const auto band = concentration_band(double(s.n), double(s.d));
    t.rows.push_back({"concentration_lower", num(band.lower)});
    t.rows.push_back({"concentration_upper", num(band.upper)});
    t.rows.push_back({"in_concentration_band", band.contains(s.rho_max) ? "true" : "false"});
  }
  t.extra = s;
  emit({t}, c, "dataset", {{"uniform", uniform}, {"packing", packing}, {"points", points_out}});
}

void add_base_options(CLI::App* cmd, BaseInput& b) {
  cmd->add_option("--activation", b.activation, "Built-in activation")
      ->check(CLI::IsMember(activations::builtin_names()));
  cmd->add_option("--spec-file", b.spec_file, "Activation spec JSON (Hermite coefficients)")->check(CLI::ExistingFile);
  cmd->add_option("--pgf", b.pgf, "Offspring law, e.g. poisson(2), binomial(3,0.5), [0,0.5,0.5]");
  cmd->add_option("--pgf-file", b.pgf_file, "Offspring law JSON")->check(CLI::ExistingFile);
  cmd->add_flag("--centered", b.centered, "Center the activation (drop a_0) before normalizing");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional kernels, their dual branching processes, depth bounds, spectra and random features"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common c;
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
  app.add_option("--out", c.out, "Output file ('-' for stdout)")->capture_default_str();
  app.add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--trunc-level", c.trunc_level, "Hermite truncation level iota")
      ->check(CLI::Range(0, 4096))
      ->capture_default_str();
  app.add_option("--degree-cap", c.degree_cap, "Degree cap D for generation distributions")
      ->check(CLI::Range(1, 1 << 16))
      ->capture_default_str();
  app.add_option("--mc-samples", c.mc_samples, "Monte-Carlo samples for Hermite coefficients")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--base-degree", c.base_degree,
                 "Hermite degree of a built-in activation used as a kernel base (moments uses --trunc-level)")
      ->check(CLI::Range(1, 4096))
      ->capture_default_str();
  app.add_option("--coefficients", c.coefficients, "How built-in coefficients are computed")
      ->check(CLI::IsMember({"mc", "quadrature"}))
      ->capture_default_str();
  app.fallthrough();

  auto* t2 = app.add_subcommand("moments", "Dual-law moments of activations, un-centered and centered");
  std::string t2_names = "relu,gelu,sigmoid,swish";
  std::vector<std::string> t2_specs;
  t2->add_option("--activations", t2_names, "Comma-separated built-ins ('' for none)")->capture_default_str();
  t2->add_option("--spec-file", t2_specs, "Extra activation spec JSON files")->check(CLI::ExistingFile);

  BaseInput lb;
  LimitsArgs la;
  auto* lim = app.add_subcommand("limits", "Unscaled or rescaled limit curves");
  add_base_options(lim, lb);
  lim->add_option("--mode", la.mode)->check(CLI::IsMember({"unscaled", "rescaled"}))->capture_default_str();
  lim->add_option("--depths", la.depths, "Comma-separated depths")->capture_default_str();
  lim->add_option("--grid", la.grid, "Grid points")->capture_default_str();
  lim->add_option("--t-max", la.t_max, "Largest t for rescaled curves")->capture_default_str();
  lim->add_option("--trials", la.trials, "Branching trials for the Laplace prediction (0 = none)")->capture_default_str();
  lim->add_option("--ks-depth", la.ks_depth, "Generation used for the Laplace prediction")->capture_default_str();

  BaseInput db;
  DepthArgs da;
  auto* dep = app.add_subcommand("depth", "Depth for epsilon-closeness or kappa-memorization");
  add_base_options(dep, db);
  dep->add_option("--dataset", da.dataset, "Dataset file (CSV rows or binary)")->check(CLI::ExistingFile);
  dep->add_option("--uniform", da.uniform, "Sample n,d uniform points");
  dep->add_option("--packing", da.packing, "Greedy polarized packing d,r");
  dep->add_option("--max-rejections", da.max_rejections)->capture_default_str();
  dep->add_option("--rho", da.rho, "Use a correlation bound instead of a dataset");
  dep->add_option("--n", da.n, "Number of points (with --rho)");
  dep->add_option("--d", da.d, "Dimension (with --rho)");
  dep->add_option("--kappa", da.kappa, "Memorization tolerance");
  dep->add_option("--epsilon", da.epsilon, "Closeness target");

  BaseInput sb;
  int s_depth = 1, s_d = 10, s_kmax = 20;
  bool s_check = true;
  auto* spec = app.add_subcommand("spectrum", "Spherical-harmonic eigenvalues of K^(L)");
  add_base_options(spec, sb);
  spec->add_option("--depth", s_depth)->capture_default_str();
  spec->add_option("--d", s_d, "Ambient dimension")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  spec->add_option("--kmax", s_kmax)->check(CLI::Range(0, 4096))->capture_default_str();
  spec->add_flag("--check,!--no-check", s_check, "Cross-check by quadrature")->capture_default_str();

  BaseInput fb;
  FeaturesArgs fa;
  auto* feat = app.add_subcommand("features", "Random-feature Gram convergence and truncation summary");
  add_base_options(feat, fb);
  feat->add_option("--dataset", fa.dataset, "Dataset file")->check(CLI::ExistingFile);
  feat->add_option("--uniform", fa.uniform, "Sample n,d uniform points");
  feat->add_option("--depth", fa.depth)->check(CLI::NonNegativeNumber)->capture_default_str();
  feat->add_option("--algorithm", fa.algorithm)->check(CLI::IsMember({"1", "2", "2-noised"}))->capture_default_str();
  feat->add_option("--m", fa.m, "Comma-separated feature counts")->capture_default_str();
  feat->add_option("--kmax", fa.kmax, "Legendre degree for algorithm 1")->capture_default_str();
  feat->add_option("--matrix-out", fa.matrix_out, "Write the last feature matrix (binary)");
  feat->add_option("--condition-depths", fa.condition_depths, "Depths for the condition-number table");
  feat->add_option("--condition-m", fa.condition_m)->capture_default_str();

  std::string ds_uniform, ds_packing, ds_points;
  std::uint64_t ds_rej = 100000;
  auto* dset = app.add_subcommand("dataset", "Generate points on the sphere and summarize correlations");
  dset->add_option("--uniform", ds_uniform, "n,d");
  dset->add_option("--packing", ds_packing, "d,r");
  dset->add_option("--max-rejections", ds_rej)->capture_default_str();
  dset->add_option("--points", ds_points, "Where to write the points (.csv or binary)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*t2) cmd_moments(c, split(t2_names), t2_specs);
    else if (*lim) cmd_limits(c, lb, la);
    else if (*dep) cmd_depth(c, db, da);
    else if (*spec) cmd_spectrum(c, sb, s_depth, s_d, s_kmax, s_check);
    else if (*feat) cmd_features(c, fb, fa);
    else if (*dset) cmd_dataset(c, ds_uniform, ds_packing, ds_rej, ds_points);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
