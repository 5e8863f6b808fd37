#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "csv.hpp"
#include "phaselock/phaselock.hpp"
#include "report.hpp"

namespace phaselock::cli {

double recovery_score(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) throw InvalidArgument("label vectors differ in length");
  const int p = *std::max_element(predicted.begin(), predicted.end()) + 1;
  const int c = *std::max_element(truth.begin(), truth.end()) + 1;
  std::vector<std::vector<int>> counts(static_cast<std::size_t>(p), std::vector<int>(static_cast<std::size_t>(c), 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++counts[static_cast<std::size_t>(predicted[i])][static_cast<std::size_t>(truth[i])];
  int hits = 0;
  for (const auto& row : counts) hits += *std::max_element(row.begin(), row.end());
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

namespace fs = std::filesystem;

struct Context {
  Json config;
  fs::path out_dir;
  bool quiet = false;
  std::ostream* out = nullptr;

  Node root() const { return Node(config, ""); }
  std::uint64_t seed() const { return root().uinteger("seed"); }
  int precision() const {
    const auto p = root().integer("precision");
    if (p < 1 || p > 17) throw UsageError("precision must lie in [1, 17]");
    return static_cast<int>(p);
  }
  std::size_t trim_or(std::size_t fallback) const {
    return root().is_null("trim") ? fallback : static_cast<std::size_t>(root().uinteger("trim"));
  }
  std::ostream& say() const {
    static std::ostream null_stream(nullptr);
    return quiet ? null_stream : *out;
  }
};

// ---- shared pieces --------------------------------------------------------

Json base_defaults() { return {{"seed", 0}, {"trim", nullptr}, {"precision", 17}}; }

Json optimizer_defaults(int max_iters = 2000) {
  return {{"max_iters", max_iters}, {"step0", 0.5},     {"backtrack_factor", 0.5},
          {"armijo_c", 1e-4},       {"grad_tol", 1e-7}, {"obj_tol", 1e-12}};
}

OptimizerConfig optimizer_from(const Node& n, std::uint64_t seed) {
  OptimizerConfig cfg;
  const auto iters = n.integer("max_iters");
  if (iters < 0 || iters > 100000000) throw UsageError("optimizer.max_iters out of range");
  cfg.max_iters = static_cast<int>(iters);
  cfg.step0 = n.number("step0");
  cfg.backtrack_factor = n.number("backtrack_factor");
  cfg.armijo_c = n.number("armijo_c");
  cfg.grad_tol = n.number("grad_tol");
  cfg.obj_tol = n.number("obj_tol");
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

int positive_int(const Node& n, const std::string& key) {
  const auto v = n.integer(key);
  if (v < 1 || v > 1000000) throw UsageError(key + " must be a positive integer");
  return static_cast<int>(v);
}

std::string required_path(const Node& n, const std::string& key, const std::string& flag) {
  if (n.is_null(key)) throw UsageError("missing " + key + " (pass " + flag + " or set it in the config)");
  return n.string(key);
}

Json trace_tail(const OptimizerTrace& trace, std::size_t count = 5) {
  Json out = Json::array();
  const std::size_t n = trace.iterates.size();
  for (std::size_t i = n > count ? n - count : 0; i < n; ++i) {
    const auto& e = trace.iterates[i];
    out.push_back({{"iteration", e.iteration},
                   {"objective", e.objective},
                   {"gradient_norm", e.gradient_norm},
                   {"step", e.step}});
  }
  return out;
}

Json trace_summary(const OptimizerTrace& trace) {
  return {{"termination", to_string(trace.termination)},
          {"iterations", trace.iterates.empty() ? 0 : trace.iterates.back().iteration},
          {"final_objective", trace.final_objective()},
          {"tail", trace_tail(trace)}};
}

std::string trace_csv(const OptimizerTrace& trace, int precision) {
  RowMatrix m(static_cast<Eigen::Index>(trace.iterates.size()), 4);
  for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
    const auto& e = trace.iterates[i];
    m.row(static_cast<Eigen::Index>(i)) << e.iteration, e.objective, e.gradient_norm, e.step;
  }
  return to_csv(m, {"iteration", "objective", "gradient_norm", "step"}, precision);
}

RowMatrix magnitudes(const ComplexMatrix& m) { return m.cwiseAbs(); }

RowMatrix arguments(const ComplexMatrix& m) {
  RowMatrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = std::arg(m(r, c));
  return out;
}

Json plv_summary(const PLVMatrix& m) {
  double lo = 1.0;
  double hi = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) {
        lo = std::min(lo, std::abs(m(i, j)));
        hi = std::max(hi, std::abs(m(i, j)));
      }
  if (m.rows() < 2) return {{"mean_offdiag", nullptr}, {"min_offdiag", nullptr}, {"max_offdiag", nullptr}};
  return {{"mean_offdiag", mean_offdiag_magnitude(m)}, {"min_offdiag", lo}, {"max_offdiag", hi}};
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void finish(OutputSet& files, Report& report) {
  report.artifacts = files.names();
  files.add("report.json", report.serialize());
  files.commit();
}

int exit_for(Termination t) { return t == Termination::MaxIters ? kNotConverged : kOk; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// ---- data generation (simulate, pipeline) ----------------------------------

Json generation_defaults() {
  return {{"network",
           {{"cluster_sizes", Json::array({2, 2})},
            {"clusters", nullptr},
            {"omega", nullptr},
            {"centers", Json::array({1.0, 1.7})},
            {"spread", 0.05},
            {"kappa", nullptr},
            {"kappa_intra", 0.5},
            {"kappa_inter", 0.0}}},
          {"simulation", {{"dt", 0.01}, {"samples", 20000}, {"t0", 0.0}, {"noise", 0.1}, {"phases0", nullptr}}},
          {"amplitude", "smooth"},
          {"mixing", {{"kind", "block"}, {"matrix", nullptr}, {"block_condition", 3.0}, {"max_condition", 10.0}}}};
}

struct Generated {
  OscillatorNetwork net;
  Eigen::VectorXd phases0;
  PhaseTrajectory traj;
  SignalMatrix sources;
  std::optional<Eigen::MatrixXd> mixing;
  SignalMatrix mixtures;
};

Partition partition_from(const Node& net, const Json& raw) {
  if (net.is_null("clusters")) return contiguous_partition(net.indices("cluster_sizes"));
  const Json& clusters = raw.at("clusters");
  if (!clusters.is_array()) throw UsageError("config key network.clusters must be an array of index arrays");
  Partition p;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    Json wrap = {{"members", clusters[c]}};
    p.push_back(Node(wrap, "network.clusters[" + std::to_string(c) + "]").indices("members"));
  }
  return p;
}

Eigen::MatrixXd block_mixing(std::mt19937_64& rng, const Partition& part, Eigen::Index n, double block_cond,
                             double max_cond) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& c : part) {
      const auto size = static_cast<Eigen::Index>(c.size());
      const Eigen::MatrixXd b = well_conditioned_mixing(rng, size, block_cond);
      for (Eigen::Index r = 0; r < size; ++r)
        for (Eigen::Index k = 0; k < size; ++k)
          m(static_cast<Eigen::Index>(c[static_cast<std::size_t>(r)]),
            static_cast<Eigen::Index>(c[static_cast<std::size_t>(k)])) = b(r, k);
    }
    if (condition_number(m) < max_cond) return m;
  }
  throw Error("could not draw a block mixing matrix under mixing.max_condition");
}

Generated generate(const Json& config, std::uint64_t seed) {
  const Node root(config, "");
  const Node net = root.at("network");
  const Node sim = root.at("simulation");
  const Node mixing = root.at("mixing");
  std::mt19937_64 rng(seed);

  Generated g;
  Partition part = partition_from(net, config.at("network"));
  for (std::size_t c = 0; c < part.size(); ++c)
    if (part[c].empty()) throw InvalidArgument("cluster " + std::to_string(c) + " is empty");
  std::size_t n = 0;
  for (const auto& c : part) n += c.size();
  if (n == 0) throw InvalidArgument("network needs at least one oscillator");
  const auto ni = static_cast<Eigen::Index>(n);

  Eigen::VectorXd omega;
  if (!net.is_null("omega")) {
    const auto w = net.numbers("omega");
    if (w.size() != n) throw InvalidArgument("network.omega needs one entry per oscillator");
    omega = Eigen::Map<const Eigen::VectorXd>(w.data(), ni);
  } else {
    const double spread = net.number("spread");
    if (!(spread >= 0.0)) throw InvalidArgument("network.spread must be nonnegative");
    omega = draw_frequencies(rng, part, net.numbers("centers"), spread);
  }
  if (!net.is_null("kappa")) {
    g.net.omega = omega;
    g.net.kappa = net.matrix("kappa");
    g.net.clusters = part;
    g.net.validate();
  } else {
    g.net = OscillatorNetwork::clustered(part, omega, net.number("kappa_intra"), net.number("kappa_inter"));
  }

  if (!sim.is_null("phases0")) {
    const auto p = sim.numbers("phases0");
    if (p.size() != n) throw InvalidArgument("simulation.phases0 needs one entry per oscillator");
    g.phases0 = Eigen::Map<const Eigen::VectorXd>(p.data(), ni);
  } else {
    std::uniform_real_distribution<double> u(-kPi, kPi);
    g.phases0.resize(ni);
    for (Eigen::Index i = 0; i < ni; ++i) g.phases0(i) = u(rng);
  }

  const std::string kind = mixing.string("kind");
  if (kind == "block") {
    g.mixing = block_mixing(rng, part, ni, mixing.number("block_condition"), mixing.number("max_condition"));
  } else if (kind == "random") {
    g.mixing = well_conditioned_mixing(rng, ni, mixing.number("max_condition"));
  } else if (kind == "identity") {
    g.mixing = Eigen::MatrixXd::Identity(ni, ni);
  } else if (kind == "matrix") {
    if (mixing.is_null("matrix")) throw UsageError("mixing.kind = \"matrix\" needs mixing.matrix");
    g.mixing = mixing.matrix("matrix");
  } else if (kind != "none") {
    throw UsageError("mixing.kind must be one of block, random, identity, matrix, none");
  }

  SimulationOptions opt;
  opt.dt = sim.number("dt");
  opt.samples = static_cast<std::size_t>(sim.uinteger("samples"));
  opt.t0 = sim.number("t0");
  opt.noise = sim.number("noise");
  opt.seed = seed;

  const std::string amp = root.string("amplitude");
  AmplitudeMode mode{AmplitudeKind::Unit, seed};
  if (amp == "smooth")
    mode.kind = AmplitudeKind::SmoothRandom;
  else if (amp != "unit")
    throw UsageError("amplitude must be \"unit\" or \"smooth\"");

  g.traj = simulate(g.net, g.phases0, opt);
  g.sources = synth_sources(g.traj, mode);
  g.mixtures = g.mixing ? mix(g.sources, *g.mixing) : g.sources;
  return g;
}

/// Mean |rho| over within-cluster and cross-cluster pairs of the trajectory
/// phases, on the final quarter of the samples.
Json cluster_synchrony(const PhaseTrajectory& traj, const OscillatorNetwork& net) {
  const auto labels = net.labels();
  const Eigen::Index t = traj.phases.cols();
  const Eigen::Index start = t - t / 4;
  double within = 0.0;
  double cross = 0.0;
  int nw = 0;
  int nc = 0;
  for (Eigen::Index i = 0; i < traj.phases.rows(); ++i) {
    for (Eigen::Index k = i + 1; k < traj.phases.rows(); ++k) {
      const RowMatrix a = traj.phases.row(i).tail(t - start);
      const RowMatrix b = traj.phases.row(k).tail(t - start);
      const double r = plv(row_span(a, 0), row_span(b, 0)).magnitude();
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(k)]) {
        within += r;
        ++nw;
      } else {
        cross += r;
        ++nc;
      }
    }
  }
  return {{"window_start", start},
          {"within_mean", nw ? Json(within / nw) : Json(nullptr)},
          {"cross_mean", nc ? Json(cross / nc) : Json(nullptr)}};
}

Json generation_metrics(const Generated& g) {
  Json m = {{"oscillators", g.net.size()},
            {"samples", g.traj.phases.cols()},
            {"labels", g.net.labels()},
            {"omega", vector_json(g.net.omega)},
            {"phases0", vector_json(g.phases0)},
            {"trajectory_synchrony", cluster_synchrony(g.traj, g.net)}};
  if (g.mixing) {
    m["mixing"] = matrix_to_json(*g.mixing);
    m["mixing_condition"] = condition_number(*g.mixing);
  } else {
    m["mixing"] = nullptr;
    m["mixing_condition"] = nullptr;
  }
  return m;
}

// ---- commands --------------------------------------------------------------

Json simulate_defaults() {
  Json d = base_defaults();
  d.update(generation_defaults());
  return d;
}

int cmd_simulate(Context& ctx) {
  const int prec = ctx.precision();
  const Generated g = generate(ctx.config, ctx.seed());
  OutputSet files(ctx.out_dir);
  files.add("sources.csv", signal_to_csv(g.sources.data, "s", prec));
  if (g.mixing) files.add("mixtures.csv", signal_to_csv(g.mixtures.data, "x", prec));
  files.add("phases.csv", signal_to_csv(g.traj.phases, "phi", prec));
  Report r{"simulate", ctx.config, generation_metrics(g), {}};
  finish(files, r);
  const auto& sync = r.metrics["trajectory_synchrony"];
  ctx.say() << "simulated " << g.net.size() << " oscillators x " << g.traj.phases.cols() << " samples";
  if (!sync["within_mean"].is_null()) ctx.say() << "; within-cluster |rho| " << fmt(sync["within_mean"].get<double>());
  if (!sync["cross_mean"].is_null()) ctx.say() << ", cross-cluster |rho| " << fmt(sync["cross_mean"].get<double>());
  ctx.say() << "\n";
  return kOk;
}

Json plv_defaults() {
  Json d = base_defaults();
  d["input"] = nullptr;
  return d;
}

int cmd_plv(Context& ctx) {
  const Node root = ctx.root();
  const SignalMatrix s = read_signal_csv(required_path(root, "input", "--input"));
  const std::size_t trim = ctx.trim_or(0);
  const PLVMatrix p = plv_matrix(analytic(s), trim);
  const int prec = ctx.precision();
  OutputSet files(ctx.out_dir);
  files.add("plv_abs.csv", to_csv(magnitudes(p), {}, prec));
  files.add("plv_arg.csv", to_csv(arguments(p), {}, prec));
  Report r{"plv", ctx.config, {{"channels", s.channels()}, {"samples", s.samples()}, {"trim", trim}}, {}};
  r.metrics.update(plv_summary(p));
  finish(files, r);
  ctx.say() << "PLV of " << s.channels() << " channels";
  if (!r.metrics["mean_offdiag"].is_null())
    ctx.say() << ": mean off-diagonal |rho| " << fmt(r.metrics["mean_offdiag"].get<double>());
  ctx.say() << "\n";
  return kOk;
}

Json rpa_defaults() {
  Json d = base_defaults();
  d.update({{"input", nullptr},
            {"reference", nullptr},
            {"reference_kind", "signal"},
            {"reference_column", 0},
            {"starts", 3},
            {"amp_floor", 1e-8},
            {"optimizer", optimizer_defaults()}});
  return d;
}

int cmd_rpa(Context& ctx) {
  const Node root = ctx.root();
  const SignalMatrix x = read_signal_csv(required_path(root, "input", "--input"));
  const Table ref = read_csv(required_path(root, "reference", "--reference"));
  const auto col = static_cast<Eigen::Index>(root.uinteger("reference_column"));
  if (col >= ref.values.cols()) throw UsageError("reference_column is out of range");
  if (static_cast<std::size_t>(ref.values.rows()) != x.samples())
    throw UsageError("reference has " + std::to_string(ref.values.rows()) + " rows but the input has " +
                     std::to_string(x.samples()) + " samples");
  const Eigen::VectorXd ref_col = ref.values.col(col);
  const std::string kind = root.string("reference_kind");
  std::vector<double> phase;
  if (kind == "signal") {
    phase = reference_phase_from_signal(std::span<const double>(ref_col.data(), static_cast<std::size_t>(ref_col.size())));
  } else if (kind == "phase") {
    for (Eigen::Index t = 0; t < ref_col.size(); ++t) phase.push_back(wrap_phase(ref_col(t)));
  } else {
    throw UsageError("reference_kind must be \"signal\" or \"phase\"");
  }

  const std::size_t trim = ctx.trim_or(0);
  RPAProblem problem;
  problem.mixtures = analytic(x).trimmed(trim);
  problem.ref_phase.assign(phase.begin() + static_cast<std::ptrdiff_t>(trim),
                           phase.end() - static_cast<std::ptrdiff_t>(trim));
  problem.amp_floor = root.number("amp_floor");
  problem.validate();
  const OptimizerConfig cfg = optimizer_from(root.at("optimizer"), ctx.seed());
  const int starts = positive_int(root, "starts");

  const RPASolution sol = rpa_solve(problem, cfg, starts);
  const RowMatrix y = sol.w.transpose() * x.data;
  const int prec = ctx.precision();
  OutputSet files(ctx.out_dir);
  files.add("w.csv", to_csv(sol.w, {"w"}, prec));
  files.add("source.csv", signal_to_csv(y, "y", prec));
  files.add("trace.csv", trace_csv(sol.trace, prec));
  Report r{"rpa",
           ctx.config,
           {{"plv_magnitude", sol.plv.magnitude()},
            {"plv_argument", sol.plv.argument()},
            {"w", vector_json(sol.w)},
            {"start_objectives", sol.start_objectives},
            {"optimizer", trace_summary(sol.trace)}},
           {}};
  finish(files, r);
  ctx.say() << "RPA |rho| = " << fmt(sol.plv.magnitude()) << " (" << to_string(sol.trace.termination) << ")\n";
  return exit_for(sol.trace.termination);
}

Json ipa_defaults() {
  Json d = base_defaults();
  d.update({{"input", nullptr},
            {"channels", nullptr},
            {"lambda", 0.01},
            {"starts", 1},
            {"convention", "minimize"},
            {"amp_floor", 1e-8},
            {"optimizer", optimizer_defaults()}});
  return d;
}

IPAConvention convention_from(const Node& n) {
  const std::string c = n.string("convention");
  if (c == "minimize") return IPAConvention::MinimizeLocking;
  if (c == "maximize") return IPAConvention::MaximizeLocking;
  throw UsageError("convention must be \"minimize\" or \"maximize\"");
}

int cmd_ipa(Context& ctx) {
  const Node root = ctx.root();
  SignalMatrix x = read_signal_csv(required_path(root, "input", "--input"));
  if (!root.is_null("channels")) {
    const auto rows = root.indices("channels");
    RowMatrix sub(static_cast<Eigen::Index>(rows.size()), x.data.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= x.channels()) throw UsageError("channels lists an index beyond the input width");
      sub.row(static_cast<Eigen::Index>(r)) = x.data.row(static_cast<Eigen::Index>(rows[r]));
    }
    x.data = std::move(sub);
  }
  IPAProblem problem;
  problem.subspace = analytic(x).trimmed(ctx.trim_or(0));
  problem.lambda = root.number("lambda");
  problem.amp_floor = root.number("amp_floor");
  problem.convention = convention_from(root);
  problem.validate();
  const OptimizerConfig cfg = optimizer_from(root.at("optimizer"), ctx.seed());
  const int starts = positive_int(root, "starts");

  const IPASolution sol = ipa_solve(problem, cfg, starts);
  const auto n = static_cast<Eigen::Index>(x.channels());
  const RowMatrix y = sol.W * x.data;
  const int prec = ctx.precision();
  OutputSet files(ctx.out_dir);
  files.add("W.csv", to_csv(sol.W, {}, prec));
  files.add("sources.csv", signal_to_csv(y, "y", prec));
  files.add("plv_before_abs.csv", to_csv(magnitudes(sol.plv_before), {}, prec));
  files.add("plv_after_abs.csv", to_csv(magnitudes(sol.plv_after), {}, prec));
  files.add("trace.csv", trace_csv(sol.trace, prec));
  Report r{"ipa",
           ctx.config,
           {{"W", matrix_to_json(sol.W)},
            {"plv_before", plv_summary(sol.plv_before)},
            {"plv_after", plv_summary(sol.plv_after)},
            {"locking_term_identity", ipa_locking_term(problem, Eigen::MatrixXd::Identity(n, n))},
            {"locking_term_after", ipa_locking_term(problem, sol.W)},
            {"optimizer", trace_summary(sol.trace)}},
           {}};
  finish(files, r);
  ctx.say() << "IPA mean off-diagonal |rho| " << fmt(mean_offdiag_magnitude(sol.plv_before)) << " -> "
            << fmt(mean_offdiag_magnitude(sol.plv_after)) << " (" << to_string(sol.trace.termination) << ")\n";
  return exit_for(sol.trace.termination);
}

Json psca_defaults() {
  Json d = base_defaults();
  d.update({{"input", nullptr},
            {"v_real", nullptr},
            {"v_imag", nullptr},
            {"components", 2},
            {"basis", "aligned"},
            {"starts", 5},
            {"optimizer", optimizer_defaults()}});
  return d;
}

FeatureBasis basis_from(const Node& n) {
  const std::string b = n.string("basis");
  if (b == "aligned") return FeatureBasis::Aligned;
  if (b == "eigenvectors") return FeatureBasis::Eigenvectors;
  throw UsageError("basis must be \"aligned\" or \"eigenvectors\"");
}

std::string assignment_csv(const std::vector<int>& assignment) {
  RowMatrix m(static_cast<Eigen::Index>(assignment.size()), 2);
  for (std::size_t i = 0; i < assignment.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) << static_cast<double>(i), assignment[i];
  return to_csv(m, {"channel", "cluster"}, 17);
}

std::vector<int> cluster_sizes(const std::vector<int>& assignment, Eigen::Index p) {
  std::vector<int> sizes(static_cast<std::size_t>(p), 0);
  for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
  return sizes;
}

int cmd_psca(Context& ctx) {
  const Node root = ctx.root();
  PSCAProblem problem;
  if (!root.is_null("input")) {
    if (!root.is_null("v_real")) throw UsageError("give either input or v_real/v_imag, not both");
    const SignalMatrix x = read_signal_csv(root.string("input"));
    const PLVMatrix p = plv_matrix(analytic(x), ctx.trim_or(0));
    const auto comps = static_cast<Eigen::Index>(positive_int(root, "components"));
    if (comps > p.rows()) throw UsageError("components exceeds the number of channels");
    problem.V = plv_features(p, comps, basis_from(root));
  } else {
    const Table re = read_csv(required_path(root, "v_real", "--v-real or --input"));
    RowMatrix im = RowMatrix::Zero(re.values.rows(), re.values.cols());
    if (!root.is_null("v_imag")) im = read_csv(root.string("v_imag")).values;
    if (im.rows() != re.values.rows() || im.cols() != re.values.cols())
      throw UsageError("v_real and v_imag differ in shape");
    problem.V = re.values.cast<std::complex<double>>() + std::complex<double>(0.0, 1.0) * im.cast<std::complex<double>>();
  }
  problem.validate();
  const OptimizerConfig cfg = optimizer_from(root.at("optimizer"), ctx.seed());
  const int starts = positive_int(root, "starts");

  const PSCASolution sol = psca_solve(problem, cfg, starts);
  const int prec = ctx.precision();
  OutputSet files(ctx.out_dir);
  files.add("W.csv", to_csv(sol.W, {}, prec));
  files.add("U_abs.csv", to_csv(magnitudes(sol.U), {}, prec));
  files.add("assignment.csv", assignment_csv(sol.assignment));
  files.add("trace.csv", trace_csv(sol.trace, prec));
  Report r{"psca",
           ctx.config,
           {{"J", sol.J},
            {"W", matrix_to_json(sol.W)},
            {"assignment", sol.assignment},
            {"cluster_sizes", cluster_sizes(sol.assignment, problem.components())},
            {"skipped_starts", sol.skipped_starts},
            {"optimizer", trace_summary(sol.trace)}},
           {}};
  finish(files, r);
  ctx.say() << "pSCA J = " << fmt(sol.J) << ", assignment";
  for (int a : sol.assignment) ctx.say() << ' ' << a;
  ctx.say() << " (" << to_string(sol.trace.termination) << ")\n";
  return exit_for(sol.trace.termination);
}

Json gradcheck_defaults() {
  Json d = base_defaults();
  d.update({{"algorithm", "all"}, {"trials", 100}});
  return d;
}

int cmd_gradcheck(Context& ctx) {
  const Node root = ctx.root();
  const std::string which = root.string("algorithm");
  std::vector<gradcheck::Algorithm> algs;
  if (which == "all" || which == "rpa") algs.push_back(gradcheck::Algorithm::RPA);
  if (which == "all" || which == "ipa") algs.push_back(gradcheck::Algorithm::IPA);
  if (which == "all" || which == "psca") algs.push_back(gradcheck::Algorithm::PSCA);
  if (algs.empty()) throw UsageError("algorithm must be rpa, ipa, psca or all");
  const int trials = positive_int(root, "trials");

  std::vector<std::string> rows;
  Json results = Json::object();
  bool pass = true;
  const int prec = ctx.precision();
  for (auto a : algs) {
    const auto s = gradcheck::run(a, trials, ctx.seed());
    Json errors = Json::array();
    Json skipped = Json::array();
    for (const auto& t : s.trials) {
      errors.push_back(t.skipped ? Json(nullptr) : Json(t.relative_error));
      if (t.skipped) skipped.push_back({{"trial", t.trial}, {"reason", t.skip_reason}});
      std::ostringstream line;
      line << to_string(a) << ',' << t.trial << ',' << format_number(t.lambda, prec) << ','
           << (t.skipped ? "" : format_number(t.relative_error, prec)) << ','
           << (t.skipped || a == gradcheck::Algorithm::PSCA ? "" : format_number(t.tangency, prec)) << ','
           << (t.skipped ? 1 : 0);
      rows.push_back(line.str());
    }
    Json entry = {{"tolerance", gradcheck::tolerance(a)},
                  {"evaluated", s.evaluated()},
                  {"skipped", s.skipped()},
                  {"max_relative_error", s.max_relative_error()},
                  {"gradient_pass", s.gradient_pass()},
                  {"relative_errors", errors},
                  {"skipped_trials", skipped},
                  {"pass", s.pass()}};
    if (a != gradcheck::Algorithm::PSCA) {
      entry["max_tangency"] = s.max_tangency();
      entry["tangency_tolerance"] = gradcheck::kTangencyTolerance;
      entry["tangency_pass"] = s.tangency_pass();
    }
    results[to_string(a)] = entry;
    pass = pass && s.pass();
    ctx.say() << to_string(a) << ": " << (s.pass() ? "PASS" : "FAIL") << "  max relative error "
              << fmt(s.max_relative_error()) << " (tol " << fmt(gradcheck::tolerance(a)) << ")";
    if (a != gradcheck::Algorithm::PSCA) ctx.say() << ", max tangency " << fmt(s.max_tangency());
    ctx.say() << ", " << s.evaluated() << " evaluated, " << s.skipped() << " skipped\n";
  }

  std::string csv = "algorithm,trial,lambda,relative_error,tangency,skipped\n";
  for (const auto& r : rows) csv += r + "\n";
  OutputSet files(ctx.out_dir);
  files.add("gradcheck.csv", csv);
  Report r{"gradcheck", ctx.config, {{"pass", pass}, {"algorithms", results}}, {}};
  finish(files, r);
  return pass ? kOk : kComputation;
}

Json pipeline_defaults() {
  Json d = base_defaults();
  d.update(generation_defaults());
  d.update({{"psca", {{"components", nullptr}, {"basis", "aligned"}, {"starts", 5}, {"optimizer", optimizer_defaults()}}},
            {"ipa",
             {{"lambda", 0.01},
              {"starts", 1},
              {"convention", "minimize"},
              {"amp_floor", 1e-8},
              {"optimizer", optimizer_defaults(200)}}}});
  return d;
}

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const UsageError& e) {
    throw UsageError(name + " stage: " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(name + " stage: " + e.what());
  } catch (const std::exception& e) {
    throw Error(name + " stage: " + e.what());
  }
}

int cmd_pipeline(Context& ctx) {
  const Node root = ctx.root();
  const std::uint64_t seed = ctx.seed();
  const Generated g = stage("simulate", [&] { return generate(ctx.config, seed); });
  const std::size_t trim = ctx.trim_or(g.mixtures.samples() / 20);

  const AnalyticMatrix a = stage("plv", [&] { return analytic(g.mixtures).trimmed(trim); });
  const PLVMatrix p = plv_matrix(a);

  const Node ps = root.at("psca");
  const auto comps = static_cast<Eigen::Index>(
      ps.is_null("components") ? static_cast<int>(g.net.clusters.size()) : positive_int(ps, "components"));
  const PSCASolution clusters = stage("psca", [&] {
    if (comps > p.rows()) throw UsageError("psca.components exceeds the number of channels");
    PSCAProblem problem;
    problem.V = plv_features(p, comps, basis_from(ps));
    problem.validate();
    return psca_solve(problem, optimizer_from(ps.at("optimizer"), seed), positive_int(ps, "starts"));
  });

  const auto truth = g.net.labels();
  const double recovery = recovery_score(truth, clusters.assignment);

  const Node ip = root.at("ipa");
  Json per_cluster = Json::array();
  bool all_reduced = true;
  for (Eigen::Index c = 0; c < comps; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < clusters.assignment.size(); ++i)
      if (clusters.assignment[i] == static_cast<int>(c)) members.push_back(i);
    Json entry = {{"cluster", c}, {"channels", members}};
    if (members.size() < 2) {
      entry["ipa"] = nullptr;
      per_cluster.push_back(entry);
      continue;
    }
    const IPASolution sol = stage("ipa", [&] {
      IPAProblem problem;
      problem.subspace = a.select(members);
      problem.lambda = ip.number("lambda");
      problem.amp_floor = ip.number("amp_floor");
      problem.convention = convention_from(ip);
      problem.validate();
      return ipa_solve(problem, optimizer_from(ip.at("optimizer"), seed), positive_int(ip, "starts"));
    });
    const double before = mean_offdiag_magnitude(sol.plv_before);
    const double after = mean_offdiag_magnitude(sol.plv_after);
    all_reduced = all_reduced && after < before;
    entry["ipa"] = {{"mean_offdiag_before", before},
                    {"mean_offdiag_after", after},
                    {"reduced", after < before},
                    {"W", matrix_to_json(sol.W)},
                    {"termination", to_string(sol.trace.termination)},
                    {"iterations", sol.trace.iterates.back().iteration}};
    per_cluster.push_back(entry);
  }

  Json metrics = generation_metrics(g);
  metrics.update({{"trim", trim},
                  {"mixture_plv", plv_summary(p)},
                  {"assignment", clusters.assignment},
                  {"psca_J", clusters.J},
                  {"psca_termination", to_string(clusters.trace.termination)},
                  {"recovery", recovery},
                  {"clusters", per_cluster},
                  {"ipa_reduced_all", all_reduced}});
  OutputSet files(ctx.out_dir);
  Report r{"pipeline", ctx.config, metrics, {}};
  finish(files, r);
  ctx.say() << "pipeline: recovery " << fmt(recovery) << ", assignment";
  for (int v : clusters.assignment) ctx.say() << ' ' << v;
  ctx.say() << "\n";
  for (const auto& e : per_cluster) {
    if (e["ipa"].is_null()) continue;
    ctx.say() << "  cluster " << e["cluster"].get<int>() << ": mean off-diagonal |rho| "
              << fmt(e["ipa"]["mean_offdiag_before"].get<double>()) << " -> "
              << fmt(e["ipa"]["mean_offdiag_after"].get<double>()) << "\n";
  }
  return kOk;
}

// ---- dispatch --------------------------------------------------------------

struct Command {
  CLI::App* app;
  Json (*defaults)();
  int (*run)(Context&);
};

struct Binding {
  CLI::App* sub;
  CLI::Option* opt;
  std::string pointer;
  std::function<Json()> value;
};

template <class T>
void bind_flag(std::vector<Binding>& out, CLI::App* sub, const std::string& flag, const std::string& pointer,
          const std::string& help) {
  auto storage = std::make_shared<T>();
  auto* opt = sub->add_option(flag, *storage, help);
  out.push_back({sub, opt, pointer, [storage] { return Json(*storage); }});
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phase-locking analysis: oscillator simulation, PLV, RPA, IPA and pSCA.", "phaselock"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::uint64_t trim = 0;
  std::string out_dir = ".";
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file overlaid on the command defaults");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  auto* trim_opt = app.add_option("--trim", trim, "samples dropped at each end before phase statistics");
  app.add_flag("--quiet", quiet, "no summary on stdout");

  std::vector<Command> commands;
  std::vector<Binding> flags;
  auto add = [&](const char* name, const char* help, Json (*defaults)(), int (*run)(Context&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    commands.push_back({sub, defaults, run});
    return sub;
  };

  add("simulate", "simulate a clustered oscillator network, synthesize and mix sources", simulate_defaults,
      cmd_simulate);
  auto* plv_cmd = add("plv", "PLV matrix of a multichannel CSV", plv_defaults, cmd_plv);
  bind_flag<std::string>(flags, plv_cmd, "--input", "/input", "time-major signal CSV");

  auto* rpa_cmd = add("rpa", "extract the component locked to a reference", rpa_defaults, cmd_rpa);
  bind_flag<std::string>(flags, rpa_cmd, "--input", "/input", "time-major mixtures CSV");
  bind_flag<std::string>(flags, rpa_cmd, "--reference", "/reference", "reference CSV (signal or phase column)");
  bind_flag<std::string>(flags, rpa_cmd, "--reference-kind", "/reference_kind", "signal or phase");
  bind_flag<int>(flags, rpa_cmd, "--starts", "/starts", "random initializations");
  bind_flag<int>(flags, rpa_cmd, "--max-iters", "/optimizer/max_iters", "iteration limit");

  auto* ipa_cmd = add("ipa", "unmix a subspace by pairwise phase locking", ipa_defaults, cmd_ipa);
  bind_flag<std::string>(flags, ipa_cmd, "--input", "/input", "time-major subspace CSV");
  bind_flag<double>(flags, ipa_cmd, "--lambda", "/lambda", "log-determinant weight in [0, 1)");
  bind_flag<std::string>(flags, ipa_cmd, "--convention", "/convention", "minimize or maximize");
  bind_flag<int>(flags, ipa_cmd, "--starts", "/starts", "initializations (the first is the identity)");
  bind_flag<int>(flags, ipa_cmd, "--max-iters", "/optimizer/max_iters", "iteration limit");

  auto* psca_cmd = add("psca", "cluster channels by phase synchronization", psca_defaults, cmd_psca);
  bind_flag<std::string>(flags, psca_cmd, "--input", "/input", "time-major signal CSV (V from its PLV matrix)");
  bind_flag<std::string>(flags, psca_cmd, "--v-real", "/v_real", "real part of V (N x P CSV)");
  bind_flag<std::string>(flags, psca_cmd, "--v-imag", "/v_imag", "imaginary part of V (N x P CSV)");
  bind_flag<int>(flags, psca_cmd, "--components", "/components", "number of clusters P");
  bind_flag<std::string>(flags, psca_cmd, "--basis", "/basis", "aligned or eigenvectors");
  bind_flag<int>(flags, psca_cmd, "--starts", "/starts", "random orthogonal initializations");
  bind_flag<int>(flags, psca_cmd, "--max-iters", "/optimizer/max_iters", "iteration limit");

  auto* gc_cmd = add("gradcheck", "compare closed-form gradients with finite differences", gradcheck_defaults,
                     cmd_gradcheck);
  bind_flag<std::string>(flags, gc_cmd, "--algorithm", "/algorithm", "rpa, ipa, psca or all");
  bind_flag<int>(flags, gc_cmd, "--trials", "/trials", "random instances per algorithm");

  auto* pipe_cmd = add("pipeline", "simulate, cluster with pSCA, unmix each cluster with IPA", pipeline_defaults,
                       cmd_pipeline);
  bind_flag<double>(flags, pipe_cmd, "--kappa-inter", "/network/kappa_inter", "coupling across clusters");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (c.app->parsed()) chosen = &c;
  const std::string name = chosen->app->get_name();

  try {
    Json overlay = Json::object();
    if (seed_opt->count() > 0) overlay["seed"] = seed;
    if (trim_opt->count() > 0) overlay["trim"] = trim;
    for (const auto& b : flags)
      if (b.sub == chosen->app && b.opt->count() > 0) overlay[Json::json_pointer(b.pointer)] = b.value();
    Context ctx;
    ctx.config = chosen->defaults();
    if (!config_path.empty()) merge_checked(ctx.config, read_json_file(config_path));
    merge_checked(ctx.config, overlay);
    ctx.out_dir = out_dir;
    ctx.quiet = quiet;
    ctx.out = &out;
    ctx.precision();
    ctx.seed();
    return chosen->run(ctx);
  } catch (const UsageError& e) {
    err << "phaselock " << name << ": " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "phaselock " << name << ": invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "phaselock " << name << ": " << e.what() << "\n";
    return kComputation;
  }
}

}  // namespace phaselock::cli
