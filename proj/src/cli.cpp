#include "treespec/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/LU>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>

#include "treespec/eval.hpp"
#include "treespec/io.hpp"
#include "treespec/learner.hpp"
#include "treespec/logdet.hpp"

namespace treespec {

namespace {

struct GenArgs {
  int n = 4;
  int k = 2;
  std::string shape = "binary";
  std::vector<double> det_range{0.4, 0.9};
  double sigma = 0.05;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
};

Eigen::VectorXd random_distribution(int k, SplitMix64& rng) {
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v(i) = -std::log(1.0 - rng.next_unit());
  return v / v.sum();
}

Eigen::MatrixXd random_stochastic(int k, SplitMix64& rng) {
  Eigen::MatrixXd m(k, k);
  for (int i = 0; i < k; ++i) m.row(i) = random_distribution(k, rng).transpose();
  return m;
}

double abs_det(const Eigen::MatrixXd& m) {
  return std::abs(Eigen::PartialPivLU<Eigen::MatrixXd>(m).determinant());
}

// |det| of (1-w) I + w R moves continuously from 1 to |det R|; bisect the
// mixing weight until the determinant hits the target
Eigen::MatrixXd matrix_with_det(int k, double target, SplitMix64& rng, int tries) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
  for (int attempt = 0; attempt < tries; ++attempt) {
    Eigen::MatrixXd r = random_stochastic(k, rng);
    if (abs_det(r) >= target) continue;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (abs_det((1.0 - mid) * eye + mid * r) >= target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    Eigen::MatrixXd m = (1.0 - lo) * eye + lo * r;
    // scrub negative dust and keep rows exactly stochastic
    for (int i = 0; i < k; ++i) {
      double sum = m.row(i).cwiseMax(0.0).sum();
      m.row(i) = m.row(i).cwiseMax(0.0) / sum;
    }
    return m;
  }
  fail(ErrorKind::GenerationTimeout, "no matrix reached the target determinant");
}

MarkovTreeModel generate_model(const GenArgs& args) {
  if (args.n < 2) fail(ErrorKind::InvalidArgument, "--n must be >= 2");
  if (args.k < 2) fail(ErrorKind::InvalidArgument, "--k must be >= 2");
  const double lo = args.det_range[0], hi = args.det_range[1];
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "--det-range needs 0 < lo <= hi <= 1");
  }
  if (lo == 1.0) {
    fail(ErrorKind::InvalidArgument,
         "--det-range 1 1 admits only permutation matrices, which carry no "
         "signal about the tree; pick hi < 1 or lo < 1");
  }
  if (!(args.sigma > 0.0 && args.sigma < 1.0 / args.k)) {
    fail(ErrorKind::InvalidArgument, "--sigma must lie in (0, 1/k)");
  }

  SplitMix64 topo_rng = SplitMix64::substream(args.seed, 0);
  TreeTopology t = (args.shape == "caterpillar") ? make_caterpillar(args.n)
                                                 : random_binary_topology(args.n, topo_rng);
  int root = t.node_count - 1;
  for (int v = 0; v < t.node_count; ++v) {
    if (!t.is_leaf(v)) {
      root = v;
      break;
    }
  }
  if (args.n == 2) root = 0;

  const int model_tries = 400;
  for (int attempt = 1; attempt <= model_tries; ++attempt) {
    SplitMix64 rng = SplitMix64::substream(args.seed, std::uint64_t(attempt));
    MarkovTreeModel m;
    m.topology = t;
    m.k = args.k;
    m.root = root;
    // keep the root distribution comfortably above sigma
    for (int tries = 0;; ++tries) {
      m.root_dist = random_distribution(args.k, rng);
      if (m.root_dist.minCoeff() > 1.5 * args.sigma) break;
      if (tries > 2000) fail(ErrorKind::GenerationTimeout, "root distribution");
    }
    auto dist = t.bfs_distances(root);
    bool ok = true;
    for (auto [a, b] : t.edges()) {
      int u = (dist[a] < dist[b]) ? a : b;
      int v = (u == a) ? b : a;
      double span = hi - lo;
      double target = lo + span * (0.05 + 0.9 * rng.next_unit());
      if (span == 0.0) target = lo;
      m.edge_matrix.emplace(std::make_pair(u, v),
                            TransitionMatrix::make(matrix_with_det(args.k, target, rng, 200)));
    }
    for (int v = 0; v < t.node_count && ok; ++v) {
      ok = stationary_at(m, v).minCoeff() > args.sigma;
    }
    for (const auto& [key, mat] : m.edge_matrix) {
      ok = ok && mat.det_abs > lo * (1.0 - 1e-9) && mat.det_abs <= hi;
    }
    if (ok) return m;
  }
  fail(ErrorKind::GenerationTimeout,
       "could not satisfy the marginal floor after " + std::to_string(model_tries) +
           " attempts; relax --sigma or --det-range");
}

SpectralConfig sampled_spectral_defaults(SpectralConfig cfg, int k, double scale) {
  if (scale > 0.0) {
    // the pair inverse must stay stable and the eigenvalue gaps must beat
    // the estimated perturbation of the left-hand side
    cfg.cond_floor = std::max(cfg.cond_floor, 10.0 * k * scale);
    cfg.sep_tol = std::max(cfg.sep_tol, double(k) * k * (k * scale));
    cfg.imag_tol = std::max(cfg.imag_tol, cfg.sep_tol);
  }
  return cfg;
}

void emit_report(const RunReport& report, const std::string& path) {
  if (path.empty()) {
    std::fputs(report.to_string().c_str(), stdout);
  } else {
    report.write(path);
  }
}

void report_learn_diagnostics(RunReport& report, const TreeTopology& t,
                              const ReconstructionResult& result) {
  report.add("probe_retries_total", result.total_probe_retries);
  report.add("separators", std::int64_t(result.separators.size()));
  for (const auto& record : result.separators) {
    report.add("separator." + std::to_string(record.index),
               t.node_names[record.w] + "-" + t.node_names[record.w_prime] +
                   " refs " + t.node_names[record.new_ref] + "," +
                   t.node_names[record.old_ref]);
  }
  for (const auto& [node, diag] : result.decomposition_diag) {
    std::string key = "decompose." + t.node_names[node];
    report.add(key + ".attempts", diag.attempts);
    report.add(key + ".pair_det", diag.pair_det_abs);
    report.add(key + ".residual", diag.residual);
  }
}

int run_gen(const GenArgs& args) {
  MarkovTreeModel m = generate_model(args);
  ModelConfig cfg{args.det_range[0] * (1.0 - 1e-9), 1.0 - args.det_range[1],
                  args.sigma};
  if (cfg.beta_prime < 0.0) cfg.beta_prime = 0.0;
  ValidationReport validation = validate_model(m, cfg);
  write_model_file(args.out, m);
  RunReport report;
  report.add("command", std::string("gen-model"));
  report.add("n", args.n);
  report.add("k", args.k);
  report.add("shape", args.shape);
  report.add("seed", std::int64_t(args.seed));
  report.add("validation_pass", std::string(validation.pass ? "yes" : "no"));
  for (const auto& e : validation.edges) {
    report.add("det." + m.topology.node_names[e.u] + "-" + m.topology.node_names[e.v],
               e.det_abs);
  }
  double min_marginal = 1.0;
  for (const auto& nchk : validation.nodes) {
    min_marginal = std::min(min_marginal, nchk.min_marginal);
  }
  report.add("min_marginal", min_marginal);
  emit_report(report, args.report);
  if (!validation.pass) fail(ErrorKind::GenerationTimeout, "generated model failed validation");
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"learning nonsingular Markov models on trees from leaf samples"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-model", "generate a nonsingular model");
  cmd_gen->add_option("--n", gen.n, "leaf count")->required();
  cmd_gen->add_option("--k", gen.k, "state count");
  cmd_gen->add_option("--shape", gen.shape, "binary|caterpillar")
      ->check(CLI::IsMember({"binary", "caterpillar"}));
  cmd_gen->add_option("--det-range", gen.det_range, "edge |det| range lo hi")
      ->expected(2);
  cmd_gen->add_option("--sigma", gen.sigma, "marginal floor");
  cmd_gen->add_option("--seed", gen.seed, "rng seed");
  cmd_gen->add_option("--out", gen.out, "output model file")->required();
  cmd_gen->add_option("--report", gen.report, "run report file");

  struct {
    std::string model, out, report;
    int m = 1000;
    std::uint64_t seed = 0;
  } samp;
  auto* cmd_sample = app.add_subcommand("sample", "draw leaf samples from a model");
  cmd_sample->add_option("--model", samp.model)->required();
  cmd_sample->add_option("--m", samp.m, "sample count")->required();
  cmd_sample->add_option("--seed", samp.seed);
  cmd_sample->add_option("--out", samp.out)->required();
  cmd_sample->add_option("--report", samp.report);

  struct {
    std::string samples, topology, truth, out, report;
    std::string mode = "sampled";
    bool strict = false;
    double sigma = 0.04;
    double sep_tol = 1e-6, imag_tol = 1e-6, cond_floor = 1e-8;
    int max_retries = 8;
    std::uint64_t seed = 0;
    int delta = 0;
  } learn;
  auto* cmd_learn = app.add_subcommand("learn", "recover edge matrices on a known topology");
  cmd_learn->add_option("--samples", learn.samples, "TREESPEC-SAMPLES input");
  cmd_learn->add_option("--topology", learn.topology, "newick topology file");
  cmd_learn->add_option("--truth", learn.truth, "truth model (exact-oracle mode)");
  cmd_learn->add_option("--mode", learn.mode)->check(CLI::IsMember({"sampled", "exact-oracle"}));
  cmd_learn->add_flag("--strict", learn.strict, "fail on degenerate marginals");
  cmd_learn->add_option("--sigma", learn.sigma, "marginal clip level (lenient mode)");
  cmd_learn->add_option("--sep-tol", learn.sep_tol);
  cmd_learn->add_option("--imag-tol", learn.imag_tol);
  cmd_learn->add_option("--cond-floor", learn.cond_floor);
  cmd_learn->add_option("--max-retries", learn.max_retries);
  cmd_learn->add_option("--seed", learn.seed);
  cmd_learn->add_option("--delta", learn.delta, "exploration radius override");
  cmd_learn->add_option("--out", learn.out)->required();
  cmd_learn->add_option("--report", learn.report);

  struct {
    std::string samples, out, dist, report;
    std::string shape = "caterpillar";
    double delta_cap = 4.0;
    double margin = 0.05;
  } topo;
  auto* cmd_topo = app.add_subcommand("learn-topology", "reconstruct the tree from samples");
  cmd_topo->add_option("--samples", topo.samples)->required();
  cmd_topo->add_option("--shape", topo.shape, "caterpillar|binary")
      ->check(CLI::IsMember({"caterpillar", "binary"}));
  cmd_topo->add_option("--delta-cap", topo.delta_cap, "short-pair threshold");
  cmd_topo->add_option("--margin", topo.margin, "four-point margin delta");
  cmd_topo->add_option("--out", topo.out, "output newick file")->required();
  cmd_topo->add_option("--dist", topo.dist, "also write the distance matrix");
  cmd_topo->add_option("--report", topo.report);

  struct {
    std::string model, truth, report;
    int draws = 200000;
    std::uint64_t seed = 0;
  } ev;
  auto* cmd_eval = app.add_subcommand("eval", "compare a model against the truth");
  cmd_eval->add_option("--model", ev.model)->required();
  cmd_eval->add_option("--truth", ev.truth)->required();
  cmd_eval->add_option("--tv-draws", ev.draws, "Monte-Carlo draws when exact TV is out of budget");
  cmd_eval->add_option("--seed", ev.seed);
  cmd_eval->add_option("--report", ev.report);

  struct {
    int n = 3;
    std::string subset = "1";
    double alpha = 0.0;
    double tau_mix = 0.0;
    std::string out, report;
  } par;
  auto* cmd_parity = app.add_subcommand("parity", "emit the noisy-parity caterpillar model");
  cmd_parity->add_option("--n", par.n, "bit count")->required();
  cmd_parity->add_option("--subset", par.subset, "comma-separated bits, e.g. 1,3");
  cmd_parity->add_option("--alpha", par.alpha, "label flip probability");
  cmd_parity->add_option("--tau-mix", par.tau_mix, "identity mixing weight (0 = singular)");
  cmd_parity->add_option("--out", par.out)->required();
  cmd_parity->add_option("--report", par.report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto started = std::chrono::steady_clock::now();
  int status = 0;
  try {
    if (cmd_gen->parsed()) {
      status = run_gen(gen);
    } else if (cmd_sample->parsed()) {
      MarkovTreeModel m = read_model_file(samp.model);
      LeafSamples s = sample_leaves(m, samp.m, samp.seed);
      write_samples_file(samp.out, s);
      RunReport report;
      report.add("command", std::string("sample"));
      report.add("m", samp.m);
      report.add("n", s.n);
      report.add("k", s.k);
      report.add("seed", std::int64_t(samp.seed));
      emit_report(report, samp.report);
    } else if (cmd_learn->parsed()) {
      LearnerConfig cfg;
      cfg.strictness = learn.strict ? Strictness::strict : Strictness::lenient;
      cfg.sigma = learn.sigma;
      cfg.seed = learn.seed;
      if (learn.delta > 0) cfg.delta_override = learn.delta;
      cfg.spectral.sep_tol = learn.sep_tol;
      cfg.spectral.imag_tol = learn.imag_tol;
      cfg.spectral.cond_floor = learn.cond_floor;
      cfg.spectral.max_probe_retries = learn.max_retries;

      std::unique_ptr<StatsProvider> provider;
      std::optional<LeafSamples> samples;
      std::optional<MarkovTreeModel> truth;
      TreeTopology topology;
      if (learn.mode == "exact-oracle") {
        if (learn.truth.empty()) {
          fail(ErrorKind::InvalidArgument, "exact-oracle mode requires --truth");
        }
        truth = read_model_file(learn.truth);
        topology = learn.topology.empty() ? truth->topology
                                          : read_topology_file(learn.topology);
        cfg.strictness = Strictness::strict;
        provider = std::make_unique<ExactStatsProvider>(*truth);
      } else {
        if (learn.samples.empty()) {
          fail(ErrorKind::InvalidArgument, "sampled mode requires --samples");
        }
        if (learn.topology.empty()) {
          fail(ErrorKind::InvalidArgument, "sampled mode requires --topology");
        }
        samples = read_samples_file(learn.samples);
        topology = read_topology_file(learn.topology);
        auto p = std::make_unique<EmpiricalStatsProvider>(*samples, cfg.strictness);
        cfg.spectral = sampled_spectral_defaults(cfg.spectral, samples->k,
                                                 p->data_scale());
        provider = std::move(p);
      }
      ReconstructionResult result = fullrecon(topology, *provider, cfg);
      write_model_file(learn.out, result.model);
      RunReport report;
      report.add("command", std::string("learn"));
      report.add("mode", learn.mode);
      report.add("seed", std::int64_t(learn.seed));
      report.add("sep_tol", cfg.spectral.sep_tol);
      report.add("cond_floor", cfg.spectral.cond_floor);
      report_learn_diagnostics(report, topology, result);
      emit_report(report, learn.report);
    } else if (cmd_topo->parsed()) {
      LeafSamples s = read_samples_file(topo.samples);
      TopologyParams params;
      params.delta_cap = topo.delta_cap;
      params.contraction_delta = topo.margin;
      params.quartet_mode = (topo.shape == "binary")
                                ? TopologyParams::QuartetMode::strict
                                : TopologyParams::QuartetMode::contract;
      LogDetMetric metric = metric_from_samples(s);
      TreeTopology out = (params.quartet_mode == TopologyParams::QuartetMode::strict)
                             ? reconstruct_binary(metric, params)
                             : reconstruct_caterpillar(metric, params);
      write_topology_file(topo.out, out);
      if (!topo.dist.empty()) write_dist_file(topo.dist, metric);
      {
        RunReport report;
        report.add("command", std::string("learn-topology"));
        report.add("shape", topo.shape);
        report.add("delta_cap", params.delta_cap);
        report.add("margin", params.contraction_delta);
        report.add("n", s.n);
        report.add("internal_nodes",
                   std::int64_t(out.node_count - out.leaf_count()));
        for (int v = 0; v < out.node_count; ++v) {
          if (out.is_leaf(v)) continue;
          std::string leaves;
          for (int u : out.adj[v]) {
            if (!out.is_leaf(u)) continue;
            if (!leaves.empty()) leaves += ",";
            leaves += std::to_string(out.leaf_label(u));
          }
          report.add("group." + out.node_names[v], leaves);
        }
        emit_report(report, topo.report);
      }
    } else if (cmd_eval->parsed()) {
      MarkovTreeModel est = read_model_file(ev.model);
      MarkovTreeModel truth = read_model_file(ev.truth);
      RunReport report;
      report.add("command", std::string("eval"));
      try {
        TvResult tv = tv_leaf_distance(est, truth);
        report.add("tv", tv.half_l1);
        report.add("l1", tv.raw_l1);
        report.add("tv_mode", std::string("exact"));
      } catch (const TreespecError& e) {
        if (e.kind() != ErrorKind::BudgetExceeded) throw;
        SampledTv tv = tv_leaf_sampled(est, truth, ev.draws, ev.seed);
        report.add("tv", tv.half_l1);
        report.add("tv_band", tv.band);
        report.add("tv_draws", tv.draws);
        report.add("tv_mode", std::string("sampled"));
      }
      AlignmentReport alignment = align_labels(est, truth);
      report.add("max_aligned_l1", alignment.max_l1);
      for (const auto& [edge, err] : alignment.per_edge_l1) {
        report.add("aligned_l1." + truth.topology.node_names[edge.first] + "-" +
                       truth.topology.node_names[edge.second],
                   err);
      }
      emit_report(report, ev.report);
    } else if (cmd_parity->parsed()) {
      ParitySpec spec;
      spec.n = par.n;
      spec.alpha = par.alpha;
      spec.t_set.clear();
      std::string tok;
      for (char c : par.subset + ",") {
        if (c == ',') {
          if (!tok.empty()) spec.t_set.push_back(std::stoi(tok));
          tok.clear();
        } else {
          tok += c;
        }
      }
      MarkovTreeModel m = (par.tau_mix > 0.0) ? smoothed_parity_model(spec, par.tau_mix)
                                              : parity_hmm(spec);
      write_model_file(par.out, m);
      {
        RunReport report;
        report.add("command", std::string("parity"));
        report.add("n", spec.n);
        report.add("alpha", spec.alpha);
        report.add("tau_mix", par.tau_mix);
        for (const auto& [key, mat] : m.edge_matrix) {
          report.add("det." + m.topology.node_names[key.first] + "-" +
                         m.topology.node_names[key.second],
                     mat.det_abs);
        }
        if (spec.n <= 10 && par.tau_mix == 0.0) {
          JointTable oracle = noisy_parity_oracle(spec);
          double max_err = 0.0;
          std::vector<int> config(spec.n + 1);
          for (std::size_t idx = 0; idx < oracle.p.size(); ++idx) {
            for (int j = 0; j <= spec.n; ++j) {
              config[j] = int(idx >> (spec.n - j)) & 1;
            }
            max_err = std::max(
                max_err, std::abs(leaf_likelihood(m, config) - oracle.p[idx]));
          }
          report.add("oracle_max_abs_err", max_err);
        }
        emit_report(report, par.report);
      }
    }
  } catch (const TreespecError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  // wall time goes to stderr so output files stay byte-identical across runs
  std::fprintf(stderr, "done in %.3fs\n", elapsed);
  return status;
}

}  // namespace treespec
