// mvdr: command-line front end for building indexes, running the two-stage
// pipeline, and evaluating runs.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvdr/mvdr.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Flag combinations CLI11 cannot express declaratively.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InputPaths {
  std::string corpus;
  std::string index;
  std::string queries;
  std::size_t max_doc_len = mvdr::kDefaultMaxDocLen;
  std::size_t max_query_len = mvdr::kDefaultMaxQueryLen;
};

void add_inputs(CLI::App* cmd, InputPaths& in, bool with_queries = true) {
  cmd->add_option("--corpus", in.corpus, "Corpus embeddings (.mvec, with .tsv docnos alongside)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--index", in.index, "IVFPQ index file")->required()->check(CLI::ExistingFile);
  if (with_queries) {
    cmd->add_option("--queries", in.queries, "Query embeddings (.mvec, with .tsv qids alongside)")
        ->required()
        ->check(CLI::ExistingFile);
  }
  cmd->add_option("--max-doc-len", in.max_doc_len, "Maximum tokens per document")->capture_default_str();
  cmd->add_option("--max-query-len", in.max_query_len, "Maximum tokens per query")->capture_default_str();
}

struct Loaded {
  mvdr::MultiVectorCorpus corpus;
  mvdr::IvfPqIndex index;
  mvdr::QuerySet queries;
};

Loaded load_inputs(const InputPaths& in) {
  Loaded l;
  l.corpus = mvdr::load_corpus(in.corpus, in.max_doc_len);
  l.index = mvdr::load_index(in.index);
  l.queries = mvdr::load_queries(in.queries, in.max_query_len);
  return l;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw mvdr::Error("cannot open " + path + " for writing");
  return out;
}

mvdr::Strategy strategy_from(const std::string& name) {
  if (auto s = mvdr::parse_strategy(name)) return *s;
  throw UsageError("unknown strategy \"" + name + "\"");
}

// --------------------------------------------------------------------------

struct BuildArgs {
  std::string corpus;
  std::string index;
  std::size_t max_doc_len = mvdr::kDefaultMaxDocLen;
  mvdr::IvfPqParams params;
};

int cmd_build(const BuildArgs& a, const mvdr::Executor& exec) {
  const auto corpus = mvdr::load_corpus(a.corpus, a.max_doc_len);
  mvdr::BuildStats stats;
  const auto index = mvdr::build_index(corpus, a.params, exec, &stats);
  mvdr::save_index(index, a.index);
  std::cout << "index " << a.index << "\n"
            << "  T=" << index.num_embeddings << " dim=" << index.dim << " docs=" << corpus.num_docs() << "\n"
            << "  L=" << index.partitions() << " m=" << index.codebook.m << " k_sub=" << index.codebook.k_sub << "\n"
            << "  train_sample=" << stats.sample_size << " coarse_distortion=" << stats.coarse_distortion << "\n"
            << "  bytes=" << fs::file_size(a.index) << "\n";
  return 0;
}

struct SearchArgs {
  InputPaths in;
  std::string strategy = "kprime";
  std::size_t kprime = mvdr::kDefaultKPrime;
  std::optional<std::size_t> k;
  bool no_cut = false;
  std::size_t nprobe = mvdr::kDefaultNProbe;
  std::size_t depth = mvdr::kDefaultFinalDepth;
  std::string run_out;
  std::string timings_out;
  std::string tag = "mvdr";
};

mvdr::PipelineConfig pipeline_config(const SearchArgs& a) {
  mvdr::PipelineConfig cfg;
  cfg.strategy = strategy_from(a.strategy);
  cfg.kprime = a.kprime;
  cfg.nprobe = a.nprobe;
  cfg.final_depth = a.depth;
  if (cfg.strategy == mvdr::Strategy::Kprime) {
    if (a.k) throw UsageError("--k cannot be used with --strategy kprime: a kprime candidate set has no order to cut");
  } else if (a.k && a.no_cut) {
    throw UsageError("--k and --no-cut are mutually exclusive");
  } else if (!a.k && !a.no_cut) {
    throw UsageError("--strategy " + a.strategy + " needs --k (or --no-cut to forward all candidates)");
  }
  cfg.k = a.k;
  return cfg;
}

int cmd_search(const SearchArgs& a, const mvdr::Executor& exec) {
  const mvdr::PipelineConfig cfg = pipeline_config(a);
  const Loaded l = load_inputs(a.in);
  const auto out = mvdr::run_pipeline(l.corpus, l.index, l.queries, cfg, exec);
  mvdr::eval::write_run(a.run_out, mvdr::eval::to_run(l.corpus, out.runs), a.tag);
  if (!a.timings_out.empty()) {
    auto t = open_out(a.timings_out);
    mvdr::write_timings_csv(t, out.timings);
  }
  double s1 = 0.0, s2 = 0.0, cands = 0.0;
  for (const auto& t : out.timings) {
    s1 += t.stage1_ms;
    s2 += t.stage2_ms;
    cands += double(t.candidates);
  }
  const double nq = std::max<double>(1.0, double(out.timings.size()));
  std::cerr << "search: " << out.runs.size() << " queries, mean candidates " << cands / nq << ", mean stage1 "
            << s1 / nq << " ms, mean stage2 " << s2 / nq << " ms\n";
  return 0;
}

struct FirstStageArgs {
  InputPaths in;
  std::string strategy;
  std::size_t kprime = mvdr::kDefaultKPrime;
  std::size_t k = 1000;
  std::size_t nprobe = mvdr::kDefaultNProbe;
  std::string run_out;
  std::string tag = "mvdr-approx";
};

int cmd_firststage(const FirstStageArgs& a, const mvdr::Executor& exec) {
  mvdr::PipelineConfig cfg;
  cfg.strategy = strategy_from(a.strategy);
  if (cfg.strategy == mvdr::Strategy::Kprime) {
    throw UsageError("--strategy kprime forms an unordered set and cannot be emitted as a ranking");
  }
  cfg.kprime = a.kprime;
  cfg.nprobe = a.nprobe;
  cfg.k = a.k;
  cfg.validate();
  const Loaded l = load_inputs(a.in);
  cfg.nprobe = mvdr::effective_nprobe(l.index, cfg.nprobe);
  std::vector<mvdr::CandidateRanking> rankings;
  for (std::size_t q = 0; q < l.queries.size(); ++q) {
    auto fs = mvdr::first_stage(l.corpus, l.index, l.queries.query(q), cfg, exec);
    fs.ranking.qid = l.queries.qid(q);
    rankings.push_back(std::move(fs.ranking));
  }
  mvdr::eval::write_run(a.run_out, mvdr::eval::to_run(l.corpus, rankings), a.tag);
  return 0;
}

struct EvaluateArgs {
  std::string run;
  std::string qrels;
  std::string metrics = "mrr,ndcg10,map,recall";
  std::size_t recall_depth = 1000;
  std::size_t mrr_depth = 10;
  std::string baseline;
  bool per_query = false;
};

std::vector<mvdr::eval::Metric> parse_metrics(const std::string& list) {
  std::vector<mvdr::eval::Metric> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    auto m = mvdr::eval::parse_metric(name);
    if (!m) {
      throw UsageError("unknown metric \"" + name + "\"; valid metrics: " + std::string(mvdr::eval::kMetricNames));
    }
    out.push_back(*m);
  }
  if (out.empty()) throw UsageError("--metrics is empty; valid metrics: " + std::string(mvdr::eval::kMetricNames));
  return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto metrics = parse_metrics(a.metrics);
  mvdr::eval::MetricOptions opts;
  opts.recall_depth = a.recall_depth;
  opts.mrr_depth = a.mrr_depth == 0 ? std::nullopt : std::optional<std::size_t>(a.mrr_depth);

  const auto run = mvdr::eval::read_run(a.run);
  const auto qrels = mvdr::eval::read_qrels(a.qrels);
  std::optional<mvdr::eval::RunFile> baseline;
  if (!a.baseline.empty()) baseline = mvdr::eval::read_run(a.baseline);

  char buf[256];
  for (const auto m : metrics) {
    const auto report = mvdr::eval::compute_metric(m, run, qrels, opts);
    const std::string name(mvdr::eval::to_string(m));
    if (a.per_query) {
      for (const auto& [qid, v] : report.per_query) {
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%.6f\n", name.c_str(), qid.c_str(), v);
        std::cout << buf;
      }
    }
    std::snprintf(buf, sizeof(buf), "%s\tall\t%.6f\n", name.c_str(), report.mean);
    std::cout << buf;
    if (report.unjudged > 0) {
      std::cerr << name << ": " << report.unjudged << " queries without relevant judgements excluded\n";
    }
    if (baseline) {
      const auto base = mvdr::eval::compute_metric(m, *baseline, qrels, opts);
      const auto [xs, ys] = mvdr::eval::paired_values(report, base);
      const auto t = mvdr::eval::paired_ttest(xs, ys, metrics.size());
      std::snprintf(buf, sizeof(buf), "%s\tttest\tt=%.6f\tp_raw=%.6g\tp_adjusted=%.6g\tbaseline=%.6f\n", name.c_str(),
                    t.t, t.p_raw, t.p_adjusted, base.mean);
      std::cout << buf;
    }
  }
  return 0;
}

struct SweepArgs {
  InputPaths in;
  std::string qrels;
  std::string strategy = "maxsim";
  std::string grid;
  std::size_t kprime = mvdr::kDefaultKPrime;
  std::size_t nprobe = mvdr::kDefaultNProbe;
  std::size_t depth = mvdr::kDefaultFinalDepth;
  std::size_t baseline_kprime = mvdr::kDefaultKPrime;
  std::size_t mrr_depth = 10;
  std::size_t recall_depth = 1000;
  std::string test_metric = "ndcg10";
  std::string out;
};

int cmd_sweep(const SweepArgs& a, const mvdr::Executor& exec) {
  mvdr::eval::SweepConfig sc;
  sc.strategy = strategy_from(a.strategy);
  try {
    sc.grid = mvdr::eval::parse_grid(a.grid);
  } catch (const mvdr::InvalidArgumentError& e) {
    throw UsageError(e.what());
  }
  auto tm = mvdr::eval::parse_metric(a.test_metric);
  if (!tm) throw UsageError("unknown --test-metric; valid metrics: " + std::string(mvdr::eval::kMetricNames));
  sc.test_metric = *tm;
  sc.base.kprime = a.kprime;
  sc.base.nprobe = a.nprobe;
  sc.base.final_depth = a.depth;
  sc.baseline.strategy = mvdr::Strategy::Kprime;
  sc.baseline.kprime = a.baseline_kprime;
  sc.baseline.nprobe = a.nprobe;
  sc.baseline.final_depth = a.depth;
  sc.metrics.recall_depth = a.recall_depth;
  sc.metrics.mrr_depth = a.mrr_depth == 0 ? std::nullopt : std::optional<std::size_t>(a.mrr_depth);

  const Loaded l = load_inputs(a.in);
  const auto qrels = mvdr::eval::read_qrels(a.qrels);
  const auto result = mvdr::eval::sweep(l.corpus, l.index, l.queries, qrels, sc, exec);
  if (a.out.empty()) {
    mvdr::eval::write_sweep_csv(std::cout, result.rows);
  } else {
    auto out = open_out(a.out);
    mvdr::eval::write_sweep_csv(out, result.rows);
  }
  return 0;
}

struct CorrelateArgs {
  std::string run_a;
  std::string run_b;
  std::string scatter_out;
  std::string rho_out;
};

int cmd_correlate(const CorrelateArgs& a) {
  const auto ra = mvdr::eval::read_run(a.run_a);
  const auto rb = mvdr::eval::read_run(a.run_b);
  const auto corr = mvdr::eval::correlate(ra, rb);
  auto scatter = open_out(a.scatter_out);
  scatter << "qid,docno,rank_a,rank_b\n";
  for (const auto& q : corr) {
    for (const auto& p : q.pairs) scatter << q.qid << ',' << p.docno << ',' << p.rank_a << ',' << p.rank_b << '\n';
  }
  std::ofstream rho_file;
  if (!a.rho_out.empty()) rho_file = open_out(a.rho_out);
  std::ostream& rho = a.rho_out.empty() ? std::cout : rho_file;
  rho << "qid,shared,rho\n";
  char buf[64];
  for (const auto& q : corr) {
    rho << q.qid << ',' << q.pairs.size() << ',';
    if (q.rho) {
      std::snprintf(buf, sizeof(buf), "%.6f", *q.rho);
      rho << buf;
    } else {
      rho << "NA";
    }
    rho << '\n';
  }
  return 0;
}

struct SynthArgs {
  mvdr::eval::SynthParams params;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& a) {
  const auto w = mvdr::eval::synth(a.params);
  mvdr::eval::write_workload(a.out_dir, w);
  std::cerr << "synth: wrote " << w.corpus.num_docs() << " docs (" << w.corpus.num_embeddings() << " embeddings), "
            << w.queries.size() << " queries to " << a.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-vector dense retrieval: IVFPQ candidate generation with exact MaxSim re-ranking"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build", "Train and write an IVFPQ index over a corpus");
  c_build->add_option("--corpus", build.corpus, "Corpus embeddings (.mvec)")->required()->check(CLI::ExistingFile);
  c_build->add_option("--index", build.index, "Output index path")->required();
  c_build->add_option("--partitions", build.params.partitions, "Coarse partitions L (0: 4*sqrt(T) as power of two)")
      ->capture_default_str();
  c_build->add_option("--subquantizers", build.params.m, "PQ sub-quantizers m")->capture_default_str();
  c_build->add_option("--codebook-size", build.params.k_sub, "Centroids per sub-quantizer (<= 256)")
      ->capture_default_str();
  c_build->add_option("--train-fraction", build.params.train_fraction, "Fraction of embeddings sampled for training")
      ->capture_default_str();
  c_build->add_option("--seed", build.params.seed, "Random seed")->capture_default_str();
  c_build->add_option("--iters", build.params.kmeans_iters, "k-means iterations")->capture_default_str();
  c_build->add_option("--max-doc-len", build.max_doc_len, "Maximum tokens per document")->capture_default_str();

  SearchArgs search;
  auto* c_search = app.add_subcommand("search", "Two-stage retrieval: ANN candidates, exact MaxSim re-ranking");
  add_inputs(c_search, search.in);
  c_search->add_option("--strategy", search.strategy, "kprime|count|sumsim|maxsim")
      ->check(CLI::IsMember({"kprime", "count", "sumsim", "maxsim"}))
      ->capture_default_str();
  c_search->add_option("--kprime", search.kprime, "Embeddings retrieved per query embedding")->capture_default_str();
  c_search->add_option("--k", search.k, "Candidate cutoff for ranked strategies");
  c_search->add_flag("--no-cut", search.no_cut, "Forward every candidate of a ranked strategy");
  c_search->add_option("--nprobe", search.nprobe, "Partitions probed per query embedding")->capture_default_str();
  c_search->add_option("--depth", search.depth, "Documents written per query")->capture_default_str();
  c_search->add_option("--run-out", search.run_out, "TREC run output")->required();
  c_search->add_option("--timings-out", search.timings_out, "Per-query stage timings CSV");
  c_search->add_option("--tag", search.tag, "Run tag")->capture_default_str();

  FirstStageArgs first;
  auto* c_first = app.add_subcommand("firststage", "Write the approximate first-stage ranking without re-ranking");
  add_inputs(c_first, first.in);
  c_first->add_option("--strategy", first.strategy, "count|sumsim|maxsim")
      ->required()
      ->check(CLI::IsMember({"count", "sumsim", "maxsim"}));
  c_first->add_option("--kprime", first.kprime, "Embeddings retrieved per query embedding")->capture_default_str();
  c_first->add_option("--k", first.k, "Documents per query")->capture_default_str();
  c_first->add_option("--nprobe", first.nprobe, "Partitions probed per query embedding")->capture_default_str();
  c_first->add_option("--run-out", first.run_out, "TREC run output")->required();
  c_first->add_option("--tag", first.tag, "Run tag")->capture_default_str();

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Compute effectiveness metrics for a run");
  c_eval->add_option("--run", evaluate.run, "TREC run")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--qrels", evaluate.qrels, "TREC qrels")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--metrics", evaluate.metrics, "Comma-separated: mrr,ndcg10,map,recall")->capture_default_str();
  c_eval->add_option("--recall-depth", evaluate.recall_depth, "Cutoff for recall")->capture_default_str();
  c_eval->add_option("--mrr-depth", evaluate.mrr_depth, "Cutoff for MRR (0: unbounded)")->capture_default_str();
  c_eval->add_option("--baseline-run", evaluate.baseline, "Run to test against (paired t-test, Bonferroni)")
      ->check(CLI::ExistingFile);
  c_eval->add_flag("--per-query", evaluate.per_query, "Also print per-query values");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Effectiveness and candidate counts over a grid of cutoffs");
  add_inputs(c_sweep, sweep.in);
  c_sweep->add_option("--qrels", sweep.qrels, "TREC qrels")->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--strategy", sweep.strategy, "kprime (grid over k') or count|sumsim|maxsim (grid over k)")
      ->check(CLI::IsMember({"kprime", "count", "sumsim", "maxsim"}))
      ->capture_default_str();
  c_sweep->add_option("--grid", sweep.grid, "Grid spec, e.g. 10,20,50,100:1000:100,1000:5000:500")->required();
  c_sweep->add_option("--kprime", sweep.kprime, "k' for ranked strategies")->capture_default_str();
  c_sweep->add_option("--nprobe", sweep.nprobe, "Partitions probed")->capture_default_str();
  c_sweep->add_option("--depth", sweep.depth, "Documents per query after re-ranking")->capture_default_str();
  c_sweep->add_option("--baseline-kprime", sweep.baseline_kprime, "k' of the uncut kprime baseline")
      ->capture_default_str();
  c_sweep->add_option("--mrr-depth", sweep.mrr_depth, "Cutoff for MRR (0: unbounded)")->capture_default_str();
  c_sweep->add_option("--recall-depth", sweep.recall_depth, "Cutoff for recall")->capture_default_str();
  c_sweep->add_option("--test-metric", sweep.test_metric, "Metric used for significance testing")
      ->capture_default_str();
  c_sweep->add_option("--out", sweep.out, "CSV output (default: stdout)");

  CorrelateArgs corr;
  auto* c_corr = app.add_subcommand("correlate", "Rank scatter and Spearman correlation between two runs");
  c_corr->add_option("--run-a", corr.run_a, "First run")->required()->check(CLI::ExistingFile);
  c_corr->add_option("--run-b", corr.run_b, "Second run")->required()->check(CLI::ExistingFile);
  c_corr->add_option("--scatter-out", corr.scatter_out, "CSV of (qid, docno, rank_a, rank_b)")->required();
  c_corr->add_option("--rho-out", corr.rho_out, "CSV of per-query rho (default: stdout)");

  SynthArgs syn;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic workload with planted relevance");
  c_synth->add_option("--docs", syn.params.num_docs, "Documents")->capture_default_str();
  c_synth->add_option("--doc-len", syn.params.doc_len, "Tokens per document")->capture_default_str();
  c_synth->add_option("--queries", syn.params.num_queries, "Queries")->capture_default_str();
  c_synth->add_option("--query-len", syn.params.query_len, "Tokens per query")->capture_default_str();
  c_synth->add_option("--dim", syn.params.dim, "Embedding dimensionality")->capture_default_str();
  c_synth->add_option("--clusters", syn.params.clusters, "Topics")->capture_default_str();
  c_synth->add_option("--seed", syn.params.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--jitter", syn.params.jitter, "Token noise around topic centres")->capture_default_str();
  c_synth->add_option("--noise", syn.params.noise_fraction, "Fraction of off-topic document tokens")
      ->capture_default_str();
  c_synth->add_option("--out-dir", syn.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const mvdr::Executor exec(mvdr::threads_from_env());
    if (*c_build) return cmd_build(build, exec);
    if (*c_search) return cmd_search(search, exec);
    if (*c_first) return cmd_firststage(first, exec);
    if (*c_eval) return cmd_evaluate(evaluate);
    if (*c_sweep) return cmd_sweep(sweep, exec);
    if (*c_corr) return cmd_correlate(corr);
    if (*c_synth) return cmd_synth(syn);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
