// mfseg: segment point and field data into multifaceted 4D features.

#include <charconv>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mfseg/bench.hpp"
#include "mfseg/error.hpp"
#include "mfseg/pipeline.hpp"
#include "mfseg/service.hpp"
#include "mfseg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mfseg;

namespace {

struct InputFlags {
  std::string field, points, derive;

  DatasetSource source() const {
    DatasetSource s;
    if (!field.empty()) s.field = field;
    if (!points.empty()) s.points = points;
    s.derive = derive;
    return s.resolved();
  }
  bool any() const { return !field.empty() || !points.empty(); }
};

struct ParamFlags {
  std::string k;
  std::string normalize;
  ClusterParams params;

  /// Flags that were not given keep the defaults.
  ClusterParams resolve() const {
    ClusterParams p = params;
    if (!k.empty()) p.k = parse_k(k);
    if (!normalize.empty()) p.normalize = normalize == "on";
    return p;
  }

  static Counts4 parse_k(const std::string& text) {
    Counts4 k{};
    std::stringstream ss(text);
    std::string part;
    std::size_t axis = 0;
    bool ok = true;
    while (ok && std::getline(ss, part, ',')) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      ok = axis < 4 && ec == std::errc() && ptr == part.data() + part.size() && !part.empty();
      if (ok) k[axis++] = v;
    }
    if (!ok || axis != 4) throw ParameterError("--k expects four comma-separated integers, got '" + text + "'", "k");
    return k;
  }
};

struct RunFlags {
  int workers = 1;
  std::size_t chunk_size = 0;

  EngineOptions options() const {
    EngineOptions o;
    o.workers = workers;
    o.chunk_size = chunk_size;
    return o;
  }
};

void add_inputs(CLI::App* cmd, InputFlags& in) {
  cmd->add_option("--field", in.field, "Field metadata document");
  cmd->add_option("--points", in.points, "Point/trajectory CSV file");
  cmd->add_option("--derive", in.derive, "Expression for the point variable (default: column v)");
}

void add_params(CLI::App* cmd, ParamFlags& pf) {
  cmd->add_option("--k", pf.k, "Clusters per axis as kx,ky,kz,kt");
  cmd->add_option("--cf", pf.params.cf, "Time-to-length conversion factor");
  cmd->add_option("--wd", pf.params.wd, "Space-time distance weight");
  cmd->add_option("--wp", pf.params.wp, "Point value weight");
  cmd->add_option("--wf", pf.params.wf, "Field value weight");
  cmd->add_option("--eps-c", pf.params.eps_c, "Convergence threshold");
  cmd->add_option("--eps-m", pf.params.eps_m, "Merge threshold");
  cmd->add_option("--max-iters", pf.params.max_iterations, "Iteration cap");
  cmd->add_option("--normalize", pf.normalize, "Min-max normalize values (on|off)")->check(CLI::IsMember({"on", "off"}));
}

void add_run(CLI::App* cmd, RunFlags& rf) {
  cmd->add_option("--workers", rf.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--chunk-size", rf.chunk_size, "Samples per work chunk (0: whole kind)");
}

std::vector<std::size_t> parse_counts(const std::vector<std::string>& texts) {
  std::vector<std::size_t> out;
  for (const auto& t : texts) {
    std::stringstream ss(t);
    std::string part;
    while (std::getline(ss, part, ',')) {
      double v = 0;
      const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || ptr != part.data() + part.size() || !(v >= 1)) {
        throw ParameterError("--n expects positive sample counts, got '" + part + "'", "n");
      }
      out.push_back(static_cast<std::size_t>(v));
    }
  }
  return out;
}

int cmd_gen(const std::string& spec_path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  SyntheticSpec spec = SyntheticSpec::load(spec_path);
  if (seed) spec.seed = *seed;
  const auto data = generate_synthetic(spec);
  write_synthetic(data, out);
  std::cout << "wrote " << data.field.sample_count() << " field samples and " << data.points.size()
            << " point samples to " << out << "\n";
  return 0;
}

int cmd_segment(const InputFlags& in, const ParamFlags& pf, const RunFlags& rf, const std::string& out) {
  if (!in.any()) throw ParameterError("segment needs --field and/or --points", "field");
  const ClusterParams params = pf.resolve();
  params.validate(!in.points.empty(), !in.field.empty());
  const DatasetSource source = in.source();
  const Dataset data = source.load();
  const auto a = segment_dataset(data, source, params, rf.options());
  write_segmentation(a, out);
  std::cout << "segmented " << a.segmentation.point_labels.size() << " point and " << a.segmentation.field_labels.size()
            << " field samples into " << a.clusters.size() << " clusters (" << a.merge.table.size() << " features) in "
            << a.segmentation.iterations_used << " iterations\n";
  for (const auto& w : a.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_merge(const std::string& dir, const std::optional<double>& eps_m) {
  const auto a = load_segmentation(dir);
  ClusterParams check = a.segmentation.params;
  check.eps_m = eps_m.value_or(a.segmentation.params.eps_m);
  check.validate(false, false);
  const auto m = merge_artifacts(a.clusters, check.eps_m);
  write_merge(m, dir);
  std::cout << a.clusters.size() << " clusters merged into " << m.table.size() << " features at eps_m " << m.eps_m
            << "\n";
  return 0;
}

int cmd_features(const std::string& dir, const InputFlags& in) {
  const auto a = load_segmentation(dir);
  DatasetSource source = in.any() ? in.source() : a.source;
  const auto features = features_for(a, source.load());
  write_json(features_json(features, a.merge), fs::path(dir) / "features.json");
  std::cout << "wrote " << features.size() << " features to " << (fs::path(dir) / "features.json").string() << "\n";
  return 0;
}

int cmd_query(const std::string& dir, const std::vector<std::string>& predicates) {
  const CenterQuery query = CenterQuery::parse(predicates);
  const auto a = load_segmentation(dir);
  for (ClusterId id : query_centers(a.merge.table, query)) std::cout << id << "\n";
  return 0;
}

int cmd_bench(const InputFlags& in, const std::string& spec_path, const ParamFlags& pf, const RunFlags& rf,
              const std::vector<std::string>& n_texts, const std::vector<std::string>& k_texts, int repeats,
              std::uint64_t seed, const std::string& out) {
  BenchConfig config;
  config.params = pf.resolve();
  config.options = rf.options();
  config.repeats = repeats;
  config.seed = seed;
  if (!k_texts.empty()) {
    config.ks.clear();
    for (const auto& k : k_texts) config.ks.push_back(ParamFlags::parse_k(k));
  }
  if (!n_texts.empty()) config.sample_counts = parse_counts(n_texts);

  BenchReport report;
  if (in.any() || !spec_path.empty()) {
    // Fixed dataset: one row per k.
    Dataset data;
    if (!spec_path.empty()) {
      data = to_dataset(generate_synthetic(SyntheticSpec::load(spec_path)));
    } else {
      data = in.source().load();
    }
    const BenchData bd = bench_data(data, config.params.normalize);
    report.machine = machine_info(config.options);
    config.sample_counts = {bd.points.size() + bd.fields.size()};
    for (const auto& k : config.ks) {
      ClusterParams p = config.params;
      p.k = k;
      p.validate(!bd.points.empty(), !bd.fields.empty());
      BenchRow row;
      row.samples = config.sample_counts[0];
      row.k = k;
      row.seconds = time_iteration(bd, p, config.options, config.repeats, &row.runs);
      report.rows.push_back(std::move(row));
    }
  } else {
    report = run_bench(config);
  }
  const auto doc = bench_json(report, config);
  if (out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    write_json(doc, out);
    for (const auto& r : report.rows) {
      std::cout << r.samples << " samples, " << r.k[0] * r.k[1] * r.k[2] * r.k[3] << " clusters: " << r.seconds
                << " s\n";
    }
  }
  return 0;
}

int cmd_serve(const InputFlags& in, const ParamFlags& pf, const RunFlags& rf, const std::string& out,
              const std::string& host, int port) {
  if (!in.any()) throw ParameterError("serve needs --field and/or --points", "field");
  ServiceConfig config;
  config.source = in.source();
  config.out = out;
  config.options = rf.options();
  config.defaults = pf.resolve();
  Service service(config);
  HttpServer http(service);
  const int bound = http.bind(host, port);
  if (bound < 0) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  return http.listen() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint 4D segmentation of point and field data"};
  app.require_subcommand(1);

  InputFlags in;
  ParamFlags pf;
  RunFlags rf;
  std::string out, spec_path, host = "127.0.0.1";
  std::optional<std::uint64_t> seed;
  std::optional<double> merge_eps;
  std::vector<std::string> predicates, n_texts, k_texts;
  int repeats = 3, port = 8080;
  std::uint64_t bench_seed = 42;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset from a spec document");
  gen->add_option("--spec", spec_path, "Synthetic spec document")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the spec's seed");

  auto* segment = app.add_subcommand("segment", "Cluster a dataset and write artifacts");
  add_inputs(segment, in);
  add_params(segment, pf);
  add_run(segment, rf);
  segment->add_option("--out", out, "Artifact directory")->required();

  auto* merge = app.add_subcommand("merge", "Re-merge saved clusters at a new threshold");
  merge->add_option("--out", out, "Artifact directory")->required();
  merge->add_option("--eps-m", merge_eps, "Merge threshold (default: the segmentation's)");

  auto* features = app.add_subcommand("features", "Export features of a saved segmentation");
  features->add_option("--out", out, "Artifact directory")->required();
  add_inputs(features, in);

  auto* query = app.add_subcommand("query", "Print ids of merged centers matching all predicates");
  query->add_option("--out", out, "Artifact directory")->required();
  query->add_option("predicates", predicates, "<property>=<min>:<max>");

  auto* bench = app.add_subcommand("bench", "Time single clustering iterations");
  add_inputs(bench, in);
  add_params(bench, pf);
  add_run(bench, rf);
  bench->add_option("--spec", spec_path, "Synthetic spec to benchmark on");
  bench->add_option("--n", n_texts, "Sample counts for the random sweep (comma-separated)");
  bench->add_option("--ks", k_texts, "Cluster grids to sweep, kx,ky,kz,kt (repeatable)");
  bench->add_option("--repeats", repeats, "Timed runs per row (the minimum is reported)")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "Seed of the random sweep data");
  bench->add_option("--out", out, "Write the report here instead of standard output");

  auto* serve = app.add_subcommand("serve", "Serve the dataset over HTTP");
  add_inputs(serve, in);
  add_params(serve, pf);
  add_run(serve, rf);
  serve->add_option("--out", out, "Artifact directory")->required();
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen(spec_path, out, seed);
    if (segment->parsed()) return cmd_segment(in, pf, rf, out);
    if (merge->parsed()) return cmd_merge(out, merge_eps);
    if (features->parsed()) return cmd_features(out, in);
    if (query->parsed()) return cmd_query(out, predicates);
    if (bench->parsed()) {
      if (!pf.k.empty()) k_texts.insert(k_texts.begin(), pf.k);
      return cmd_bench(in, spec_path, pf, rf, n_texts, k_texts, repeats, bench_seed, out);
    }
    if (serve->parsed()) return cmd_serve(in, pf, rf, out, host, port);
  } catch (const ParameterError& e) {
    std::cerr << "mfseg: invalid parameter";
    if (!e.field().empty()) std::cerr << " '" << e.field() << "'";
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mfseg: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
