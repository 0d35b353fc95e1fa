#include "eqface/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "eqface/checkpoint.hpp"
#include "eqface/config.hpp"
#include "eqface/csv_io.hpp"
#include "eqface/errors.hpp"
#include "eqface/model.hpp"
#include "eqface/synthgen.hpp"
#include "eqface/trainer.hpp"

namespace eqface::cli {
namespace {

namespace fs = std::filesystem;

constexpr double kFarTargets[] = {1e-4, 1e-3, 1e-2};
constexpr int kRanks[] = {1, 5};

// Thrown for problems the caller can fix by changing the invocation.
struct UsageError : Error {
  using Error::Error;
};

std::string far_label(double far) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0e", far);
  return buf;
}

std::size_t capped(std::size_t n, const EvalOptions& opt) {
  return opt.max_records == 0 ? n : std::min(n, opt.max_records);
}

Vec aggregate_prefix(std::span<const FeatureRecord> prefix, const EvalOptions& opt) {
  if (opt.mode == "mean") return mean_aggregate(prefix);
  if (opt.mode == "qwfa") return qwfa(prefix);
  if (opt.mode == "qwfaf") return qwfaf(prefix, opt.s_th);
  return progressive_fuse(prefix, opt.f_th, opt.s_th).fused();
}

// Record indices grouped by identity (ascending), each group in stream order.
std::map<std::int64_t, std::vector<std::size_t>> streams_of(
    const std::vector<FeatureRecord>& records) {
  std::map<std::int64_t, std::vector<std::size_t>> streams;
  for (std::size_t i = 0; i < records.size(); ++i) streams[records[i].identity].push_back(i);
  for (auto& [id, idx] : streams) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].order < records[b].order;
    });
  }
  return streams;
}

void aggregate_side(const std::vector<FeatureRecord>& records, const EvalOptions& opt,
                    std::vector<Vec>& out, std::vector<std::int64_t>& labels) {
  if (opt.mode == "none") {
    for (const auto& r : records) {
      out.push_back(r.f);
      labels.push_back(r.identity);
    }
    return;
  }
  const auto streams = streams_of(records);
  if (opt.fusion == "template") {
    for (const auto& [id, idx] : streams) {
      std::vector<FeatureRecord> stream;
      for (std::size_t i : idx) stream.push_back(records[i]);
      out.push_back(aggregate_prefix(std::span(stream).first(capped(stream.size(), opt)), opt));
      labels.push_back(id);
    }
    return;
  }

  out.assign(records.size(), Vec());
  for (const auto& r : records) labels.push_back(r.identity);
  for (const auto& [id, idx] : streams) {
    std::vector<FeatureRecord> stream;
    for (std::size_t i : idx) stream.push_back(records[i]);
    const std::size_t cap = capped(stream.size(), opt);
    if (opt.mode == "progressive") {
      // One pass; records past the cap keep the last fused state.
      AggregateState state = progressive_init(stream[0], opt.f_th, opt.s_th);
      Vec fused = state.fused();
      out[idx[0]] = fused;
      for (std::size_t k = 1; k < stream.size(); ++k) {
        if (k < cap) {
          state = progressive_update(state, stream[k]);
          fused = state.fused();
        }
        out[idx[k]] = fused;
      }
      continue;
    }
    for (std::size_t k = 0; k < stream.size(); ++k) {
      out[idx[k]] = aggregate_prefix(std::span(stream).first(std::min(k + 1, cap)), opt);
    }
  }
}

std::uint64_t seed_from_env_or(std::optional<std::uint64_t> seed) {
  if (!seed) throw InvalidConfig("missing required config key 'seed'");
  return *seed;
}

bool exists_any(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) {
    if (fs::exists(p)) return true;
  }
  return false;
}

int cmd_gen(const std::string& config_path, const std::string& out, bool force) {
  const RunConfig rc = load_run_config(config_path, gen_required_keys());
  std::vector<fs::path> outputs{out};
  if (rc.split) {
    outputs.emplace_back(out + ".ref.csv");
    outputs.emplace_back(out + ".query.csv");
    outputs.emplace_back(out + ".train.csv");
  }
  if (!force && exists_any(outputs)) {
    throw UsageError("output exists (use --force to overwrite): " + out);
  }
  const Dataset data = generate(rc.gen);
  write_text_file(out, dataset_to_csv(data.samples));
  if (rc.split) {
    const auto& s = *rc.split;
    const auto split = split_reference_query(data.samples, s.n_ref_ids, s.n_ref_per_id,
                                             s.n_query_per_id, s.n_disturb_ids, s.seed);
    write_text_file(outputs[1], dataset_to_csv(split.reference));
    write_text_file(outputs[2], dataset_to_csv(split.query));
    write_text_file(outputs[3], dataset_to_csv(split.unused));
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out, std::optional<int> iterations, bool head_only,
              const std::string& init_path) {
  RunConfig rc = load_run_config(config_path, {"seed"});
  seed_from_env_or(rc.seed);
  if (iterations) rc.pipeline.iterations = *iterations;
  rc.pipeline.quality_head_only = head_only;
  if (head_only && init_path.empty()) {
    throw UsageError("--quality-head-only requires --init");
  }
  if (!head_only && !init_path.empty()) {
    throw UsageError("--init is only meaningful with --quality-head-only");
  }
  rc.pipeline.validate();

  const auto data = dataset_from_csv(read_text_file(data_path));
  if (data.empty()) throw EmptyInput("train: dataset has no samples");
  int max_label = 0;
  for (const auto& s : data) max_label = std::max(max_label, s.label);

  Model initial;
  if (head_only) {
    initial = load_checkpoint(init_path);
  } else {
    ModelDims dims = rc.dims;
    dims.d_in = static_cast<int>(data.front().x.size());
    dims.n_classes = rc.has("data.n_classes") ? rc.gen.n_classes : max_label + 1;
    initial = init_model(dims, *rc.seed);
  }
  if (initial.dims.d_in != data.front().x.size()) {
    throw DimensionMismatch("train: dataset inputs have " + std::to_string(data.front().x.size()) +
                            " dims, model expects " + std::to_string(initial.dims.d_in));
  }
  if (max_label >= initial.dims.n_classes) {
    throw DimensionMismatch("train: label " + std::to_string(max_label) +
                            " outside the model's " + std::to_string(initial.dims.n_classes) +
                            " classes");
  }

  const auto result = run_pipeline(data, initial, rc.pipeline, [&](const StepCheckpoint& c) {
    save_checkpoint(c.model, out + "." + c.name);
  });
  save_checkpoint(result.model, out);
  write_text_file(out + ".quality.csv", quality_table_to_csv(result.quality));
  write_text_file(out + ".log.csv", training_log_to_csv(result.log));
  return 0;
}

int cmd_extract(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out) {
  const Model model = load_checkpoint(ckpt_path);
  const auto data = dataset_from_csv(read_text_file(data_path));
  std::vector<FeatureRecord> records;
  records.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].x.size() != model.dims.d_in) {
      throw DimensionMismatch("extract: sample input size " + std::to_string(data[i].x.size()) +
                              " differs from model d_in " + std::to_string(model.dims.d_in));
    }
    const ForwardResult fr = forward(model, data[i].x);
    records.push_back({fr.f, fr.s, data[i].label, static_cast<std::int64_t>(i)});
  }
  write_text_file(out, features_to_csv(records));
  return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& query_path, const std::string& out,
             const std::string& roc_path, const EvalOptions& opt) {
  const auto ref = features_from_csv(read_text_file(ref_path));
  const auto query = features_from_csv(read_text_file(query_path));
  const EvalReport report = evaluate_features(ref, query, opt);
  write_text_file(out, metrics_to_csv(report.metrics));
  if (!roc_path.empty()) write_text_file(roc_path, roc_to_csv(report.roc));
  return 0;
}

}  // namespace

EvalSides prepare_sides(const std::vector<FeatureRecord>& ref,
                        const std::vector<FeatureRecord>& query, const EvalOptions& opt) {
  static const std::set<std::string> modes{"none", "mean", "qwfa", "qwfaf", "progressive"};
  if (!modes.contains(opt.mode)) throw InvalidConfig("unknown eval mode '" + opt.mode + "'");
  if (opt.fusion != "template" && opt.fusion != "running") {
    throw InvalidConfig("unknown fusion '" + opt.fusion + "'");
  }
  if (ref.empty() || query.empty()) throw EmptyInput("eval: empty feature file");
  const Eigen::Index d = ref.front().f.size();
  for (const auto* side : {&ref, &query}) {
    for (const auto& r : *side) {
      if (r.f.size() != d) throw DimensionMismatch("eval: feature dims differ across files");
    }
  }
  EvalSides sides;
  aggregate_side(ref, opt, sides.refs, sides.ref_labels);
  aggregate_side(query, opt, sides.queries, sides.query_labels);
  return sides;
}

EvalReport evaluate_features(const std::vector<FeatureRecord>& ref,
                             const std::vector<FeatureRecord>& query, const EvalOptions& opt) {
  const EvalSides sides = prepare_sides(ref, query, opt);
  const SimilarityMatrix sim =
      similarity_matrix(sides.refs, sides.ref_labels, sides.queries, sides.query_labels);
  const ScoreSets scores = split_scores(sim.values, sim.same_identity());

  EvalReport report;
  auto& m = report.metrics;
  m.push_back({"genuine_pairs", "", static_cast<double>(scores.genuine.size())});
  m.push_back({"impostor_pairs", "", static_cast<double>(scores.impostor.size())});
  for (const auto& t : tar_at_far(scores, kFarTargets)) {
    const std::string op = "far=" + far_label(t.far_target);
    m.push_back({"tar", op, t.tar});
    m.push_back({"threshold", op, t.threshold});
    m.push_back({"achievable", op, t.achievable ? 1.0 : 0.0});
  }
  for (const auto& r : rank_n(sim.values, sim.ref_labels, sim.query_labels, kRanks)) {
    m.push_back({"rank", std::to_string(r.n), r.accuracy});
  }
  report.roc = roc_curve(scores);
  return report;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Quality-aware embedding training and evaluation"};
  app.require_subcommand(1);

  std::string config, out, data, ckpt, init, ref, query, roc, mode, fusion;
  bool force = false, head_only = false;
  int iterations = 0;
  double f_th = 0.5, s_th = 0.3;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Configuration file")->required();
  gen->add_option("--out", out, "Output dataset CSV")->required();
  gen->add_flag("--force", force, "Overwrite existing outputs");

  auto* train = app.add_subcommand("train", "Run the training pipeline");
  train->add_option("--config", config, "Configuration file")->required();
  train->add_option("--data", data, "Dataset CSV")->required();
  train->add_option("--out", out, "Output checkpoint")->required();
  auto* iter_opt = train->add_option("--iterations", iterations, "Pipeline iterations")
                       ->check(CLI::PositiveNumber);
  train->add_flag("--quality-head-only", head_only, "Train only the quality branch");
  train->add_option("--init", init, "Starting checkpoint for --quality-head-only");

  auto* extract = app.add_subcommand("extract", "Embed a dataset");
  extract->add_option("--ckpt", ckpt, "Checkpoint")->required();
  extract->add_option("--data", data, "Dataset CSV")->required();
  extract->add_option("--out", out, "Output feature CSV")->required();

  auto* eval = app.add_subcommand("eval", "Verification and identification metrics");
  eval->add_option("--ref", ref, "Reference feature CSV")->required();
  eval->add_option("--query", query, "Query feature CSV")->required();
  eval->add_option("--out", out, "Output metrics CSV")->required();
  eval->add_option("--config", config, "Optional configuration file");
  auto* mode_opt = eval->add_option("--mode", mode, "Aggregation mode")
                       ->check(CLI::IsMember({"none", "mean", "qwfa", "qwfaf", "progressive"}));
  auto* fusion_opt = eval->add_option("--fusion", fusion, "Per-identity templates or running per-record fusion")
                         ->check(CLI::IsMember({"template", "running"}));
  auto* fth_opt = eval->add_option("--f-th", f_th, "Progressive similarity threshold");
  auto* sth_opt = eval->add_option("--s-th", s_th, "Quality threshold");
  eval->add_option("--roc", roc, "Output ROC CSV");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(config, out, force);
    if (train->parsed()) {
      return cmd_train(config, data, out,
                       iter_opt->count() ? std::optional<int>(iterations) : std::nullopt,
                       head_only, init);
    }
    if (extract->parsed()) return cmd_extract(ckpt, data, out);
    if (eval->parsed()) {
      EvalOptions opt;
      if (!config.empty()) {
        const RunConfig rc = load_run_config(config, {});
        opt.mode = rc.eval.mode;
        opt.fusion = rc.eval.fusion;
        opt.f_th = rc.eval.f_th;
        opt.s_th = rc.eval.s_th;
        opt.max_records = rc.eval.max_records;
      }
      if (mode_opt->count()) opt.mode = mode;
      if (fusion_opt->count()) opt.fusion = fusion;
      if (fth_opt->count()) opt.f_th = f_th;
      if (sth_opt->count()) opt.s_th = s_th;
      return cmd_eval(ref, query, out, roc, opt);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceDetected& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

}  // namespace eqface::cli
