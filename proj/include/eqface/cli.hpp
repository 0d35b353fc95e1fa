#pragma once

// Command-line front end:
//
//   eqface gen     --config c.cfg --out data.csv [--force]
//                  (with split.* keys also data.csv.{ref,query,train}.csv)
//   eqface train   --config c.cfg --data data.csv --out model.ckpt
//                  [--iterations N] [--quality-head-only --init base.ckpt]
//   eqface extract --ckpt model.ckpt --data data.csv --out features.csv
//   eqface eval    --ref ref.csv --query query.csv --out metrics.csv
//                  [--mode none|mean|qwfa|qwfaf|progressive] [--f-th X] [--s-th X]
//                  [--fusion template|running] [--roc roc.csv] [--config c.cfg]
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <string>
#include <vector>

#include "eqface/aggregate.hpp"
#include "eqface/eval.hpp"

namespace eqface::cli {

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

struct EvalOptions {
  std::string mode = "none";
  std::string fusion = "template";
  double f_th = 0.5;
  double s_th = 0.3;
  std::size_t max_records = 0;
};

// Reference and query sides after aggregation. Mode none keeps one vector per
// record. Otherwise, with fusion "template" each side becomes one template per
// identity (ascending id, records taken in `order`); with fusion "running"
// every record is replaced by the fused feature of its identity's stream up to
// and including itself, so the pair set stays the same as for mode none.
struct EvalSides {
  std::vector<Vec> refs;
  std::vector<std::int64_t> ref_labels;
  std::vector<Vec> queries;
  std::vector<std::int64_t> query_labels;
};

EvalSides prepare_sides(const std::vector<FeatureRecord>& ref,
                        const std::vector<FeatureRecord>& query, const EvalOptions& opt);

struct EvalReport {
  std::vector<MetricRow> metrics;
  std::vector<RocPoint> roc;
};

EvalReport evaluate_features(const std::vector<FeatureRecord>& ref,
                             const std::vector<FeatureRecord>& query, const EvalOptions& opt);

}  // namespace eqface::cli
