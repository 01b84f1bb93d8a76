#include <iostream>

#include "CLI11.hpp"
#include "spurious/commands.hpp"
#include "spurious/errors.hpp"

int main(int argc, char** argv) {
  using namespace spurious;
  CLI::App app{"Spuriousness-aware episodic training on synthetic group-shift benchmarks"};
  app.require_subcommand(1);

  GendataOptions gendata;
  std::string gendata_spec;
  std::uint64_t gendata_seed = 0;
  auto* gen = app.add_subcommand("gendata", "generate a synthetic benchmark with captions");
  gen->add_option("--config,--spec", gendata_spec, "benchmark spec (key=value)");
  gen->add_option("--out", gendata.out_dir, "output directory")->required();
  auto* gen_seed = gen->add_option("--seed", gendata_seed, "override the spec seed");

  TrainOptions train;
  std::uint64_t train_seed = 0;
  auto* tr = app.add_subcommand("train", "meta-train or ERM-train an extractor");
  tr->add_option("--config", train.config_path, "training config (key=value)")->required();
  tr->add_option("--data", train.data_dir, "data directory from gendata")->required();
  tr->add_option("--out", train.out_dir, "output directory")->required();
  auto* tr_seed = tr->add_option("--seed", train_seed, "override the config seed");

  AuditOptions audit;
  std::string audit_metric = "tanh_abs_log_ratio";
  auto* au = app.add_subcommand("audit", "spuriousness scores of a checkpoint on the training split");
  au->add_option("--checkpoint", audit.checkpoint, "checkpoint file")->required();
  au->add_option("--data", audit.data_dir, "data directory")->required();
  au->add_option("--out", audit.out_csv, "output CSV")->required();
  au->add_option("--metric", audit_metric,
                 "tanh_abs_log_ratio | abs_delta | delta | tanh_log_ratio | constant");
  au->add_option("--min-frequency", audit.min_frequency, "attribute frequency threshold");
  au->add_option("--seed", "accepted for uniformity; audit is deterministic");

  EvalOptions eval;
  auto* ev = app.add_subcommand("eval", "worst-group / average / gap report on the test split");
  ev->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  ev->add_option("--data", eval.data_dir, "data directory")->required();
  ev->add_option("--out", eval.out_dir, "output directory")->required();
  ev->add_option("--min-frequency", eval.min_frequency, "attribute frequency threshold");
  ev->add_option("--seed", "accepted for uniformity; eval is deterministic");

  SweepOptions sweep;
  std::uint64_t sweep_seed = 0;
  auto* sw = app.add_subcommand("sweep-tau", "train + eval over several tau values");
  sw->add_option("--config", sweep.config_path, "training config")->required();
  sw->add_option("--data", sweep.data_dir, "data directory")->required();
  sw->add_option("--out", sweep.out_dir, "output directory")->required();
  sw->add_option("--taus", sweep.taus, "tau values")->delimiter(',');
  auto* sw_seed = sw->add_option("--seed", sweep_seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (*gen) {
    if (!gendata_spec.empty()) gendata.spec_path = gendata_spec;
    if (*gen_seed) gendata.seed = gendata_seed;
    return cmd_gendata(gendata, std::cerr);
  }
  if (*tr) {
    if (*tr_seed) train.seed = train_seed;
    return cmd_train(train, std::cerr);
  }
  if (*au) {
    try {
      audit.metric = parse_metric(audit_metric);
    } catch (const ConfigError& e) {
      std::cerr << "audit: " << e.what() << '\n';
      return kExitUsage;
    }
    return cmd_audit(audit, std::cerr);
  }
  if (*ev) return cmd_eval(eval, std::cerr);
  if (*sw) {
    if (*sw_seed) sweep.seed = sweep_seed;
    return cmd_sweep_tau(sweep, std::cerr);
  }
  return kExitUsage;
}
