#include "spurious/commands.hpp"

#include <fstream>
#include <sstream>

#include "spurious/checkpoint.hpp"
#include "spurious/errors.hpp"
#include "spurious/report.hpp"

namespace spurious {

namespace fs = std::filesystem;

namespace {

template <typename Body>
int guarded(std::ostream& log, const char* command, Body&& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    log << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    log << command << ": training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    log << command << ": " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    log << command << ": " << e.what() << '\n';
    return kExitData;
  }
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("output directory not given");
  fs::create_directories(dir);
}

std::vector<std::string> read_class_names(const fs::path& path, std::size_t num_classes) {
  std::vector<std::string> names;
  std::ifstream in(path);
  if (in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) names.push_back(line);
    }
    if (names.size() != num_classes) {
      throw DataError(path.string() + ": expected " + std::to_string(num_classes) + " class names");
    }
    return names;
  }
  for (std::size_t k = 0; k < num_classes; ++k) names.push_back(std::to_string(k));
  return names;
}

GroupIndex groups_for(const SplitData& split, const CaptionSet& captions, const DataBundle& d) {
  const auto incidence = build_incidence(captions, d.vocab, d.lexicon, split.ids);
  return build_group_index(split.labels, split.num_classes, incidence);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::size_t num_groups(const SplitData& split) { return split.num_classes * split.num_attributes; }

}  // namespace

BenchSpec default_bench_spec() { return BenchSpec{}; }

DataBundle load_data_dir(const fs::path& dir, std::size_t min_frequency, CaptionFormat format) {
  DataBundle d;
  d.train = read_split_csv(dir / data_files::kTrain);
  d.val = read_split_csv(dir / data_files::kVal);
  d.test = read_split_csv(dir / data_files::kTest);
  if (d.val.features.cols() != d.train.features.cols() || d.test.features.cols() != d.train.features.cols() ||
      d.val.num_classes != d.train.num_classes || d.test.num_classes != d.train.num_classes) {
    throw DataError(dir.string() + ": splits disagree on dimension or class count");
  }
  d.class_names = read_class_names(dir / data_files::kClasses, d.train.num_classes);
  d.lexicon = load_lexicon(dir / data_files::kLexicon);
  const auto train_captions = load_captions(dir / data_files::kTrainCaptions, format);
  const auto val_captions = load_captions(dir / data_files::kValCaptions, format);
  d.vocab = build_vocabulary(train_captions, d.lexicon, min_frequency);
  d.train_groups = {d.train.store(), groups_for(d.train, train_captions, d)};
  d.val_groups = {d.val.store(), groups_for(d.val, val_captions, d)};
  if (fs::exists(dir / data_files::kTestCaptions)) {
    d.test_groups = groups_for(d.test, load_captions(dir / data_files::kTestCaptions, format), d);
  }
  return d;
}

fs::path best_checkpoint_path(const fs::path& train_out_dir) {
  std::ifstream in(train_out_dir / "best_checkpoint.txt");
  std::string name;
  if (!in || !std::getline(in, name) || name.empty()) {
    throw DataError(train_out_dir.string() + ": no best_checkpoint.txt");
  }
  return train_out_dir / name;
}

int cmd_gendata(const GendataOptions& opts, std::ostream& log) {
  return guarded(log, "gendata", [&] {
    BenchSpec spec = opts.spec_path ? load_bench_spec(*opts.spec_path) : default_bench_spec();
    if (opts.seed) spec.seed = *opts.seed;
    validate(spec);
    ensure_dir(opts.out_dir);
    Rng rng(spec.seed);
    const auto ds = generate_dataset(spec, rng);
    Rng caption_rng(derive_seed(spec.seed, 0xCA7));
    write_split_csv(opts.out_dir / data_files::kTrain, ds.train);
    write_split_csv(opts.out_dir / data_files::kVal, ds.val);
    write_split_csv(opts.out_dir / data_files::kTest, ds.test);
    save_captions(opts.out_dir / data_files::kTrainCaptions, synthesize_captions(ds.train, spec, caption_rng));
    save_captions(opts.out_dir / data_files::kValCaptions, synthesize_captions(ds.val, spec, caption_rng));
    save_captions(opts.out_dir / data_files::kTestCaptions, synthesize_captions(ds.test, spec, caption_rng));
    save_lexicon(opts.out_dir / data_files::kLexicon, synthesize_lexicon(spec));
    std::string classes;
    for (std::size_t k = 0; k < spec.n_classes; ++k) classes += spec.class_word(k) + "\n";
    write_text(opts.out_dir / data_files::kClasses, classes);
    write_text(opts.out_dir / data_files::kSpec, format_bench_spec(spec));
    log << "gendata: wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
        << " train/val/test samples to " << opts.out_dir.string() << '\n';
  });
}

int cmd_train(const TrainOptions& opts, std::ostream& log) {
  return guarded(log, "train", [&] {
    TrainConfig cfg = load_train_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.tau) cfg.tau = *opts.tau;
    validate(cfg);
    const DataBundle data = load_data_dir(opts.data_dir, cfg.min_frequency);
    ensure_dir(opts.out_dir);
    write_text(opts.out_dir / "config_used.txt", format_train_config(cfg));

    TrainHistory history;
    std::size_t best_epoch = 0;
    if (cfg.method == Method::kMetaAware || cfg.method == Method::kMetaRandom) {
      const auto observer = [&](const EpochRecord& r, const ExtractorParams& p) {
        save_checkpoint(opts.out_dir / r.checkpoint, {p, cfg.tau, static_cast<int>(r.epoch), std::nullopt});
      };
      const auto result = meta_train(cfg, data.train_groups, data.val_groups, observer);
      write_spuriousness_csv(opts.out_dir / "spuriousness_initial.csv",
                             table_rows(result.initial_table, data.class_names, data.vocab, true));
      write_spuriousness_csv(opts.out_dir / "spuriousness_final.csv",
                             table_rows(result.final_table, data.class_names, data.vocab, true));
      history = result.history;
      best_epoch = result.best_epoch;
    } else {
      const HeadMode mode = cfg.method == Method::kErmLinear ? HeadMode::kLinear : HeadMode::kCosine;
      const auto observer = [&](const EpochRecord& r, const ExtractorParams& p, const LinearHead& h) {
        save_checkpoint(opts.out_dir / r.checkpoint, {p, cfg.tau, static_cast<int>(r.epoch), h, mode});
      };
      const auto result = erm_train(cfg, data.train.store(), data.val.store(), mode, observer);
      history = result.history;
      best_epoch = result.best_epoch;
      if (best_epoch == 0) {
        save_checkpoint(opts.out_dir / checkpoint_name(0), {result.params, cfg.tau, 0, result.head, mode});
      }
    }
    write_history_csv(opts.out_dir / "history.csv", history);
    write_text(opts.out_dir / "best_checkpoint.txt", checkpoint_name(best_epoch) + "\n");
    log << "train: " << method_name(cfg.method) << ", " << history.epochs.size()
        << " epochs, best epoch " << best_epoch << '\n';
  });
}

int cmd_audit(const AuditOptions& opts, std::ostream& log) {
  return guarded(log, "audit", [&] {
    const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
    const DataBundle data = load_data_dir(opts.data_dir, opts.min_frequency);
    const auto& train = data.train_groups;
    const PredictionRecord predictions{predict_with_checkpoint(ckpt, train.store, train.store.features),
                                       train.store.labels};
    const auto table = build_spuriousness_table(train.groups, predictions, opts.metric, ckpt.epoch);
    if (opts.out_csv.has_parent_path()) fs::create_directories(opts.out_csv.parent_path());
    write_spuriousness_csv(opts.out_csv, table_rows(table, data.class_names, data.vocab, true));
    log << "audit: " << table.num_classes() * table.num_attributes() << " rows written to "
        << opts.out_csv.string() << '\n';
  });
}

int cmd_eval(const EvalOptions& opts, std::ostream& log) {
  return guarded(log, "eval", [&] {
    const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
    const DataBundle data = load_data_dir(opts.data_dir, opts.min_frequency);
    const auto train = data.train.store();
    const auto predicted = predict_with_checkpoint(ckpt, train, data.test.features);
    std::vector<int> groups(data.test.size());
    for (std::size_t i = 0; i < groups.size(); ++i) groups[i] = data.test.group(i);
    MetricsReport report = evaluate_predictions(predicted, data.test.labels, groups, num_groups(data.test));
    if (data.test_groups) {
      const auto pu = pseudo_unbiased_accuracy(*data.test_groups, PredictionRecord{predicted, data.test.labels});
      report.pseudo_unbiased_accuracy = pu.accuracy;
      report.pseudo_unbiased_groups = pu.nonempty_groups;
    }
    ensure_dir(opts.out_dir);
    write_report_json(opts.out_dir / "report.json", report);
    write_group_csv(opts.out_dir / "groups.csv", report);
    for (int g : report.omitted_groups) log << "eval: group " << g << " has no test samples, omitted\n";
    log << "eval: average " << report.average_accuracy << ", worst-group " << report.worst_group_accuracy
        << ", gap " << report.accuracy_gap << '\n';
  });
}

int cmd_sweep_tau(const SweepOptions& opts, std::ostream& log) {
  if (opts.taus.empty()) {
    log << "sweep-tau: no tau values\n";
    return kExitUsage;
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "tau,average_accuracy,worst_group_accuracy,accuracy_gap,best_epoch\n";
  for (double tau : opts.taus) {
    std::ostringstream label;
    label << tau;
    const fs::path run_dir = opts.out_dir / ("tau_" + label.str());
    TrainOptions train{opts.config_path, opts.data_dir, run_dir / "train", opts.seed, tau};
    if (int rc = cmd_train(train, log); rc != kExitOk) return rc;
    int rc = kExitOk;
    fs::path best;
    rc = guarded(log, "sweep-tau", [&] { best = best_checkpoint_path(train.out_dir); });
    if (rc != kExitOk) return rc;
    std::size_t min_frequency = 10;
    rc = guarded(log, "sweep-tau", [&] { min_frequency = load_train_config(opts.config_path).min_frequency; });
    if (rc != kExitOk) return rc;
    if (rc = cmd_eval({best, opts.data_dir, run_dir / "eval", min_frequency}, log); rc != kExitOk) return rc;
    MetricsReport report;
    Checkpoint ckpt;
    rc = guarded(log, "sweep-tau", [&] {
      report = read_report_json(run_dir / "eval" / "report.json");
      ckpt = load_checkpoint(best);
    });
    if (rc != kExitOk) return rc;
    csv << tau << ',' << report.average_accuracy << ',' << report.worst_group_accuracy << ','
        << report.accuracy_gap << ',' << ckpt.epoch << '\n';
  }
  return guarded(log, "sweep-tau", [&] {
    ensure_dir(opts.out_dir);
    write_text(opts.out_dir / "tau_sweep.csv", csv.str());
  });
}

}  // namespace spurious
