#include "rrid/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "binary.hpp"
#include "rrid/config.hpp"
#include "rrid/errors.hpp"
#include "rrid/gradient_suite.hpp"
#include "rrid/kernels.hpp"
#include "rrid/retrieval.hpp"
#include "rrid/synth.hpp"
#include "rrid/training.hpp"

namespace rrid::cli {

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct Options {
  SynthSpec synth;
  std::string synth_out;
  bool overwrite = false;

  std::string config, data, out, log;
  std::string checkpoint, split = "gallery";
  std::string query_emb, gallery_emb;
  std::size_t max_rank = kDefaultMaxRank;
  std::uint64_t check_seed = 1;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const auto manifest = synth_generate(o.synth, o.synth_out, o.overwrite);
  const auto m = load_manifest(manifest);
  out << "wrote " << manifest.string() << ": " << m.count(Split::train) << " train, "
      << m.count(Split::query) << " query, " << m.count(Split::gallery) << " gallery\n";
  return 0;
}

RunConfig resolve_run(const Options& o) {
  RunConfig run = load_config(o.config);
  if (!o.data.empty()) run.data = o.data;
  if (!o.out.empty()) run.out = o.out;
  if (run.data.empty()) throw ConfigError("no dataset: pass --data or set \"data\" in the config");
  if (run.out.empty()) throw ConfigError("no output path: pass --out or set \"out\" in the config");
  return run;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  const Manifest manifest = load_manifest(run.data);
  const TrainingSet data = load_training_set(manifest);
  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw DataError("cannot write '" + o.log + "'");
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(run.train, run.head, data, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << "/" << run.train.epochs << "  lr " << fmt("%.0e", e.lr)
        << "  loss " << fmt("%.5f", e.loss) << "  triplet " << fmt("%.5f", e.triplet) << "  ce "
        << fmt("%.5f", e.cross_entropy) << "\n";
    if (log_file) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["lr"] = e.lr;
      j["loss"] = e.loss;
      j["triplet"] = e.triplet;
      j["cross_entropy"] = e.cross_entropy;
      log_file << j.dump() << "\n";
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const ParamStore params = result.params;
  const Checkpoint ckpt = make_checkpoint(run, std::move(result));
  save_checkpoint(run.out, ckpt);
  out << "saved " << run.out << " (" << fmt("%.1f", secs) << " s)\n";
  if (manifest.count(Split::query) > 0 && manifest.count(Split::gallery) > 0) {
    const ReidHead head = ReidHead::bind(run.head, params);
    const auto r = evaluate(embed_all(head, params, manifest, Split::query),
                            embed_all(head, params, manifest, Split::gallery));
    out << "held-out  mAP " << fmt("%.4f", r.mAP) << "  rank-1 " << fmt("%.4f", r.rank1())
        << "  (" << r.n_valid() << " queries)\n";
  }
  return 0;
}

int cmd_extract(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Manifest manifest = load_manifest(o.data);
  const auto set = embed_all(ckpt, manifest, parse_split(o.split));
  write_embeddings(o.out, set);
  out << "wrote " << set.size() << " x " << set.dim() << " embeddings to " << o.out << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto q = read_embeddings(o.query_emb);
  const auto g = read_embeddings(o.gallery_emb);
  const auto r = evaluate(q, g, o.max_rank);
  out << report_text(r);
  if (!o.out.empty()) bin::write_file(o.out, report_json(r, q.config).dump(2) + "\n");
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  const Manifest manifest = load_manifest(run.data);
  out << ablation_header();
  const auto rows = ablation_run(run, manifest, [&](const AblationRow& r) {
    out << ablation_line(r);
    out.flush();
  });
  const std::string table = ablation_table(rows);
  bin::write_file(run.out, table);
  bin::write_file(run.out + ".json", ablation_json(rows, run).dump(2) + "\n");
  out << "\n" << table << "wrote " << run.out << " and " << run.out << ".json\n";
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  bool ok = true;
  double worst = 0.0;
  for (const auto& c : gradient_suite_cases(o.check_seed)) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check_head_gradients(c);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << (r.pass ? "ok   " : "FAIL ") << c.name << "\n      " << r.coordinates
        << " coordinates, max rel. err " << fmt("%.3e", r.max_rel_err) << " at " << r.worst
        << "\n      " << r.five_point << " five-point, " << r.extended << " long double, "
        << r.refined << " refined, " << r.kinked << " kinked, " << fmt("%.1f", secs)
        << " s\n";
    ok = ok && r.pass;
    worst = std::max(worst, r.max_rel_err);
  }
  out << "max rel. err " << fmt("%.3e", worst) << (ok ? " < 1e-4\n" : "  FAILED\n");
  return ok ? 0 : kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  kernels::configure_threads_from_env();
  CLI::App app{"Part-based person re-identification head: training and retrieval"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic feature-map dataset");
  synth->add_option("--ids", o.synth.n_ids, "identities with train images")->capture_default_str();
  synth->add_option("--eval-ids", o.synth.n_eval_ids, "held-out identities (0: ids/2)")
      ->capture_default_str();
  synth->add_option("--imgs", o.synth.imgs_per_id, "images per identity")->capture_default_str();
  synth->add_option("--height", o.synth.height)->capture_default_str();
  synth->add_option("--width", o.synth.width)->capture_default_str();
  synth->add_option("--channels", o.synth.channels)->capture_default_str();
  synth->add_option("--sigma", o.synth.noise_sigma, "per-cell noise")->capture_default_str();
  synth->add_option("--shared-prob", o.synth.shared_attribute_prob)->capture_default_str();
  synth->add_option("--pool-size", o.synth.shared_pool_size)->capture_default_str();
  synth->add_option("--clutter", o.synth.clutter_row_prob)->capture_default_str();
  synth->add_option("--occlusion", o.synth.occlusion_band_prob)->capture_default_str();
  synth->add_option("--cameras", o.synth.n_cameras)->capture_default_str();
  synth->add_option("--seed", o.synth.seed)->capture_default_str();
  synth->add_option("--out", o.synth_out, "output directory")->required();
  synth->add_flag("--overwrite", o.overwrite, "replace an existing dataset");

  auto* train = app.add_subcommand("train", "train a head on a manifest's train split");
  train->add_option("--config", o.config, "run configuration JSON")->required();
  train->add_option("--data", o.data, "manifest (overrides config)");
  train->add_option("--out", o.out, "checkpoint path (overrides config)");
  train->add_option("--log", o.log, "per-epoch JSON Lines log");

  auto* extract = app.add_subcommand("extract", "write embeddings for one split");
  extract->add_option("--checkpoint", o.checkpoint)->required();
  extract->add_option("--data", o.data, "manifest")->required();
  extract->add_option("--split", o.split)->check(CLI::IsMember({"train", "query", "gallery"}))
      ->capture_default_str();
  extract->add_option("--out", o.out, "embedding file")->required();

  auto* eval = app.add_subcommand("eval", "score query embeddings against a gallery");
  eval->add_option("--query-emb", o.query_emb)->required();
  eval->add_option("--gallery-emb", o.gallery_emb)->required();
  eval->add_option("--out", o.out, "JSON report path");
  eval->add_option("--max-rank", o.max_rank)->check(CLI::PositiveNumber)->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "train and score the architecture grid");
  ablate->add_option("--config", o.config)->required();
  ablate->add_option("--data", o.data, "manifest (overrides config)");
  ablate->add_option("--out", o.out, "table path; JSON goes to <out>.json");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", o.check_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out);
    if (*extract) return cmd_extract(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*ablate) return cmd_ablate(o, out);
    if (*gradcheck) return cmd_gradcheck(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace rrid::cli
