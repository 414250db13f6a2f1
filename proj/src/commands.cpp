#include "epigraph/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "epigraph/epipolar.hpp"
#include "epigraph/eval.hpp"
#include "epigraph/graph.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/text_io.hpp"
#include "epigraph/train.hpp"

namespace epigraph {

namespace {

constexpr const char* kManifestHeader = "# epigraph-manifest v1";

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

Trajectory make_trajectory(const ExperimentConfig& c) {
  return generate_trajectory(substream_seed(c.seed, "dataset"), c.dataset.frames, c.dataset.motion,
                             c.dataset.trajectory);
}

std::filesystem::path default_checkpoint(const ExperimentConfig& c) {
  if (!c.eval.checkpoint.empty()) return resolve_output(c.eval.checkpoint);
  return resolve_output(c.train.output_dir) / "best.ckpt";
}

std::string format_manifest(double spacing, int step, double fps, const std::vector<std::string>& ids) {
  std::string out = std::string(kManifestHeader) + "\n";
  out += "spacing " + format_double(spacing) + "\n";
  out += "step " + std::to_string(step) + "\n";
  out += "fps " + format_double(fps) + "\n";
  out += "pairs " + std::to_string(ids.size()) + "\n";
  for (const auto& id : ids) out += id + "\n";
  return out;
}

std::vector<std::string> parse_manifest(const std::string& text, const std::filesystem::path& path) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line) || line != kManifestHeader) {
    line_no = 1;
    fail("missing '# epigraph-manifest v1' header");
  }
  ++line_no;
  std::vector<std::string> ids;
  long long expected = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() == 2 && (tok[0] == "spacing" || tok[0] == "step" || tok[0] == "fps")) continue;
    if (tok.size() == 2 && tok[0] == "pairs") {
      expected = parse_int(tok[1], "pairs");
      continue;
    }
    if (tok.size() != 1) fail("expected a pair id");
    ids.push_back(tok[0]);
  }
  if (expected >= 0 && static_cast<long long>(ids.size()) != expected) {
    fail("manifest lists " + std::to_string(ids.size()) + " pairs, header says " + std::to_string(expected));
  }
  return ids;
}

const Pose& require_gt(const CorrespondenceSet& corr) {
  if (!corr.gt_relative) {
    throw Error(ErrorCode::kDataset, "pair " + corr.pair_id.str() + " has no ground-truth pose");
  }
  return *corr.gt_relative;
}

struct ChainedRun {
  std::vector<Pose> pred_traj;
  std::vector<Pose> gt_traj;
  std::vector<int> frames;
};

ChainedRun chain_run(const LoadedDataset& ds, const std::vector<Pose>& pred_relatives,
                     const std::string& align) {
  ChainedRun run;
  const auto idx = chain_indices(ds.pairs, ds.step);
  std::vector<Pose> rel;
  for (std::size_t i : idx) rel.push_back(pred_relatives[i]);
  run.pred_traj = chain(rel);
  run.frames.push_back(0);
  for (std::size_t i : idx) run.frames.push_back(ds.pairs[i].pair_id.frame_j);
  const Pose origin_inv = ds.trajectory.poses.at(0).inverse();
  for (int f : run.frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= ds.trajectory.size()) {
      throw Error(ErrorCode::kDataset, "pair frame " + std::to_string(f) + " is outside the trajectory");
    }
    run.gt_traj.push_back(origin_inv * ds.trajectory.poses[static_cast<std::size_t>(f)]);
  }
  if (align != "none") run.pred_traj = align_trajectory(run.pred_traj, run.gt_traj, align == "sim3");
  return run;
}

std::string summary_line(const EvalRecord& r) {
  const EvalSummary& s = r.summary;
  return r.label + ": ATE " + fmt(s.ate_m) + " m, APE " + fmt(s.ape_mean_m) + " m, APE-R " +
         fmt(s.ape_r_mean_deg) + " deg, DTE " + fmt(s.dte_mean_deg) + " deg, DRE " +
         fmt(s.dre_mean_deg) + " deg (" + std::to_string(s.n_pairs) + " pairs, " +
         std::to_string(s.n_frames) + " frames)";
}

EvalRecord record_for(const std::string& label, const LoadedDataset& ds,
                      const std::vector<Pose>& pred_relatives, const std::string& align,
                      ChainedRun* chained = nullptr) {
  std::vector<std::string> ids;
  std::vector<Pose> gts;
  for (const auto& corr : ds.pairs) {
    ids.push_back(corr.pair_id.str());
    gts.push_back(require_gt(corr));
  }
  ChainedRun run = chain_run(ds, pred_relatives, align);
  EvalRecord r = make_record(label, ids, pred_relatives, gts, run.pred_traj, run.gt_traj, run.frames);
  if (chained) *chained = std::move(run);
  return r;
}

}  // namespace

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kIo: return kExitIo;
    default: return kExitUsage;
  }
}

std::string spacing_dir_name(double spacing) { return "s" + format_double(spacing); }

std::vector<std::size_t> chain_indices(const std::vector<CorrespondenceSet>& pairs, int step) {
  std::map<int, std::size_t> by_first;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairId& id = pairs[i].pair_id;
    if (id.frame_j - id.frame_i == step) by_first.emplace(id.frame_i, i);
  }
  std::vector<std::size_t> out;
  int frame = 0;
  for (auto it = by_first.find(frame); it != by_first.end(); it = by_first.find(frame)) {
    out.push_back(it->second);
    frame += step;
  }
  return out;
}

LoadedDataset load_dataset(const ExperimentConfig& c, double spacing) {
  LoadedDataset ds;
  const double fps = c.dataset.trajectory.fps;
  ds.step = SamplingSpec{spacing}.step(fps);
  if (c.dataset.source == "synthetic") {
    ds.trajectory = make_trajectory(c);
    const auto sampled = sample_pairs(ds.trajectory, SamplingSpec{spacing});
    for (auto& s : synthesize_pairs(ds.trajectory, sampled, make_scene_template(c), c.dataset.sequence)) {
      ds.pairs.push_back(std::move(s.correspondences));
    }
    return ds;
  }
  const std::filesystem::path root = resolve_output(c.dataset.root);
  ds.trajectory = load_trajectory(root / "trajectory.txt", fps);
  const std::filesystem::path dir = root / spacing_dir_name(spacing);
  const std::filesystem::path manifest = dir / "manifest.txt";
  for (const auto& id : parse_manifest(read_text_file(manifest), manifest)) {
    CorrespondenceSet corr = load_correspondences(dir / (id + ".corr"));
    if (!(corr.intrinsics == c.dataset.intrinsics)) {
      throw Error(ErrorCode::kValidation, (dir / (id + ".corr")).string() +
                                              ": intrinsics header does not match dataset.intrinsics");
    }
    if (!(corr.image == c.dataset.image)) {
      throw Error(ErrorCode::kValidation, (dir / (id + ".corr")).string() +
                                              ": image size header does not match dataset.image");
    }
    ds.pairs.push_back(std::move(corr));
  }
  std::stable_sort(ds.pairs.begin(), ds.pairs.end(), [](const auto& a, const auto& b) {
    return a.pair_id.frame_i < b.pair_id.frame_i;
  });
  return ds;
}

int cmd_generate(const ExperimentConfig& c, std::ostream& log) {
  const std::filesystem::path root = resolve_output(c.dataset.root);
  const Trajectory traj = make_trajectory(c);
  const SceneSpec tmpl = make_scene_template(c);
  // Sample every spacing before writing anything so a bad spacing leaves no partial output.
  std::vector<std::vector<SampledPair>> sampled;
  for (double s : c.eval.spacings) sampled.push_back(sample_pairs(traj, SamplingSpec{s}));

  write_text_file(root / "trajectory.txt", format_trajectory(traj));
  write_text_file(root / "config.json", format_config(c));
  for (std::size_t k = 0; k < c.eval.spacings.size(); ++k) {
    const double s = c.eval.spacings[k];
    const int d = SamplingSpec{s}.step(traj.fps);
    const std::filesystem::path dir = root / spacing_dir_name(s);
    std::vector<std::string> ids;
    for (const auto& scene : synthesize_pairs(traj, sampled[k], tmpl, c.dataset.sequence)) {
      const std::string id = scene.correspondences.pair_id.str();
      save_correspondences(scene.correspondences, dir / (id + ".corr"));
      ids.push_back(id);
    }
    write_text_file(dir / "manifest.txt", format_manifest(s, d, traj.fps, ids));
    log << "spacing " << format_double(s) << " s: step " << d << " frames, " << ids.size()
        << " pairs -> " << (dir / "manifest.txt").string() << "\n";
  }
  return kExitOk;
}

int cmd_train(const ExperimentConfig& c, std::ostream& log) {
  const LoadedDataset ds = load_dataset(c, c.dataset.spacing);
  const std::filesystem::path out = resolve_output(c.train.output_dir);
  TrainConfig tc = make_train_config(c);
  tc.checkpoint_path = out / "best.ckpt";
  const TrainResult res = train(tc, ds.pairs);
  for (const auto& e : res.report.epochs) {
    log << "epoch " << e.epoch << ": train " << fmt(e.train.total, 6) << ", val " << fmt(e.val.total, 6)
        << ", processed " << e.processed << ", skipped " << e.skipped
        << (e.checkpointed ? ", checkpoint" : "") << "\n";
  }
  nn::save_checkpoint(out / "final.ckpt", res.final_model,
                      checkpoint_meta(tc, c.train.epochs,
                                      res.report.epochs.empty() ? 0.0 : res.report.epochs.back().val.total));
  write_text_file(out / "report.json", format_train_report(res.report));
  write_text_file(out / "config.json", format_config(c));
  log << "best epoch " << res.report.best_epoch << ", checkpoint " << tc.checkpoint_path.string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& c, std::ostream& log) {
  const nn::Checkpoint ck = nn::load_checkpoint(default_checkpoint(c));
  const std::filesystem::path out_root = resolve_output(c.eval.output_dir);
  for (double s : c.eval.spacings) {
    const LoadedDataset ds = load_dataset(c, s);
    const auto items = evaluate(ck.model, ds.pairs, c.graph, c.weights, c.loss, c.model);

    std::vector<Pose> model_rel, base_rel;
    std::vector<bool> base_ok;
    std::string predictions = "pair_id,estimator,ok,qw,qx,qy,qz,tx,ty,tz\n";
    auto add_prediction = [&](const std::string& id, const char* est, bool ok, const Pose& p) {
      predictions += id + "," + est + "," + (ok ? "1" : "0");
      for (double v : {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z, p.translation.x(),
                       p.translation.y(), p.translation.z()}) {
        predictions += "," + format_double(v);
      }
      predictions += "\n";
    };
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      const auto& corr = ds.pairs[i];
      const Pose& gt = require_gt(corr);
      model_rel.push_back(items[i].ok ? items[i].pred : Pose::identity());
      add_prediction(items[i].pair_id, "model", items[i].ok, model_rel.back());
      if (c.eval.baseline == "eightpoint") {
        Pose p = Pose::identity();
        bool ok = true;
        try {
          p = classical_relative_pose(normalized_pairs(corr));
          if (c.eval.gt_scale) p.translation *= gt.translation.norm();
        } catch (const Error&) {
          ok = false;
        }
        base_rel.push_back(p);
        add_prediction(items[i].pair_id, "eightpoint", ok, p);
      }
    }

    const std::filesystem::path dir = out_root / spacing_dir_name(s);
    std::vector<EvalRecord> records;
    ChainedRun chained;
    records.push_back(record_for("model", ds, model_rel, c.eval.align, &chained));
    save_trajectory(Trajectory{chained.pred_traj, chained.frames, ds.trajectory.fps},
                    dir / "model_trajectory.txt");
    save_trajectory(Trajectory{chained.gt_traj, chained.frames, ds.trajectory.fps},
                    dir / "gt_trajectory.txt");
    if (c.eval.baseline == "eightpoint") {
      records.push_back(record_for("eightpoint", ds, base_rel, c.eval.align, &chained));
      save_trajectory(Trajectory{chained.pred_traj, chained.frames, ds.trajectory.fps},
                      dir / "eightpoint_trajectory.txt");
    }
    run_report(records, dir);
    write_text_file(dir / "predictions.csv", predictions);
    log << "spacing " << format_double(s) << " s (step " << ds.step << "):\n";
    for (const auto& r : records) log << "  " << summary_line(r) << "\n";
  }
  return kExitOk;
}

int cmd_export_embeddings(const ExperimentConfig& c, int layer, const std::string& out_path,
                          std::ostream& log) {
  const nn::Checkpoint ck = nn::load_checkpoint(default_checkpoint(c));
  const int n_layers = static_cast<int>(ck.model.config().layers.size());
  if (layer < 0 || layer > n_layers) {
    throw Error(ErrorCode::kConfig, "layer index " + std::to_string(layer) + " out of range [0, " +
                                        std::to_string(n_layers) + "]");
  }
  const LoadedDataset ds = load_dataset(c, c.dataset.spacing);
  const int width = layer == 0 ? nn::kNodeFeatureDim
                               : ck.model.config().layers[static_cast<std::size_t>(layer - 1)].out_dim;
  std::string csv = "pair_id,node";
  for (int f = 0; f < width; ++f) csv += ",f" + std::to_string(f);
  csv += "\n";
  std::size_t rows = 0, skipped = 0;
  for (const auto& corr : ds.pairs) {
    EpipolarGraph g;
    try {
      g = build_graph(corr, c.graph);
    } catch (const Error& e) {
      log << "skipping " << corr.pair_id.str() << ": " << e.what() << "\n";
      ++skipped;
      continue;
    }
    const auto emb = ck.model.node_embeddings(g);
    const nn::DenseMatrix& H = emb[static_cast<std::size_t>(layer)];
    const nn::DenseMatrix z = nn::pool(H, ck.model.config().pooling);
    const std::string id = corr.pair_id.str();
    auto emit = [&](const std::string& tag, const auto& row) {
      csv += id + "," + tag;
      for (Eigen::Index f = 0; f < row.size(); ++f) csv += "," + format_double(row(f));
      csv += "\n";
      ++rows;
    };
    for (Eigen::Index i = 0; i < H.rows(); ++i) emit(std::to_string(i), H.row(i));
    emit("pooled", z.row(0));
  }
  const std::filesystem::path out =
      out_path.empty() ? resolve_output(c.eval.output_dir) / ("embeddings_layer" + std::to_string(layer) + ".csv")
                       : resolve_output(out_path);
  write_text_file(out, csv);
  log << "wrote " << rows << " rows (" << ds.pairs.size() - skipped << " pairs) to " << out.string() << "\n";
  return kExitOk;
}

GradcheckRun run_gradcheck(const ExperimentConfig& c) {
  const GradcheckConfig& gc = c.gradcheck;
  nn::GradCheckOptions opts;
  opts.h = gc.h;
  opts.tolerance = gc.tolerance;
  opts.corrupt = gc.corrupt;

  Rng rng(substream_seed(c.seed, "gradcheck"));
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  std::vector<PointPair> pairs;
  for (int i = 0; i < gc.nodes; ++i) {
    const Vec3 x1(u(rng), u(rng), 1.0);
    pairs.emplace_back(x1, Vec3(x1.x() + 0.1 * u(rng), x1.y() + 0.1 * u(rng), 1.0));
  }
  GraphOptions go = c.graph;
  go.k = std::min(go.k, gc.nodes - 1);
  const EpipolarGraph g = graph_from_pairs(pairs, go);
  const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
  const Pose gt{Quaternion::from_axis_angle(axis, 0.1 + std::abs(u(rng))),
                Vec3(u(rng), u(rng), 1.0 + u(rng))};

  GradcheckRun run;
  for (const auto& preset : gc.presets) {
    nn::Model model(nn::make_preset(preset, gc.hidden), substream_seed(c.seed, "init"));
    auto report = nn::grad_check(model, g, gt, c.loss, opts);
    run.entries += report.entries.size();
    run.worst = std::max(run.worst, report.max_rel_error());
    run.reports.emplace_back(preset, std::move(report));
  }
  run.passed = run.worst < gc.tolerance;
  return run;
}

int cmd_gradcheck(const ExperimentConfig& c, std::ostream& log) {
  const double tol = c.gradcheck.tolerance;
  const GradcheckRun run = run_gradcheck(c);
  for (const auto& [preset, report] : run.reports) {
    std::map<std::string, double> per_term;
    for (const auto& e : report.entries) per_term[e.term] = std::max(per_term[e.term], e.rel_error);
    for (const auto& [term, err] : per_term) {
      log << preset << " " << term << " rel_error " << format_double(err) << (err < tol ? "" : "  FAIL")
          << "\n";
    }
  }
  log << "gradcheck: " << run.reports.size() << " presets, " << run.entries
      << " entries, max relative error " << format_double(run.worst) << ", tolerance "
      << format_double(tol) << ": " << (run.passed ? "PASS" : "FAIL") << "\n";
  return run.passed ? kExitOk : kExitTolerance;
}

int cmd_bench_knn(const ExperimentConfig& c, std::ostream& log) {
  const LoadedDataset ds = load_dataset(c, c.dataset.spacing);
  const std::filesystem::path out = resolve_output(c.bench.output_dir);

  // Structure of every variant on the same survivors.
  std::string structure =
      "variant,pair_id,nodes,edges,min_weight,max_weight,max_edge_length,radius,check\n";
  bool structure_ok = true;
  std::map<std::string, std::set<std::pair<int, int>>> hard_edges;
  std::map<std::string, std::vector<std::string>> failures;
  std::vector<std::string> variants = c.bench.variants;
  // Mutual edges are checked against the hard graph, so build hard first.
  std::stable_sort(variants.begin(), variants.end(), [](const std::string& a, const std::string& b) {
    return (parse_knn_variant(a) == KnnVariant::kHard) > (parse_knn_variant(b) == KnnVariant::kHard);
  });
  const bool have_hard = std::any_of(variants.begin(), variants.end(), [](const std::string& v) {
    return parse_knn_variant(v) == KnnVariant::kHard;
  });
  for (const auto& vname : variants) {
    GraphOptions go = c.graph;
    go.variant = parse_knn_variant(vname);
    GraphOptions hard_opts = go;
    hard_opts.variant = KnnVariant::kHard;
    for (const auto& corr : ds.pairs) {
      EpipolarGraph g;
      try {
        g = build_graph(corr, go);
      } catch (const Error& e) {
        structure += std::string(knn_variant_name(go.variant)) + "," + corr.pair_id.str() + ",0,0,,,,,skipped\n";
        continue;
      }
      const int off = go.second_image ? 3 : 0;
      double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0, lmax = 0.0;
      std::string check = "ok";
      std::set<std::pair<int, int>> edges;
      for (const Edge& e : g.edges) {
        wmin = std::min(wmin, e.weight);
        wmax = std::max(wmax, e.weight);
        const double len = (g.node_features.row(e.src).segment<3>(off) -
                            g.node_features.row(e.dst).segment<3>(off)).norm();
        lmax = std::max(lmax, len);
        edges.emplace(e.src, e.dst);
        if (go.variant == KnnVariant::kRadius && !(len < g.meta.radius)) check = "edge_outside_radius";
        if (go.variant == KnnVariant::kSoft && !(e.weight > 0.0 && e.weight <= 1.0)) check = "soft_weight_range";
      }
      if (go.variant == KnnVariant::kHard) hard_edges[corr.pair_id.str()] = edges;
      if (go.variant == KnnVariant::kMutual) {
        std::set<std::pair<int, int>> hard;
        if (have_hard) {
          hard = hard_edges[corr.pair_id.str()];
        } else {
          for (const Edge& e : build_graph(corr, hard_opts).edges) hard.emplace(e.src, e.dst);
        }
        for (const auto& e : edges) {
          if (!hard.count(e)) check = "mutual_not_in_hard";
        }
      }
      if (check != "ok") {
        structure_ok = false;
        failures[vname].push_back(corr.pair_id.str() + ":" + check);
      }
      structure += std::string(knn_variant_name(go.variant)) + "," + corr.pair_id.str() + "," +
                   std::to_string(g.num_nodes()) + "," + std::to_string(g.edges.size()) + "," +
                   (g.edges.empty() ? std::string() : format_double(wmin)) + "," +
                   (g.edges.empty() ? std::string() : format_double(wmax)) + "," + format_double(lmax) +
                   "," + format_double(g.meta.radius) + "," + check + "\n";
    }
  }
  write_text_file(out / "knn_structure.csv", structure);

  std::string metrics = "model,variant,ate_m,ape_mean_m,ape_r_mean_deg,dte_mean_deg,dre_mean_deg,best_epoch\n";
  std::string table = "model";
  for (const auto& v : c.bench.variants) table += "," + v + "_ate_m," + v + "_ape_m";
  table += "\n";
  for (const auto& preset : c.bench.presets) {
    table += preset;
    for (const auto& vname : c.bench.variants) {
      ExperimentConfig vc = c;
      vc.graph.variant = parse_knn_variant(vname);
      vc.model = nn::make_preset(preset, c.model.hidden);
      vc.train.epochs = c.bench.epochs;
      TrainConfig tc = make_train_config(vc);
      const TrainResult res = train(tc, ds.pairs);
      const auto items = evaluate(res.best, ds.pairs, vc.graph, vc.weights, vc.loss);
      std::vector<Pose> rel;
      for (const auto& it : items) rel.push_back(it.ok ? it.pred : Pose::identity());
      const EvalRecord r = record_for(preset + "/" + vname, ds, rel, c.eval.align);
      const EvalSummary& s = r.summary;
      metrics += preset + "," + vname + "," + format_double(s.ate_m) + "," + format_double(s.ape_mean_m) +
                 "," + format_double(s.ape_r_mean_deg) + "," + format_double(s.dte_mean_deg) + "," +
                 format_double(s.dre_mean_deg) + "," + std::to_string(res.report.best_epoch) + "\n";
      table += "," + format_double(s.ate_m) + "," + format_double(s.ape_mean_m);
      log << summary_line(r) << "\n";
    }
    table += "\n";
  }
  write_text_file(out / "knn_metrics.csv", metrics);
  write_text_file(out / "knn_table.csv", table);

  for (const auto& [v, list] : failures) {
    log << "structural check failed for " << v << ": " << list.size() << " pairs (first: " << list.front() << ")\n";
  }
  log << "bench-knn structure checks: " << (structure_ok ? "PASS" : "FAIL") << "\n";
  return structure_ok ? kExitOk : kExitTolerance;
}

}  // namespace epigraph
