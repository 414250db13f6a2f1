// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <json.hpp>

#include "epigraph/commands.hpp"
#include "epigraph/config.hpp"
#include "epigraph/epipolar.hpp"
#include "epigraph/eval.hpp"
#include "epigraph/geom.hpp"
#include "epigraph/graph.hpp"
#include "epigraph/loss.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/synth.hpp"
#include "epigraph/text_io.hpp"
#include "epigraph/train.hpp"

namespace fs = std::filesystem;
using namespace epigraph;

namespace {

constexpr double kDeg = 180.0 / 3.14159265358979323846;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

// Independent angle oracles: quaternion angular distance and the
// half-chord formula for directions.

double rot_angle_deg(const Mat3& A, const Mat3& B) {
  return Eigen::Quaterniond(A).angularDistance(Eigen::Quaterniond(B)) * kDeg;
}

double dir_angle_deg(const Vec3& a, const Vec3& b) {
  const Vec3 u = a.normalized(), v = b.normalized();
  return 2.0 * std::atan2((u - v).norm(), (u + v).norm()) * kDeg;
}

Pose random_pose(Rng& rng, double max_angle, double baseline) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  Vec3 t(n(rng), 0.3 * n(rng), n(rng));
  return {Quaternion::from_axis_angle(axis, max_angle * u(rng)), baseline * t.normalized()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("epigraph_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// ---------------------------------------------------------------------------

Outcome classical_recovery() {
  const auto t0 = Clock::now();
  Rng rng(11);
  double worst_r = 0.0, worst_t = 0.0;
  for (int i = 0; i < 50; ++i) {
    SceneSpec spec;
    spec.seed = 1000 + static_cast<std::uint64_t>(i);
    spec.n_points = 120;
    spec.pose = random_pose(rng, 0.3, 1.0);
    const auto scene = generate_scene(spec);
    const Pose est = classical_relative_pose(normalized_pairs(scene.correspondences));
    worst_r = std::max(worst_r, rot_angle_deg(est.rotation_matrix(), spec.pose.rotation_matrix()));
    worst_t = std::max(worst_t, dir_angle_deg(est.translation, spec.pose.translation));
  }
  std::vector<double> nr, nt;
  for (int i = 0; i < 100; ++i) {
    SceneSpec spec;
    spec.seed = 5000 + static_cast<std::uint64_t>(i);
    spec.n_points = 120;
    spec.noise_px = 0.5;
    spec.pose = random_pose(rng, 0.3, 1.0);
    const auto scene = generate_scene(spec);
    const Pose est = classical_relative_pose(normalized_pairs(scene.correspondences));
    nr.push_back(rot_angle_deg(est.rotation_matrix(), spec.pose.rotation_matrix()));
    nt.push_back(dir_angle_deg(est.translation, spec.pose.translation));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double mr = median(nr), mt = median(nt), dt = seconds_since(t0);
  Outcome o;
  o.pass = worst_r < 1e-4 && worst_t < 1e-4 && mr < 0.5 && mt < 2.0 && dt < 30.0;
  o.detail = "noiseless max DRE " + num(worst_r) + " deg, max DTE " + num(worst_t) +
             " deg (< 1e-4); 0.5 px median DRE " + num(mr) + " (< 0.5), DTE " + num(mt) +
             " (< 2); " + num(dt) + " s (< 30)";
  return o;
}

Outcome sampson_calibration() {
  const double tau = GraphOptions{}.tau;
  // E0 = E_gt: 100 scenes x 200 matches, half of them uniform outliers.
  std::size_t inl = 0, inl_kept = 0, out = 0, out_rejected = 0;
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    SceneSpec spec;
    spec.seed = 20000 + static_cast<std::uint64_t>(i);
    spec.n_points = 200;
    spec.outlier_fraction = 0.5;
    spec.pose = random_pose(rng, 0.3, 1.0);
    const auto scene = generate_scene(spec);
    const Mat3 E = epipolar_essential(spec.pose);
    const auto pairs = normalized_pairs(scene.correspondences);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const bool keep = sampson_distance(pairs[k].first, pairs[k].second, E) < tau;
      if (scene.inlier[k]) {
        ++inl;
        inl_kept += keep;
      } else {
        ++out;
        out_rejected += !keep;
      }
    }
  }
  const double recall_gt = static_cast<double>(inl_kept) / static_cast<double>(inl);
  const double reject_gt = static_cast<double>(out_rejected) / static_cast<double>(out);

  // E0 from the estimator on the 30%-inlier regime, 20 seeds.
  std::size_t w_inl = 0, w_kept = 0, w_out = 0, w_rej = 0;
  for (int s = 0; s < 20; ++s) {
    const SceneSpec spec = wide_baseline_preset(static_cast<std::uint64_t>(s), random_pose(rng, 0.3, 1.0));
    const auto scene = generate_scene(spec);
    E0Options eo;
    eo.tau = tau;
    eo.seed = static_cast<std::uint64_t>(s);
    const Mat3 E0 = estimate_E0(scene.correspondences, eo);
    const auto pairs = normalized_pairs(scene.correspondences);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      double d = std::numeric_limits<double>::infinity();
      try {
        d = sampson_distance(pairs[k].first, pairs[k].second, E0);
      } catch (const Error&) {
      }
      const bool keep = d < tau;
      if (scene.inlier[k]) {
        ++w_inl;
        w_kept += keep;
      } else {
        ++w_out;
        w_rej += !keep;
      }
    }
  }
  const double recall_w = static_cast<double>(w_kept) / static_cast<double>(w_inl);
  const double reject_w = static_cast<double>(w_rej) / static_cast<double>(w_out);
  Outcome o;
  o.pass = recall_gt == 1.0 && reject_gt >= 0.99 && recall_w >= 0.90 && reject_w >= 0.95;
  o.detail = "E0=E_gt inlier recall " + num(recall_gt, 6) + " (= 1), outlier rejection " +
             num(reject_gt, 4) + " over " + std::to_string(out) + " outliers (>= 0.99); estimated E0 recall " +
             num(recall_w, 4) + " (>= 0.90), rejection " + num(reject_w, 4) + " (>= 0.95)";
  return o;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  ExperimentConfig c;
  const GradcheckRun run = run_gradcheck(c);
  std::map<std::string, bool> terms;
  for (const auto& [preset, report] : run.reports)
    for (const auto& e : report.entries) terms[e.term] = true;
  const double dt = seconds_since(t0);
  Outcome o;
  o.pass = run.passed && run.reports.size() == 3 && terms.size() == kAllLossTerms.size() &&
           c.gradcheck.h == 1e-6 && c.gradcheck.nodes == 12 && dt < 60.0;
  o.detail = std::to_string(run.reports.size()) + " presets x " + std::to_string(terms.size()) +
             " terms, max relative error " + num(run.worst) + " (< 1e-5, h = 1e-6, 12 nodes); " +
             num(dt) + " s (< 60)";
  return o;
}

EpipolarGraph permute(const EpipolarGraph& g, const std::vector<int>& perm) {
  // perm[old] = new
  EpipolarGraph p = g;
  for (int i = 0; i < g.num_nodes(); ++i) p.node_features.row(perm[static_cast<std::size_t>(i)]) = g.node_features.row(i);
  p.edges.clear();
  for (const Edge& e : g.edges) p.edges.push_back({perm[static_cast<std::size_t>(e.src)], perm[static_cast<std::size_t>(e.dst)], e.weight});
  std::sort(p.edges.begin(), p.edges.end(), [](const Edge& a, const Edge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  for (std::size_t i = 0; i < g.kept_indices.size(); ++i) p.kept_indices[static_cast<std::size_t>(perm[i])] = g.kept_indices[i];
  return p;
}

Outcome permutation_invariance() {
  SceneSpec spec;
  spec.seed = 31;
  spec.n_points = 60;
  Rng rng(32);
  spec.pose = random_pose(rng, 0.3, 1.0);
  GraphOptions go;
  go.variant = KnnVariant::kSoft;
  const EpipolarGraph g = build_graph(generate_scene(spec).correspondences, go);
  double worst = 0.0;
  for (const auto& preset : nn::preset_names()) {
    const nn::Model m(nn::make_preset(preset), 33);
    const PosePrediction ref = m.predict(g);
    for (int r = 0; r < 100; ++r) {
      std::vector<int> perm(static_cast<std::size_t>(g.num_nodes()));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const PosePrediction p = m.predict(permute(g, perm));
      worst = std::max({worst, (p.q - ref.q).cwiseAbs().maxCoeff(),
                        (p.translation() - ref.translation()).cwiseAbs().maxCoeff()});
    }
  }
  Outcome o;
  o.pass = worst < 1e-10;
  o.detail = "3 presets x 100 permutations, max |delta (q, t)| " + num(worst) + " (< 1e-10)";
  return o;
}

Outcome manifold_identities() {
  Rng rng(41);
  double svd_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng, 3.0, 0.1 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng));
    svd_worst = std::max(svd_worst, svd_loss_of_matrix(essential_from_pose(p)));
  }
  double quat_worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Quaternion q = random_pose(rng, 3.0, 1.0).rotation;
    quat_worst = std::max(quat_worst, quat_loss(-q, q));
  }
  double dre_worst = 0.0;
  for (int deg = 1; deg <= 179; ++deg) {
    const double th = deg / kDeg;
    const Mat3 R = Eigen::AngleAxisd(th, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    dre_worst = std::max(dre_worst, std::abs(dre(R, Mat3::Identity()) - deg));
  }
  const Trajectory traj = generate_trajectory(42, 50, MotionModel::kRandomWalk);
  std::vector<Pose> rel;
  for (std::size_t k = 1; k < traj.size(); ++k) rel.push_back(relative_pose(traj.poses[k - 1], traj.poses[k]));
  const auto back = chain(rel, traj.poses[0]);
  double chain_worst = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    chain_worst = std::max({chain_worst, (back[k].translation - traj.poses[k].translation).cwiseAbs().maxCoeff(),
                            (back[k].rotation_matrix() - traj.poses[k].rotation_matrix()).cwiseAbs().maxCoeff()});
  }
  Outcome o;
  o.pass = svd_worst < 1e-12 && quat_worst == 0.0 && dre_worst < 1e-9 && chain_worst < 1e-9;
  o.detail = "svd_loss max " + num(svd_worst) + " (< 1e-12); quat_loss(-q, q) max " + num(quat_worst) +
             " (= 0); DRE(R(theta), I) max error " + num(dre_worst) + " deg (< 1e-9); chain round trip " +
             num(chain_worst) + " (< 1e-9)";
  return o;
}

Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  ExperimentConfig c;
  c.dataset.frames = 21;  // 20 pairs at spacing 0.1 s, 16 after the 0.8 split
  c.dataset.motion = MotionModel::kArc;
  c.model = nn::make_preset("3GCN+GAT");
  c.train.epochs = 500;
  c.train.lr = 1e-4;
  c.train.batch_size = 4;
  const LoadedDataset ds = load_dataset(c, 0.1);
  const TrainResult res = train(make_train_config(c), ds.pairs);
  std::vector<CorrespondenceSet> train_set;
  for (const auto& id : res.report.train_pairs)
    for (const auto& p : ds.pairs)
      if (p.pair_id.str() == id) train_set.push_back(p);
  const auto items = evaluate(res.final_model, train_set, c.graph, c.weights, c.loss);
  double sr = 0.0, st = 0.0;
  std::size_t ok = 0;
  for (const auto& it : items) {
    if (!it.ok) continue;
    ++ok;
    sr += rot_angle_deg(it.pred.rotation_matrix(), it.gt->rotation_matrix());
    st += dir_angle_deg(it.pred.translation, it.gt->translation);
  }
  const double mr = sr / static_cast<double>(ok), mt = st / static_cast<double>(ok);
  const double ratio = res.report.epochs.back().train.total / res.report.epochs.front().train.total;
  const double dt = seconds_since(t0);
  Outcome o;
  o.pass = train_set.size() == 16 && ok == 16 && ratio < 0.1 && mr < 2.0 && mt < 10.0 && dt < 600.0;
  o.detail = std::to_string(train_set.size()) + " train pairs, final/epoch-1 loss " + num(ratio) +
             " (< 0.1), mean DRE " + num(mr) + " deg (< 2), mean DTE " + num(mt) + " deg (< 10); " +
             num(dt) + " s (< 600)";
  return o;
}

// Independent recomputation of the eval outputs of one estimator.
std::string check_eval_outputs(const fs::path& data, const fs::path& out, const std::string& estimator,
                               double spacing, int d, double* worst) {
  std::map<std::string, std::pair<Eigen::Quaterniond, Vec3>> pred;
  for (const auto& row : read_csv(out / "predictions.csv")) {
    if (row.size() != 10 || row[1] != estimator) continue;
    pred[row[0]] = {Eigen::Quaterniond(std::stod(row[3]), std::stod(row[4]), std::stod(row[5]), std::stod(row[6])),
                    Vec3(std::stod(row[7]), std::stod(row[8]), std::stod(row[9]))};
  }
  // Ground truth from the KITTI trajectory file.
  std::vector<Eigen::Isometry3d> gt_abs;
  {
    std::ifstream in(data / "trajectory.txt");
    std::string line;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 4; ++col) ss >> T.matrix()(r, col);
      gt_abs.push_back(T);
    }
  }
  auto rel_gt = [&](int i, int j) { return Eigen::Isometry3d(gt_abs[static_cast<std::size_t>(i)].inverse() * gt_abs[static_cast<std::size_t>(j)]); };

  const auto pairs_csv = read_csv(out / (estimator + "_pairs.csv"));
  std::vector<double> dres, dtes;
  if (pairs_csv.size() != pred.size() + 1) return estimator + " pairs.csv row count";
  for (std::size_t r = 1; r < pairs_csv.size(); ++r) {
    const std::string& id = pairs_csv[r][0];
    const int i = std::stoi(id.substr(id.size() - 13, 6)), j = std::stoi(id.substr(id.size() - 6));
    const auto G = rel_gt(i, j);
    const auto& [q, t] = pred.at(id);
    const double e_r = q.normalized().angularDistance(Eigen::Quaterniond(G.rotation())) * kDeg;
    const double e_t = dir_angle_deg(t, G.translation());
    dres.push_back(e_r);
    dtes.push_back(e_t);
    *worst = std::max({*worst, std::abs(e_r - std::stod(pairs_csv[r][1])), std::abs(e_t - std::stod(pairs_csv[r][2]))});
  }

  // Chain (0, d), (d, 2d), ... from the identity.
  std::vector<int> frames{0};
  std::vector<Eigen::Isometry3d> chained{Eigen::Isometry3d::Identity()};
  for (int f = 0;; f += d) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "seq_%06d_%06d", f, f + d);
    const auto it = pred.find(buf);
    if (it == pred.end()) break;
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.linear() = it->second.first.normalized().toRotationMatrix();
    T.translation() = it->second.second;
    chained.push_back(chained.back() * T);
    frames.push_back(f + d);
  }
  const auto frames_csv = read_csv(out / (estimator + "_frames.csv"));
  if (frames_csv.size() != frames.size() + 1) return estimator + " frames.csv row count";
  double sq = 0.0, ape_sum = 0.0, aper_sum = 0.0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto G = rel_gt(0, frames[k]);
    const double ape = (chained[k].translation() - G.translation()).norm();
    const double aper = Eigen::Quaterniond(chained[k].rotation()).angularDistance(Eigen::Quaterniond(G.rotation())) * kDeg;
    sq += ape * ape;
    ape_sum += ape;
    aper_sum += aper;
    if (std::stoi(frames_csv[k + 1][0]) != frames[k]) return estimator + " frame index mismatch";
    *worst = std::max({*worst, std::abs(ape - std::stod(frames_csv[k + 1][1])),
                       std::abs(aper - std::stod(frames_csv[k + 1][2]))});
  }
  const double n = static_cast<double>(frames.size());
  std::ifstream sj(out / "summary.json");
  const auto js = nlohmann::json::parse(sj).at(estimator);
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  *worst = std::max({*worst, std::abs(std::sqrt(sq / n) - js.at("ate_m").get<double>()),
                     std::abs(ape_sum / n - js.at("ape_mean_m").get<double>()),
                     std::abs(aper_sum / n - js.at("ape_r_mean_deg").get<double>()),
                     std::abs(mean(dres) - js.at("dre_mean_deg").get<double>()),
                     std::abs(mean(dtes) - js.at("dte_mean_deg").get<double>())});
  (void)spacing;
  return {};
}

Outcome temporal_spacing() {
  const fs::path root = scratch_dir("spacing");
  ExperimentConfig c;
  c.dataset.frames = 30;
  c.dataset.root = (root / "data").string();
  c.train.output_dir = (root / "train").string();
  c.train.epochs = 3;
  c.eval.output_dir = (root / "eval").string();
  c.eval.spacings = {0.1, 0.5, 1.0};
  std::ostringstream log;
  Outcome o;
  std::string problems;
  cmd_generate(c, log);
  const int n = c.dataset.frames;
  std::string counts;
  for (double s : c.eval.spacings) {
    const int expect_d = static_cast<int>(std::lround(s * 10.0));
    std::ifstream in(root / "data" / spacing_dir_name(s) / "manifest.txt");
    std::string line;
    int d = -1, count = -1, listed = 0;
    while (std::getline(in, line)) {
      if (line.rfind("step ", 0) == 0) d = std::stoi(line.substr(5));
      else if (line.rfind("pairs ", 0) == 0) count = std::stoi(line.substr(6));
      else if (line.rfind("seq_", 0) == 0) ++listed;
    }
    if (d != expect_d || count != n - d || listed != n - d) problems += " bad manifest at s=" + format_double(s) + ";";
    counts += " s=" + format_double(s) + ": d=" + std::to_string(d) + ", " + std::to_string(listed) + " pairs;";
  }
  c.dataset.source = "files";
  cmd_train(c, log);
  cmd_eval(c, log);
  double worst = 0.0;
  for (double s : c.eval.spacings) {
    const int d = static_cast<int>(std::lround(s * 10.0));
    for (const char* est : {"model", "eightpoint"}) {
      const std::string err = check_eval_outputs(root / "data", root / "eval" / spacing_dir_name(s), est, s, d, &worst);
      if (!err.empty()) problems += " " + err + " at s=" + format_double(s) + ";";
    }
  }
  o.pass = problems.empty() && worst < 1e-9;
  o.detail = "n=" + std::to_string(n) + ";" + counts + " max |recomputed - written| " + num(worst) + " (< 1e-9)" + problems;
  fs::remove_all(root);
  return o;
}

Outcome knn_sweep() {
  const fs::path root = scratch_dir("bench");
  ExperimentConfig c;
  c.dataset.frames = 21;
  c.bench.epochs = 2;
  c.bench.output_dir = root.string();
  std::ostringstream log;
  const int rc = cmd_bench_knn(c, log);
  const auto table = read_csv(root / "knn_table.csv");
  const auto structure = read_csv(root / "knn_structure.csv");
  bool table_ok = table.size() == 1 + c.bench.presets.size() && table[0].size() == 1 + 2 * c.bench.variants.size();
  for (std::size_t r = 1; table_ok && r < table.size(); ++r) {
    table_ok = table[r].size() == table[0].size() && table[r][0] == c.bench.presets[r - 1];
    for (std::size_t k = 1; table_ok && k < table[r].size(); ++k) table_ok = std::isfinite(std::stod(table[r][k]));
  }
  std::size_t checked = 0, bad = 0;
  std::map<std::string, std::size_t> per_variant;
  for (std::size_t r = 1; r < structure.size(); ++r) {
    const std::string& check = structure[r].back();
    if (check == "skipped") continue;
    ++checked;
    ++per_variant[structure[r][0]];
    bad += check != "ok";
  }
  Outcome o;
  o.pass = rc == 0 && table_ok && bad == 0 && per_variant.size() == 4;
  o.detail = "exit " + std::to_string(rc) + ", table " + std::to_string(table.size() - 1) + " models x " +
             std::to_string(c.bench.variants.size()) + " variants " + (table_ok ? "well-formed" : "MALFORMED") +
             ", " + std::to_string(checked) + " graphs checked, " + std::to_string(bad) +
             " structural violations (mutual in hard, radius, soft weight range)";
  fs::remove_all(root);
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  }
  return files;
}

Outcome determinism() {
  const fs::path root = scratch_dir("determinism");
  ExperimentConfig c;
  c.dataset.frames = 21;
  c.dataset.root = (root / "data").string();
  c.dataset.noise_px = 0.5;
  c.dataset.outlier_fraction = 0.2;
  c.train.output_dir = (root / "train").string();
  c.train.epochs = 3;
  c.train.prebuild_workers = 2;
  c.eval.output_dir = (root / "eval").string();
  c.gradcheck.hidden = 8;
  c.bench.epochs = 1;
  c.bench.output_dir = (root / "bench").string();
  const auto run_all = [&]() {
    std::ostringstream log;
    ExperimentConfig files = c;
    files.dataset.source = "files";
    cmd_generate(c, log);
    cmd_train(files, log);
    cmd_eval(files, log);
    cmd_export_embeddings(files, 1, (root / "eval" / "emb.csv").string(), log);
    cmd_gradcheck(c, log);
    cmd_bench_knn(c, log);
    auto snap = snapshot(root);
    snap["<log>"] = log.str();
    fs::remove_all(root);
    fs::create_directories(root);
    return snap;
  };
  const auto a = run_all();
  const auto b = run_all();
  std::size_t differing = 0;
  std::string first;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || it->second != v) {
      if (first.empty()) first = k;
      ++differing;
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  Outcome o;
  o.pass = differing == 0 && a.size() > 20;
  o.detail = "generate, train, eval, export-embeddings, gradcheck, bench-knn run twice: " +
             std::to_string(a.size()) + " outputs compared, " + std::to_string(differing) + " differ" +
             (first.empty() ? "" : " (first: " + first + ")");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"classical recovery", classical_recovery},
      {"sampson filter calibration", sampson_calibration},
      {"gradient fidelity", gradient_fidelity},
      {"permutation invariance", permutation_invariance},
      {"manifold and identity suite", manifold_identities},
      {"overfit sanity", overfit_sanity},
      {"temporal-spacing pipeline", temporal_spacing},
      {"k-NN variant sweep", knn_sweep},
      {"determinism", determinism},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
