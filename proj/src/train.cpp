#include "epigraph/train.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "epigraph/error.hpp"

namespace epigraph {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t content_hash(const CorrespondenceSet& corr) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& c : corr.pairs) {
    const double v[5] = {c.p1.x(), c.p1.y(), c.p2.x(), c.p2.y(), c.confidence};
    h = fnv1a(h, v, sizeof(v));
  }
  const double k[4] = {corr.intrinsics.fx, corr.intrinsics.fy, corr.intrinsics.cx,
                       corr.intrinsics.cy};
  return fnv1a(h, k, sizeof(k));
}

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"quat", b.quat},   {"t_dir", b.t_dir}, {"t_scale", b.t_scale}, {"frob", b.frob},
          {"svd", b.svd},     {"yaw", b.yaw},     {"total", b.total}};
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "train.batch_size must be >= 1");
  if (!(split > 0.0 && split < 1.0)) throw Error(ErrorCode::kConfig, "train.split must be in (0, 1)");
  if (epochs < 0) throw Error(ErrorCode::kConfig, "train.epochs must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::kConfig, "train.lr must be >= 0");
  if (prebuild_workers < 0) throw Error(ErrorCode::kConfig, "train.prebuild_workers must be >= 0");
  weights.validate();
  model.validate();
}

std::string format_train_report(const TrainReport& report) {
  nlohmann::json j;
  j["best_epoch"] = report.best_epoch;
  j["best_val_total"] = std::isfinite(report.best_val) ? nlohmann::json(report.best_val) : nlohmann::json();
  j["checkpoint"] = report.checkpoint_path.string();
  j["train_pairs"] = report.train_pairs;
  j["val_pairs"] = report.val_pairs;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train", breakdown_json(e.train)},
                      {"val", breakdown_json(e.val)},
                      {"processed", e.processed},
                      {"skipped", e.skipped},
                      {"val_processed", e.val_processed},
                      {"val_skipped", e.val_skipped},
                      {"checkpointed", e.checkpointed}});
  }
  j["epochs"] = epochs;
  return j.dump(2) + "\n";
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 2) {
    throw Error(ErrorCode::kDataset,
                "a train/validation split needs at least 2 pairs, got " + std::to_string(n));
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "split fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n - 1);
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end())};
}

std::string GraphCache::key(const CorrespondenceSet& corr) const {
  const GraphOptions& o = options_;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(content_hash(corr)));
  return corr.pair_id.str() + "|" + buf + "|k" + std::to_string(o.k) + "|tau" + format_double(o.tau) +
         "|" + knn_variant_name(o.variant) + "|s" + std::to_string(o.symmetrize) + "|x" +
         std::to_string(o.second_image) + "|r" + format_double(o.radius) + "|e" +
         std::to_string(o.e0.seed_size) + "," + std::to_string(o.e0.iterations) + "," +
         std::to_string(o.e0.seed) + "," + std::to_string(static_cast<int>(o.e0.denominator));
}

void GraphCache::set_options(const GraphOptions& options) {
  if (!(options == options_) || options.e0.seed != options_.e0.seed ||
      options.e0.seed_size != options_.e0.seed_size ||
      options.e0.iterations != options_.e0.iterations ||
      options.e0.denominator != options_.e0.denominator) {
    entries_.clear();
  }
  options_ = options;
}

const EpipolarGraph* GraphCache::get(const CorrespondenceSet& corr) {
  const std::string k = key(corr);
  auto it = entries_.find(k);
  if (it == entries_.end()) {
    Entry e;
    try {
      e.graph = build_graph(corr, options_);
    } catch (const Error& err) {
      e.error = err.what();
    }
    it = entries_.emplace(k, std::move(e)).first;
  }
  return it->second.graph ? &*it->second.graph : nullptr;
}

void GraphCache::prebuild(const std::vector<CorrespondenceSet>& samples, int workers) {
  std::vector<Entry> built(samples.size());
  std::vector<std::string> keys(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) keys[i] = key(samples[i]);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < samples.size(); i += stride) {
      if (entries_.count(keys[i])) continue;
      try {
        built[i].graph = build_graph(samples[i], options_);
      } catch (const Error& err) {
        built[i].error = err.what();
      }
    }
  };
  const std::size_t n_workers = static_cast<std::size_t>(std::max(workers, 1));
  if (n_workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work, w, n_workers);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!entries_.count(keys[i])) entries_.emplace(keys[i], std::move(built[i]));
  }
}

std::map<std::string, std::string> checkpoint_meta(const TrainConfig& config, int epoch,
                                                   double val_total) {
  return {
      {"epoch", std::to_string(epoch)},
      {"val_total", format_double(val_total)},
      {"seed", std::to_string(config.seed)},
      {"lr", format_double(config.lr)},
      {"batch_size", std::to_string(config.batch_size)},
      {"loss.weights", format_double(config.weights.pose) + " " + format_double(config.weights.frob) +
                           " " + format_double(config.weights.svd) + " " +
                           format_double(config.weights.yaw)},
      {"loss.quat_norm", config.loss.quat_norm == QuatNorm::kL1 ? "l1" : "l2"},
      {"loss.unit_essential", config.loss.unit_essential ? "1" : "0"},
      {"graph.k", std::to_string(config.graph.k)},
      {"graph.tau", format_double(config.graph.tau)},
      {"graph.variant", knn_variant_name(config.graph.variant)},
      {"graph.symmetrize", config.graph.symmetrize ? "1" : "0"},
  };
}

TrainResult train(const TrainConfig& config, const std::vector<CorrespondenceSet>& dataset) {
  config.validate();
  for (const auto& s : dataset) {
    if (!s.gt_relative) {
      throw Error(ErrorCode::kDataset, "pair " + s.pair_id.str() + " has no ground-truth pose");
    }
  }
  const auto [train_idx, val_idx] =
      split_indices(dataset.size(), config.split, substream_seed(config.seed, "split"));

  TrainResult result{TrainReport{}, nn::Model(config.model, substream_seed(config.seed, "init")),
                     nn::Model(config.model, substream_seed(config.seed, "init"))};
  nn::Model& model = result.final_model;
  TrainReport& report = result.report;
  report.checkpoint_path = config.checkpoint_path;
  for (std::size_t i : train_idx) report.train_pairs.push_back(dataset[i].pair_id.str());
  for (std::size_t i : val_idx) report.val_pairs.push_back(dataset[i].pair_id.str());

  GraphCache cache(config.graph);
  if (config.prebuild_workers > 0) cache.prebuild(dataset, config.prebuild_workers);

  std::vector<LossTarget> targets;
  targets.reserve(dataset.size());
  for (const auto& s : dataset) targets.push_back(make_loss_target(*s.gt_relative, config.loss));

  Rng shuffle_rng(substream_seed(config.seed, "shuffle"));
  nn::AdamOptions adam;
  adam.lr = config.lr;
  std::vector<std::size_t> order = train_idx;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown sum;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      model.params().zero_grad();
      std::size_t count = 0;
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t idx = order[k];
        const EpipolarGraph* g = cache.get(dataset[idx]);
        if (!g) {
          ++stats.skipped;
          continue;
        }
        const PosePrediction pred = model.forward(*g);
        PredictionGrad grad;
        sum += total_loss_with_grad(pred, targets[idx], config.weights, config.loss, &grad);
        model.backward(grad);
        ++count;
      }
      if (count == 0) continue;
      model.params().scale_grad(1.0 / static_cast<double>(count));
      nn::adam_step(model.params(), adam);
      stats.processed += count;
    }
    if (stats.processed == 0) {
      throw Error(ErrorCode::kDataset, "epoch " + std::to_string(epoch) +
                                           ": no training graph could be built");
    }
    stats.train = sum * (1.0 / static_cast<double>(stats.processed));

    LossBreakdown vsum;
    for (std::size_t idx : val_idx) {
      const EpipolarGraph* g = cache.get(dataset[idx]);
      if (!g) {
        ++stats.val_skipped;
        continue;
      }
      vsum += total_loss(model.predict(*g), targets[idx], config.weights, config.loss);
      ++stats.val_processed;
    }
    if (stats.val_processed == 0) {
      throw Error(ErrorCode::kDataset, "epoch " + std::to_string(epoch) +
                                           ": no validation graph could be built");
    }
    stats.val = vsum * (1.0 / static_cast<double>(stats.val_processed));

    if (stats.val.total < report.best_val) {
      report.best_val = stats.val.total;
      report.best_epoch = epoch;
      result.best = model;
      stats.checkpointed = true;
      if (!config.checkpoint_path.empty()) {
        nn::save_checkpoint(config.checkpoint_path, model,
                            checkpoint_meta(config, epoch, stats.val.total));
      }
    }
    report.epochs.push_back(stats);
  }
  return result;
}

std::vector<EvalItem> evaluate(const nn::Model& model, const std::vector<CorrespondenceSet>& pairs,
                               const GraphOptions& graph, const LossWeights& weights,
                               const LossOptions& loss,
                               const std::optional<nn::ModelConfig>& expected) {
  if (expected && !(*expected == model.config())) {
    throw Error(ErrorCode::kSchema, "checkpoint model config does not match the configured model");
  }
  std::vector<EvalItem> out;
  out.reserve(pairs.size());
  for (const auto& corr : pairs) {
    EvalItem item;
    item.pair_id = corr.pair_id.str();
    item.gt = corr.gt_relative;
    try {
      const EpipolarGraph g = build_graph(corr, graph);
      item.prediction = model.predict(g);
      item.pred = item.prediction.pose();
      item.ok = true;
      if (item.gt) item.loss = total_loss(item.prediction, make_loss_target(*item.gt, loss), weights, loss);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyGraph && e.code() != ErrorCode::kInsufficientCorrespondences &&
          e.code() != ErrorCode::kDegenerateConfiguration) {
        throw;
      }
      item.error = e.what();
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace epigraph
