#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "epigraph/config.hpp"
#include "epigraph/error.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/synth.hpp"

namespace epigraph {

enum ExitCode : int { kExitOk = 0, kExitTolerance = 1, kExitUsage = 2, kExitIo = 3 };

int exit_code_for(const Error& e);

struct LoadedDataset {
  Trajectory trajectory;
  int step = 1;
  std::vector<CorrespondenceSet> pairs;  // ordered by first frame
};

/// Synthesizes the dataset or reads it from dataset.root, depending on
/// dataset.source. File datasets must match the configured intrinsics.
LoadedDataset load_dataset(const ExperimentConfig& c, double spacing);

std::string spacing_dir_name(double spacing);

/// Indices of the pairs (0, d), (d, 2d), ... that chain from frame 0.
std::vector<std::size_t> chain_indices(const std::vector<CorrespondenceSet>& pairs, int step);

struct GradcheckRun {
  std::vector<std::pair<std::string, nn::GradCheckReport>> reports;  // per preset
  double worst = 0.0;
  std::size_t entries = 0;
  bool passed = true;
};

/// Every configured preset against every loss term on a seeded random graph
/// of gradcheck.nodes nodes.
GradcheckRun run_gradcheck(const ExperimentConfig& c);

// Each command returns an exit code and throws Error on failure.
int cmd_generate(const ExperimentConfig& c, std::ostream& log);
int cmd_train(const ExperimentConfig& c, std::ostream& log);
int cmd_eval(const ExperimentConfig& c, std::ostream& log);
/// layer 0 is the node features; the pooled row of each pair pools that layer.
int cmd_export_embeddings(const ExperimentConfig& c, int layer, const std::string& out_path,
                          std::ostream& log);
int cmd_gradcheck(const ExperimentConfig& c, std::ostream& log);
int cmd_bench_knn(const ExperimentConfig& c, std::ostream& log);

}  // namespace epigraph
