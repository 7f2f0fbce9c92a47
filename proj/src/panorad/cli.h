// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_CLI_H
#define PANORAD_CLI_H

#include <string>
#include <vector>

namespace panorad::cli {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
int run(const std::vector<std::string>& args);

enum class PipelineMode { kPanoHdr, kNerfLdr2Hdr };

struct PipelineStep {
  std::string command;
  std::string description;
};

/// Composed run plan: inverse-tonemap-then-train, or train-on-LDR followed by
/// uplifting the rendered panoramas.
std::vector<PipelineStep> pipeline_order(PipelineMode mode);

}  // namespace panorad::cli

#endif  // PANORAD_CLI_H
