#pragma once

#include <string>
#include <vector>

#include "contrastlab/config.hpp"
#include "contrastlab/detector.hpp"
#include "contrastlab/telemetry.hpp"

namespace contrastlab {

struct PlotFiles {
  std::string loss_figure;   // <base>_loss.svg: train and validation total loss
  std::string terms_figure;  // <base>_terms.svg: validation positive and negative terms
  std::string sidecar;       // <base>_plots.json: everything drawn, for tests and tooling
  std::vector<std::string> warnings;
};

// Draws both figures from metrics rows. Onset markers come from running
// `detector` on the validation series. Throws DataIntegrityError when there
// are no rows and IoError when an output file cannot be written.
PlotFiles plot_metrics(const std::vector<EpochMetrics>& rows, const std::string& output_base,
                       const DetectorConfig& detector);

// The sidecar content without writing anything.
Json plot_description(const std::vector<EpochMetrics>& rows, const DetectorConfig& detector,
                      std::vector<std::string>* warnings = nullptr);

}  // namespace contrastlab
