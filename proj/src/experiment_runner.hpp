#pragma once

#include <functional>
#include <vector>

#include "matchkit/experiments.hpp"

namespace matchkit::detail {

/// Fills the quantities of one record; n, trial and seed are preset.
using TrialFunction = std::function<void(TrialRecord&)>;

/// Runs every (n, trial) job of the config, in parallel when allowed, and
/// returns the records in job order. Throws ExperimentFailure after all jobs
/// finish if any of them threw.
std::vector<TrialRecord> run_trials(const ExperimentConfig& config, const RunOptions& options,
                                    const TrialFunction& trial_fn);

}  // namespace matchkit::detail
