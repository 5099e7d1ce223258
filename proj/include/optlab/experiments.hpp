#pragma once

#include <string>

#include "optlab/config.hpp"
#include "optlab/io.hpp"

namespace optlab {

// Each study emits its artifacts under config.out_dir and returns the
// manifest of what it wrote.  Hard failures inside one study item (a seed, a
// level, a solver mode) are recorded in the manifest and the study moves on;
// failures that invalidate the whole study throw.

// Solves the configured task and stores the solution, its cost log, and the
// nominal trajectory that downstream studies sample around.
RunManifest run_swingup(const ExperimentConfig& config);

// Open-loop prediction comparison of LTV, basis-regression, and network
// surrogates against the true plant at each perturbation level, medianed
// over the bench seeds.
RunManifest run_surrogate_bench(const ExperimentConfig& config);

// Singular-value spectra: feature Grams of two basis dictionaries, network
// normal-equation Grams at probe epochs, and the synthetic monomial study
// against the analytic moment Gram.
RunManifest run_conditioning_study(const ExperimentConfig& config);

// Seed-variance studies of both surrogate families at the configured
// perturbation levels, with per-seed open-loop prediction overlays.
RunManifest run_variance_study(const ExperimentConfig& config);

// The optimal-control comparison: sampled-LTV optimization from random
// initial controls versus optimization on frozen surrogates trained around
// the found optimum, all scored by true-plant cost.
RunManifest run_control_bench(const ExperimentConfig& config);

// Renders SVG charts from whichever known CSV artifacts the source manifest
// lists; missing ones are recorded and skipped.
RunManifest emit_plots(const ExperimentConfig& config,
                       const RunManifest& source);

// Dispatches one CLI subcommand, writes root/manifest.json, and returns the
// process exit code: 0 ok, 2 config error, 3 experiment failure.
int run_subcommand(const std::string& name, const ExperimentConfig& config);

}  // namespace optlab
