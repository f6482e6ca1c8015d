#pragma once

#include <string>

#include "hglm/fit.hpp"
#include "hglm/model.hpp"
#include "hglm/predict.hpp"
#include "hglm/profile.hpp"
#include "hglm/uncert.hpp"

namespace hglm {

// Round-trippable formatting: 17 significant digits.
std::string fmt17(double x);

// Writes via a temp file in the same directory plus rename.
void atomic_write_file(const std::string& path, const std::string& content);

// FitResult as a JSON document: estimates, criterion values, SEs, the
// convergence block, and an echo of the options used.
std::string fit_summary_json(const ModelSpec& model, const FitResult& result,
                             const VarDecomp& decomp, const FitOptions& options);

// effect_index, group_label, v_hat, se_eb, se_hlik, ci_low, ci_high.
std::string random_effects_csv(const ModelSpec& model, const FitResult& result,
                               const VarDecomp& decomp, double level);

// param_value, aphl_value, converged, then one column per nuisance component.
std::string profile_curve_csv(const ProfileCurve& curve);

// v plus one mass column per method.
std::string predictive_csv(const std::vector<PredictiveDist>& dists);

std::string coverage_csv(const CoverageReport& report);
std::string coverage_meta_json(const SimConfig& config, const CoverageReport& report);

}  // namespace hglm
