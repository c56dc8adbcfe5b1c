#pragma once

#include <iosfwd>
#include <string>

#include "robglm/cml.hpp"
#include "robglm/family.hpp"
#include "robglm/rqr.hpp"

namespace robglm {

// JSON documents with stable key order and round-trippable numbers.
std::string fit_report_json(const FitReport& report);
std::string ml_report_json(const MlResult& ml, const FamilySpec& fam);
std::string diagnostics_json(const RqrDiagnostics& diag, const ThetaEstimate& theta);

// Sorted residuals against uniform plotting positions (i - 0.5)/n, the
// coordinates of a qq plot against the null distribution of the residuals.
std::string qq_csv(const RqrDiagnostics& diag);

// Command-line front end (subcommands: fit, diagnose, simulate).  Returns
// the process exit code: 0 success, 1 error (message on `err`), 2 finished
// but a divergence flag was raised (details on `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace robglm
