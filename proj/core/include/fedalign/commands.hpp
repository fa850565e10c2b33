#pragma once

#include <iosfwd>

#include "fedalign/config.hpp"
#include "fedalign/gradcheck.hpp"

namespace fedalign {

// ---------------------------------------------------------------------------
// Command implementations behind the CLI subcommands.  Each takes a parsed,
// validated config, writes its artifacts under cfg.output_dir, logs
// human-readable progress to `out`, diagnostics to `err`, and returns the
// process exit code (0 iff all enabled checks passed).  On failure, partial
// output files are removed.  Re-running with an identical config produces
// byte-identical payload files; timestamps live only in manifest.json.
// ---------------------------------------------------------------------------

// Full training run: writes rounds.jsonl, metrics.csv, model.json,
// manifest.json (and assumptions.json when enabled).
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Paired runs over compare.seeds: the backprop arm against the
// feedback-alignment arm (plus the random-feedback and no-rescale arms when
// compare.ablations is set).  Writes compare.csv, summary.json, manifest.json.
int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Finite-difference gradient oracle; prints the report and fails on
// tolerance breach (1e-6 gradient, 1e-12 collapse).  No files written.
int cmd_gradcheck(const GradCheckOptions& options, std::ostream& out, std::ostream& err);

// Trace-mode bound verification on exactly two clients: runs the backprop,
// feedback, and no-rescale arms, checks every recorded prefix bound, and
// writes bound_report.csv + manifest.json.  Fails if any bound is violated.
// Forces the plain-SGD regime the bound derivation assumes (momentum 0,
// weight decay 0, plain averaging, full participation, trace mode, feedback
// fixed on the top layer); notices are printed when this overrides the file.
int cmd_boundcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Builds the configured partition and dumps shard membership (partition.json)
// plus a per-client class histogram summary.
int cmd_partition(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace fedalign
