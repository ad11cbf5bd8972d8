#include <cstddef>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "jdsvd/csv.hpp"
#include "jdsvd/diagnostics.hpp"
#include "jdsvd/matrix_market.hpp"
#include "jdsvd/solver.hpp"

namespace {

struct RunSpec {
  std::string matrix;
  jdsvd::SolverConfig cfg;
  std::string history_out;
  std::string result_out;
  std::string verify_out;
  std::string vectors_out;
  bool parallel = false;
};

void add_common_flags(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--matrix", spec.matrix, "MatrixMarket file to load")->required();
  cmd->add_option("--tau", spec.cfg.tau, "target value; triplets closest to it are computed");
  cmd->add_option("--num", spec.cfg.num_triplets, "number of triplets to compute");
  std::map<std::string, jdsvd::Variant> variants{
      {"h", jdsvd::Variant::Harmonic}, {"rh", jdsvd::Variant::RefinedHarmonic}};
  cmd->add_option("--variant", spec.cfg.variant, "extraction variant: h or rh")
      ->transform(CLI::CheckedTransformer(variants, CLI::ignore_case));
  cmd->add_option("--tol", spec.cfg.tol, "outer convergence tolerance, relative to the matrix 1-norm");
  cmd->add_option("--max-dim", spec.cfg.max_dim, "per-side search dimension triggering a restart");
  cmd->add_option("--restart-keep", spec.cfg.restart_keep, "pairs kept at a restart");
  cmd->add_option("--max-inner", spec.cfg.max_inner, "inner iteration cap, 0 means 2(M+N)");
  cmd->add_option("--max-outer", spec.cfg.max_outer, "outer iteration cap");
  cmd->add_option("--seed", spec.cfg.seed, "seed for the randomized fallback directions");
}

void add_inner_flags(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--eps-tilde", spec.cfg.eps_tilde,
                  "relative inner accuracy target driving the inner tolerance");
  std::map<std::string, jdsvd::InnerMode> modes{
      {"inexact", jdsvd::InnerMode::Inexact}, {"iter-exact", jdsvd::InnerMode::IterExact}};
  cmd->add_option("--inner-mode", spec.cfg.inner_mode,
                  "inexact (tolerance from --eps-tilde) or iter-exact (fixed 1e-14)")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
}

void print_summary(const jdsvd::SolveResult& result) {
  for (std::size_t i = 0; i < result.triplets.size(); ++i)
    std::cout << "theta[" << (i + 1)
              << "] = " << jdsvd::format_double(result.triplets[i].theta)
              << ", resnorm = " << jdsvd::format_double(result.triplets[i].resnorm)
              << "\n";
  std::cout << "I_out = " << result.outer_iterations
            << ", I_in = " << result.inner_iterations
            << ", seconds = " << jdsvd::format_double(result.seconds) << "\n";
}

int cmd_solve(const RunSpec& spec) {
  jdsvd::SparseMatrix a = jdsvd::load_matrix_market(spec.matrix);
  jdsvd::SolveResult result = jdsvd::solve(a, spec.cfg);
  if (!spec.history_out.empty()) jdsvd::write_history_csv(spec.history_out, result.history);
  if (!spec.result_out.empty()) jdsvd::write_result_csv(spec.result_out, result.triplets);
  if (!spec.vectors_out.empty()) jdsvd::write_vector_dump(spec.vectors_out, result.triplets);
  print_summary(result);
  if (!result.converged) {
    std::cerr << "did not converge within " << spec.cfg.max_outer << " outer iterations\n";
    return 2;
  }
  return 0;
}

int cmd_mimic(const RunSpec& spec) {
  jdsvd::SparseMatrix a = jdsvd::load_matrix_market(spec.matrix);

  struct Mode {
    std::string label;
    jdsvd::SolverConfig cfg;
    jdsvd::SolveResult result;
    std::exception_ptr error;
  };
  std::vector<Mode> modes(3);
  modes[0].label = "eps=1e-3";
  modes[1].label = "eps=1e-4";
  modes[2].label = "iter-exact";
  for (Mode& mode : modes) mode.cfg = spec.cfg;
  modes[0].cfg.inner_mode = jdsvd::InnerMode::Inexact;
  modes[0].cfg.eps_tilde = 1e-3;
  modes[1].cfg.inner_mode = jdsvd::InnerMode::Inexact;
  modes[1].cfg.eps_tilde = 1e-4;
  modes[2].cfg.inner_mode = jdsvd::InnerMode::IterExact;

  auto run_mode = [&a](Mode& mode) {
    try {
      mode.result = jdsvd::solve(a, mode.cfg);
    } catch (...) {
      mode.error = std::current_exception();
    }
  };
  if (spec.parallel) {
    std::vector<std::thread> workers;
    for (Mode& mode : modes) workers.emplace_back(run_mode, std::ref(mode));
    for (std::thread& w : workers) w.join();
  } else {
    for (Mode& mode : modes) run_mode(mode);
  }
  for (Mode& mode : modes)
    if (mode.error) std::rethrow_exception(mode.error);

  std::cout << "mode,I_out,I_in,seconds,converged\n";
  for (const Mode& mode : modes)
    std::cout << mode.label << ',' << mode.result.outer_iterations << ','
              << mode.result.inner_iterations << ','
              << jdsvd::format_double(mode.result.seconds) << ','
              << (mode.result.converged ? 1 : 0) << "\n";

  const jdsvd::SolveResult& exact = modes[2].result;
  for (std::size_t i = 0; i < 2; ++i) {
    const jdsvd::SolveResult& inexact = modes[i].result;
    std::cout << "ratio " << modes[i].label << ": I_out "
              << jdsvd::format_double(static_cast<double>(inexact.outer_iterations) /
                                      static_cast<double>(exact.outer_iterations))
              << ", I_in "
              << jdsvd::format_double(static_cast<double>(inexact.inner_iterations) /
                                      static_cast<double>(exact.inner_iterations))
              << "\n";
  }
  for (const Mode& mode : modes)
    if (!mode.result.converged) {
      std::cerr << mode.label << " did not converge within " << spec.cfg.max_outer
                << " outer iterations\n";
      return 2;
    }
  return 0;
}

int cmd_verify(const RunSpec& spec) {
  jdsvd::SparseMatrix a = jdsvd::load_matrix_market(spec.matrix);
  jdsvd::VerifyResult vr = jdsvd::verify_run(a, spec.cfg);
  std::vector<jdsvd::VerificationRow> rows = jdsvd::collect_rows(vr.records);
  if (!spec.verify_out.empty()) jdsvd::write_verification_csv(spec.verify_out, rows);
  if (!spec.history_out.empty()) jdsvd::write_history_csv(spec.history_out, vr.solve.history);

  std::size_t asserted = 0, failures = 0;
  for (const jdsvd::VerificationRow& row : rows) {
    if (row.hypothesis_met) ++asserted;
    if (row.hypothesis_met && !row.pass) ++failures;
  }
  std::cout << "iterations instrumented = " << vr.records.size()
            << ", rows = " << rows.size() << ", asserted = " << asserted
            << ", failures = " << failures << "\n";
  print_summary(vr.solve);

  std::optional<jdsvd::HardFailure> failure = jdsvd::first_hard_failure(vr.records);
  if (failure) {
    std::cerr << "verification failed: " << failure->name << " at outer iteration "
              << failure->outer << "\n";
    return 2;
  }
  if (!vr.solve.converged) {
    std::cerr << "did not converge within " << spec.cfg.max_outer << " outer iterations\n";
    return 2;
  }
  std::cout << "verification passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial SVD of a sparse matrix near a target value"};
  app.require_subcommand(1);

  RunSpec solve_spec, mimic_spec, verify_spec;

  CLI::App* solve_cmd =
      app.add_subcommand("solve", "compute triplets and write result/history CSV");
  add_common_flags(solve_cmd, solve_spec);
  add_inner_flags(solve_cmd, solve_spec);
  solve_cmd->add_option("--history-out", solve_spec.history_out, "per-iteration CSV path");
  solve_cmd->add_option("--result-out", solve_spec.result_out, "triplet CSV path");
  solve_cmd->add_option("--vectors-out", solve_spec.vectors_out,
                        "binary dump of the singular vectors");

  CLI::App* mimic_cmd = app.add_subcommand(
      "mimic", "run eps-tilde 1e-3, 1e-4 and iter-exact on one problem and compare");
  add_common_flags(mimic_cmd, mimic_spec);
  mimic_cmd->add_flag("--parallel", mimic_spec.parallel, "run the three modes concurrently");

  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "instrumented desk-scale run checking the accuracy theory");
  add_common_flags(verify_cmd, verify_spec);
  add_inner_flags(verify_cmd, verify_spec);
  verify_cmd->add_option("--verify-out", verify_spec.verify_out, "verification CSV path");
  verify_cmd->add_option("--history-out", verify_spec.history_out,
                         "per-iteration CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(solve_cmd)) return cmd_solve(solve_spec);
    if (app.got_subcommand(mimic_cmd)) return cmd_mimic(mimic_spec);
    return cmd_verify(verify_spec);
  } catch (const jdsvd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const jdsvd::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
