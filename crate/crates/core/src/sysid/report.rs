use std::fmt::Write as _;

use super::solve::FitResult;

impl FitResult {
    /// Plain-text summary: termination, cost trace, fitted parameters with
    /// standard-error proxies, and parameters that could not be identified.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "system identification fit");
        let _ = writeln!(out, "samples: {}", self.sample_count);
        let _ = writeln!(out, "residuals: {}", self.residual_dim);
        let _ = writeln!(out, "iterations: {}", self.iterations);
        let _ = writeln!(out, "termination: {:?}", self.termination);
        let _ = writeln!(out, "cost: {:.6e} -> {:.6e}", self.initial_cost(), self.cost());
        let _ = writeln!(out);
        let _ = writeln!(out, "cost trace (accepted steps):");
        for (i, c) in self.cost_trace.iter().enumerate() {
            let _ = writeln!(out, "  {i:>4}  {c:.9e}");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<24} {:>14} {:>14} {:>12} {:>12} {:>12}",
            "parameter", "initial", "fitted", "sd_diag", "sd_marginal", "sensitivity"
        );
        for (i, key) in self.free.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<24} {:>14.8} {:>14.8} {:>12.3e} {:>12.3e} {:>12.3e}",
                key,
                self.initial_values[i],
                self.values[i],
                self.std_diag[i],
                self.std_marginal[i],
                self.sensitivity[i]
            );
        }
        if self.non_identifiable.is_empty() {
            let _ = writeln!(out, "\nall parameters identifiable");
        } else {
            let _ = writeln!(
                out,
                "\nnot identifiable from this run (held at initial value): {}",
                self.non_identifiable.join(", ")
            );
        }
        out
    }
}
