use std::time::Instant;

use citnet_model::gradsuite::{op_names, run_cases, select, worst_per_op, STEP, TOLERANCE};

use crate::args::GradcheckArgs;
use crate::error::{CliError, Result};

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    // Central differences at this step size only resolve 1e-4 in double precision.
    if a.precision != 64 {
        return Err(CliError::usage(format!("--precision {} is not supported; the suite runs at 64", a.precision)));
    }
    let cases = select(&a.ops)
        .map_err(|bad| CliError::usage(format!("unknown op(s) {}; known: all, {}", bad.join(", "), op_names().join(", "))))?;
    let clock = Instant::now();
    let results = run_cases(&cases);
    let worst = worst_per_op(&results);
    let width = worst.iter().map(|w| w.0.len()).max().unwrap_or(2).max(2);
    println!("{:<width$}  {:>12}  result", "op", "max rel err");
    for (op, err, ok) in &worst {
        let e = err.map_or_else(|| "error".to_string(), |e| format!("{e:.3e}"));
        println!("{op:<width$}  {e:>12}  {}", if *ok { "PASS" } else { "FAIL" });
    }
    for r in results.iter().filter(|r| !r.passed()) {
        match &r.outcome {
            Ok(rep) => eprintln!("{}/{}: relative error {:.3e} (abs {:.3e})", r.op, r.name, rep.max_rel_error, rep.max_abs_error),
            Err(e) => eprintln!("{}/{}: {e}", r.op, r.name),
        }
    }
    println!(
        "{} cases, step {STEP:e}, tolerance {TOLERANCE:e}, {:.1}s",
        results.len(),
        clock.elapsed().as_secs_f64()
    );
    let failed = worst.iter().filter(|w| !w.2).count();
    if failed > 0 {
        return Err(CliError::verify(format!("{failed} op(s) failed the gradient check")));
    }
    Ok(())
}
