use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nfcrb::closedform::{array_gain, crb_alpha_exact, element_ranges, relative_error, Approximations};
use nfcrb::experiments::{evaluate_point, run_sweep, BoundMode, Quantity};
use nfcrb::scene::{fresnel_bounds, isi_margin, lambda_sums, subcarrier_grid, OfdmGrid, Scene, UlaSpec};
use nfcrb::Error;

use crate::config::Resolved;
use crate::CliError;

const PARAMETERS: [&str; 6] = ["x", "y", "vx", "vy", "alpha_r", "alpha_i"];

fn numerical(e: Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into())
}

fn fresnel_line(out: &mut String, side: &str, array: &UlaSpec, lambda_c: f64) {
    match fresnel_bounds(array.aperture(), lambda_c) {
        Ok(f) => {
            out.push_str(&format!("fresnel_{side}_reactive_m = {:e}\n", f.reactive_m));
            out.push_str(&format!("fresnel_{side}_radiative_m = {:e}\n", f.radiative_m));
        }
        Err(_) => out.push_str(&format!("fresnel_{side}_reactive_m = -\nfresnel_{side}_radiative_m = -\n")),
    }
}

fn exact_for(q: Quantity, conditional: &[f64; 6], full: Option<&[f64; 6]>, mode: BoundMode) -> Option<f64> {
    match mode {
        BoundMode::Conditional => Some(q.pick(conditional)),
        BoundMode::Full => full.map(|b| q.pick(b)),
    }
}

fn approx_for(q: Quantity, a: &Approximations) -> (f64, Option<f64>) {
    match q {
        Quantity::Alpha => (a.alpha_ff, a.alpha_nf),
        Quantity::X => (a.x_ff, Some(a.x_nf)),
        Quantity::Y => (a.y_ff, Some(a.y_nf)),
        Quantity::Vx => (a.vx_ff, Some(a.vx_nf)),
        Quantity::Vy => (a.vy_ff, Some(a.vy_nf)),
    }
}

fn scene_of(resolved: &Resolved) -> Result<(Scene, OfdmGrid), CliError> {
    let grid = resolved.scenario.grid;
    grid.validate().map_err(|e| CliError::Config(format!("invalid grid: {e}")))?;
    let scene = resolved
        .scenario
        .template
        .build(&grid, None, None)
        .map_err(|e| CliError::Config(format!("invalid scene: {e}")))?;
    Ok((scene, grid))
}

/// Report for one scene. Fails with the null-space parameters when the full
/// inverse does not exist.
pub fn compute_report(resolved: &Resolved) -> Result<String, CliError> {
    let (scene, grid) = scene_of(resolved)?;
    let mode = resolved.scenario.bound_mode;
    let eval =
        evaluate_point(&scene, &grid, resolved.scenario.symbols, resolved.scenario.closed_form).map_err(numerical)?;
    if let Some(names) = &eval.report.singular {
        return Err(CliError::Numerical(format!(
            "singular Fisher information, null space involves: {}",
            names.join(", ")
        )));
    }
    let fim = &eval.fim;
    let ev = fim.eigenvalues();

    let sub = subcarrier_grid(&grid).map_err(numerical)?;
    let sums = lambda_sums(&sub.wavelengths).map_err(numerical)?;
    let lambda_c = grid.carrier_wavelength();
    let k = grid.n_subcarriers as f64;
    let isi = isi_margin(&scene, &grid);

    let mut out = String::new();
    let mut kv = |key: &str, value: String| out.push_str(&format!("{key} = {value}\n"));
    kv("targets", scene.n_targets().to_string());
    kv("n_tx", scene.tx().n_elements().to_string());
    kv("n_rx", scene.rx().n_elements().to_string());
    kv("monostatic", scene.is_monostatic().to_string());
    kv("t_sym_s", format!("{:e}", grid.t_sym()));
    kv("bandwidth_hz", format!("{:e}", grid.bandwidth_hz()));
    kv("lambda_c_m", format!("{lambda_c:e}"));
    kv("lambda2_sum", format!("{:e}", sums.lambda2));
    kv("k_lambda_c2", format!("{:e}", k * lambda_c * lambda_c));
    kv("lambda4_sum", format!("{:e}", sums.lambda4));
    kv("k_lambda_c4", format!("{:e}", k * lambda_c.powi(4)));
    kv("isi_delay_spread_s", format!("{:e}", isi.delay_spread_s));
    kv("isi_cp_s", format!("{:e}", isi.cp_s));
    kv("isi_margin_s", format!("{:e}", isi.cp_s - isi.delay_spread_s));
    kv("isi_ok", isi.ok.to_string());
    kv("condition_number", format!("{:e}", eval.report.condition_number));
    kv("near_singular", eval.report.near_singular.to_string());
    kv("fim_min_eig", format!("{:e}", ev[0]));
    kv("fim_max_eig", format!("{:e}", ev[ev.len() - 1]));
    kv("fim_symmetric_psd", fim.is_symmetric_psd().to_string());
    fresnel_line(&mut out, "tx", scene.tx(), lambda_c);
    fresnel_line(&mut out, "rx", scene.rx(), lambda_c);

    out.push_str("\n# bound target parameter conditional full\n");
    for (q, t) in eval.report.targets.iter().enumerate() {
        for (i, name) in PARAMETERS.iter().enumerate() {
            out.push_str(&format!("bound {q} {name} {:e} {}\n", t.conditional[i], opt(t.full.map(|f| f[i]))));
        }
    }

    if let Some(approximations) = &eval.approximations {
        out.push_str(&format!("\n# approx target quantity exact_{mode} ff nf relerr_ff relerr_nf\n"));
        for (q, (t, a)) in eval.report.targets.iter().zip(approximations).enumerate() {
            for quantity in Quantity::ALL {
                let exact = exact_for(quantity, &t.conditional, t.full.as_ref(), mode);
                let (ff, nf) = approx_for(quantity, a);
                let err = |v: Option<f64>| match (v, exact) {
                    (Some(v), Some(e)) => relative_error(v, e).ok(),
                    _ => None,
                };
                out.push_str(&format!(
                    "approx {q} {quantity} {} {ff:e} {} {} {}\n",
                    opt(exact),
                    opt(nf),
                    opt(err(Some(ff))),
                    opt(err(nf))
                ));
            }
        }
        out.push('\n');
        for (q, target) in scene.targets().iter().enumerate() {
            let g_tx = array_gain(lambda_c, &element_ranges(scene.tx(), target.position)).map_err(numerical)?.g;
            let g_rx = array_gain(lambda_c, &element_ranges(scene.rx(), target.position)).map_err(numerical)?.g;
            let exact = crb_alpha_exact(&grid, scene.noise_power_w(), g_tx, g_rx).map_err(numerical)?;
            out.push_str(&format!("alpha_closed_form[{q}] = {exact:e}\n"));
        }
    }
    Ok(out)
}

pub fn cmd_compute(resolved: &Resolved) -> Result<(), CliError> {
    let report = compute_report(resolved)?;
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}{report}", resolved.echo_block())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Config(format!("cannot write output: {e}")))
}

pub fn cmd_sweep(resolved: &Resolved, out: Option<&Path>, workers: Option<usize>) -> Result<(), CliError> {
    eprint!("{}", resolved.echo_block());
    resolved.scenario.validate().map_err(|e| CliError::Config(format!("invalid sweep: {e}")))?;
    let result = run_sweep(&resolved.scenario, workers).map_err(|e| CliError::Config(format!("invalid sweep: {e}")))?;
    let written = match out {
        Some(path) => {
            File::create(path).map(BufWriter::new).and_then(|mut w| result.write_csv(&mut w).and_then(|_| w.flush()))
        }
        None => result.write_csv(io::stdout().lock()),
    };
    written.map_err(|e| CliError::Config(format!("cannot write CSV: {e}")))
}
