//! Acceptance run: one PASS/FAIL line per criterion, with the measured numbers.
//!
//! Run with `cargo test -p phaselift --test acceptance -- --nocapture` (the
//! target has no libtest harness, so output always shows).

use phaselift::assembly::{
    assemble, assemble_schrodinger, basis_on_grid, build_velocity_quadrature, dilate_to_hermitian, rhs_from_initial,
    AssemblyOptions, LinearSystem, SchrodingerStepper,
};
use phaselift::coeff::{sample_inputs, CoefficientModel, SampleSet, SamplingLaw};
use phaselift::costmodel::{
    advantage_exponents, classical_costs, formulas, printed_threshold, Base, CostParams, Expr, PowerProduct, Regime,
};
use phaselift::grid::{check_cfl, GridBuilder, Kind, PhaseSpaceGrid, XBoundary};
use phaselift::lift::{
    ensemble_variance_advection, lift_initial, lift_initial_complex, recover_boltzmann_moments, recover_mean,
    InitialCondition, LiftedField, Quantity,
};
use phaselift::observables::{build_readout, expectation_quadratic, normalization_constants};
use phaselift::solve::{
    ensemble_direct, march_explicit, march_trapezoidal_schrodinger, solve_direct_sample, Record,
};
use phaselift::spectral::{
    dense_hermitian_eigenvalues, dense_singular_values, kappa_ratio_window, sparsity_count, spectral_report,
    IterationOptions,
};
use phaselift::{Scalar, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = Result<(bool, String), String>;

fn rel_l2<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool").install(f)
}

fn lifted_real(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &InitialCondition,
    g: &PhaseSpaceGrid,
    record: Record,
) -> Result<LiftedField<f64>, String> {
    let basis = basis_on_grid(model, g).map_err(e)?;
    let quad = match g.kind {
        Kind::Boltzmann => Some(build_velocity_quadrature(g.n_ord).map_err(e)?),
        _ => None,
    };
    let mut sys = assemble(g, &basis, quad.as_ref(), &AssemblyOptions::default()).map_err(e)?;
    let lifted = lift_initial(model, samples, data, g).map_err(e)?;
    rhs_from_initial(&mut sys, &lifted).map_err(e)?;
    march_explicit(&sys, g.n_t, record).map_err(e)
}

// 1 -------------------------------------------------------------------------

fn heat_error(n: usize, model: &CoefficientModel, samples: &SampleSet) -> Result<f64, String> {
    let t = 0.1;
    let g = GridBuilder::new(Kind::Heat, 1, 1).n(n).n_p(n).p_max(6.0).t_final(t).build().map_err(e)?;
    let data = InitialCondition::SineProduct { modes: vec![1] };
    let traj = lifted_real(model, samples, &data, &g, Record::Last)?;
    let mean = recover_mean(&traj, g.n_t).map_err(e)?;
    let exact: Vec<f64> = (0..g.x_cells())
        .map(|j| {
            let x = g.x_point(j)[0];
            let damp: f64 = samples.samples.iter().map(|z| (-z[0] * PI * PI * t).exp()).sum::<f64>();
            damp / samples.m() as f64 * (PI * x).sin()
        })
        .collect();
    Ok(rel_l2(&mean.values, &exact))
}

fn criterion_1() -> Outcome {
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    // default law and seed decide the verdict; collocation nodes are reported alongside
    let samples = sample_inputs(&model, 4, 0, &SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }).map_err(e)?;
    let start = Instant::now();
    let e64 = single_thread(|| heat_error(64, &model, &samples))?;
    let secs = start.elapsed().as_secs_f64();
    let e128 = heat_error(128, &model, &samples)?;
    let rate = e128 / e64;
    let nodes = sample_inputs(&model, 4, 0, &SamplingLaw::Collocation { lo: 0.5, hi: 1.5 }).map_err(e)?;
    let c64 = heat_error(64, &model, &nodes)?;
    let c128 = heat_error(128, &model, &nodes)?;
    let pass = e64 < 0.10 && (0.3..=0.8).contains(&rate) && secs < 60.0;
    Ok((
        pass,
        format!(
            "uniform seed 0: err(N=64) = {e64:.4}, err(N=128)/err(N=64) = {rate:.3}, single-thread N=64 run {secs:.2} s; \
             collocation nodes: err(N=64) = {c64:.4}, ratio {:.3}",
            c128 / c64
        ),
    ))
}

// 2 -------------------------------------------------------------------------

fn min_time(reps: usize, mut f: impl FnMut() -> Result<(), String>) -> Result<f64, String> {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

fn criterion_2() -> Outcome {
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    let g = GridBuilder::new(Kind::Heat, 1, 1).n(48).n_p(48).p_max(6.0).t_final(0.05).build().map_err(e)?;
    let data = InitialCondition::SineProduct { modes: vec![1] };
    let basis = basis_on_grid(&model, &g).map_err(e)?;
    let ms = [1usize, 16, 256];
    let mut lifted = Vec::new();
    let mut direct_t = Vec::new();
    for &m in &ms {
        let samples = sample_inputs(&model, m, 7, &SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }).map_err(e)?;
        lifted.push(lift_initial(&model, &samples, &data, &g).map_err(e)?);
        direct_t.push(single_thread(|| {
            min_time(3, || ensemble_direct(&model, &samples, &data, &g, g.n_t, 1.0).map(|_| ()).map_err(e))
        })?);
    }
    let sizes = lifted.iter().map(|f| f.slice(0).map(<[f64]>::len)).collect::<Result<Vec<_>, _>>().map_err(e)?;
    // round-robin over M so that machine drift hits every M alike
    let mut lifted_t = vec![f64::INFINITY; ms.len()];
    for _ in 0..7 {
        for (t, field) in lifted_t.iter_mut().zip(&lifted) {
            let once = single_thread(|| {
                min_time(1, || {
                    let mut sys = assemble(&g, &basis, None, &AssemblyOptions::default()).map_err(e)?;
                    rhs_from_initial(&mut sys, field).map_err(e)?;
                    march_explicit(&sys, g.n_t, Record::Last).map(|_| ()).map_err(e)
                })
            })?;
            *t = t.min(once);
        }
    }
    let lo = lifted_t.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lifted_t.iter().cloned().fold(0.0, f64::max);
    let spread = hi / lo - 1.0;
    let same_size = sizes.iter().all(|s| *s == sizes[0]);
    // least-squares slope of log t against log M
    let xs: Vec<f64> = ms.iter().map(|m| (*m as f64).ln()).collect();
    let ys: Vec<f64> = direct_t.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let pass = spread < 0.05 && same_size && (0.8..=1.2).contains(&slope);
    Ok((
        pass,
        format!(
            "lifted solve times {:?} s (spread {:.1}%), state size {} for all M: {same_size}, direct slope {slope:.3}",
            lifted_t.iter().map(|t| (t * 1e4).round() / 1e4).collect::<Vec<_>>(),
            spread * 100.0,
            sizes[0]
        ),
    ))
}

// 3 -------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [4usize, 8] {
        let h = 1.0 / n as f64;
        let steps = 4;
        // dp = h, so tau = h^3 / 4 puts tau/(h^2 dp) at 1/4
        let g = GridBuilder::new(Kind::Heat, 1, 1)
            .n(n)
            .n_p(n)
            .p_max_matching_h()
            .t_final(steps as f64 * h.powi(3) / 4.0)
            .steps(steps)
            .build()
            .map_err(e)?;
        let lambda = check_cfl(&g).ratio;
        let basis = basis_on_grid(&CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?, &g).map_err(e)?;
        let sys = assemble(&g, &basis, None, &AssemblyOptions::default()).map_err(e)?;
        let l = sys.matrix_l();
        let hm = dilate_to_hermitian(&l);
        let s = sparsity_count(&hm);
        let sv = dense_singular_values(&l);
        let smin = *sv.last().unwrap();
        let eig = dense_hermitian_eigenvalues(&hm);
        let hmax = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ok = s <= 7 && smin >= g.tau && hmax <= 2.0;
        pass &= ok;
        notes.push(format!(
            "N={n}: lambda={lambda:.6}, s={s}, sigma_min={smin:.6e} vs tau={:.6e}, sigma_max(H)={hmax:.6}",
            g.tau
        ));
    }
    Ok((pass, notes.join("; ")))
}

// 4 -------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    let samples = sample_inputs(&model, 4, 3, &SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }).map_err(e)?;
    let g = GridBuilder::new(Kind::Boltzmann, 1, 1)
        .n(16)
        .n_p(16)
        .n_ord(2)
        .p_max(4.0)
        .t_final(0.5)
        .x_boundary(XBoundary::Periodic)
        .build()
        .map_err(e)?;
    let data = InitialCondition::Box { lo: 0.25, hi: 0.5 };
    let traj = lifted_real(&model, &samples, &data, &g, Record::All)?;
    let tq = build_velocity_quadrature(g.n_ord).map_err(e)?.tensor(g.d);
    let np = g.p_cells();
    let weight = |i: usize| tq.weights[(i / np) % tq.weights.len()];
    let mass = |s: &[f64]| s.iter().enumerate().map(|(i, v)| weight(i) * v).sum::<f64>() * g.h * g.dp;
    let norm = |s: &[f64]| (s.iter().enumerate().map(|(i, v)| weight(i) * v * v).sum::<f64>() * g.h * g.dp).sqrt();
    let m0 = mass(traj.slice(0).map_err(e)?);
    let n0 = norm(traj.slice(0).map_err(e)?);
    let mut drift = 0.0f64;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut prev = n0;
    for n in 1..=g.n_t {
        let s = traj.slice(n).map_err(e)?;
        drift = drift.max(((mass(s) - m0) / m0).abs());
        let cur = norm(s);
        worst_rise = worst_rise.max((cur - prev) / n0);
        prev = cur;
    }
    let pass = drift <= 1e-10 && worst_rise <= 1e-10;
    Ok((pass, format!("{} steps: mass drift {drift:.2e}, largest per-step norm change {worst_rise:.2e}", g.n_t)))
}

// 5 -------------------------------------------------------------------------

fn readout_grid(kind: Kind) -> Result<PhaseSpaceGrid, String> {
    let b = GridBuilder::new(kind, 1, 1).n(6).n_p(4).n_q(4).p_max(2.0).steps(3).t_final(1e-3);
    match kind {
        Kind::Boltzmann => b.n_ord(2).build(),
        _ => b.build(),
    }
    .map_err(e)
}

fn random_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::from_parts(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn readout_trial<T: Scalar>(g: &PhaseSpaceGrid, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let steps = 3;
    let bs = g.state_size();
    let traj: Vec<T> = random_vec(rng, steps * bs);
    let n = rng.gen_range(1..=steps);
    let j = rng.gen_range(0..g.x_cells());
    let q = if g.kind == Kind::Boltzmann { Quantity::Density } else { Quantity::Mean };
    let r = build_readout(q, n, j, g, steps).map_err(e)?;
    let lhs = expectation_quadratic(&traj, &r).map_err(e)?;
    let mut field = LiftedField::new(g.clone());
    field.insert(n, traj[(n - 1) * bs..n * bs].to_vec()).map_err(e)?;
    let value: C64 = if g.kind == Kind::Boltzmann {
        let re: Vec<f64> = traj[(n - 1) * bs..n * bs].iter().map(|v| v.re()).collect();
        let mut f = LiftedField::new(g.clone());
        f.insert(n, re).map_err(e)?;
        C64::new(recover_boltzmann_moments(&f, n).map_err(e)?[0].values[j], 0.0)
    } else {
        recover_mean(&field, n).map_err(e)?.values[j].to_c64()
    };
    let rhs = r.normalization_factor * value.norm_sqr();
    Ok((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for kind in [Kind::Heat, Kind::Boltzmann, Kind::Advection, Kind::Schrodinger] {
        let g = readout_grid(kind)?;
        for _ in 0..100 {
            let err = match kind {
                Kind::Schrodinger => readout_trial::<C64>(&g, &mut rng)?,
                _ => readout_trial::<f64>(&g, &mut rng)?,
            };
            worst = worst.max(err);
        }
    }
    // flux of fields even in v
    let g = readout_grid(Kind::Boltzmann)?;
    let nv = g.mid_cells();
    let np = g.p_cells();
    let mut flux_worst = 0.0f64;
    for _ in 0..100 {
        let half: Vec<f64> = random_vec(&mut rng, g.state_size());
        let mut sym = half.clone();
        for j in 0..g.x_cells() {
            for l in 0..nv {
                for k in 0..np {
                    sym[(j * nv + l) * np + k] = half[(j * nv + l.min(nv - 1 - l)) * np + k];
                }
            }
        }
        let j = rng.gen_range(0..g.x_cells());
        let r = build_readout(Quantity::Flux, 1, j, &g, 1).map_err(e)?;
        flux_worst = flux_worst.max(expectation_quadratic(&sym, &r).map_err(e)?);
    }
    let pass = worst <= 1e-12 && flux_worst <= 1e-12;
    Ok((pass, format!("worst relative readout mismatch {worst:.2e} over 400 trajectories, worst symmetric flux {flux_worst:.2e}")))
}

// 6 -------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    let samples = sample_inputs(&model, 4, 6, &SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }).map_err(e)?;
    let mut point = Vec::new();
    let mut ratio = Vec::new();
    let mut pass = true;
    for n in [16usize, 32, 64] {
        let g = GridBuilder::new(Kind::Heat, 1, 1).n(n).n_p(n).p_max(6.0).steps(1).build().map_err(e)?;
        let p = InitialCondition::Point { center: vec![0.5], half_width: 0.25 / n as f64 };
        let bx = InitialCondition::Box { lo: 0.25, hi: 0.74 };
        let np = normalization_constants(lift_initial(&model, &samples, &p, &g).map_err(e)?.slice(0).map_err(e)?, &g, 1.0)
            .map_err(e)?;
        let nb = normalization_constants(lift_initial(&model, &samples, &bx, &g).map_err(e)?.slice(0).map_err(e)?, &g, 1.0)
            .map_err(e)?;
        let target = (nb.beta * n as f64).powi(g.d as i32);
        let r = nb.n0_sq / np.n0_sq / target;
        pass &= (0.5..=2.0).contains(&r) && (nb.beta - 0.5).abs() < 0.1;
        point.push(np.n0_sq);
        ratio.push(r);
    }
    let lo = point.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = point.iter().cloned().fold(0.0, f64::max);
    pass &= hi / lo <= 2.0;
    Ok((
        pass,
        format!("point n0^2 over N=16,32,64: {point:.4?} (max/min {:.3}); box/point over (beta N)^d: {ratio:.3?}", hi / lo),
    ))
}

// 7 -------------------------------------------------------------------------

fn scaling_grid(kind: Kind, n: usize) -> Result<PhaseSpaceGrid, String> {
    // horizons keep the coarse system within the dense cross-check size
    let b = GridBuilder::new(kind, 1, 1).n(n).n_p(n).n_q(n).p_max_matching_h();
    let b = match kind {
        Kind::Heat => b.t_final(1.0 / 16.0),
        Kind::Advection => b.t_final(1.0 / 32.0),
        Kind::Schrodinger => b.t_final(1.0 / 16.0),
        // a wider p-box keeps tau (|v|/h + b/dp) below 1 at tau = h
        Kind::Boltzmann => b.n_ord(1).p_max(4.0).t_final(0.5),
    };
    b.build().map_err(e)
}

fn kappa_for(kind: Kind, n: usize) -> Result<phaselift::spectral::SpectralReport, String> {
    let g = scaling_grid(kind, n)?;
    let basis = basis_on_grid(&CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?, &g).map_err(e)?;
    let opts = IterationOptions::default();
    match kind {
        Kind::Schrodinger => {
            let sys = assemble_schrodinger(&g, &basis, 1.0, SchrodingerStepper::Trapezoidal, &AssemblyOptions::default())
                .map_err(e)?;
            spectral_report(&sys, &opts).map_err(e)
        }
        Kind::Boltzmann => {
            let q = build_velocity_quadrature(g.n_ord).map_err(e)?;
            let sys: LinearSystem<f64> = assemble(&g, &basis, Some(&q), &AssemblyOptions::default()).map_err(e)?;
            spectral_report(&sys, &opts).map_err(e)
        }
        _ => {
            let sys = assemble(&g, &basis, None, &AssemblyOptions::default()).map_err(e)?;
            spectral_report(&sys, &opts).map_err(e)
        }
    }
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (kind, n) in [(Kind::Heat, 4), (Kind::Advection, 4), (Kind::Schrodinger, 4), (Kind::Boltzmann, 8)] {
        // a coarse failure would only repeat, slower, on the fine grid
        let coarse = match kappa_for(kind, n) {
            Ok(r) => r,
            Err(msg) => {
                pass = false;
                notes.push(format!("{kind}: N={n} failed: {msg}"));
                continue;
            }
        };
        let fine = match kappa_for(kind, 2 * n) {
            Ok(r) => r,
            Err(msg) => {
                pass = false;
                notes.push(format!("{kind}: N={} failed: {msg}", 2 * n));
                continue;
            }
        };
        let ratio = fine.kappa / coarse.kappa;
        let (lo, hi) = kappa_ratio_window(kind);
        let dense_ok = [&coarse, &fine].iter().all(|r| r.verdicts.iter().all(|v| v.pass));
        let checked = [&coarse, &fine].iter().filter(|r| r.dense.is_some()).count();
        let ok = (lo..=hi).contains(&ratio) && dense_ok && checked >= 1;
        pass &= ok;
        notes.push(format!(
            "{kind}: kappa {:.3e} -> {:.3e} ratio {ratio:.3} in [{lo}, {hi}], dense checks {checked}/2{}",
            coarse.kappa,
            fine.kappa,
            if dense_ok { "" } else { " (verdict failure)" }
        ));
    }
    Ok((pass, notes.join("; ")))
}

// 8 -------------------------------------------------------------------------

/// The published advantage rows: `(kind, regime, [γ₁..γ₅], b upper bound, parameters)`.
const PUBLISHED_ADVANTAGE: &[(Kind, Regime, [&str; 5], &str, &str)] = &[
    (Kind::Heat, Regime::BelowCrossover, ["1", "(d-7-b)/r-1", "-4-(9+b)/r", "0", "(d-7-b)/r"], "d-7-r", "M, d, eps"),
    (Kind::Heat, Regime::AboveCrossover, ["0", "(d+L-6-b)/r-2", "(d+L-6-b)/3", "0", "(d+L-6-b)/r-1"], "d+L-6-2r", "L, d, eps"),
    (Kind::Boltzmann, Regime::BelowCrossover, ["1", "(d-2-b)/r+1", "-1-(3+d+b)/r", "-3", "(d-2-b)/r-1"], "d-2-2r", "M, d, eps"),
    (Kind::Boltzmann, Regime::AboveCrossoverLGreaterD, ["0", "(d+L-2-b)/r", "(d+L-2-b)/r", "-3", "(d+L-2-b)/r-1"], "d+L-2-2r", "L, d, eps"),
    (Kind::Boltzmann, Regime::AboveCrossoverLLessD, ["0", "(d+L-2-b)/r+1", "(d+L-2-b)/r-1", "-3", "(d+L-2-b)/r-1"], "d+L-2-2r", "L, d, eps"),
    (Kind::Advection, Regime::BelowCrossover, ["1", "(d-8-b)/r-2", "-4-9/r", "0", "(d-8-b)/r-1"], "d-8-2r", "M, d, eps"),
    (Kind::Advection, Regime::AboveCrossover, ["0", "(d+2L-6-b)/r-2", "(d+2L-6-b)/r-2", "0", "(d+2L-6-b)/r-1"], "d+2L-6-2r", "L, d, eps"),
    (Kind::Schrodinger, Regime::BelowCrossover, ["1", "(d+2)/r+2", "0", "-4-(6+b)/r", "(d-4-b)/r-1"], "d-4-r", "M, d, eps"),
    (Kind::Schrodinger, Regime::AboveCrossover, ["0", "0", "0", "(d+2L-4-b)/r-2", "(d+2L-4-b)/r-1"], "d+2L-4-2r", "L, d, eps"),
];

/// Conditions for `Q < Q_orig`, one per kind, over the bases `L, d, d+L, ε`.
fn published_threshold(kind: Kind) -> PowerProduct {
    use Base::*;
    match kind {
        // L^{4+9/r} d^3 (d/ε)^{3/r}
        Kind::Heat => PowerProduct::of(&[(L, "4+9/r"), (D, "3"), (D, "3/r"), (Eps, "-3/r")]),
        // L^{1+(3+d)/r} (d/ε)^{2/r} / (d ε)
        Kind::Boltzmann => PowerProduct::of(&[(L, "1+(3+d)/r"), (D, "2/r"), (Eps, "-2/r"), (D, "-1"), (Eps, "-1")]),
        // L^{4+9/r} d^2 (d/ε)^{8/r}
        Kind::Advection => PowerProduct::of(&[(L, "4+9/r"), (D, "2"), (D, "8/r"), (Eps, "-8/r")]),
        // (d+L)^3 ((d+L)/d)^{1+2/r} ((d+L)/ε)^{4/r}
        Kind::Schrodinger => PowerProduct::of(&[
            (DPlusL, "3"),
            (DPlusL, "1+2/r"),
            (D, "-1-2/r"),
            (DPlusL, "4/r"),
            (Eps, "-4/r"),
        ]),
    }
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut rows_ok = 0;
    for (kind, regime, g, b_hi, adv) in PUBLISHED_ADVANTAGE {
        let row = advantage_exponents(*kind, *regime).map_err(e)?;
        let same = row.gamma.iter().zip(g).all(|(x, s)| Expr::parse(s).map(|p| &p == x).unwrap_or(false))
            && Expr::parse(b_hi).map(|p| p == row.b_range.1).unwrap_or(false)
            && row.b_range.0 == Expr::zero()
            && row.advantage_in == *adv;
        if same {
            rows_ok += 1;
        } else {
            notes.push(format!("advantage row {kind} {regime:?} differs"));
        }
    }
    let mut t2_ok = 0;
    for kind in [Kind::Heat, Kind::Boltzmann, Kind::Advection, Kind::Schrodinger] {
        let derived = formulas(kind).threshold();
        let printed = published_threshold(kind);
        // the printed transcription must at least agree with the library's copy
        if printed != printed_threshold(kind) {
            return Err(format!("printed threshold for {kind} mistranscribed"));
        }
        if derived == printed {
            t2_ok += 1;
        } else {
            notes.push(format!("threshold {kind}: derived M > {derived}, printed M > {printed}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kinds = [Kind::Heat, Kind::Boltzmann, Kind::Advection, Kind::Schrodinger];
    let mut exact = 0;
    for _ in 0..1000 {
        let kind = kinds[rng.gen_range(0..4)];
        let eps = [0.5, 0.1, 0.05, 0.01, 1e-3, 0.25][rng.gen_range(0..6)];
        let mut p = CostParams::new(kind, 1, rng.gen_range(1..=6), rng.gen_range(1..=6), eps, rng.gen_range(1..=4));
        let m_star = classical_costs(&p).map_err(e)?.m_star;
        // C_can is linear in M, so C_can(M*) = (C_can(1)) M*
        p.m = 1;
        let c = classical_costs(&p).map_err(e)?;
        if c.c_can.mul(&m_star) == c.c_mod {
            exact += 1;
        }
    }
    let pass = rows_ok == PUBLISHED_ADVANTAGE.len() && t2_ok == 4 && exact == 1000;
    let mut detail = format!("advantage rows {rows_ok}/{}, threshold rows {t2_ok}/4, exact crossover {exact}/1000", PUBLISHED_ADVANTAGE.len());
    if !notes.is_empty() {
        detail.push_str("; ");
        detail.push_str(&notes.join("; "));
    }
    Ok((pass, detail))
}

// 9 -------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let n = 32;
    let t = 0.1;
    let hbar = 1.0;
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    let samples = sample_inputs(&model, 4, 9, &SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }).map_err(e)?;
    let g = GridBuilder::new(Kind::Schrodinger, 1, 1).n(n).n_p(n).n_q(n).p_max(8.0).t_final(t).build().map_err(e)?;
    let data = InitialCondition::PlaneWave { wavenumbers: vec![1] };
    let basis = basis_on_grid(&model, &g).map_err(e)?;
    let mut sys = assemble_schrodinger(&g, &basis, hbar, SchrodingerStepper::Trapezoidal, &AssemblyOptions::default())
        .map_err(e)?;
    let lifted = lift_initial_complex(&model, &samples, &data, &g).map_err(e)?;
    rhs_from_initial(&mut sys, &lifted).map_err(e)?;
    let traj = march_trapezoidal_schrodinger(&sys, g.n_t, Record::Every(1)).map_err(e)?;
    let norm = |s: &[C64]| s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(traj.slice(0).map_err(e)?);
    let drift = traj.slices.values().map(|s| ((norm(s) - n0) / n0).abs()).fold(0.0, f64::max);
    let mean = recover_mean(&traj, g.n_t).map_err(e)?;
    let got: Vec<f64> = mean.values.iter().map(|v| v.norm()).collect();
    let phase: C64 = samples.samples.iter().map(|z| C64::from_polar(1.0, -z[0] * t / hbar)).sum::<C64>()
        / samples.m() as f64;
    let want = vec![phase.norm(); g.x_cells()];
    let err = rel_l2(&got, &want);
    let pass = drift <= 1e-10 && err <= 0.10;
    Ok((pass, format!("{} steps: norm drift {drift:.2e}, |mean| relative L2 error {err:.4}", g.n_t)))
}

// 10 ------------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let model = CoefficientModel::diagonal(1, 1, 10.0).map_err(e)?;
    let g = GridBuilder::new(Kind::Advection, 1, 1).n(32).n_p(32).n_q(32).p_max(10.0).t_final(0.1).build().map_err(e)?;
    let data = InitialCondition::SineProduct { modes: vec![2] };
    let basis = basis_on_grid(&model, &g).map_err(e)?;
    let two = SampleSet::from_points(vec![vec![1.0], vec![2.0]]);
    let traj = lifted_real(&model, &two, &data, &g, Record::Last)?;
    let lifted: Vec<f64> = recover_mean(&traj, g.n_t).map_err(e)?.values;
    let per: Vec<Vec<f64>> = two
        .samples
        .iter()
        .map(|z| {
            let s = solve_direct_sample(&model, z, &data, &g, g.n_t, Record::Last, 1.0).map_err(e)?;
            Ok(s.slices[&g.n_t].iter().map(|v| v.re).collect())
        })
        .collect::<Result<_, String>>()?;
    let direct: Vec<f64> = per[0].iter().zip(&per[1]).map(|(a, b)| 0.5 * (a + b)).collect();
    let direct_var: Vec<f64> = per[0].iter().zip(&per[1]).map(|(a, b)| 0.25 * (a - b).powi(2)).collect();
    let mean_err = rel_l2(&lifted, &direct);
    let var = ensemble_variance_advection(&model, &two, &data, &g, &basis, g.n_t).map_err(e)?;
    let var_err = rel_l2(&var.variance.values, &direct_var);
    let same = SampleSet::from_points(vec![vec![1.0], vec![1.0]]);
    let degenerate = ensemble_variance_advection(&model, &same, &data, &g, &basis, g.n_t).map_err(e)?;
    let deg_max = degenerate.variance.values.iter().cloned().fold(0.0, f64::max);
    let check = ensemble_direct(&model, &two, &data, &g, g.n_t, 1.0).map_err(e)?;
    let agree = check.values.iter().zip(&direct).all(|(c, d)| (c.re - d).abs() < 1e-12);
    let pass = mean_err <= 0.15 && var_err <= 0.15 && deg_max <= 1e-10 && agree;
    Ok((
        pass,
        format!("mean relative L2 {mean_err:.4}, variance relative L2 {var_err:.4}, degenerate variance max {deg_max:.2e}"),
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "heat oracle equivalence", criterion_1),
        (2, "M-independence of the lifted solve", criterion_2),
        (3, "heat 1-D matrix lemma (dense)", criterion_3),
        (4, "Boltzmann conservation and dissipation", criterion_4),
        (5, "readout identity", criterion_5),
        (6, "normalization scaling", criterion_6),
        (7, "condition-number scaling", criterion_7),
        (8, "cost-table regression", criterion_8),
        (9, "Schrodinger validation", criterion_9),
        (10, "advection mean and variance", criterion_10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
