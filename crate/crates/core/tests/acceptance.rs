//! Acceptance run: one PASS/FAIL line per criterion.

use mop_trees::angelesco::AngelescoSystem;
use mop_trees::finite_spectral::{eigenvalue_set, full_basis, s_orthogonalize, signature_counts};
use mop_trees::nikishin::NikishinSystem;
use mop_trees::periodic_surface::{ray_limit_estimate, SurfaceParams};
use mop_trees::systems::{ang_u, nik_u};
use mop_trees::tree_jacobi::assemble_finite;
use mop_trees::tree_topology::Tree;
use mop_trees::{MultiIndex, Result};
use num_complex::Complex64;
use std::time::{Duration, Instant};

type Outcome = Result<(bool, String)>;

fn criterion_1() -> Outcome {
    let sys = ang_u();
    let start = Instant::now();
    let n = MultiIndex::new(2, 1);
    let evs = eigenvalue_set(&sys, (0.0, 1.0), n)?;
    let d = full_basis(&sys, (0.0, 1.0), n)?;
    let elapsed = start.elapsed();
    let mut ok = evs.len() == 9 && d.dense_mismatch <= 1e-10 && d.residual <= 1e-9 && d.rank == 9;
    ok &= elapsed < Duration::from_secs(5);
    let mut detail = format!(
        "N=(2,1): {} values, dense {:.1e}, residual {:.1e}, rank {}, {:.2}s",
        evs.len(),
        d.dense_mismatch,
        d.residual,
        d.rank,
        elapsed.as_secs_f64()
    );
    for (n1, n2) in [(1, 1), (2, 2), (3, 2)] {
        let n = MultiIndex::new(n1, n2);
        let d = full_basis(&sys, (0.0, 1.0), n)?;
        let count: usize = d.spaces.iter().map(|s| s.g).sum();
        let vertices = Tree::finite(n).len();
        ok &= count == vertices && d.rank == vertices && d.dense_mismatch <= 1e-10 && d.residual <= 1e-9;
        detail += &format!("; {n}: Σg={count} #V={vertices}");
    }
    Ok((ok, detail))
}

fn criterion_2() -> Outcome {
    let sys = nik_u();
    let n = MultiIndex::new(2, 2);
    let op = assemble_finite(&sys, (1.0, 0.0), n)?;
    let sa = op.s_selfadjoint_check();
    let d = full_basis(&sys, (1.0, 0.0), n)?;
    let b = s_orthogonalize(&d)?;
    let (p, m) = signature_counts(&op);
    let ok = sa <= 1e-14 && b.off_diagonal <= 1e-9 && (b.i_plus, b.i_minus) == (p, m);
    Ok((ok, format!("S-residual {sa:.1e}, off-diagonal {:.1e}, inertia ({}, {}) vs S ({p}, {m})", b.off_diagonal, b.i_plus, b.i_minus)))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for sys in [ang_u(), nik_u()] {
        for t in 2..=10 {
            for n1 in 1..t {
                let r = sys.consistency_residual(MultiIndex::new(n1, t - n1))?;
                worst = worst.max(r.iter().cloned().fold(0.0, f64::max));
            }
        }
    }
    Ok((worst <= 1e-25, format!("max residual {worst:.1e} over |n| <= 10 at 256 bits")))
}

fn criterion_4() -> Outcome {
    let sys = ang_u();
    let mut failures = vec![];
    let mut checked = 0;
    for t in 0..=20 {
        for n1 in 0..=t {
            let n = MultiIndex::new(n1, t - n1);
            for i in 1..=2 {
                if n.plus(i).total() <= 20 {
                    checked += 1;
                    if !sys.interlacing_check(n, i)? {
                        failures.push(format!("P{n}+e{i}"));
                    }
                }
            }
            if t >= 1 && t < 20 {
                for k in 1..=2 {
                    for l in 1..=2 {
                        checked += 1;
                        if !sys.type1_interlacing_check(n, k, l)? {
                            failures.push(format!("A{k}{n}+e{l}"));
                        }
                    }
                }
            }
        }
    }
    Ok((failures.is_empty(), format!("{checked} checks, failures {failures:?}")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = NikishinSystem::nik_u();
    let a = s.sign_pattern_check(8)?;
    let h = s.h_sign_check(8)?;
    let elapsed = start.elapsed();
    let ok = a.ok() && h.ok() && elapsed < Duration::from_secs(60);
    Ok((
        ok,
        format!(
            "a-signs {} checked / {} violations, h-signs {} / {}, {:.1}s",
            a.checked,
            a.violations.len(),
            h.checked,
            h.violations.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn criterion_6() -> Outcome {
    let s = NikishinSystem::nik_u();
    let rows = s.diagonal_blowup_scan(6)?;
    let inc = rows.windows(2).all(|w| w[1].a2 > w[0].a2);
    let dec = rows.windows(2).all(|w| w[1].a1 < w[0].a1);
    let table = s.bound_table(13)?;
    let m5 = table.iter().filter(|r| r.total <= 5).map(|r| r.max_a_off_diagonal).fold(0.0, f64::max);
    let m13 = table.iter().map(|r| r.max_a_off_diagonal).fold(0.0, f64::max);
    let ok = inc && dec && m13 < 5.0 * m5;
    Ok((
        ok,
        format!(
            "a2 increasing {inc} ({:.3e} -> {:.3e}), a1 decreasing {dec} ({:.3e} -> {:.3e}), off-diagonal max {m13:.3e} vs {m5:.3e} at |n| <= 5",
            rows[0].a2, rows[5].a2, rows[0].a1, rows[5].a1
        ),
    ))
}

fn criterion_7() -> Outcome {
    let a = AngelescoSystem::ang_u();
    let z = Complex64::new(5.0, 0.0);
    let tree = Tree::cayley(2);
    let mut green = 0.0f64;
    for kappa in [(1.0, 0.0), (0.5, 0.5), (0.3, 0.7)] {
        for x in 0..tree.len() {
            for y in tree.subtree(x) {
                let (g, r) = a.green(kappa, y, x, z, 12)?;
                green = green.max((g - r).norm() / g.norm());
            }
        }
    }
    let mut mass = 0.0f64;
    for kappa in [(1.0, 0.0), (0.5, 0.5), (2.0, -1.0)] {
        let rho = a.rho_o(kappa)?;
        mass = mass.max((a.total_mass(&rho)? - 1.0).abs());
    }
    let mut psi = 0.0f64;
    for (kappa, x) in [((1.0, 0.0), -1.5), ((0.5, 0.5), 1.3), ((0.3, 0.7), -1.2)] {
        psi = psi.max(a.psi_o(kappa, x, 6)?.residual);
        for xv in [1, 2, 5] {
            psi = psi.max(a.psi_x(kappa, xv, x, 6)?.residual);
        }
    }
    if let Some(e) = a.find_e_kappa((0.5, 0.5))? {
        psi = psi.max(a.psi_o((0.5, 0.5), e, 6)?.residual);
    }
    let ok = green <= 1e-6 && mass <= 1e-8 && psi <= 1e-8;
    Ok((ok, format!("Green rel. error {green:.1e}, ρ_O mass error {mass:.1e}, Ψ residual {psi:.1e}")))
}

fn criterion_8() -> Outcome {
    let a = AngelescoSystem::ang_u();
    let n = MultiIndex::new(2, 2);
    let mut xi_dev = 0.0f64;
    for i in 0..200 {
        let t = (i as f64 + 0.5) / 200.0;
        let x = if i < 100 { -2.0 + 2.0 * t } else { 1.0 + (2.0 * t - 1.0) };
        let w0 = a.reference_density(n, x)?;
        for xi in [-0.9, -0.3, 0.4, 0.95] {
            let w = a.reference_density_via_xi(n, xi, x)?;
            xi_dev = xi_dev.max((w - w0).abs() / w0.max(1.0));
        }
    }
    let mut l4 = 0.0f64;
    let mut count = 0;
    for xi in [-0.5, 0.5] {
        for r in a.lemma_l4(n, xi)? {
            l4 = l4.max(r.residual);
            count += 1;
        }
    }
    let ok = xi_dev <= 1e-9 && l4 <= 1e-8 && count > 0;
    Ok((ok, format!("ξ deviation {xi_dev:.1e} on 200 points, L4 residual {l4:.1e} at {count} (E, ξ) pairs")))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 5];
    let mut strict = true;
    for s in [SurfaceParams::from_params(0.25, 0.25, -1.0, 1.0)?, SurfaceParams::from_params(0.3, 0.1, 0.0, 2.0)?] {
        let mut rng = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let z = Complex64::new(-4.0 + 8.0 * next(), -3.0 + 6.0 * next());
            if z.im.abs() < 1e-6 {
                continue;
            }
            let chi = s.chi0(z)?;
            worst[0] = worst[0].max((s.zmap(chi) - z).norm() / (1.0 + z.norm()));
            strict &= s.unit_form(z)? < 1.0;
        }
        for &(p, q) in &s.cuts {
            for i in 1..=50 {
                let x = p + (q - p) * i as f64 / 51.0;
                worst[1] = worst[1].max(s.unit_identity_residual(x)?);
            }
        }
        let gap = 0.5 * (s.cuts[0].1 + s.cuts[1].0);
        for x in [s.cuts[0].0 - 1.0, gap, s.cuts[1].1 + 1.0] {
            strict &= s.unit_form(Complex64::new(x, 0.0))? < 1.0;
        }
        let z = Complex64::new(5.0, 0.0);
        for l in 1..=2 {
            let a = s.l2_norm_sq(l, z)?;
            let b = s.l2_norm_sq_direct(l, z, 30)?;
            worst[2] = worst[2].max((a - b).abs() / a);
            let g = s.green_o(l, z)?;
            worst[2] = worst[2].max((g - s.truncated_green_o(l, z, 30)?).norm() / g.norm());
            worst[3] = worst[3].max((s.dos_mass(l) - 1.0).abs());
            for w in [z, Complex64::new(0.3, 0.4), Complex64::new(-1.5, -0.2)] {
                worst[4] = worst[4].max(s.triple_product_residual(l, w)?);
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst[0] <= 1e-12
        && worst[1] <= 1e-10
        && strict
        && worst[2] <= 1e-8
        && worst[3] <= 1e-8
        && worst[4] <= 1e-10
        && elapsed < Duration::from_secs(10);
    Ok((
        ok,
        format!(
            "roundtrip {:.1e}, unit identity {:.1e}, strict off cuts {strict}, depth-30 {:.1e}, DOS mass {:.1e}, triple product {:.1e}, {:.2}s",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4],
            elapsed.as_secs_f64()
        ),
    ))
}

fn criterion_10() -> Outcome {
    let sys = ang_u();
    let r = ray_limit_estimate(&sys, 0.5, 15)?;
    let tail: Vec<f64> = r.rows.windows(2).zip(&r.differences).filter(|(w, _)| w[0].total >= 10).map(|(_, d)| *d).collect();
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    let sym = r.antisymmetry.iter().cloned().fold(0.0, f64::max);
    let [a1, a2, b1, b2] = r.estimate;
    let s = SurfaceParams::from_params(a1, a2, b1, b2)?;
    let inside = |(p, q): (f64, f64), lo: f64, hi: f64| p >= lo && q <= hi;
    let cuts_ok = inside(s.cuts[0], -2.05, -0.95) && inside(s.cuts[1], 0.95, 2.05);
    let ok = decreasing && sym <= 1e-20 && cuts_ok;
    Ok((
        ok,
        format!(
            "differences {:.2e} -> {:.2e} decreasing {decreasing}, symmetry {sym:.1e}, estimate A={a1:.6} B={b2:.6}, cuts {:?}",
            tail.first().copied().unwrap_or(f64::NAN),
            tail.last().copied().unwrap_or(f64::NAN),
            s.cuts
        ),
    ))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (id, f) in criteria {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id}: {} ({:.2}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
