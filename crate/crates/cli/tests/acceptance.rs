//! End-to-end acceptance checks. One PASS/FAIL line per criterion; the process
//! exits nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use dpw_core::factorization::{birkhoff, cell_classify, iwasawa, k_factor_normalize};
use dpw_core::frame::{dpw_construct, extended_frame_check, Grid, IntegrationOptions};
use dpw_core::homogeneous::{
    gauge_distance, homogeneous_blocks, homogeneous_frame, homogeneous_immersion, homogeneous_mc_form,
    pipeline_torus_energy, torus_energy,
};
use dpw_core::linalg::{delta0, sup};
use dpw_core::loops::random_group_loop;
use dpw_core::potentials::{parse_potential, validate_normalized};
use dpw_core::reference::{example_s6, rotation_d};
use dpw_core::surface::{conformal_gauss_frame, conformality_at, dpw_patch, SurfaceGrid, SurfacePatch};
use dpw_core::wu::{
    b1_distance, homogeneous_mc_data, homogeneous_normalized_b1, sample_mc_data, wu_from_samples, DiscNodes, DEFAULT_MODES, DEFAULT_TERMS,
};
use dpw_core::{CMat, Error, Potential, RVec, TwistedLoop, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(name: &str) -> Potential {
    let text = std::fs::read_to_string(root().join("potentials").join(name)).unwrap();
    parse_potential(&text).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpw-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Run `dpw construct` on the S6 file and read the CSV back.
fn construct_s6(lambda: &str, tag: &str) -> Result<(SurfaceGrid, f64), String> {
    let out = scratch(&format!("s6_{tag}.csv"));
    let t = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_dpw"))
        .args(["construct", "--potential"])
        .arg(root().join("potentials/s6.pot"))
        .args(["--grid", "re:-1:1:21,im:-1:1:21", "--lambda", lambda, "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let s = SurfaceGrid::read_csv(std::fs::File::open(&out).unwrap()).map_err(|e| e.to_string())?;
    Ok((s, secs))
}

fn max_error(s: &SurfaceGrid, want: impl Fn(C64) -> RVec) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, y) in s.points.iter().enumerate() {
        worst = worst.max(match y {
            Some(y) => (y - want(s.grid.point(i))).amax(),
            None => f64::INFINITY,
        });
    }
    worst
}

fn criterion_1() -> Check {
    let (s, secs) = construct_s6("1", "one")?;
    let err = max_error(&s, |z| example_s6(z, c(1.0, 0.0)));
    let msg = format!("max error {err:.3e} (< 1e-6), runtime {secs:.1} s (< 60 s)");
    if s.points.len() == 441 && err < 1e-6 && secs < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (arg, lambda) in [("i", c(0.0, 1.0)), ("exp:0.7853981633974483", C64::from_polar(1.0, FRAC_PI_4))] {
        let (s, _) = construct_s6(arg, &arg.replace(':', "_"))?;
        let d = rotation_d(lambda).map_err(|e| e.to_string())?;
        let err = max_error(&s, |z| &d * example_s6(z, c(1.0, 0.0)));
        ok &= err < 1e-6;
        parts.push(format!("lambda={arg}: {err:.3e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut oracle: f64 = 0.0;
    for _ in 0..1000 {
        let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let lambda = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let d = rotation_d(lambda).map_err(|e| e.to_string())?;
        oracle = oracle.max((example_s6(z, lambda) - d * example_s6(z, c(1.0, 0.0))).amax());
    }
    ok &= oracle < 1e-12;
    let msg = format!("{} (< 1e-6); closed-form identity {oracle:.3e} (< 1e-12)", parts.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Check {
    let e = torus_energy(1, 1).map_err(|e| e.to_string())?;
    let want = 2.0 * 3f64.sqrt() * PI * PI;
    let rel_q = (e.quadrature - want).abs() / want;
    let formula = 16.0 * PI * PI * 3f64.sqrt() / 9.0 * (1.0 + 1.0 / 8.0);
    let measured = pipeline_torus_energy(1, 1, 201).map_err(|e| e.to_string())?;
    let rel_p = (measured.value - formula).abs() / formula;
    let msg = format!("torus_energy(1,1) rel {rel_q:.3e} (< 1e-10); 201x201 pipeline rel {rel_p:.3e} (< 1e-3)");
    if rel_q < 1e-10 && rel_p < 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4() -> Check {
    let (mut bres, mut ires, mut real, mut sdef, mut parity) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1 + (seed % 3) as usize;
        let g = random_group_loop(n, 0.5, 8, &mut rng);
        parity = parity.max(g.parity_defect());
        let (gm, gp, rep) = birkhoff(&g).map_err(|e| format!("seed {seed}: {e}"))?;
        bres = bres.max(rep.residual);
        parity = parity.max(gm.parity_defect()).max(gp.parity_defect());
        let (f, vp, rep) = iwasawa(&g).map_err(|e| format!("seed {seed}: {e}"))?;
        ires = ires.max(rep.residual);
        real = real.max(rep.reality_defect.unwrap_or(f64::INFINITY));
        sdef = sdef.max(rep.s_defect.unwrap_or(f64::INFINITY));
        parity = parity.max(f.parity_defect()).max(vp.parity_defect());
    }
    let msg = format!(
        "birkhoff {bres:.3e} (< 1e-10), iwasawa {ires:.3e} / reality {real:.3e} (< 1e-8), \
         s_defect {sdef:.3e} (< 1e-10), parity {parity:e} (== 0)"
    );
    if bres < 1e-10 && ires < 1e-8 && real < 1e-8 && sdef < 1e-10 && parity == 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_5() -> Check {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = CMat::identity(6, 6);
    k[(0, 0)] = c(h, 0.0);
    k[(0, 2)] = c(0.0, h);
    k[(2, 0)] = c(0.0, h);
    k[(2, 2)] = c(h, 0.0);
    let not_in_cell = matches!(k_factor_normalize(&k), Err(Error::NotInCell { .. }));
    let cell = cell_classify(&TwistedLoop::constant(delta0(2)).map_err(|e| e.to_string())?);
    let msg = format!("k_factor_normalize NotInCell: {not_in_cell}; delta0 loop: {cell:?}");
    if not_in_cell && cell == dpw_core::Cell::SecondCell {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_6() -> Check {
    let nodes = || DiscNodes::standard(c(0.0, 0.0), 0.5);
    let pts: Vec<C64> = (0..24).map(|k| C64::from_polar(0.45 * (k % 4) as f64 / 3.0, 0.7 * k as f64)).collect();
    let s6 = load("s6.pot");
    let data = sample_mc_data(&s6, nodes(), 1e-3, &IntegrationOptions::default()).map_err(|e| e.to_string())?;
    let (out, _) = wu_from_samples(&data, DEFAULT_MODES, DEFAULT_TERMS, DEFAULT_MODES).map_err(|e| e.to_string())?;
    let mut errs = vec![("s6", b1_distance(&out, &s6, &pts).map_err(|e| e.to_string())?)];
    for (name, p) in [("cylinder", load("cylinder.pot")), ("ejiri", load("ejiri.pot"))] {
        let data = homogeneous_mc_data(&p, nodes(), 1e-2).map_err(|e| e.to_string())?;
        let (out, _) =
            wu_from_samples(&data, DEFAULT_MODES, DEFAULT_TERMS, DEFAULT_MODES).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for &z in &pts {
            let want = homogeneous_normalized_b1(&p, z).map_err(|e| e.to_string())?;
            worst = worst.max(sup(&(out.b1(z).map_err(|e| e.to_string())? - want)));
        }
        errs.push((name, worst));
    }
    let msg = errs.iter().map(|(n, e)| format!("{n} {e:.3e}")).collect::<Vec<_>>().join(", ") + " (< 1e-6)";
    if errs.iter().all(|(_, e)| *e < 1e-6) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7() -> Check {
    let p = load("s6.pot");
    let opts = IntegrationOptions::default();
    let centre = c(0.3, -0.2);
    let patch = dpw_patch(&p, centre, 1e-3, 6, c(1.0, 0.0), &opts).map_err(|e| e.to_string())?;
    let (_, d) = conformal_gauss_frame(&patch).map_err(|e| e.to_string())?;
    let d = d.ok_or("no diagnostics")?;
    let strong = extended_frame_check(&p, &[centre, c(-0.4, 0.5), c(0.6, 0.6)], 1e-3, &opts)
        .map_err(|e| e.to_string())?
        .strong_conformality;

    let s6 = |u: f64, v: f64| Ok(example_s6(c(u, v), c(1.0, 0.0)));
    let skew = |u: f64, v: f64| s6(u, 2.0 * v);
    let neg_conf = conformality_at(&SurfacePatch::sample((0.3, -0.2), 1e-3, 2, skew).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let bump = |u: f64, v: f64| {
        let y: RVec = s6(u, v)?;
        let mut e = RVec::zeros(7);
        e[6] = 1.0;
        let nrm = (&e - &y * y.dot(&e)).normalize();
        let w = (-((u - 0.3).powi(2) + (v + 0.2).powi(2)) / 0.01).exp();
        Ok((y + nrm * (1e-2 * w)).normalize())
    };
    let bumped = SurfacePatch::sample((0.3, -0.2), 1e-3, 6, bump).map_err(|e| e.to_string())?;
    let neg_will = conformal_gauss_frame(&bumped).map_err(|e| e.to_string())?.1.ok_or("no diagnostics")?.willmore;

    let msg = format!(
        "conformality {:.3e} (< 1e-6), strong conformality {strong:.3e} (< 1e-4), willmore {:.3e} (< 1e-3, h = 1e-3), \
         isotropy {:.3e} (< 1e-6); controls: conformality {neg_conf:.3e}, willmore {neg_will:.3e} (> 1e-1)",
        d.conformality, d.willmore, d.isotropy[0]
    );
    if d.conformality < 1e-6
        && strong < 1e-4
        && d.willmore < 1e-3
        && d.isotropy[0] < 1e-6
        && neg_conf > 1e-1
        && neg_will > 1e-1
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Check {
    let opts = IntegrationOptions::default();
    let grid = Grid::square(1.0, 11);
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, p) in [("cylinder", load("cylinder.pot")), ("ejiri", load("ejiri.pot"))] {
        let field = dpw_construct(&p, &grid, &opts);
        let mut gauge: f64 = 0.0;
        for (i, pt) in field.points.iter().enumerate() {
            let hom = homogeneous_frame(&p, grid.point(i)).map_err(|e| e.to_string())?;
            gauge = gauge.max(match &pt.f {
                Some(f) => gauge_distance(&hom, f).map_err(|e| e.to_string())?,
                None => f64::INFINITY,
            });
        }
        let (b, a) = homogeneous_blocks(&p).map_err(|e| e.to_string())?;
        let mut mc: f64 = 0.0;
        for i in (0..grid.len()).step_by(7) {
            let al = homogeneous_mc_form(&p, grid.point(i), c(1.0, 0.0), 1e-2).map_err(|e| e.to_string())?;
            mc = mc.max(sup(&(al - (&b + &a))));
        }
        ok &= gauge < 1e-8 && mc < 1e-10;
        parts.push(format!("{name}: frame {gauge:.3e} (< 1e-8), mc {mc:.3e} (< 1e-10)"));
    }
    let cliff = load("clifford.pot");
    let f = |u: f64, v: f64| homogeneous_immersion(&cliff, c(u, v));
    let mut ks = Vec::new();
    for centre in [(0.0, 0.0), (0.7, -0.3), (2.0, 1.5), (-1.2, 0.4)] {
        let patch = SurfacePatch::sample(centre, 1e-2, 4, f).map_err(|e| e.to_string())?;
        ks.push(conformal_gauss_frame(&patch).map_err(|e| e.to_string())?.0.kappa_sq().sqrt());
    }
    let spread = ks.iter().map(|k| (k - ks[0]).abs()).fold(0.0, f64::max) / ks[0];
    ok &= ks[0] > 1e-2 && spread < 1e-6;
    parts.push(format!("clifford |kappa| {:.6} spread {spread:.3e} (< 1e-6)", ks[0]));
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_9() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut names: Vec<String> = std::fs::read_dir(root().join("potentials"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pot"))
        .collect();
    names.sort();
    for name in names {
        let rep = validate_normalized(&load(&name));
        let worst = rep.null_residual.max(rep.nilpotency_residual);
        let good = worst < 1e-12 && rep.samples == 20;
        if name == "broken.pot" {
            ok &= !good;
            parts.push(format!("{name} rejected: {}", !good));
        } else {
            ok &= good;
            parts.push(format!("{name} {worst:.1e}"));
        }
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("1 s6 end-to-end", criterion_1),
        ("2 lambda isometry", criterion_2),
        ("3 ejiri energy", criterion_3),
        ("4 factorization suite", criterion_4),
        ("5 counterexample and second cell", criterion_5),
        ("6 wu roundtrip", criterion_6),
        ("7 s6 geometry", criterion_7),
        ("8 homogeneous consistency", criterion_8),
        ("9 validator suite", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{secs:.1} s]");
            }
        }
    }
    let _ = std::fs::remove_dir_all(scratch("x").parent().unwrap());
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
