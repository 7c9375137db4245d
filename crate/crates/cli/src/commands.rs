//! The five pipeline commands. Every stage works through files in the output
//! directory so stages can rerun independently.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use mfeit_core::admittivity::Frequency;
use mfeit_core::asymptotics::{
    detect_from_datasets, recover_poles, ContourSamples, DetectionConfig, RecoverConfig,
    SignConvention,
};
use mfeit_core::forward::{jump_profile, solve_resolved, NeumannCurrent, SolveModel};
use mfeit_core::geometry::{
    build_phantom, mesh_domain, mesh_with, MeshOptions, Phantom, Pixelation,
};
use mfeit_core::io::{
    fmt17, read_dataset_csv, read_image_stack_csv, write_dataset_csv, write_image_stack_csv,
    write_pgm,
};
use mfeit_core::numeric::fit_order;
use mfeit_core::protocol::{add_noise, mask_adjacent, simulate_sweep, ElectrodeLayout};
use mfeit_core::reconstruct::{build_sensitivity, reconstruct_sweep, ImageStack, Regularization};
use mfeit_core::{Point, Vec2};

use crate::config::{frequencies, LoadedConfig};
use crate::error::CliError;
use crate::manifest::Manifest;

fn dataset_path(out: &Path, freq_hz: f64, reference: bool) -> PathBuf {
    let kind = if reference { "reference" } else { "dataset" };
    out.join(format!("{kind}_{freq_hz:.0}hz.csv"))
}

fn layout_of(cfg: &LoadedConfig) -> ElectrodeLayout {
    ElectrodeLayout {
        n_electrodes: cfg.run.n_electrodes,
        coverage: cfg.run.electrode_coverage,
        offset: 0.0,
    }
}

fn phantom_of(cfg: &LoadedConfig) -> Result<Phantom, CliError> {
    build_phantom(&cfg.phantom_spec).map_err(|e| CliError::Config(e.to_string()))
}

fn mesh_of(cfg: &LoadedConfig, phantom: &Phantom) -> Result<mfeit_core::geometry::Mesh, CliError> {
    let mut opts = match cfg.run.model.as_str() {
        "zero_thickness" => MeshOptions::zero_thickness(cfg.run.mesh_h),
        "resolved" => MeshOptions::resolved(cfg.run.mesh_h),
        other => {
            return Err(CliError::Config(format!(
                "unknown model {other:?} (use \"zero_thickness\" or \"resolved\")"
            )))
        }
    };
    opts.pixel_n = cfg.run.pixel_n;
    mesh_with(phantom, &opts).map_err(|e| CliError::Config(e.to_string()))
}

fn solve_model(cfg: &LoadedConfig) -> SolveModel {
    match cfg.run.model.as_str() {
        "resolved" => SolveModel::Resolved,
        _ => SolveModel::ZeroThickness,
    }
}

/// `simulate`: one dataset file per frequency plus homogeneous references and
/// a manifest with content hashes.
pub fn cmd_simulate(cfg: &LoadedConfig, config_path: &Path, out: &Path) -> Result<(), CliError> {
    let phantom = phantom_of(cfg)?;
    let mesh = mesh_of(cfg, &phantom)?;
    let layout = layout_of(cfg);
    let freqs = frequencies(&cfg.run);
    let data = simulate_sweep(&phantom, &mesh, &layout, &freqs, solve_model(cfg))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let refs = simulate_sweep(&phantom, &mesh, &layout, &freqs, SolveModel::Homogeneous)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(e.to_string()))?;
    let mut manifest = Manifest::new("simulate", config_path).map_err(CliError::io)?;
    for (ds, rf) in data.iter().zip(refs.iter()) {
        let mut ds = mask_adjacent(ds);
        if let Some(snr) = cfg.run.snr_db {
            ds = add_noise(&ds, snr, cfg.run.seed);
        }
        let rf = mask_adjacent(rf);
        let d_path = dataset_path(out, ds.omega.hz(), false);
        let r_path = dataset_path(out, rf.omega.hz(), true);
        write_dataset_csv(&d_path, &ds).map_err(CliError::io)?;
        write_dataset_csv(&r_path, &rf).map_err(CliError::io)?;
        manifest.add(out, &d_path).map_err(CliError::io)?;
        manifest.add(out, &r_path).map_err(CliError::io)?;
    }
    manifest
        .write(&out.join("manifest.json"))
        .map_err(CliError::io)?;
    println!(
        "simulate: {} frequencies, {} nodes, wrote {} files",
        freqs.len(),
        mesh.nodes.len(),
        2 * freqs.len() + 1
    );
    Ok(())
}

fn load_sweep(
    cfg: &LoadedConfig,
    out: &Path,
) -> Result<
    (
        Vec<mfeit_core::protocol::BoundaryDataset>,
        Vec<mfeit_core::protocol::BoundaryDataset>,
    ),
    CliError,
> {
    let mut data = Vec::new();
    let mut refs = Vec::new();
    for &f in &cfg.run.frequencies_hz {
        let d = read_dataset_csv(&dataset_path(out, f, false)).map_err(CliError::io)?;
        let r = read_dataset_csv(&dataset_path(out, f, true)).map_err(CliError::io)?;
        data.push(d);
        refs.push(r);
    }
    Ok((data, refs))
}

/// `reconstruct`: per-frequency images as CSV plus one PGM per
/// (frequency x real/imag part).
pub fn cmd_reconstruct(cfg: &LoadedConfig, config_path: &Path, out: &Path) -> Result<(), CliError> {
    let phantom = phantom_of(cfg)?;
    let mesh = mesh_of(cfg, &phantom)?;
    let layout = layout_of(cfg);
    let (data, refs) = load_sweep(cfg, out)?;
    let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let reg = match cfg.run.regularization_alpha {
        Some(a) => Regularization::Fixed(a),
        None => Regularization::default(),
    };
    let stack =
        reconstruct_sweep(&data, &refs, &sens, reg).map_err(|e| CliError::Solver(e.to_string()))?;
    let mut manifest = Manifest::new("reconstruct", config_path).map_err(CliError::io)?;
    let csv = out.join("images.csv");
    write_image_stack_csv(&csv, &stack).map_err(CliError::io)?;
    manifest.add(out, &csv).map_err(CliError::io)?;
    for (col, omega) in stack.frequencies.iter().enumerate() {
        let re: Vec<f64> = (0..stack.n_pixels())
            .map(|i| stack.images[(i, col)].re)
            .collect();
        let im: Vec<f64> = (0..stack.n_pixels())
            .map(|i| stack.images[(i, col)].im)
            .collect();
        let p_re = out.join(format!("image_{:.0}hz_re.pgm", omega.hz()));
        let p_im = out.join(format!("image_{:.0}hz_im.pgm", omega.hz()));
        write_pgm(&p_re, &stack.pixelation, &re).map_err(CliError::io)?;
        write_pgm(&p_im, &stack.pixelation, &im).map_err(CliError::io)?;
        manifest.add(out, &p_re).map_err(CliError::io)?;
        manifest.add(out, &p_im).map_err(CliError::io)?;
    }
    manifest
        .write(&out.join("manifest_reconstruct.json"))
        .map_err(CliError::io)?;
    println!(
        "reconstruct: {} frequencies x {} pixels",
        stack.n_frequencies(),
        stack.n_pixels()
    );
    Ok(())
}

/// `fuse`: PCA-integrated image plus decomposition metadata.
pub fn cmd_fuse(cfg: &LoadedConfig, config_path: &Path, out: &Path) -> Result<(), CliError> {
    let pixelation = Pixelation::square(cfg.run.pixel_n, cfg.phantom_spec.domain_radius);
    let stack = read_image_stack_csv(&out.join("images.csv"), pixelation).map_err(CliError::io)?;
    let fused = mfeit_core::fusion::fuse(&stack, cfg.run.pca_components)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let mut manifest = Manifest::new("fuse", config_path).map_err(CliError::io)?;

    // selected output per the fuse_add_mean flag; both variants also land on
    // disk so downstream consumers can pick either
    let select = |p: &mfeit_core::fusion::FusedPart| {
        if cfg.run.fuse_add_mean {
            p.with_mean.clone()
        } else {
            p.oscillation.clone()
        }
    };
    let variants: [(&str, nalgebra::DVector<f64>, nalgebra::DVector<f64>); 3] = [
        ("fused", select(&fused.real), select(&fused.imag)),
        (
            "fused_oscillation",
            fused.real.oscillation.clone(),
            fused.imag.oscillation.clone(),
        ),
        (
            "fused_with_mean",
            fused.real.with_mean.clone(),
            fused.imag.with_mean.clone(),
        ),
    ];
    for (name, re, im) in &variants {
        let single = ImageStack {
            images: nalgebra::DMatrix::from_fn(re.len(), 1, |i, _| Complex64::new(re[i], im[i])),
            frequencies: vec![Frequency::unbounded(f64::MIN_POSITIVE).expect("positive")],
            pixelation: stack.pixelation.clone(),
        };
        let csv = out.join(format!("{name}.csv"));
        write_image_stack_csv(&csv, &single).map_err(CliError::io)?;
        manifest.add(out, &csv).map_err(CliError::io)?;
    }
    let pgm_re = out.join("fused_re.pgm");
    let pgm_im = out.join("fused_im.pgm");
    write_pgm(
        &pgm_re,
        &stack.pixelation,
        variants[0].1.as_slice(),
    )
    .map_err(CliError::io)?;
    write_pgm(
        &pgm_im,
        &stack.pixelation,
        variants[0].2.as_slice(),
    )
    .map_err(CliError::io)?;
    manifest.add(out, &pgm_re).map_err(CliError::io)?;
    manifest.add(out, &pgm_im).map_err(CliError::io)?;

    let meta = serde_json::json!({
        "n_kept": fused.real.n_used,
        "add_mean": cfg.run.fuse_add_mean,
        "truncated": fused.real.truncated,
        "eigenvalues_re": fused.real.decomposition.eigenvalues,
        "eigenvalues_im": fused.imag.decomposition.eigenvalues,
        "energy_fraction_re": fused.real.decomposition.energy_fraction(fused.real.n_used),
        "energy_fraction_im": fused.imag.decomposition.energy_fraction(fused.imag.n_used),
    });
    let meta_path = out.join("fusion_metadata.json");
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("json") + "\n",
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    manifest.add(out, &meta_path).map_err(CliError::io)?;
    manifest
        .write(&out.join("manifest_fuse.json"))
        .map_err(CliError::io)?;
    println!(
        "fuse: N = {} components, energy fraction {:.3}",
        fused.real.n_used,
        fused.real.decomposition.energy_fraction(fused.real.n_used)
    );
    Ok(())
}

/// `detect`: endpoint/center recovery report from the high-frequency dataset,
/// or directly from contour samples in bypass mode.
pub fn cmd_detect(
    cfg: &LoadedConfig,
    config_path: &Path,
    out: &Path,
    bypass: Option<&Path>,
    sign_override: Option<SignConvention>,
) -> Result<(), CliError> {
    let sign = sign_override.unwrap_or(cfg.run.sign_flag);
    let detect_cfg = DetectionConfig {
        contour_radius: cfg.run.detect.contour_radius,
        n_modes: cfg.run.detect.n_modes,
        contour_samples: 256,
        recover: RecoverConfig {
            max_poles: cfg.run.detect.max_poles,
            tol: cfg.run.detect.tol,
            pair_threshold: cfg.run.detect.pair_threshold,
            ..Default::default()
        },
        sign,
    };
    let report = if let Some(bypass_path) = bypass {
        // bypass mode: contour samples of dG/dx provided directly
        let text = std::fs::read_to_string(bypass_path).map_err(|e| CliError::Io(e.to_string()))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        let center = raw["center"]
            .as_array()
            .and_then(|a| Some(Complex64::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?)))
            .ok_or_else(|| CliError::Config("bypass file needs center: [re, im]".into()))?;
        let radius = raw["radius"]
            .as_f64()
            .ok_or_else(|| CliError::Config("bypass file needs radius".into()))?;
        let values: Vec<Complex64> = raw["values"]
            .as_array()
            .ok_or_else(|| CliError::Config("bypass file needs values: [[re, im], ...]".into()))?
            .iter()
            .map(|v| {
                Some(Complex64::new(
                    v.as_array()?.first()?.as_f64()?,
                    v.as_array()?.get(1)?.as_f64()?,
                ))
            })
            .collect::<Option<_>>()
            .ok_or_else(|| CliError::Config("bad complex value in bypass file".into()))?;
        let samples = ContourSamples {
            center,
            radius,
            values,
        };
        let model = recover_poles(&samples, &detect_cfg.recover)
            .map_err(|e| CliError::Detection(e.to_string()))?;
        detection_report_from_model(&model)
    } else {
        let hz = cfg
            .run
            .detect
            .frequency_hz
            .or_else(|| {
                cfg.run
                    .frequencies_hz
                    .iter()
                    .cloned()
                    .fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.max(f))))
            })
            .ok_or_else(|| CliError::Config("no detect frequency available".into()))?;
        let data = read_dataset_csv(&dataset_path(out, hz, false)).map_err(CliError::io)?;
        let reference = read_dataset_csv(&dataset_path(out, hz, true)).map_err(CliError::io)?;
        let layout = layout_of(cfg);
        let a = Vec2::new(cfg.run.detect.direction[0], cfg.run.detect.direction[1]);
        detect_from_datasets(
            &data,
            &reference,
            &layout,
            cfg.phantom_spec.domain_radius,
            a,
            &detect_cfg,
        )
        .map_err(|e| CliError::Detection(e.to_string()))?
    };
    let path = out.join("detection.json");
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("json") + "\n",
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut manifest = Manifest::new("detect", config_path).map_err(CliError::io)?;
    manifest.add(out, &path).map_err(CliError::io)?;
    manifest
        .write(&out.join("manifest_detect.json"))
        .map_err(CliError::io)?;
    println!(
        "detect: {} segments, {} disks, fit residual {:.3e}",
        report.segments.len(),
        report.disks.len(),
        report.fit_residual
    );
    Ok(())
}

fn detection_report_from_model(
    model: &mfeit_core::asymptotics::MeromorphicModel,
) -> mfeit_core::asymptotics::DetectionReport {
    use mfeit_core::asymptotics::{DetectedDisk, DetectedSegment, DetectionReport};
    let mut report = DetectionReport::default();
    for (q, p) in model.paired_segments() {
        let c = (q.residue - p.residue) / 2.0;
        report.segments.push(DetectedSegment {
            p: [p.location.re, p.location.im],
            q: [q.location.re, q.location.im],
            c_re: [c.re, c.im],
            c_im: [0.0, 0.0],
        });
    }
    for d in &model.double_poles {
        report.disks.push(DetectedDisk {
            z: [d.location.re, d.location.im],
            d_re: [d.strength.re, d.strength.im],
        });
    }
    report
}

/// `validate-jump`: interface-condition convergence report over a delta
/// sequence.
pub fn cmd_validate_jump(cfg: &LoadedConfig, config_path: &Path, out: &Path) -> Result<(), CliError> {
    let section = cfg
        .run
        .validate_jump
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no validate_jump section".into()))?;
    if section.deltas.len() < 3 {
        return Err(CliError::Config(
            "validate_jump needs at least 3 deltas".into(),
        ));
    }
    if !section.deltas.windows(2).all(|w| w[1] < w[0]) {
        return Err(CliError::Config(
            "validate_jump deltas must be strictly decreasing".into(),
        ));
    }
    let freqs: Vec<Frequency> = section
        .frequencies_hz
        .iter()
        .map(|&f| Frequency::from_hz(f).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    let p = Point::new(section.p[0], section.p[1]);
    let q = Point::new(section.q[0], section.q[1]);
    let seg_dir = (q - p).normalize();
    let current = Vec2::new(-seg_dir.y, seg_dir.x); // drive across the strip

    let mut jump_errors = vec![Vec::new(); freqs.len()];
    let mut dnu_jumps = vec![Vec::new(); freqs.len()];
    for &delta in &section.deltas {
        let phantom = Phantom {
            domain_radius: cfg.phantom_spec.domain_radius,
            insulators: vec![mfeit_core::geometry::ThinInsulator::new(p, q, delta)
                .map_err(|e| CliError::Config(e.to_string()))?],
            disks: vec![],
            materials: cfg.phantom_spec.materials,
            separation: cfg.phantom_spec.d0,
        };
        let h = section.h0 * (delta / section.deltas[0]).powf(section.h_exponent);
        let mesh = mesh_with(&phantom, &MeshOptions::resolved(h))
            .map_err(|e| CliError::Solver(e.to_string()))?;
        let g = NeumannCurrent::uniform_field(&mesh, current);
        for (fi, &omega) in freqs.iter().enumerate() {
            let field = solve_resolved(&mesh, &phantom, omega, &g)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            let profile = jump_profile(&field, &mesh, &phantom, 0, section.c0_fraction)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            jump_errors[fi].push(profile.max_prediction_error());
            dnu_jumps[fi].push(profile.max_dnu_jump());
        }
    }

    let mut rows = Vec::new();
    println!("delta sequence: {:?}", section.deltas);
    for (fi, omega) in freqs.iter().enumerate() {
        let order_jump = fit_order(&section.deltas, &jump_errors[fi]);
        let order_dnu = fit_order(&section.deltas, &dnu_jumps[fi]);
        let fmt_order = |o: Option<f64>| o.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        println!(
            "f = {:>10.0} Hz: max|[u] - pred| = {}  (order {}), max|[dnu]| = {} (order {})",
            omega.hz(),
            jump_errors[fi]
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(" "),
            fmt_order(order_jump),
            dnu_jumps[fi]
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(" "),
            fmt_order(order_dnu),
        );
        rows.push(serde_json::json!({
            "frequency_hz": omega.hz(),
            "jump_prediction_errors": jump_errors[fi],
            "dnu_jump_magnitudes": dnu_jumps[fi],
            "fitted_order_jump": order_jump,
            "fitted_order_dnu": order_dnu,
        }));
    }
    let report = serde_json::json!({
        "deltas": section.deltas,
        "c0_fraction": section.c0_fraction,
        "segment": {"p": section.p, "q": section.q},
        "per_frequency": rows,
    });
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(e.to_string()))?;
    let path = out.join("jump_convergence.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("json") + "\n",
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut manifest = Manifest::new("validate-jump", config_path).map_err(CliError::io)?;
    manifest.add(out, &path).map_err(CliError::io)?;
    manifest
        .write(&out.join("manifest_validate_jump.json"))
        .map_err(CliError::io)?;
    Ok(())
}

/// Export the zero-thickness potential field of one injection for inspection
/// (used by the pipeline tests; not a spec-level command).
#[allow(dead_code)]
pub fn export_example_field(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let phantom = phantom_of(cfg)?;
    let mesh = mesh_domain(&phantom, cfg.run.mesh_h).map_err(|e| CliError::Config(e.to_string()))?;
    let g = NeumannCurrent::uniform_field(&mesh, Vec2::new(1.0, 0.0));
    let omega = Frequency::from_hz(cfg.run.frequencies_hz[0])
        .map_err(|e| CliError::Config(e.to_string()))?;
    let field = mfeit_core::forward::solve_zero_thickness(&mesh, &phantom, omega, &g)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    mfeit_core::io::write_potential_csv(
        &out.join("potential.csv"),
        Some(&out.join("crack_pairs.csv")),
        &mesh,
        &field,
    )
    .map_err(CliError::io)?;
    let _ = fmt17(0.0);
    Ok(())
}
