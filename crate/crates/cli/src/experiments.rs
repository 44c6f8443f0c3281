//! The canned experiments: each composes core operations, returns ordered
//! summary scalars plus tables, and leaves all file writing to the caller.
//! Replica seeds always pass through the stable sub-seed derivation, so
//! adding experiments never perturbs existing streams.

use cascade_core::cascade::{self, CascadeRealization, TailPolicy, WeightModel};
use cascade_core::error::{Error, Result};
use cascade_core::ifs::{IfsSpec, Word, DEFAULT_ATOM_CAP};
use cascade_core::image::{self, Exclusion};
use cascade_core::measure::{self, DiscreteMeasure};
use cascade_core::peyriere::REJECTION_CAP;
use cascade_core::projection::{self, ConservationConfig, ProjectionFrame};
use cascade_core::rng;
use cascade_core::rotation::{self, Classification, RotationGroupInfo};
use rayon::prelude::*;

use crate::config::{Kind, Resolved, RootConfig};
use crate::tables::{fmt_e, ExperimentOutput, Scalar, Table};

pub fn run(r: &Resolved) -> Result<ExperimentOutput> {
    match r.kind {
        Kind::Validate => run_validate(r),
        Kind::Simulate => run_simulate(r),
        Kind::Dims => run_dims(r),
        Kind::Project => run_project(r),
        Kind::Conserve => run_conserve(r),
        Kind::Percolate => run_percolate(r),
        Kind::Distances => run_distances(r),
        Kind::EqScan => run_eq_scan(r),
        Kind::Sweep => Err(Error::ConfigInvalid {
            field: "sweep".into(),
            reason: "sweeps run through run_sweep with the raw config".into(),
        }),
    }
}

/// Build a cascade measure conditioned on survival: extinct realizations are
/// re-seeded (deterministically) up to the rejection cap.
fn surviving_measure(
    model: &WeightModel,
    ifs: &IfsSpec,
    level: usize,
    tail: TailPolicy,
    seed: u64,
    role: &str,
) -> Result<(DiscreteMeasure, usize)> {
    for attempt in 0..REJECTION_CAP {
        let s = rng::sub_seed(seed, role, attempt as u64);
        let real = CascadeRealization::new(model.clone(), s)?;
        match cascade::cascade_measure(&real, ifs, level, tail, DEFAULT_ATOM_CAP) {
            Ok(nu) => return Ok((nu, attempt)),
            Err(Error::Extinct { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Extinct {
        rejections: REJECTION_CAP,
    })
}

fn model_kind(model: &WeightModel) -> &'static str {
    match model {
        WeightModel::Deterministic(_) => "deterministic",
        WeightModel::Percolation { .. } => "percolation",
        WeightModel::GeneralDiscrete(_) => "general",
    }
}

fn classification_name(info: &RotationGroupInfo) -> String {
    match &info.classification {
        Classification::Finite(els) => format!("finite({})", els.len()),
        Classification::DenseInSo(d) => format!("dense-in-so({d})"),
        Classification::Undetermined => "undetermined".into(),
    }
}

fn word_label(w: &Word, alphabet: usize) -> String {
    if alphabet <= 10 {
        w.symbols().iter().map(|s| (b'0' + s) as char).collect()
    } else {
        w.symbols()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Per-level sample means and standard errors of the normalized masses Y_n
/// across deterministic replica seeds.
fn martingale_level_table(
    model: &WeightModel,
    seed: u64,
    replicas: usize,
    level: usize,
) -> Result<Table> {
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let real =
                CascadeRealization::new(model.clone(), rng::sub_seed(seed, "replica", i as u64))?;
            real.levelwise_mass(level, DEFAULT_ATOM_CAP)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("martingale_levels", "level,mean_mass,stderr");
    for k in 0..=level {
        let values: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let (mean, stderr) = cascade_core::fit::mean_stderr(&values);
        table.push(format!("{k},{},{}", fmt_e(mean), fmt_e(stderr)));
    }
    Ok(table)
}

fn tail_policy(tail_levels: u32) -> TailPolicy {
    if tail_levels == 0 {
        TailPolicy::Expectation
    } else {
        TailPolicy::Simulated(tail_levels)
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn run_validate(r: &Resolved) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let ratios = r.ifs.ratios();
    let report = cascade::validate_weight_model(&r.model)?;
    let s = cascade::similarity_dimension(&ratios)?;
    let group = rotation::classify_ifs_group(
        &r.ifs,
        rotation::DEFAULT_GROUP_TOL,
        rotation::DEFAULT_GROUP_CAP,
    )?;
    let stopping = rotation::stopping_alphabet(&r.ifs, 3, 1 << 20)?;

    out.scalar("model_kind", Scalar::S(model_kind(&r.model).into()));
    out.scalar("similarity_dimension", Scalar::F(s));
    out.scalar("mean_total", Scalar::F(report.mean_total));
    out.scalar(
        "branching_probability",
        Scalar::F(report.branching_probability),
    );
    let witness = report
        .moment_witnesses
        .iter()
        .find(|&&(_, v)| v < 1.0)
        .copied();
    out.scalar(
        "moment_witness_p",
        witness
            .map(|(p, _)| Scalar::F(p))
            .unwrap_or(Scalar::S("none".into())),
    );
    out.scalar(
        "moment_witness_value",
        witness
            .map(|(_, v)| Scalar::F(v))
            .unwrap_or(Scalar::S("none".into())),
    );
    out.scalar("validation_passed", Scalar::B(report.passed));
    out.scalar("failures", Scalar::S(report.failures.join("; ")));
    out.scalar("rotation_group", Scalar::S(classification_name(&group)));
    out.scalar("stopping_words_q3", Scalar::I(stopping.words.len() as i64));
    out.scalar("radius", Scalar::F(r.ifs.radius()));
    out.scalar("rho", Scalar::F(r.ifs.rho()));
    if let WeightModel::Percolation { law, alpha, .. } = &r.model {
        let m = r.ifs.alphabet_size();
        out.scalar("percolation_alpha", Scalar::F(*alpha));
        out.scalar(
            "survival_probability",
            Scalar::F(law.survival_probability(m)),
        );
    }

    let mut moments = Table::new("moments", "p,moment_sum");
    for (p, v) in &report.moment_witnesses {
        moments.push(format!("{},{}", fmt_e(*p), fmt_e(*v)));
    }
    out.tables.push(moments);
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn run_simulate(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.simulate.as_ref().expect("resolved simulate section");
    let mut out = ExperimentOutput::default();
    let tail = tail_policy(cfg.tail_levels);

    out.tables.push(martingale_level_table(
        &r.model,
        r.seed,
        cfg.replicas,
        cfg.level,
    )?);

    let (nu, rejections) = surviving_measure(&r.model, &r.ifs, cfg.level, tail, r.seed, "atoms")?;
    out.scalar("level", Scalar::I(cfg.level as i64));
    out.scalar("replicas", Scalar::I(cfg.replicas as i64));
    out.scalar("atoms", Scalar::I(nu.atom_count() as i64));
    out.scalar("total_mass", Scalar::F(nu.total_mass()));
    out.scalar("extent", Scalar::F(nu.extent()));
    out.scalar("rejections", Scalar::I(rejections as i64));

    if cfg.write_atoms {
        if nu.atom_count() > (1 << 20) {
            return Err(Error::ConfigInvalid {
                field: "simulate.write_atoms".into(),
                reason: format!("{} atoms exceed the 2^20 export cap", nu.atom_count()),
            });
        }
        let coords: String = (0..nu.dim()).map(|i| format!(",x{i}")).collect();
        let mut atoms = Table::new("atoms", format!("word{coords},mass"));
        let words = nu.words().expect("cascade measures carry words");
        let m = r.ifs.alphabet_size();
        for (i, word) in words.iter().enumerate() {
            let point: String = nu
                .point(i)
                .iter()
                .map(|c| format!(",{}", fmt_e(*c)))
                .collect();
            atoms.push(format!(
                "{}{point},{}",
                word_label(word, m),
                fmt_e(nu.mass(i))
            ));
        }
        out.tables.push(atoms);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// dims
// ---------------------------------------------------------------------------

fn run_dims(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.dims.as_ref().expect("resolved dims section");
    let mut out = ExperimentOutput::default();
    let (nu, rejections) = surviving_measure(
        &r.model,
        &r.ifs,
        cfg.level,
        TailPolicy::Expectation,
        r.seed,
        "survival",
    )?;

    let curve = measure::entropy_curve(
        &nu,
        &cfg.radii,
        cfg.budget,
        rng::sub_seed(r.seed, "entropy", 0),
    );
    let mut curve_table = Table::new("entropy_curve", "radius,log_radius,entropy,stderr");
    for (i, &radius) in curve.radii.iter().enumerate() {
        curve_table.push(format!(
            "{},{},{},{}",
            fmt_e(radius),
            fmt_e(radius.ln()),
            fmt_e(curve.entropies[i]),
            fmt_e(curve.stderrs[i])
        ));
    }
    out.tables.push(curve_table);

    let xs: Vec<f64> = curve
        .radii
        .iter()
        .map(|&radius| (1.0 / radius).ln())
        .collect();
    let fit = cascade_core::fit::line_fit(&xs, &curve.entropies);
    out.scalar("entropy_dimension", Scalar::F(fit.slope));
    out.scalar("entropy_dimension_stderr", Scalar::F(fit.slope_stderr));
    out.scalar("fit_r2", Scalar::F(fit.r2));

    let report = measure::exactness_diagnostic(
        &nu,
        cfg.samples,
        &cfg.radii,
        rng::sub_seed(r.seed, "exactness", 0),
    )?;
    out.scalar("local_mean", Scalar::F(report.mean));
    out.scalar("local_stderr", Scalar::F(report.stderr));
    out.scalar("local_iqr", Scalar::F(report.iqr));
    out.scalar("exact_dimensional", Scalar::B(report.exact));
    out.scalar("skipped_points", Scalar::I(report.skipped as i64));
    out.scalar("atoms", Scalar::I(nu.atom_count() as i64));
    out.scalar("rejections", Scalar::I(rejections as i64));
    let alpha = cascade::theoretical_alpha(&r.model, &r.ifs.ratios(), 0.0, r.ifs.dim())?;
    out.scalar("alpha_formula_ssc", Scalar::F(alpha.value));

    let mut hist = Table::new("local_histogram", "bin_left,count");
    for (left, count) in &report.histogram {
        hist.push(format!("{},{count}", fmt_e(*left)));
    }
    out.tables.push(hist);
    let mut locals = Table::new("local_dimensions", "index,value");
    for (i, v) in report.values.iter().enumerate() {
        locals.push(format!("{i},{}", fmt_e(*v)));
    }
    out.tables.push(locals);
    Ok(out)
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

fn run_project(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.project.as_ref().expect("resolved project section");
    let mut out = ExperimentOutput::default();
    let (nu, rejections) = surviving_measure(
        &r.model,
        &r.ifs,
        cfg.level,
        TailPolicy::Expectation,
        r.seed,
        "survival",
    )?;

    let frames: Vec<ProjectionFrame> = if !cfg.frames.is_empty() {
        cfg.frames
            .iter()
            .map(|f| ProjectionFrame::new(f.rows.clone()))
            .collect::<Result<_>>()?
    } else if r.ifs.dim() == 2 {
        projection::angle_grid(cfg.angles)
    } else {
        projection::haar_frames(
            r.ifs.dim(),
            1,
            cfg.haar_count,
            rng::sub_seed(r.seed, "frames", 0),
        )?
    };
    let k = frames.first().map(|f| f.k()).unwrap_or(1);

    let profile = projection::projected_dimension_profile(
        &nu,
        &frames,
        cfg.samples,
        &cfg.radii,
        rng::sub_seed(r.seed, "profile", 0),
    )?;
    let mut table = Table::new("profile", "frame,angle,value,stderr,iqr,exact,skipped");
    for row in &profile {
        let angle = row.angle.map(fmt_e).unwrap_or_default();
        table.push(format!(
            "{},{angle},{},{},{},{},{}",
            row.frame,
            fmt_e(row.mean),
            fmt_e(row.stderr),
            fmt_e(row.iqr),
            row.exact,
            row.skipped
        ));
    }
    out.tables.push(table);

    let report = projection::marstrand_check(&profile, cfg.alpha, k, cfg.tol);
    let mut check = Table::new("marstrand", "frame,value,pass");
    for row in &report.rows {
        check.push(format!("{},{},{}", row.frame, fmt_e(row.value), row.pass));
    }
    out.tables.push(check);

    let values: Vec<f64> = profile.iter().map(|row| row.mean).collect();
    let (mean_beta, _) = cascade_core::fit::mean_stderr(&values);
    let min_beta = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_beta = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.scalar("frames", Scalar::I(frames.len() as i64));
    out.scalar("expected", Scalar::F(report.expected));
    out.scalar("pass_fraction", Scalar::F(report.pass_fraction));
    out.scalar("all_pass", Scalar::B(report.all_pass));
    out.scalar("mean_beta", Scalar::F(mean_beta));
    out.scalar("min_beta", Scalar::F(min_beta));
    out.scalar("max_beta", Scalar::F(max_beta));
    out.scalar("rejections", Scalar::I(rejections as i64));
    Ok(out)
}

// ---------------------------------------------------------------------------
// conserve
// ---------------------------------------------------------------------------

fn run_conserve(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.conserve.as_ref().expect("resolved conserve section");
    let mut out = ExperimentOutput::default();
    let (nu, rejections) = surviving_measure(
        &r.model,
        &r.ifs,
        cfg.level,
        TailPolicy::Expectation,
        r.seed,
        "survival",
    )?;
    let frame = ProjectionFrame::coordinate(r.ifs.dim(), &[cfg.axis])?;
    let conservation = ConservationConfig {
        centers: cfg.centers,
        widths: cfg.widths.clone(),
        diag_samples: cfg.diag_samples,
        radii: cfg.radii.clone(),
        slice_radii: cfg.radii.clone(),
        stability_tol: cfg.stability_tol,
        seed: rng::sub_seed(r.seed, "conserve", 0),
    };
    let rep = projection::dimension_conservation_check(&nu, &frame, &conservation)?;

    let mut table = Table::new(
        "conservation",
        "alpha,alpha_stderr,beta,beta_stderr,gamma,gamma_stderr,residual,combined_stderr,stable,unstable,empty",
    );
    table.push(format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        fmt_e(rep.alpha),
        fmt_e(rep.alpha_stderr),
        fmt_e(rep.beta),
        fmt_e(rep.beta_stderr),
        fmt_e(rep.gamma),
        fmt_e(rep.gamma_stderr),
        fmt_e(rep.residual),
        fmt_e(rep.combined_stderr),
        rep.stable_centers,
        rep.unstable_centers,
        rep.empty_centers
    ));
    out.tables.push(table);

    out.scalar("alpha", Scalar::F(rep.alpha));
    out.scalar("alpha_stderr", Scalar::F(rep.alpha_stderr));
    out.scalar("beta", Scalar::F(rep.beta));
    out.scalar("beta_stderr", Scalar::F(rep.beta_stderr));
    out.scalar("gamma", Scalar::F(rep.gamma));
    out.scalar("gamma_stderr", Scalar::F(rep.gamma_stderr));
    out.scalar("residual", Scalar::F(rep.residual));
    out.scalar("combined_stderr", Scalar::F(rep.combined_stderr));
    out.scalar("stable_centers", Scalar::I(rep.stable_centers as i64));
    out.scalar("unstable_centers", Scalar::I(rep.unstable_centers as i64));
    out.scalar("empty_centers", Scalar::I(rep.empty_centers as i64));
    out.scalar("rejections", Scalar::I(rejections as i64));

    if cfg.entropy_gamma {
        let (gamma, stderr) = projection::entropy_formula_gamma(
            &r.model,
            &r.ifs,
            &frame,
            cfg.gamma_n,
            cfg.level,
            cfg.gamma_replicas,
            rng::sub_seed(r.seed, "gamma", 0),
        )?;
        out.scalar("gamma_formula", Scalar::F(gamma));
        out.scalar("gamma_formula_stderr", Scalar::F(stderr));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// percolate
// ---------------------------------------------------------------------------

fn run_percolate(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.percolate.as_ref().expect("resolved percolate section");
    let (law, _, alpha) = r.percolation_law()?;
    let m = r.ifs.alphabet_size();
    let mut out = ExperimentOutput::default();

    out.scalar("alpha", Scalar::F(alpha));
    let predicted = law.survival_probability(m);
    out.scalar("predicted_survival", Scalar::F(predicted));

    let survived = (0..cfg.seeds)
        .into_par_iter()
        .filter(|&i| {
            cascade_core::cascade::percolation_survives(
                &law,
                m,
                rng::sub_seed(r.seed, "survival-probe", i as u64),
                cfg.threshold,
                cfg.probe_depth,
            )
        })
        .count();
    let frequency = survived as f64 / cfg.seeds as f64;
    let freq_stderr = (frequency * (1.0 - frequency) / cfg.seeds as f64).sqrt();
    out.scalar("seeds", Scalar::I(cfg.seeds as i64));
    out.scalar("survival_frequency", Scalar::F(frequency));
    out.scalar("survival_stderr", Scalar::F(freq_stderr));
    let mut survival = Table::new("survival", "seeds,survived,frequency,predicted,stderr");
    survival.push(format!(
        "{},{survived},{},{},{}",
        cfg.seeds,
        fmt_e(frequency),
        fmt_e(predicted),
        fmt_e(freq_stderr)
    ));
    out.tables.push(survival);

    out.tables.push(martingale_level_table(
        &r.model, r.seed, cfg.seeds, cfg.level,
    )?);

    // Survivor geometry from the first non-extinct sample.
    let mut sample = None;
    for attempt in 0..REJECTION_CAP {
        let set = cascade::sample_percolation_set(
            &law,
            &r.ifs,
            cfg.level,
            rng::sub_seed(r.seed, "survivor-set", attempt as u64),
            DEFAULT_ATOM_CAP,
        )?;
        if !set.extinct {
            sample = Some(set);
            break;
        }
    }
    let sample = sample.ok_or(Error::Extinct {
        rejections: REJECTION_CAP,
    })?;
    let anchor = r.ifs.default_anchor();
    let points: Vec<Vec<f64>> = sample
        .survivors(cfg.level)
        .iter()
        .map(|w| Ok(r.ifs.compose(w)?.apply(&anchor)))
        .collect::<Result<_>>()?;
    out.scalar("survivor_count", Scalar::I(points.len() as i64));
    let counts = image::box_counts(&points, &cfg.scales)?;
    let mut boxes = Table::new("boxdim", "scale,count");
    for (&s, &c) in cfg.scales.iter().zip(&counts) {
        boxes.push(format!("{},{c}", fmt_e(s)));
    }
    out.tables.push(boxes);
    let est = image::box_dimension(&points, &cfg.scales)?;
    out.scalar("box_dimension", Scalar::F(est.value));
    out.scalar("box_dimension_stderr", Scalar::F(est.standard_error));
    out.scalar("box_fit_r2", Scalar::F(est.r2));

    if cfg.export_survivors {
        let mut text = String::new();
        for k in 0..=cfg.survivor_levels {
            let words: Vec<String> = sample
                .survivors(k)
                .iter()
                .map(|w| word_label(w, m))
                .collect();
            text.push_str(&format!("level {k}: {}\n", words.join(" ")));
        }
        out.texts.push(("survivors.txt".into(), text));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// distances
// ---------------------------------------------------------------------------

fn run_distances(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.distances.as_ref().expect("resolved distances section");
    let mut out = ExperimentOutput::default();

    // A realization can survive globally yet still be useless here: under
    // percolation the retained first-level cylinder may have died, or every
    // surviving atom may share one label so no pin exists outside it. Those
    // draws are re-seeded like extinctions, against the same rejection cap.
    let mut rejections = 0usize;
    let mut drawn = None;
    for attempt in 0..REJECTION_CAP {
        let s = rng::sub_seed(r.seed, "survival", attempt as u64);
        let real = CascadeRealization::new(r.model.clone(), s)?;
        let nu = match cascade::cascade_measure(
            &real,
            &r.ifs,
            cfg.level,
            TailPolicy::Expectation,
            DEFAULT_ATOM_CAP,
        ) {
            Ok(nu) => nu,
            Err(Error::Extinct { .. }) => {
                rejections += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match (cfg.exclusion_symbol, cfg.exclusion_radius) {
            (Some(sym), None) => {
                let labels = nu.labels().expect("cascade measures carry labels");
                let retained = labels.contains(&sym);
                let pin = labels.iter().position(|&l| l != sym);
                if let (true, Some(p)) = (retained, pin) {
                    drawn = Some((nu, Exclusion::Cylinder(sym), p));
                    break;
                }
                rejections += 1;
            }
            (None, Some(radius)) => {
                drawn = Some((nu, Exclusion::Radius(radius), 0));
                break;
            }
            _ => unreachable!("resolution fixes exactly one exclusion"),
        }
    }
    let Some((nu, exclusion, pin_index)) = drawn else {
        return Err(Error::Extinct {
            rejections: REJECTION_CAP,
        });
    };
    let pin = nu.point(pin_index).to_vec();
    let pinned = image::pinned_distance_measure(&nu, &pin, &exclusion)?;

    let extent = pinned.extent();
    let rho = r.ifs.rho();
    let r_max = extent / 4.0;
    let r_min = r_max * rho.powi(cfg.level.saturating_sub(2) as i32);
    let radii = measure::radius_schedule(r_max, r_min, 0.5)?;
    let curve = measure::entropy_curve(
        &pinned,
        &radii,
        cfg.budget,
        rng::sub_seed(r.seed, "pinned", 0),
    );
    let mut curve_table = Table::new("pinned_curve", "radius,log_radius,entropy,stderr");
    for (i, &radius) in curve.radii.iter().enumerate() {
        curve_table.push(format!(
            "{},{},{},{}",
            fmt_e(radius),
            fmt_e(radius.ln()),
            fmt_e(curve.entropies[i]),
            fmt_e(curve.stderrs[i])
        ));
    }
    out.tables.push(curve_table);
    let xs: Vec<f64> = curve
        .radii
        .iter()
        .map(|&radius| (1.0 / radius).ln())
        .collect();
    let fit = cascade_core::fit::line_fit(&xs, &curve.entropies);
    out.scalar("pinned_dimension", Scalar::F(fit.slope));
    out.scalar("pinned_dimension_stderr", Scalar::F(fit.slope_stderr));
    out.scalar("pinned_fit_r2", Scalar::F(fit.r2));
    out.scalar("pinned_atoms", Scalar::I(pinned.atom_count() as i64));

    let alpha = cascade::theoretical_alpha(&r.model, &r.ifs.ratios(), 0.0, r.ifs.dim())?;
    out.scalar("alpha_formula_ssc", Scalar::F(alpha.value));
    out.scalar("expected_pinned", Scalar::F(alpha.value.min(1.0)));

    let points: Vec<Vec<f64>> = (0..nu.atom_count()).map(|i| nu.point(i).to_vec()).collect();
    let dists = image::distance_set_cloud(&points, cfg.pairs, rng::sub_seed(r.seed, "pairs", 0));
    let dmax = dists.iter().cloned().fold(0.0f64, f64::max);
    let scales: Vec<f64> = (2..2 + cfg.box_scales as i32)
        .map(|k| dmax * 0.5f64.powi(k))
        .collect();
    let cloud: Vec<Vec<f64>> = dists.iter().map(|&d| vec![d]).collect();
    let counts = image::box_counts(&cloud, &scales)?;
    let mut boxes = Table::new("distance_boxes", "scale,count");
    for (&s, &c) in scales.iter().zip(&counts) {
        boxes.push(format!("{},{c}", fmt_e(s)));
    }
    out.tables.push(boxes);
    let est = image::box_dimension(&cloud, &scales)?;
    out.scalar("distance_box_dimension", Scalar::F(est.value));
    out.scalar("distance_box_stderr", Scalar::F(est.standard_error));
    out.scalar("distance_pairs", Scalar::I(dists.len() as i64));
    out.scalar("rejections", Scalar::I(rejections as i64));
    Ok(out)
}

// ---------------------------------------------------------------------------
// eq-scan
// ---------------------------------------------------------------------------

fn run_eq_scan(r: &Resolved) -> Result<ExperimentOutput> {
    let cfg = r.eq.as_ref().expect("resolved eq section");
    let mut out = ExperimentOutput::default();
    let mut group = rotation::classify_ifs_group(&r.ifs, cfg.group_tol, cfg.group_cap)?;
    if matches!(group.classification, Classification::Undetermined) && cfg.assert_dense {
        group.classification = Classification::DenseInSo(r.ifs.dim());
    }
    out.scalar("rotation_group", Scalar::S(classification_name(&group)));
    let frame = ProjectionFrame::coordinate(r.ifs.dim(), &cfg.axes)?;

    let mut table = Table::new("eq_scan", "q,value,stderr,clamped,rejections");
    let mut values = Vec::with_capacity(cfg.qs.len());
    for &q in &cfg.qs {
        let est = projection::expected_e_q(
            &r.model,
            &r.ifs,
            &group,
            &frame,
            q,
            cfg.level,
            cfg.replicas,
            cfg.budget,
            rng::sub_seed(r.seed, "eq", q as u64),
        )?;
        table.push(format!(
            "{q},{},{},{},{}",
            fmt_e(est.value),
            fmt_e(est.stderr),
            est.clamped,
            est.rejections
        ));
        out.scalar(&format!("eq_{q}"), Scalar::F(est.value));
        out.scalar(&format!("eq_{q}_stderr"), Scalar::F(est.stderr));
        values.push(est.value);
    }
    out.tables.push(table);
    if values.len() >= 2 {
        let last = values[values.len() - 1];
        let prev = values[values.len() - 2];
        out.scalar("stabilization_gap", Scalar::F((last - prev).abs()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Re-run one experiment kind over a single gridded parameter: the raw file
/// table is patched per value, revalidated fail-closed, and run with a
/// deterministic sub-seed. Inner runs write nothing; their summary scalars
/// become the sweep rows.
pub fn run_sweep(r: &Resolved, raw_table: &toml::Table) -> Result<ExperimentOutput> {
    let cfg = r.sweep.as_ref().expect("resolved sweep section");
    let kind = Kind::from_name(&cfg.kind)?;
    let mut out = ExperimentOutput::default();
    let mut table: Option<Table> = None;
    for (i, value) in cfg.values.iter().enumerate() {
        let mut patched = raw_table.clone();
        crate::config::set_path(&mut patched, &cfg.parameter, value.clone())?;
        let raw: RootConfig =
            toml::Value::Table(patched)
                .try_into()
                .map_err(|e| Error::ConfigInvalid {
                    field: cfg.parameter.clone(),
                    reason: format!("patched config is invalid: {e}"),
                })?;
        let inner = crate::config::resolve(
            kind,
            &raw,
            Some(rng::sub_seed(r.seed, "sweep", i as u64)),
            Some(r.out.clone()),
        )?;
        let result = run(&inner)?;
        let row_table = table.get_or_insert_with(|| {
            let names: Vec<String> = result.scalars.iter().map(|(n, _)| n.clone()).collect();
            Table::new("sweep", format!("index,value,{}", names.join(",")))
        });
        let mut cells = vec![i.to_string(), csv_cell(&value.to_string())];
        for (_, v) in &result.scalars {
            cells.push(csv_cell(&v.to_string()));
        }
        row_table.push(cells.join(","));
    }
    out.scalar("kind", Scalar::S(cfg.kind.clone()));
    out.scalar("parameter", Scalar::S(cfg.parameter.clone()));
    out.scalar("grid_points", Scalar::I(cfg.values.len() as i64));
    out.tables
        .push(table.expect("nonempty grid resolved earlier"));
    Ok(out)
}

/// Quote a CSV cell only when it needs it.
fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
