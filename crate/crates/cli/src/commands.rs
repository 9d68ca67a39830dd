//! One function per subcommand. Each writes its artifacts under the
//! configured output directory.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use suspvisc::analytic::kernel_table;
use suspvisc::artifact::write_atomic;
use suspvisc::dilute::{near_kernel_reflection, SecondOrderTensor};
use suspvisc::effective::CSV_HEADER;
use suspvisc::spectral::{random_boundary_data, write_field, write_solver_log};
use suspvisc::stats::mean_stderr;
use suspvisc::{
    assemble_tensor, assemble_tensor_richardson, bg_near_kernel, cluster_terms, dissipation, einstein_fit, finite_volume_convergence, force_torque,
    generate, geometry_diagnostics, mvp_ratio, pair_correlation, sandwich_bounds, second_order_tensor,
    second_order_term, solve_corrector, EnsembleSpec, Error, NearKernelOptions, ParticleConfig, Result,
    SandwichBounds, SecondOrderOptions, StrainBasis,
};

use crate::config::CampaignConfig;

/// JSON artifact: the result together with the configuration that made it.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    seed: u64,
    config: &'a CampaignConfig,
    result: T,
}

pub struct Writer<'a> {
    pub config: &'a CampaignConfig,
    pub written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    pub fn new(config: &'a CampaignConfig) -> Self {
        Self {
            config,
            written: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.output.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, result: T) -> Result<()> {
        let a = Artifact {
            seed: self.config.seed,
            config: self.config,
            result,
        };
        let mut text = serde_json::to_string_pretty(&a)?;
        text.push('\n');
        let p = self.path(name);
        write_atomic(&p, text.as_bytes())?;
        self.written.push(p);
        Ok(())
    }

    /// CSV preceded by `#` lines carrying the seed and the configuration.
    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# seed = {}", self.config.seed);
        let _ = writeln!(s, "# config = {}", serde_json::to_string(self.config)?);
        s.push_str(body);
        let p = self.path(name);
        write_atomic(&p, s.as_bytes())?;
        self.written.push(p);
        Ok(())
    }

    fn raw(&mut self, p: PathBuf) {
        self.written.push(p);
    }
}

fn configs_of(spec: &EnsembleSpec, count: usize) -> Result<Vec<ParticleConfig>> {
    (0..count as u64)
        .map(|k| {
            let mut s = spec.clone();
            s.seed = spec.config_seed(k);
            generate(&s)
        })
        .collect()
}

fn single_config(cfg: &CampaignConfig) -> Result<ParticleConfig> {
    match &cfg.options.input {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", p.display())))?;
            let c = ParticleConfig::from_json(&text)?;
            c.validate()?;
            Ok(c)
        }
        None => {
            let spec = cfg.spec();
            spec.validate()?;
            Ok(configs_of(&spec, 1)?.remove(0))
        }
    }
}

fn strain_of(cfg: &CampaignConfig, dim: usize) -> Result<(StrainBasis, usize)> {
    let basis = StrainBasis::canonical(dim)?;
    let i = cfg.options.strain;
    if i >= basis.len() {
        return Err(Error::Validation(format!("strain index {i} outside the basis of size {}", basis.len())));
    }
    Ok((basis, i))
}

pub fn gen(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let spec = cfg.spec();
    spec.validate()?;
    let configs = configs_of(&spec, cfg.n_configs)?;
    let diagnostics = configs
        .iter()
        .map(|c| geometry_diagnostics(c, 1.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    #[derive(Serialize)]
    struct Gen<'a> {
        configurations: &'a [ParticleConfig],
        min_gaps: Vec<Option<f64>>,
    }
    w.json(
        "configs.json",
        Gen {
            configurations: &configs,
            min_gaps: diagnostics.iter().map(|d| d.min_gap()).collect(),
        },
    )?;
    if !configs.is_empty() {
        let pc = pair_correlation(&configs, cfg.options.bin_width, None)?;
        w.csv("pair_correlation.csv", &pc.to_csv())?;
    }
    Ok(())
}

pub fn solve(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    cfg.solver.validate()?;
    let config = single_config(cfg)?;
    let (basis, i) = strain_of(cfg, config.dim)?;
    let e = basis.elements[i];
    let field = solve_corrector(&config, &e, &cfg.solver)?;
    let loads = force_torque(&field, &config)?;
    #[derive(Serialize)]
    struct Solve<'a> {
        configuration: &'a ParticleConfig,
        strain: [[f64; 3]; 3],
        dissipation: f64,
        iterations: usize,
        residual: f64,
        divergence: f64,
        rigidity_residual: f64,
        max_force: f64,
        max_torque: f64,
        field_file: &'a str,
    }
    let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let field_file = "velocity.bin";
    let names: Vec<String> = (0..config.dim).map(|a| format!("u{a}")).collect();
    let path = cfg.output.join(field_file);
    write_field(&path, &field.grid, &names, &field.velocity())?;
    w.raw(path.clone());
    let mut side = path.into_os_string();
    side.push(".json");
    w.raw(side.into());
    let log = cfg.output.join("solver_log.csv");
    write_solver_log(&log, &field.history)?;
    w.raw(log);
    w.json(
        "solve.json",
        Solve {
            configuration: &config,
            strain: e,
            dissipation: dissipation(&field, &config, cfg.solver.theta)?,
            iterations: field.iterations,
            residual: field.residual,
            divergence: field.divergence,
            rigidity_residual: field.rigidity_residual,
            max_force: loads.iter().map(|l| norm(&l.force)).fold(0.0, f64::max),
            max_torque: loads.iter().map(|l| norm(&l.torque)).fold(0.0, f64::max),
            field_file,
        },
    )
}

pub fn effvisc(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let t = if cfg.options.richardson {
        assemble_tensor_richardson(&cfg.spec(), &cfg.solver, cfg.n_configs)?
    } else {
        assemble_tensor(&cfg.spec(), &cfg.solver, cfg.n_configs)?
    };
    let mut csv = String::from(CSV_HEADER);
    csv.push_str(&t.csv_rows());
    w.csv("effvisc.csv", &csv)?;
    w.json("effvisc.json", &t)
}

pub fn einstein(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let mut tensors = Vec::new();
    let mut csv = String::from(CSV_HEADER);
    for phi in cfg.phi_list() {
        let t = assemble_tensor(&cfg.spec_at(phi, cfg.ensemble.side), &cfg.solver, cfg.n_configs)?;
        csv.push_str(&t.csv_rows());
        tensors.push(t);
    }
    w.csv("einstein_slope.csv", &csv)?;
    let fit = einstein_fit(&tensors)?;
    #[derive(Serialize)]
    struct Einstein<'a> {
        slope: f64,
        slope_stderr: f64,
        fit: &'a suspvisc::DiluteFit,
        tensors: &'a [suspvisc::ViscosityTensor],
    }
    w.json(
        "einstein_fit.json",
        Einstein {
            slope: fit.isotropic_slope,
            slope_stderr: fit.isotropic_slope_stderr,
            fit: &fit,
            tensors: &tensors,
        },
    )
}

pub fn cluster(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let config = single_config(cfg)?;
    let k = cfg.options.particles.min(config.len());
    if k < cfg.options.particles {
        log::warn!("configuration has only {} particles", config.len());
    }
    let sub = config.select(&(0..k).collect::<Vec<_>>());
    let (basis, i) = strain_of(cfg, config.dim)?;
    let report = cluster_terms(&sub, &basis.elements[i], &cfg.solver, cfg.options.allow_large)?;
    w.json("cluster.json", &report)
}

pub fn bg(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let dim = cfg.ensemble.dim;
    let (basis, i) = strain_of(cfg, dim)?;
    let e = basis.elements[i];
    // kernels along a fixed generic direction
    let dir = if dim == 2 { [0.8, 0.6, 0.0] } else { [0.48, 0.6, 0.64] };
    let far = kernel_table(dim, &e, &dir, &cfg.options.radii)?;
    let opts = NearKernelOptions::for_dim(dim);
    let mut csv = String::from("r,far,near_reflection,near_numeric\n");
    for &(r, k) in &far {
        let y = [r * dir[0], r * dir[1], r * dir[2]];
        let refl = near_kernel_reflection(dim, &y, &e)?;
        let num = if cfg.options.numeric_near {
            bg_near_kernel(&y, &e, &cfg.solver, &opts)?.numeric
        } else {
            None
        };
        let num = num.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(csv, "{r},{k:e},{refl:e},{num}");
    }
    w.csv("bg_kernels.csv", &csv)?;

    let spec = cfg.spec();
    spec.validate()?;
    let configs = configs_of(&spec, cfg.n_configs)?;
    let pc = pair_correlation(&configs, cfg.options.bin_width, None)?;
    let so = SecondOrderOptions::default();
    let term = second_order_term(&pc, &e, &so)?;
    w.csv("bg_quadrature.csv", &term.trace_csv())?;
    let tensor: Option<SecondOrderTensor> = if cfg.options.tensor { Some(second_order_tensor(&pc, &so)?) } else { None };
    #[derive(Serialize)]
    struct Bg<'a> {
        intensity: f64,
        lambda2: f64,
        term: &'a suspvisc::SecondOrderTerm,
        tensor: Option<SecondOrderTensor>,
    }
    w.json(
        "bg_second_order.json",
        Bg {
            intensity: pc.intensity,
            lambda2: pc.lambda2,
            term: &term,
            tensor,
        },
    )
}

pub fn bounds(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let spec = cfg.spec();
    spec.validate()?;
    let basis = StrainBasis::canonical(spec.dim)?;
    let configs = configs_of(&spec, cfg.n_configs)?;
    let per: Vec<SandwichBounds> = configs.iter().map(|c| sandwich_bounds(c, &basis)).collect::<Result<_>>()?;
    let m = basis.len();
    let stat = |f: &dyn Fn(&SandwichBounds) -> f64| mean_stderr(&per.iter().map(f).collect::<Vec<_>>());
    let upper: Vec<(f64, f64)> = (0..m).map(|i| stat(&|b| b.upper[i])).collect();
    let lower: Vec<(f64, f64)> = (0..m).map(|i| stat(&|b| b.lower_estimate[i])).collect();
    #[derive(Serialize)]
    struct Bounds<'a> {
        upper_mean_stderr: Vec<(f64, f64)>,
        lower_estimate_mean_stderr: Vec<(f64, f64)>,
        per_config: &'a [SandwichBounds],
    }
    w.json(
        "bounds.json",
        Bounds {
            upper_mean_stderr: upper,
            lower_estimate_mean_stderr: lower,
            per_config: &per,
        },
    )
}

/// Three particles on a small triangle about the box center.
pub fn mvp_geometry(dim: usize, side: f64, gap: f64) -> ParticleConfig {
    let c = 0.5 * side;
    let circum = (2.0 + gap + 0.1) / 3f64.sqrt();
    let centers = (0..3)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0 + 0.1;
            [c + circum * a.cos(), c + circum * a.sin(), if dim == 3 { c } else { 0.0 }]
        })
        .collect();
    ParticleConfig::new(dim, side, gap, 0, centers)
}

pub fn mvp(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    cfg.solver.validate()?;
    let dim = cfg.ensemble.dim;
    let config = match cfg.options.input {
        Some(_) => single_config(cfg)?,
        None => mvp_geometry(dim, cfg.ensemble.side, cfg.ensemble.gap),
    };
    let data = random_boundary_data(dim, cfg.options.data_count, cfg.options.max_mode, cfg.seed);
    let mut sc = cfg.solver.clone();
    if sc.kappa == 0.0 {
        sc.kappa = sc.theta;
    }
    let report = mvp_ratio(&config, cfg.options.radius, cfg.ensemble.gap, &data, &sc)?;
    #[derive(Serialize)]
    struct Mvp<'a> {
        configuration: &'a ParticleConfig,
        report: &'a suspvisc::spectral::MvpReport,
    }
    w.json(
        "mvp.json",
        Mvp {
            configuration: &config,
            report: &report,
        },
    )
}

/// `(L, n)` levels with `n = L / h`, which must be an integer.
pub fn levels(sides: &[f64], h: f64) -> Result<Vec<(f64, usize)>> {
    if !(h > 0.0) {
        return Err(Error::Validation(format!("voxel size {h} must be positive")));
    }
    sides
        .iter()
        .map(|&l| {
            let n = (l / h).round();
            if (n * h - l).abs() > 1e-9 * l {
                return Err(Error::Validation(format!(
                    "inconsistent voxel size: L = {l} is not a multiple of {h}"
                )));
            }
            Ok((l, n as usize))
        })
        .collect()
}

pub fn converge(w: &mut Writer) -> Result<()> {
    let cfg = w.config;
    let sides = cfg.side_list();
    let h = cfg.options.voxel.unwrap_or(cfg.ensemble.side / cfg.solver.n as f64);
    let lv = levels(&sides, h)?;
    let table = finite_volume_convergence(&cfg.spec(), &lv, &cfg.solver, cfg.n_configs)?;
    w.json("converge.json", &table)
}

pub fn run(name: &str, w: &mut Writer) -> Result<()> {
    match name {
        "gen" => gen(w),
        "solve" => solve(w),
        "effvisc" => effvisc(w),
        "einstein" => einstein(w),
        "cluster" => cluster(w),
        "bg" => bg(w),
        "bounds" => bounds(w),
        "mvp" => mvp(w),
        "converge" => converge(w),
        other => Err(Error::Validation(format!("unknown command '{other}'"))),
    }
}
