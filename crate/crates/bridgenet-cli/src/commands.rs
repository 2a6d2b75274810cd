//! Command implementations. Every command writes its artifacts under the
//! configured output directory and is byte-idempotent for a fixed
//! config+seed, except for `[timing]` sections.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bridgenet::dataset::{
    generate_dataset, load_dataset, save_dataset, Dataset, LabelingConfig,
};
use bridgenet::error::{Error, Result};
use bridgenet::evaluate::{
    run_accuracy_experiment, run_perturbation_experiment,
    run_ratio_sweep, run_transfer_experiment, write_error_geojson, write_per_node_csv,
    write_report, ClassBands, RatioReport, ReportFile,
};
use bridgenet::gnn::{load_model, save_model, train, GnnModel, GraphTopology, TrainConfig};
use bridgenet::graph::{load_network, write_csv_pair, Network};
use bridgenet::hazard::{
    compute_failure_field, site_intensity, FailureField, FragilityTable, GmpeConfig,
    SeismicScenario, SigmaMode, SiteParams,
};
use bridgenet::mc::estimate_connectivity;
use bridgenet::seed;
use bridgenet::synth::{extend_network, synth_network};

use crate::config::RunConfig;

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) {
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
        cfg.split.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.paths.out_dir = out.clone();
    }
}

pub fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, ov);
    Ok(cfg)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.paths.out_dir)
        .map_err(|e| Error::io(cfg.paths.out_dir.display().to_string(), e))
}

fn load_inputs(cfg: &RunConfig) -> Result<(Network, GmpeConfig, FragilityTable)> {
    cfg.validate_inputs(true)?;
    let net = load_network(&cfg.paths.network, cfg.paths.network_format)?;
    let gmpe = GmpeConfig::load(&cfg.paths.gmpe)?;
    let fragility = FragilityTable::load(&cfg.paths.fragility)?;
    Ok((net, gmpe, fragility))
}

/// `synth`: generate (or extend) a synthetic network and write csv-pair
/// files into the output directory.
pub fn cmd_synth(
    nodes: usize,
    edges: usize,
    bridges: usize,
    seed: u64,
    extend: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let net = match extend {
        None => synth_network(nodes, edges, bridges, seed)?,
        Some(base_dir) => {
            let base = load_network(base_dir, bridgenet::graph::NetworkFormat::CsvPair)?;
            extend_network(&base, nodes, edges, bridges, seed)?
        }
    };
    write_csv_pair(&net, out)?;
    log::info!(
        "wrote network ({} nodes, {} edges, {} bridges) to {}",
        net.node_count(),
        net.edge_count(),
        net.bridge_count(),
        out.display()
    );
    Ok(())
}

fn scenario_field(
    cfg: &RunConfig,
    net: &Network,
    gmpe: &GmpeConfig,
    fragility: &FragilityTable,
) -> Result<(SeismicScenario, FailureField)> {
    let scenario = cfg.scenario.to_scenario();
    let field = compute_failure_field(net, &scenario, gmpe, fragility, seed::mix(cfg.seed, 0x4a2))?;
    Ok((scenario, field))
}

/// `hazard`: per-bridge intensities and failure probabilities, plus the
/// per-edge failure probabilities, as two csv files.
pub fn cmd_hazard(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, gmpe, fragility) = load_inputs(cfg)?;
    let (scenario, field) = scenario_field(cfg, &net, &gmpe, &fragility)?;

    let mut bridge_csv = String::from("bridge_id,edge_id,pga_g,sa_0p3_g,sa_1p0_g,p_fail\n");
    for bridge in net.bridges() {
        let site = SiteParams {
            vs30: gmpe.default_vs30(),
            rupture_distance_km: bridgenet::graph::great_circle_km(
                scenario.epicenter.0,
                scenario.epicenter.1,
                bridge.lon,
                bridge.lat,
            ),
        };
        let bridge_seed = match scenario.sigma_mode {
            SigmaMode::Median => None,
            SigmaMode::Sampled => Some(seed::mix2(
                seed::mix(cfg.seed, 0x4a2),
                0x516,
                bridge.id as u64,
            )),
        };
        let intensity = site_intensity(&scenario, &site, &gmpe, bridge_seed)?;
        let _ = writeln!(
            bridge_csv,
            "{},{},{},{},{},{}",
            bridge.id,
            bridge.edge_id,
            intensity.pga_g,
            intensity.sa_0p3_g,
            intensity.sa_1p0_g,
            field.bridge_probs[bridge.id]
        );
    }
    let path = cfg.paths.out_dir.join("bridge_probs.csv");
    fs::write(&path, bridge_csv).map_err(|e| Error::io(path.display().to_string(), e))?;

    let mut edge_csv = String::from("edge_id,p_e\n");
    for (e, p) in field.edge_probs.iter().enumerate() {
        let _ = writeln!(edge_csv, "{e},{p}");
    }
    let path = cfg.paths.out_dir.join("edge_probs.csv");
    fs::write(&path, edge_csv).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_edge_probs_csv(path: &Path, edge_count: usize) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut probs = vec![0.0; edge_count];
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let (id, p) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path.display().to_string(), format!("bad row `{line}`")))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(path.display().to_string(), "bad edge id"))?;
        if id >= edge_count {
            return Err(Error::Validation(format!(
                "edge id {id} out of range ({edge_count} edges)"
            )));
        }
        probs[id] = p
            .trim()
            .parse()
            .map_err(|_| Error::parse(path.display().to_string(), "bad probability"))?;
    }
    Ok(probs)
}

fn field_for_command(
    cfg: &RunConfig,
    net: &Network,
    gmpe: &GmpeConfig,
    fragility: &FragilityTable,
    override_csv: Option<&PathBuf>,
) -> Result<FailureField> {
    match override_csv {
        Some(csv) => {
            let probs = read_edge_probs_csv(csv, net.edge_count())?;
            Ok(FailureField::from_edge_probs(
                cfg.scenario.to_scenario(),
                probs,
            ))
        }
        None => Ok(scenario_field(cfg, net, gmpe, fragility)?.1),
    }
}

/// `mc`: Monte Carlo connectivity estimates for the configured targets.
pub fn cmd_mc(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, gmpe, fragility) = load_inputs(cfg)?;
    let field = field_for_command(cfg, &net, &gmpe, &fragility, cfg.mc.edge_probs_csv.as_ref())?;

    let mut out = String::from("node_id,target_id,probability,std_error,samples\n");
    for &t in &cfg.mc.targets {
        let mc_cfg = cfg.mc.to_config(seed::mix2(cfg.seed, 0x3c, t as u64));
        let est = estimate_connectivity(&net, &field, t, &mc_cfg)?;
        for v in 0..net.node_count() {
            let _ = writeln!(
                out,
                "{v},{t},{},{},{}",
                est.probabilities[v], est.std_errors[v], est.samples_used[v]
            );
        }
    }
    let path = cfg.paths.out_dir.join("mc_estimates.csv");
    fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `dataset`: generate and store the labeled dataset directory.
pub fn cmd_dataset(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, gmpe, fragility) = load_inputs(cfg)?;
    let labeling = LabelingConfig {
        gmpe: &gmpe,
        fragility: &fragility,
        scenario_model: &cfg.scenario_model,
        mc: &cfg.mc.to_config(0),
    };
    let mut split = cfg.split.clone();
    split.seed = seed::mix(cfg.seed, 0x59137);
    let ds = generate_dataset(
        &net,
        cfg.dataset.n_k,
        &split,
        &labeling,
        seed::mix(cfg.seed, 0xda7a),
    )?;
    let dir = cfg.dataset_dir();
    save_dataset(&ds, &dir)?;
    log::info!(
        "dataset: {} train / {} test samples in {}",
        ds.train.len(),
        ds.test.len(),
        dir.display()
    );
    Ok(())
}

fn write_train_meta(path: &Path, wall_s: f64, best_epoch: usize) -> Result<()> {
    let text = format!("best_epoch = {best_epoch}\n\n[timing]\nwall_time_train_s = {wall_s}\n");
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_train_wall(path: &Path) -> f64 {
    fs::read_to_string(path)
        .ok()
        .and_then(|text| text.parse::<toml::Value>().ok())
        .and_then(|v| {
            v.get("timing")?
                .get("wall_time_train_s")?
                .as_float()
        })
        .unwrap_or(0.0)
}

fn train_meta_path(cfg: &RunConfig) -> PathBuf {
    let mut p = cfg.model_path().into_os_string();
    p.push(".meta.toml");
    PathBuf::from(p)
}

/// `train`: fit the surrogate on the stored dataset, save the checkpoint,
/// loss history, and a timing sidecar.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    cfg.validate_inputs(true)?;
    let net = load_network(&cfg.paths.network, cfg.paths.network_format)?;
    let ds = load_dataset(&cfg.dataset_dir())?;
    check_dataset_matches(&ds, &net)?;

    let topo = GraphTopology::from_network(&net);
    let model = GnnModel::init(ds.normalization.clone(), seed::mix(cfg.seed, 0x1417));
    let train_cfg = TrainConfig {
        seed: seed::mix(cfg.seed, 0x7a41),
        ..cfg.train.clone()
    };
    let start = Instant::now();
    let outcome = train(model, &ds.train, &topo, &train_cfg)?;
    let wall_s = start.elapsed().as_secs_f64();

    save_model(&outcome.model, &train_cfg, &cfg.model_path())?;
    write_train_meta(&train_meta_path(cfg), wall_s, outcome.best_epoch)?;

    let mut history = String::from("epoch,train_loss,val_loss\n");
    for e in &outcome.history {
        let val = e
            .val_loss
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(history, "{},{},{val}", e.epoch, e.train_loss);
    }
    let path = cfg.paths.out_dir.join("loss_history.csv");
    fs::write(&path, history).map_err(|e| Error::io(path.display().to_string(), e))?;
    log::info!(
        "trained {} epochs in {wall_s:.1}s (best epoch {})",
        outcome.history.len(),
        outcome.best_epoch
    );
    Ok(())
}

fn check_dataset_matches(ds: &Dataset, net: &Network) -> Result<()> {
    if ds.network_nodes != net.node_count() || ds.network_edges != net.edge_count() {
        return Err(Error::ShapeMismatch(format!(
            "dataset was generated on a {}x{} network, current network is {}x{}",
            ds.network_nodes,
            ds.network_edges,
            net.node_count(),
            net.edge_count()
        )));
    }
    Ok(())
}

/// `predict`: per-node connectivity probabilities for one target under the
/// configured scenario (or an edge-probability csv).
pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, gmpe, fragility) = load_inputs(cfg)?;
    let (model, _) = load_model(&cfg.model_path())?;
    let field = field_for_command(
        cfg,
        &net,
        &gmpe,
        &fragility,
        cfg.predict.edge_probs_csv.as_ref(),
    )?;
    let preds = bridgenet::gnn::predict(&model, &net, &field, cfg.predict.target)?;
    let mut out = String::from("node_id,target_id,probability\n");
    for (v, p) in preds.iter().enumerate() {
        let _ = writeln!(out, "{v},{},{p}", cfg.predict.target);
    }
    let path = cfg.paths.out_dir.join("predictions.csv");
    fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `evaluate`: score the trained model against the dataset's held-out test
/// samples; writes `report.toml`, `per_node_errors.csv`,
/// `error_map.geojson`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    cfg.validate_inputs(true)?;
    let net = load_network(&cfg.paths.network, cfg.paths.network_format)?;
    let ds = load_dataset(&cfg.dataset_dir())?;
    check_dataset_matches(&ds, &net)?;
    let (model, _) = load_model(&cfg.model_path())?;
    let train_wall = read_train_wall(&train_meta_path(cfg));

    let bands = ClassBands::default();
    let mc_cfg = cfg.mc.to_config(0);
    let report = run_accuracy_experiment(&model, &net, &ds.test, &mc_cfg, &bands, train_wall)?;

    write_report(
        &ReportFile::new(&report.metrics, cfg.echo()),
        &cfg.paths.out_dir.join("report.toml"),
    )?;
    write_per_node_csv(&report.per_node, &cfg.paths.out_dir.join("per_node_errors.csv"))?;
    write_error_geojson(
        &net,
        &report.node_mae,
        &cfg.paths.out_dir.join("error_map.geojson"),
    )?;
    log::info!(
        "evaluate: mae {:.4}, f1_2 {:.3}, max node mae {:.4} at node {}",
        report.metrics.mae,
        report.metrics.f1_2class,
        report.max_mae,
        report.max_mae_node
    );
    Ok(())
}

fn write_ratio_sweep(reports: &[RatioReport], path: &Path) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row {
        ratio: f64,
        train_targets: usize,
        mae: f64,
        mse: f64,
        f1_2class: f64,
        f1_3class: f64,
        pearson_r: f64,
        fp_fn_rate: f64,
    }
    #[derive(serde::Serialize)]
    struct File {
        sweep: Vec<Row>,
    }
    let file = File {
        sweep: reports
            .iter()
            .map(|r| Row {
                ratio: r.ratio,
                train_targets: r.train_targets,
                mae: r.metrics.mae,
                mse: r.metrics.mse,
                f1_2class: r.metrics.f1_2class,
                f1_3class: r.metrics.f1_3class,
                pearson_r: r.metrics.pearson_r,
                fp_fn_rate: r.metrics.fp_fn_rate,
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `experiment ratio`: sweep training-target ratios against a fixed test
/// set; writes `ratio_sweep.toml`.
pub fn cmd_experiment_ratio(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, gmpe, fragility) = load_inputs(cfg)?;
    let labeling = LabelingConfig {
        gmpe: &gmpe,
        fragility: &fragility,
        scenario_model: &cfg.scenario_model,
        mc: &cfg.mc.to_config(0),
    };
    let mut split = cfg.split.clone();
    split.seed = seed::mix(cfg.seed, 0x59137);
    let reports = run_ratio_sweep(
        &net,
        &cfg.experiment.ratios,
        &split,
        cfg.dataset.n_k,
        &labeling,
        &cfg.train,
        &ClassBands::default(),
        seed::mix(cfg.seed, 0x9a70),
    )?;
    write_ratio_sweep(&reports, &cfg.paths.out_dir.join("ratio_sweep.toml"))
}

/// `experiment perturb`: evaluate the frozen model on test samples whose
/// edge probabilities carry 20% relative Gaussian noise (relabeled by MC);
/// writes `perturb_report.toml`.
pub fn cmd_experiment_perturb(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    cfg.validate_inputs(true)?;
    let net = load_network(&cfg.paths.network, cfg.paths.network_format)?;
    let ds = load_dataset(&cfg.dataset_dir())?;
    check_dataset_matches(&ds, &net)?;
    let (model, _) = load_model(&cfg.model_path())?;
    let metrics = run_perturbation_experiment(
        &model,
        &net,
        &ds.test,
        cfg.experiment.noise_frac,
        &cfg.mc.to_config(0),
        &ClassBands::default(),
        seed::mix(cfg.seed, 0x9e27),
    )?;
    write_report(
        &ReportFile::new(&metrics, cfg.echo()),
        &cfg.paths.out_dir.join("perturb_report.toml"),
    )
}

/// `experiment transfer`: train on a synthetic base network, evaluate the
/// frozen model on a superset network; writes both networks and
/// `transfer_report.toml`.
pub fn cmd_experiment_transfer(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    cfg.validate_inputs(false)?;
    let gmpe = GmpeConfig::load(&cfg.paths.gmpe)?;
    let fragility = FragilityTable::load(&cfg.paths.fragility)?;
    let t = &cfg.experiment.transfer;

    let base = synth_network(
        t.base_nodes,
        t.base_edges,
        t.base_bridges,
        seed::mix(cfg.seed, 0xba5e),
    )?;
    let superset = extend_network(
        &base,
        t.super_nodes,
        t.super_edges,
        t.super_bridges,
        seed::mix(cfg.seed, 0x5e7),
    )?;
    write_csv_pair(&base, &cfg.paths.out_dir.join("transfer_base"))?;
    write_csv_pair(&superset, &cfg.paths.out_dir.join("transfer_super"))?;

    let labeling = LabelingConfig {
        gmpe: &gmpe,
        fragility: &fragility,
        scenario_model: &cfg.scenario_model,
        mc: &cfg.mc.to_config(0),
    };
    let mut split = cfg.split.clone();
    split.seed = seed::mix(cfg.seed, 0x59137);
    let ds = generate_dataset(
        &base,
        cfg.dataset.n_k,
        &split,
        &labeling,
        seed::mix(cfg.seed, 0xda7a),
    )?;
    let topo = GraphTopology::from_network(&base);
    let model = GnnModel::init(ds.normalization.clone(), seed::mix(cfg.seed, 0x1417));
    let train_cfg = TrainConfig {
        seed: seed::mix(cfg.seed, 0x7a41),
        ..cfg.train.clone()
    };
    let outcome = train(model, &ds.train, &topo, &train_cfg)?;

    let report = run_transfer_experiment(
        &outcome.model,
        &superset,
        &split,
        cfg.dataset.n_k,
        &labeling,
        &ClassBands::default(),
        seed::mix(cfg.seed, 0x7fa5),
    )?;
    if !report.params_unchanged {
        return Err(Error::Validation(
            "transfer evaluation modified model parameters".into(),
        ));
    }
    write_report(
        &ReportFile::new(&report.metrics, cfg.echo()),
        &cfg.paths.out_dir.join("transfer_report.toml"),
    )?;
    log::info!(
        "transfer: f1_2 {:.3} over {} superset test targets",
        report.metrics.f1_2class,
        report.test_targets
    );
    Ok(())
}

